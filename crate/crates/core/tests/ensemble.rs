use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socialrec::behavior::DurationContext;
use socialrec::ensemble::{assemble_features, blend, column_names, fit_logistic, run_two_stage, LogisticConfig};
use socialrec::error::Error;
use socialrec::eval::{map_at_n, rankings_from_scores};
use socialrec::ladder::synthetic_preset;
use socialrec::mfm::{FeatureIndex, MfmModel};
use socialrec::synth::generate_synthetic;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Newton's method on the mean log-loss, solving the normal equations by
/// Gaussian elimination.
fn newton_logistic(rows: &[Vec<f64>], labels: &[bool]) -> Vec<f64> {
    let m = rows[0].len() + 1;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let mut w = vec![0.0; m];
    for _ in 0..50 {
        let mut g = vec![0.0; m];
        let mut h = vec![vec![0.0; m]; m];
        for (xi, &y) in x.iter().zip(labels) {
            let p = sigmoid(xi.iter().zip(&w).map(|(a, b)| a * b).sum());
            for a in 0..m {
                g[a] += (p - y as u8 as f64) * xi[a];
                for b in 0..m {
                    h[a][b] += p * (1.0 - p) * xi[a] * xi[b];
                }
            }
        }
        // Solve h * step = g.
        let mut aug: Vec<Vec<f64>> = h.iter().zip(&g).map(|(r, gi)| r.iter().copied().chain([*gi]).collect()).collect();
        for c in 0..m {
            let pivot = (c..m).max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs())).unwrap();
            aug.swap(c, pivot);
            for r in 0..m {
                if r != c {
                    let f = aug[r][c] / aug[c][c];
                    for k in c..=m {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        for a in 0..m {
            w[a] -= aug[a][m] / aug[a][a];
        }
    }
    w
}

fn noisy_data(seed: u64, n: usize, m: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let row: Vec<f64> = (0..m).map(|k| rng.random_range(-1.0..1.0) * (k + 1) as f64 + k as f64).collect();
        let z = -0.5 + row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        labels.push(rng.random::<f64>() < sigmoid(z));
        rows.push(row);
    }
    (rows, labels)
}

#[test]
fn gradient_descent_reaches_the_newton_optimum() {
    let config = LogisticConfig {
        tolerance: 1e-9,
        max_iterations: 200_000,
    };
    for seed in 0..4 {
        let (rows, labels) = noisy_data(seed, 400, 3);
        let fitted = fit_logistic(&rows, &labels, &column_names(2), &config).unwrap();
        let newton = newton_logistic(&rows, &labels);
        for (a, b) in fitted.weights.iter().zip(&newton) {
            assert!((a - b).abs() < 1e-4, "seed {seed}: {:?} vs {newton:?}", fitted.weights);
        }
    }
}

#[test]
fn duplicated_column_leaves_predictions_unchanged() {
    let (rows, labels) = noisy_data(7, 300, 2);
    let config = LogisticConfig {
        tolerance: 1e-9,
        max_iterations: 200_000,
    };
    let single = fit_logistic(&rows, &labels, &column_names(1), &config).unwrap();
    let doubled: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1], r[1]]).collect();
    let twice = fit_logistic(&doubled, &labels, &column_names(2), &config).unwrap();
    assert!((twice.weights[2] - twice.weights[3]).abs() < 1e-6);
    for (a, b) in rows.iter().zip(&doubled) {
        let pa = blend(&single, a).unwrap();
        let pb = blend(&twice, b).unwrap();
        assert!((pa - pb).abs() < 1e-6);
    }
}

#[test]
fn intercept_only_blend() {
    let model = socialrec::ensemble::EnsembleModel {
        columns: column_names(1),
        weights: vec![1.0, 0.0, 0.0],
        iterations: 0,
    };
    assert!((blend(&model, &[5.0, -3.0]).unwrap() - 0.7311).abs() < 1e-4);
    assert!(matches!(blend(&model, &[1.0]), Err(Error::WidthMismatch { .. })));
}

#[test]
fn features_refuse_records_from_the_training_period() {
    let mut c = synthetic_preset();
    c.synthetic.n_users = 300;
    c.synthetic.n_items = 40;
    c.synthetic.n_records = 3000;
    c.synthetic.n_test_records = 600;
    c.synthetic.n_test_users = 60;
    c.model.latent_dim = 4;
    c.resolve();
    let (ds, truth) = generate_synthetic(&c.synthetic).unwrap();
    let mut model = MfmModel::new(&ds, c.model.clone());
    model.fit_statistics(&ds.rating_log);
    let fx = FeatureIndex::build(&ds, &model.vocab, &c.model);
    let ctx = vec![DurationContext([0; 5]); ds.rating_log.len()];
    let err = assemble_features(&ds.rating_log, &ctx, &model, &fx, None, 0).unwrap_err();
    assert!(matches!(err, Error::Leakage { .. }));

    let test = &truth.test_log;
    let ctx = vec![DurationContext([0; 5]); test.len()];
    let m = assemble_features(test, &ctx, &model, &fx, None, 0).unwrap();
    assert_eq!(m.columns, ["score"]);
    assert_eq!(m.rows.len(), test.len());
    assert!(matches!(
        assemble_features(test, &ctx, &model, &fx, None, 6),
        Err(Error::ContextRange(6))
    ));
}

#[test]
fn two_stage_ranks_every_test_user() {
    let mut c = synthetic_preset();
    c.synthetic.n_users = 800;
    c.synthetic.n_items = 60;
    c.synthetic.n_records = 8000;
    c.synthetic.n_test_records = 2000;
    c.synthetic.n_test_users = 200;
    c.model.latent_dim = 6;
    c.train.epochs = 3;
    c.ensemble.r_max = 3;
    c.resolve();
    let (ds, truth) = generate_synthetic(&c.synthetic).unwrap();
    let run = run_two_stage(&ds, &truth.test_log, &c).unwrap();
    assert_eq!(run.ensemble.columns, ["score", "gamma1", "gamma2", "gamma3"]);
    assert!(run.split.phi1.iter().all(|r| r.timestamp <= run.split.boundary));
    assert!(run.split.phi2.iter().all(|r| r.timestamp > run.split.boundary));
    assert!(run.scores.iter().all(|s| (0.0..=1.0).contains(&s.2)));
    let users: std::collections::BTreeSet<_> = truth.test_log.iter().map(|r| r.user).collect();
    assert_eq!(run.rankings.len(), users.len());
    assert!(run.rankings.values().all(|r| !r.is_empty() && r.len() <= 3));
    let report = map_at_n(&rankings_from_scores(&run.scores, &truth.test_log).unwrap(), 3).unwrap();
    assert!(report.map > 0.0);
    // The final model has seen the whole training log.
    let p = run.final_model.provenance.unwrap();
    assert_eq!((p.start, p.end), (ds.rating_log.iter().map(|r| r.timestamp).min().unwrap(), ds.rating_log.iter().map(|r| r.timestamp).max().unwrap()));
}
