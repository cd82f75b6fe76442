//! Runs ablation ladder rows, and two-stage ensembles with growing duration
//! contexts, on synthetic datasets and prints MAP@3 for each.
//!
//! ```text
//! cargo run --release -p socialrec --example ladder -- rows=1,2,3,4,14 seeds=1,2,3 contexts=0,1,3,5
//! ```

use std::time::Instant;

use socialrec::ensemble::run_two_stage;
use socialrec::eval::{map_at_n, rankings_from_scores};
use socialrec::ladder::{ladder_config, synthetic_preset, ROWS};
use socialrec::pipeline::evaluate_level1;
use socialrec::synth::generate_synthetic;

fn list<T: std::str::FromStr>(s: &str) -> Vec<T> {
    s.split(',').filter_map(|x| x.parse().ok()).collect()
}

fn main() -> socialrec::Result<()> {
    let mut base = synthetic_preset();
    let mut rows: Vec<usize> = vec![1, 2, 3, 4, 14];
    let mut seeds: Vec<u64> = vec![1];
    let mut contexts: Vec<usize> = Vec::new();
    let mut level1_row = ROWS.len();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        match k {
            "rows" => rows = list(v),
            "seeds" => seeds = list(v),
            "contexts" => contexts = list(v),
            "level1" => level1_row = v.parse().unwrap(),
            "epochs" => base.train.epochs = v.parse().unwrap(),
            "lr" => base.train.learning_rate = v.parse().unwrap(),
            "lambda" => base.train.lambda = v.parse().unwrap(),
            "dim" => base.model.latent_dim = v.parse().unwrap(),
            "init" => base.model.init_scale = v.parse().unwrap(),
            "rate" => base.synthetic.positive_rate = v.parse().unwrap(),
            "noise" => base.synthetic.noise_level = v.parse().unwrap(),
            "users" => base.synthetic.n_users = v.parse().unwrap(),
            "items" => base.synthetic.n_items = v.parse().unwrap(),
            "records" => base.synthetic.n_records = v.parse().unwrap(),
            "test" => base.synthetic.n_test_records = v.parse().unwrap(),
            "cold" => base.synthetic.cold_fraction = v.parse().unwrap(),
            "follows" => base.synthetic.follows = v.parse().unwrap(),
            "affinity" => base.synthetic.affinity_scale = v.parse().unwrap(),
            "impress" => base.synthetic.impression_bias = v.parse().unwrap(),
            "pool" => base.synthetic.pool_size = v.parse().unwrap(),
            "attention" => base.synthetic.attention_strength = v.parse().unwrap(),
            _ => panic!("unknown option {k}"),
        }
    }
    let mut sums = vec![0.0; rows.len()];
    let mut ctx_sums = vec![0.0; contexts.len()];
    for &seed in &seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.resolve();
        let t = Instant::now();
        let (ds, truth) = generate_synthetic(&cfg.synthetic)?;
        println!(
            "seed {seed}: generated {} records ({} positive) in {:.1?}",
            ds.rating_log.len(),
            ds.stats().positives,
            t.elapsed()
        );
        for (k, &row) in rows.iter().enumerate() {
            let t = Instant::now();
            let report = evaluate_level1(&ds, &truth.test_log, &ladder_config(&cfg, row))?;
            sums[k] += report.map;
            println!(
                "  row {row:>2} {:<12} MAP {:.4} users {} ({:.1?})",
                ROWS[row - 1],
                report.map,
                report.users(),
                t.elapsed()
            );
        }
        for (k, &r) in contexts.iter().enumerate() {
            let t = Instant::now();
            let mut c = ladder_config(&cfg, level1_row);
            c.ensemble.r_max = r;
            let run = run_two_stage(&ds, &truth.test_log, &c)?;
            let report = map_at_n(&rankings_from_scores(&run.scores, &truth.test_log)?, 3)?;
            ctx_sums[k] += report.map;
            println!("  two-stage r={r} MAP {:.4} ({:.1?})", report.map, t.elapsed());
        }
    }
    println!("mean over {} seeds:", seeds.len());
    for (k, &r) in contexts.iter().enumerate() {
        println!("  two-stage r={r} {:.4}", ctx_sums[k] / seeds.len() as f64);
    }
    for (k, &row) in rows.iter().enumerate() {
        println!("  row {row:>2} {:<12} {:.4}", ROWS[row - 1], sums[k] / seeds.len() as f64);
    }
    Ok(())
}
