//! Two-stage blending of the model score with duration features.
//!
//! Level-1 models are trained on the first part of the training period and
//! scored on the rest, where a logistic regression learns how to combine the
//! score with the duration factors. The level-1 model is then retrained on
//! the whole period with the same initialization and the blend is applied to
//! the test log.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::behavior::{
    estimate_tables, fit_bins, log_contexts, log_durations, BehaviorTables, BinThresholds,
    DurationContext, MAX_CONTEXT,
};
use crate::config::RunConfig;
use crate::data::{ItemId, RatingRecord, UserId, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::ingest::{sort_log, Dataset};
use crate::mfm::{sigmoid, FeatureIndex, MfmModel};
use crate::pipeline::{aggregate_scores, fit_level1, score_log, top_n};
use crate::trainer::LossTrace;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSplit {
    /// Records up to and including the boundary.
    pub phi1: Vec<RatingRecord>,
    pub phi2: Vec<RatingRecord>,
    pub boundary: i64,
}

pub fn split_log(log: &[RatingRecord], boundary: i64) -> TimeSplit {
    let (phi1, phi2) = log.iter().partition(|r| r.timestamp <= boundary);
    TimeSplit { phi1, phi2, boundary }
}

/// Splits `boundary_days` after the first record of the dataset.
pub fn split_by_time(ds: &Dataset, boundary_days: i64) -> TimeSplit {
    split_log(&ds.rating_log, ds.window.0 + boundary_days * SECONDS_PER_DAY)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

pub fn column_names(r_max: usize) -> Vec<String> {
    std::iter::once("score".to_string())
        .chain((1..=r_max).map(|r| format!("gamma{r}")))
        .collect()
}

/// One row per record: the raw model score followed by `Γ(1)..Γ(r_max)`.
/// `records` must be sorted by user and `contexts` aligned with it. Fails if
/// any record falls inside the period the model was trained on.
pub fn assemble_features(
    records: &[RatingRecord],
    contexts: &[DurationContext],
    model: &MfmModel,
    features: &FeatureIndex,
    tables: Option<&BehaviorTables>,
    r_max: usize,
) -> Result<FeatureMatrix> {
    if r_max > MAX_CONTEXT {
        return Err(Error::ContextRange(r_max));
    }
    if let Some(p) = model.provenance {
        if let Some(r) = records.iter().find(|r| p.contains(r.timestamp)) {
            return Err(Error::Leakage {
                timestamp: r.timestamp,
                start: p.start,
                end: p.end,
            });
        }
    }
    let scores = score_log(model, features, records);
    let mut rows = Vec::with_capacity(records.len());
    for (k, s) in scores.into_iter().enumerate() {
        let mut row = Vec::with_capacity(1 + r_max);
        row.push(s);
        if r_max > 0 {
            let t = tables.ok_or(Error::EmptyBehaviorInput)?;
            for r in 1..=r_max {
                row.push(t.gamma(&contexts[k], r)?);
            }
        }
        rows.push(row);
    }
    Ok(FeatureMatrix {
        columns: column_names(r_max),
        rows,
        labels: records.iter().map(|r| r.accepted).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub columns: Vec<String>,
    /// `W_0` (intercept) followed by one weight per column.
    pub weights: Vec<f64>,
    pub iterations: usize,
}

impl EnsembleModel {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("column\tweight\n");
        let _ = writeln!(s, "intercept\t{}", self.weights[0]);
        for (c, w) in self.columns.iter().zip(&self.weights[1..]) {
            let _ = writeln!(s, "{c}\t{w}");
        }
        s
    }
}

/// Full-batch gradient descent on the mean log-loss. Columns are
/// standardized internally and the weights mapped back, so the returned
/// model applies to raw feature values.
pub fn fit_logistic(
    rows: &[Vec<f64>],
    labels: &[bool],
    columns: &[String],
    config: &LogisticConfig,
) -> Result<EnsembleModel> {
    let n = rows.len();
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }
    let m = columns.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::WidthMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    let mut mean = vec![0.0; m];
    let mut scale = vec![1.0; m];
    for k in 0..m {
        mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n as f64;
        if var > 1e-24 {
            scale[k] = var.sqrt();
        }
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..m).map(|k| (r[k] - mean[k]) / scale[k]).collect())
        .collect();
    let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();

    // The log-loss Hessian is bounded by (1/4)(1 + M) on standardized columns.
    let step = 4.0 / (1.0 + m as f64);
    let mut w = vec![0.0; m + 1];
    let mut grad = vec![0.0; m + 1];
    let mut iterations = 0;
    while iterations < config.max_iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (row, &target) in x.iter().zip(&y) {
            let z = w[0] + row.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>();
            let e = sigmoid(z) - target;
            grad[0] += e;
            for (g, v) in grad[1..].iter_mut().zip(row) {
                *g += e * v;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n as f64);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < config.tolerance {
            break;
        }
        for (wk, g) in w.iter_mut().zip(&grad) {
            *wk -= step * g;
        }
        iterations += 1;
    }

    let mut weights = vec![0.0; m + 1];
    weights[0] = w[0];
    for k in 0..m {
        weights[k + 1] = w[k + 1] / scale[k];
        weights[0] -= w[k + 1] * mean[k] / scale[k];
    }
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { epoch: iterations, pair: 0 });
    }
    Ok(EnsembleModel {
        columns: columns.to_vec(),
        weights,
        iterations,
    })
}

pub fn blend(model: &EnsembleModel, row: &[f64]) -> Result<f64> {
    if row.len() + 1 != model.weights.len() {
        return Err(Error::WidthMismatch {
            expected: model.weights.len() - 1,
            got: row.len(),
        });
    }
    let z = model.weights[0] + row.iter().zip(&model.weights[1..]).map(|(a, b)| a * b).sum::<f64>();
    Ok(sigmoid(z))
}

/// Everything the two-stage run produces.
#[derive(Debug, Clone)]
pub struct TwoStage {
    pub split: TimeSplit,
    pub level1_trace: LossTrace,
    pub final_trace: LossTrace,
    pub thresholds: Option<BinThresholds>,
    /// Fitted on the whole training log; these score the test rows.
    pub tables: Option<BehaviorTables>,
    pub ensemble: EnsembleModel,
    pub final_model: MfmModel,
    /// Blended score per distinct test `(user, item)`.
    pub scores: Vec<(UserId, ItemId, f64)>,
    pub rankings: BTreeMap<UserId, Vec<ItemId>>,
}

/// Contexts for `subset` computed over the user's whole `log`; both must be
/// sorted by `(user, timestamp)` and `subset` must be drawn from `log`.
fn contexts_within(
    log: &[RatingRecord],
    subset: &[RatingRecord],
    thresholds: &BinThresholds,
) -> Vec<DurationContext> {
    let all = log_contexts(log, thresholds);
    let mut index: BTreeMap<(UserId, i64, ItemId, bool), Vec<usize>> = BTreeMap::new();
    for (k, r) in log.iter().enumerate() {
        index.entry((r.user, r.timestamp, r.item, r.accepted)).or_default().push(k);
    }
    let mut used: BTreeMap<(UserId, i64, ItemId, bool), usize> = BTreeMap::new();
    subset
        .iter()
        .map(|r| {
            let key = (r.user, r.timestamp, r.item, r.accepted);
            let slot = used.entry(key).or_default();
            let k = index[&key][*slot];
            *slot += 1;
            all[k]
        })
        .collect()
}

/// Trains on the dataset log and ranks the records of `test_log`.
pub fn run_two_stage(ds: &Dataset, test_log: &[RatingRecord], config: &RunConfig) -> Result<TwoStage> {
    let e = &config.ensemble;
    let logistic = LogisticConfig {
        tolerance: e.tolerance,
        max_iterations: e.max_iterations,
    };
    let split = split_by_time(ds, e.boundary_days);
    if split.phi1.is_empty() || split.phi2.is_empty() {
        return Err(Error::Config(format!(
            "ensemble.boundary_days = {} leaves an empty side of the split",
            e.boundary_days
        )));
    }

    let level1 = fit_level1(ds, &split.phi1, &config.preprocess, &config.model, &config.train)?;

    let (thresholds, blend_tables, tables, phi2_contexts) = if e.r_max > 0 {
        let th = fit_bins(&log_durations(&ds.rating_log), config.behavior.bins)?;
        let fit = |part: &[RatingRecord]| {
            let ctx = contexts_within(&ds.rating_log, part, &th);
            let samples: Vec<(DurationContext, bool)> =
                ctx.iter().copied().zip(part.iter().map(|r| r.accepted)).collect();
            estimate_tables(&samples, config.behavior.bins, config.behavior.smoothing)
        };
        // Like the level-1 model, the tables behind the blend features never
        // see the rows the blend is fitted on; the final tables see everything.
        let blend_tables = fit(&split.phi1)?;
        let tables = fit(&ds.rating_log)?;
        let ctx = contexts_within(&ds.rating_log, &split.phi2, &th);
        (Some(th), Some(blend_tables), Some(tables), ctx)
    } else {
        (None, None, None, Vec::new())
    };

    let train_rows = assemble_features(
        &split.phi2,
        &phi2_contexts,
        &level1.model,
        &level1.features,
        blend_tables.as_ref(),
        e.r_max,
    )?;
    let ensemble = fit_logistic(&train_rows.rows, &train_rows.labels, &train_rows.columns, &logistic)?;

    let full = fit_level1(ds, &ds.rating_log, &config.preprocess, &config.model, &config.train)?;

    let mut test = test_log.to_vec();
    sort_log(&mut test);
    let test_contexts = match &thresholds {
        Some(th) => log_contexts(&test, th),
        None => Vec::new(),
    };
    let test_rows = assemble_features(
        &test,
        &test_contexts,
        &full.model,
        &full.features,
        tables.as_ref(),
        e.r_max,
    )?;
    let blended: Vec<f64> = test_rows
        .rows
        .iter()
        .map(|row| blend(&ensemble, row))
        .collect::<Result<_>>()?;
    let scores = aggregate_scores(&test, &blended);
    let rankings = top_n(&scores, e.top_n);

    Ok(TwoStage {
        split,
        level1_trace: level1.trace,
        final_trace: full.trace,
        thresholds,
        tables,
        ensemble,
        final_model: full.model,
        scores,
        rankings,
    })
}
