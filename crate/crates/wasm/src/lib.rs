//! Browser bindings for three small demos. Every export takes text or numbers
//! and returns a JSON string; the plain functions behind them are ordinary
//! Rust so they can be tested natively.
//!
//! Logs are given in `rec_log` form, one `user item result timestamp` record
//! per line (tabs or spaces), `#` lines ignored.

use serde::Serialize;
use socialrec::behavior::{estimate_tables, fit_bins, log_contexts, log_durations, MAX_CONTEXT};
use socialrec::data::RatingRecord;
use socialrec::ingest::{parse_rec_line, sort_log};
use socialrec::ladder::{ladder_config, synthetic_preset, ROWS};
use socialrec::pipeline::evaluate_level1;
use socialrec::session::{filter_session, for_each_user, intervals, session_threshold, split_with_threshold, FilterParams};
use socialrec::synth::generate_synthetic;
use wasm_bindgen::prelude::*;

pub fn parse_log(text: &str) -> Result<Vec<RatingRecord>, String> {
    let mut log = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        log.push(parse_rec_line(&fields).map_err(|e| format!("line {}: {e}", n + 1))?);
    }
    if log.is_empty() {
        return Err("the log is empty".into());
    }
    sort_log(&mut log);
    Ok(log)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo output serializes")
}

#[derive(Serialize)]
struct ShownRecord {
    item: u32,
    accepted: bool,
    timestamp: i64,
    kept: bool,
}

#[derive(Serialize)]
struct ShownSession {
    positive_ratio: f64,
    records: Vec<ShownRecord>,
}

#[derive(Serialize)]
struct ShownUser {
    user: u32,
    threshold: f64,
    sessions: Vec<ShownSession>,
}

#[derive(Serialize)]
struct FilterReport {
    total: usize,
    kept: usize,
    users: Vec<ShownUser>,
}

/// Slices every user's log into sessions and marks the records the filter keeps.
pub fn filter_sessions(text: &str, params: &FilterParams) -> Result<String, String> {
    params.validate().map_err(|e| e.to_string())?;
    let log = parse_log(text)?;
    let mut users = Vec::new();
    let mut kept_total = 0;
    for_each_user(&log, |records| {
        let tau = session_threshold(&intervals(records), params.tau0, params.session_cap);
        let sessions = split_with_threshold(records, tau)
            .iter()
            .map(|s| {
                let kept = filter_session(s, params);
                kept_total += kept.len();
                ShownSession {
                    positive_ratio: s.positives() as f64 / s.records.len() as f64,
                    records: s
                        .records
                        .iter()
                        .enumerate()
                        .map(|(k, r)| ShownRecord {
                            item: r.item.0,
                            accepted: r.accepted,
                            timestamp: r.timestamp,
                            kept: kept.contains(&k),
                        })
                        .collect(),
                }
            })
            .collect();
        users.push(ShownUser {
            user: records[0].user.0,
            threshold: tau,
            sessions,
        });
    });
    Ok(json(&FilterReport {
        total: log.len(),
        kept: kept_total,
        users,
    }))
}

#[derive(Serialize)]
struct ContextRow {
    user: u32,
    item: u32,
    accepted: bool,
    timestamp: i64,
    context: [i8; 5],
    gamma: Vec<f64>,
}

#[derive(Serialize)]
struct ContextReport {
    thresholds: Vec<f64>,
    marginal: f64,
    rows: Vec<ContextRow>,
}

/// Fits duration bins and context tables on the log itself and reports
/// Γ(1)..Γ(5) for every record.
pub fn duration_contexts(text: &str, bins: usize) -> Result<String, String> {
    let log = parse_log(text)?;
    let thresholds = fit_bins(&log_durations(&log), bins).map_err(|e| e.to_string())?;
    let contexts = log_contexts(&log, &thresholds);
    let samples: Vec<_> = contexts.iter().copied().zip(log.iter().map(|r| r.accepted)).collect();
    let tables = estimate_tables(&samples, bins, 1.0).map_err(|e| e.to_string())?;
    let rows = log
        .iter()
        .zip(&contexts)
        .map(|(r, ctx)| ContextRow {
            user: r.user.0,
            item: r.item.0,
            accepted: r.accepted,
            timestamp: r.timestamp,
            context: ctx.0,
            gamma: (1..=MAX_CONTEXT)
                .map(|k| tables.gamma(ctx, k).expect("context range is valid"))
                .collect(),
        })
        .collect();
    Ok(json(&ContextReport {
        thresholds: thresholds.bounds.clone(),
        marginal: tables.marginal,
        rows,
    }))
}

#[derive(Serialize)]
struct LadderRow {
    row: usize,
    name: &'static str,
    map: f64,
    users: usize,
}

#[derive(Serialize)]
struct LadderReport {
    records: usize,
    positives: usize,
    rows: Vec<LadderRow>,
}

/// Trains the requested ablation rows on a small synthetic dataset and
/// reports MAP@3 for each.
pub fn mini_ladder(seed: u64, rows: &[usize]) -> Result<String, String> {
    if let Some(bad) = rows.iter().find(|r| !(1..=ROWS.len()).contains(r)) {
        return Err(format!("row {bad} is not in 1..={}", ROWS.len()));
    }
    let mut base = synthetic_preset();
    base.seed = seed;
    let s = &mut base.synthetic;
    s.n_users = 1500;
    s.n_items = 120;
    s.n_records = 15_000;
    s.n_test_records = 4000;
    s.n_test_users = 300;
    base.model.latent_dim = 16;
    base.resolve();
    let (ds, truth) = generate_synthetic(&base.synthetic).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for &row in rows {
        let report = evaluate_level1(&ds, &truth.test_log, &ladder_config(&base, row)).map_err(|e| e.to_string())?;
        out.push(LadderRow {
            row,
            name: ROWS[row - 1],
            map: report.map,
            users: report.users(),
        });
    }
    Ok(json(&LadderReport {
        records: ds.rating_log.len(),
        positives: ds.stats().positives,
        rows: out,
    }))
}

fn js(result: Result<String, String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = filterSessions)]
pub fn filter_sessions_js(
    log: &str,
    tau0: f64,
    pi_minus: u32,
    pi_plus: u32,
    epsilon: f64,
) -> Result<String, JsError> {
    let params = FilterParams {
        tau0,
        pi_minus: pi_minus as usize,
        pi_plus: pi_plus as usize,
        epsilon,
        ..FilterParams::default()
    };
    js(filter_sessions(log, &params))
}

#[wasm_bindgen(js_name = durationContexts)]
pub fn duration_contexts_js(log: &str, bins: u32) -> Result<String, JsError> {
    js(duration_contexts(log, bins as usize))
}

/// `rows` is a comma-separated list such as `"1,2,3,4,14"`.
#[wasm_bindgen(js_name = miniLadder)]
pub fn mini_ladder_js(seed: u32, rows: &str) -> Result<String, JsError> {
    let parsed: Result<Vec<usize>, _> = rows.split(',').map(|r| r.trim().parse()).collect();
    let parsed = parsed.map_err(|_| JsError::new("rows must be comma-separated numbers"))?;
    js(mini_ladder(seed as u64, &parsed))
}
