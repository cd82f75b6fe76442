//! The pipeline as file-to-file stages. Every text artifact starts with a
//! `# config-hash <hex>` line, checkpoints carry the hash in their header, and
//! each directory written to keeps a `manifest.json` with the SHA-256 of every
//! file a stage produced there.
//!
//! Dataset files (and `test_log.tsv`) live in `data_dir`, everything else in
//! `out_dir`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::RatingRecord;
use crate::ensemble::run_two_stage;
use crate::eval::{map_at_n, rankings_from_scores, MapReport};
use crate::ingest::{
    format_rec_log, load_dataset, read_rec_log, save_dataset, sort_log, Dataset, DATASET_FILES,
};
use crate::mfm::{encode_model, read_model, FeatureIndex};
use crate::pipeline::{aggregate_scores, format_rankings, format_scores, read_scores, score_log, train_level1};
use crate::session::{preprocess, FilteredLog};
use crate::synth::generate_synthetic;
use crate::{Error, Result};

pub const TEST_LOG: &str = "test_log.tsv";
pub const FILTERED_LOG: &str = "filtered_log.tsv";
pub const PREPROCESS_STATS: &str = "preprocess_stats.tsv";
pub const MODEL: &str = "model.srmfm";
pub const LOSS: &str = "loss.csv";
pub const SCORES: &str = "scores.tsv";
pub const ENSEMBLE_SCORES: &str = "ensemble_scores.tsv";
pub const RANKINGS: &str = "rankings.tsv";
pub const TABLES: &str = "behavior_tables.tsv";
pub const WEIGHTS: &str = "ensemble_weights.tsv";
pub const REPORT: &str = "map_report.tsv";
pub const MANIFEST: &str = "manifest.json";

const STAMP: &str = "# config-hash ";

pub fn stamp_line(hash: &str) -> String {
    format!("{STAMP}{hash}\n")
}

/// The hash on the first line of `text`, if it has one.
pub fn read_stamp(text: &str) -> Option<&str> {
    text.lines().next()?.strip_prefix(STAMP).map(str::trim)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sha256: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Keyed by file name.
    pub files: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Option<Manifest>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Parse {
                file: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })
    }
}

/// Writes `files` into `dir` and records them in its manifest.
fn publish(dir: &Path, hash: &str, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::read(dir)?.unwrap_or_default();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        let entry = ManifestEntry {
            sha256: sha256_hex(body),
            config_hash: hash.to_string(),
        };
        manifest.files.insert(name.to_string(), entry);
    }
    manifest.files.retain(|name, _| dir.join(name).exists());
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = dir.join(MANIFEST);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn stamped(hash: &str, body: &str) -> Vec<u8> {
    (stamp_line(hash) + body).into_bytes()
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Fails if `text` carries a stamp other than `hash`. Unstamped inputs (for
/// instance a real dataset) are accepted.
fn check_stamp(path: &Path, text: &str, hash: &str) -> Result<()> {
    match read_stamp(text) {
        Some(found) if found != hash => Err(Error::HashMismatch {
            file: path.to_path_buf(),
            expected: hash.to_string(),
            found: found.to_string(),
        }),
        _ => Ok(()),
    }
}

fn read_log_checked(path: &Path, hash: &str, force: bool) -> Result<Vec<RatingRecord>> {
    let text = read_text(path)?;
    if !force {
        check_stamp(path, &text, hash)?;
    }
    read_rec_log(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSummary {
    pub records: usize,
    pub positives: usize,
    pub test_records: usize,
}

/// Writes a synthetic dataset and its test period into `data_dir`.
pub fn run_gen(config: &RunConfig) -> Result<GenSummary> {
    let hash = config.hash();
    let (ds, truth) = generate_synthetic(&config.synthetic)?;
    let dir = &config.data_dir;
    save_dataset(&ds, dir, Some(&format!("config-hash {hash}")))?;
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    for name in DATASET_FILES {
        let path = dir.join(name);
        files.push((name, fs::read(&path).map_err(|e| Error::io(&path, e))?));
    }
    files.push((TEST_LOG, stamped(&hash, &format_rec_log(&truth.test_log))));
    publish(dir, &hash, &files)?;
    Ok(GenSummary {
        records: ds.rating_log.len(),
        positives: ds.stats().positives,
        test_records: truth.test_log.len(),
    })
}

fn load(config: &RunConfig) -> Result<Dataset> {
    load_dataset(&config.data_dir)
}

/// Filters and supplements the training log.
pub fn run_preprocess(config: &RunConfig) -> Result<FilteredLog> {
    let hash = config.hash();
    let ds = load(config)?;
    let pre = &config.preprocess;
    let filtered = preprocess(&ds, pre.filter(), pre.supplement());
    publish(
        &config.out_dir,
        &hash,
        &[
            (FILTERED_LOG, stamped(&hash, &format_rec_log(&filtered.merged()))),
            (PREPROCESS_STATS, stamped(&hash, &filtered.stats_tsv())),
        ],
    )?;
    Ok(filtered)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSummary {
    pub records: usize,
    pub final_loss: f64,
}

/// Trains on the preprocessed log left by [`run_preprocess`].
pub fn run_train(config: &RunConfig) -> Result<TrainSummary> {
    let hash = config.hash();
    let ds = load(config)?;
    let filtered_path = config.out_dir.join(FILTERED_LOG);
    let records = read_log_checked(&filtered_path, &hash, false)?;
    let filtered = FilteredLog::from_records(records);
    let n = filtered.len();
    let level1 = train_level1(&ds, &ds.rating_log, filtered, &config.model, &config.train)?;
    publish(
        &config.out_dir,
        &hash,
        &[
            (MODEL, encode_model(&level1.model, Some(&hash))),
            (LOSS, stamped(&hash, &level1.trace.to_csv())),
        ],
    )?;
    Ok(TrainSummary {
        records: n,
        final_loss: level1.trace.epochs.last().map_or(f64::NAN, |e| e.mean_loss),
    })
}

fn or_default(path: Option<&Path>, dir: &Path, name: &str) -> PathBuf {
    path.map_or_else(|| dir.join(name), Path::to_path_buf)
}

/// Scores every distinct `(user, item)` of a test log with a checkpoint.
/// Defaults: `out_dir/model.srmfm` and `data_dir/test_log.tsv`.
pub fn run_predict(config: &RunConfig, model: Option<&Path>, test: Option<&Path>) -> Result<usize> {
    let hash = config.hash();
    let ds = load(config)?;
    let model_path = or_default(model, &config.out_dir, MODEL);
    let (model, stamp) = read_model(&model_path)?;
    if let Some(found) = stamp.filter(|s| *s != hash) {
        return Err(Error::HashMismatch {
            file: model_path,
            expected: hash,
            found,
        });
    }
    let mut test = read_log_checked(&or_default(test, &config.data_dir, TEST_LOG), &hash, false)?;
    sort_log(&mut test);
    let features = FeatureIndex::build(&ds, &model.vocab, &model.config);
    let scores = aggregate_scores(&test, &score_log(&model, &features, &test));
    publish(&config.out_dir, &hash, &[(SCORES, stamped(&hash, &format_scores(&scores)))])?;
    Ok(scores.len())
}

/// Two-stage training and blending; ranks the test log.
pub fn run_ensemble(config: &RunConfig, test: Option<&Path>) -> Result<usize> {
    let hash = config.hash();
    let ds = load(config)?;
    let test = read_log_checked(&or_default(test, &config.data_dir, TEST_LOG), &hash, false)?;
    let run = run_two_stage(&ds, &test, config)?;
    let tables = match &run.tables {
        Some(t) => t.to_tsv(run.thresholds.as_ref()),
        None => String::new(),
    };
    publish(
        &config.out_dir,
        &hash,
        &[
            (ENSEMBLE_SCORES, stamped(&hash, &format_scores(&run.scores))),
            (RANKINGS, stamped(&hash, &format_rankings(&run.rankings))),
            (TABLES, stamped(&hash, &tables)),
            (WEIGHTS, stamped(&hash, &run.ensemble.to_tsv())),
        ],
    )?;
    Ok(run.rankings.len())
}

/// MAP@N of a scores file against a labeled log. Defaults:
/// `out_dir/scores.tsv` and `data_dir/test_log.tsv`. Inputs stamped with a
/// different config hash are refused unless `force` is set.
pub fn run_eval(
    config: &RunConfig,
    predictions: Option<&Path>,
    truth: Option<&Path>,
    force: bool,
) -> Result<MapReport> {
    let hash = config.hash();
    let pred_path = or_default(predictions, &config.out_dir, SCORES);
    if !force {
        check_stamp(&pred_path, &read_text(&pred_path)?, &hash)?;
    }
    let scores = read_scores(&pred_path)?;
    let truth = read_log_checked(&or_default(truth, &config.data_dir, TEST_LOG), &hash, force)?;
    let report = map_at_n(&rankings_from_scores(&scores, &truth)?, config.ensemble.top_n)?;
    publish(&config.out_dir, &hash, &[(REPORT, stamped(&hash, &report.to_tsv()))])?;
    Ok(report)
}
