//! Glue shared by the stages: fitting a level-1 model on part of a log,
//! scoring logs, and the score and ranking file formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::{PreprocessConfig, RunConfig};
use crate::data::{ItemId, RatingRecord, UserId};
use crate::error::{Error, Result};
use crate::eval::{map_at_n, rank_items, rankings_from_scores, MapReport};
use crate::ingest::{sort_log, Dataset};
use crate::mfm::{FeatureIndex, MfmConfig, MfmModel};
use crate::session::{for_each_user, preprocess, FilteredLog};
use crate::trainer::{train, LossTrace, TrainConfig};

/// A trained model with the side-information index it scores through.
#[derive(Debug, Clone)]
pub struct Level1 {
    pub model: MfmModel,
    pub features: FeatureIndex,
    pub trace: LossTrace,
    pub filtered: FilteredLog,
}

/// Preprocesses `log` and trains a model on it. Side information (profiles,
/// graph, keywords) always comes from the whole of `ds`, so models fitted on
/// different slices of the log share one layout and one initialization.
pub fn fit_level1(
    ds: &Dataset,
    log: &[RatingRecord],
    pre: &PreprocessConfig,
    mfm: &MfmConfig,
    train_config: &TrainConfig,
) -> Result<Level1> {
    let part = ds.with_log(log.to_vec());
    let filtered = preprocess(&part, pre.filter(), pre.supplement());
    train_level1(ds, log, filtered, mfm, train_config)
}

/// Trains on an already preprocessed `filtered` view of `log`.
pub fn train_level1(
    ds: &Dataset,
    log: &[RatingRecord],
    filtered: FilteredLog,
    mfm: &MfmConfig,
    train_config: &TrainConfig,
) -> Result<Level1> {
    mfm.validate()?;
    let mut model = MfmModel::new(ds, mfm.clone());
    model.fit_statistics(log);
    let features = FeatureIndex::build(ds, &model.vocab, mfm);
    let trace = train(&mut model, &features, &filtered, train_config)?;
    Ok(Level1 {
        model,
        features,
        trace,
        filtered,
    })
}

/// Raw model scores aligned with `log`, which must be sorted by user.
pub fn score_log(model: &MfmModel, features: &FeatureIndex, log: &[RatingRecord]) -> Vec<f64> {
    let d = model.dim();
    let mut out = Vec::with_capacity(log.len());
    let mut pu = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for_each_user(log, |records| {
        let u = model.vocab.user(records[0].user);
        pu.iter_mut().for_each(|x| *x = 0.0);
        if let Some(u) = u {
            model.add_user_vector(features, u, &mut pu);
        }
        for r in records {
            let i = model.vocab.item(r.item);
            out.push(model.score_with_user_vector(features, u, i, r.timestamp, &pu, &mut scratch));
        }
    });
    out
}

/// One score per distinct `(user, item)`: the mean over its records. Taking
/// the maximum instead would favour items that were simply shown more often.
pub fn aggregate_scores(log: &[RatingRecord], scores: &[f64]) -> Vec<(UserId, ItemId, f64)> {
    let mut sums: BTreeMap<(UserId, ItemId), (f64, usize)> = BTreeMap::new();
    for (r, &s) in log.iter().zip(scores) {
        let e = sums.entry((r.user, r.item)).or_default();
        e.0 += s;
        e.1 += 1;
    }
    sums.into_iter().map(|((u, i), (s, n))| (u, i, s / n as f64)).collect()
}

pub fn top_n(scores: &[(UserId, ItemId, f64)], n: usize) -> BTreeMap<UserId, Vec<ItemId>> {
    let mut by_user: BTreeMap<UserId, Vec<(ItemId, f64)>> = BTreeMap::new();
    for &(u, i, s) in scores {
        by_user.entry(u).or_default().push((i, s));
    }
    by_user
        .into_iter()
        .map(|(u, s)| {
            let mut ranked = rank_items(&s);
            ranked.truncate(n);
            (u, ranked)
        })
        .collect()
}

pub fn format_scores(scores: &[(UserId, ItemId, f64)]) -> String {
    let mut s = String::new();
    for (u, i, v) in scores {
        let _ = writeln!(s, "{u}\t{i}\t{v}");
    }
    s
}

pub fn format_rankings(rankings: &BTreeMap<UserId, Vec<ItemId>>) -> String {
    let mut s = String::new();
    for (u, items) in rankings {
        let _ = write!(s, "{u}");
        for i in items {
            let _ = write!(s, "\t{i}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_scores(text: &str, file: &str) -> Result<Vec<(UserId, ItemId, f64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: &str| Error::Parse {
            file: file.to_string(),
            line: n + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(err("expected userId, itemId, score"));
        }
        let u = f[0].parse::<u32>().map_err(|_| err("bad userId"))?;
        let i = f[1].parse::<u32>().map_err(|_| err("bad itemId"))?;
        let s = f[2].parse::<f64>().map_err(|_| err("bad score"))?;
        out.push((UserId(u), ItemId(i), s));
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<(UserId, ItemId, f64)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text, &path.display().to_string())
}

/// MAP@N of a level-1 model trained on the whole dataset log and scored on
/// `test_log`.
pub fn evaluate_level1(ds: &Dataset, test_log: &[RatingRecord], config: &RunConfig) -> Result<MapReport> {
    let level1 = fit_level1(ds, &ds.rating_log, &config.preprocess, &config.model, &config.train)?;
    let mut test = test_log.to_vec();
    sort_log(&mut test);
    let scores = score_log(&level1.model, &level1.features, &test);
    let rankings = rankings_from_scores(&aggregate_scores(&test, &scores), &test)?;
    map_at_n(&rankings, config.ensemble.top_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_round_trip() {
        let s = vec![(UserId(1), ItemId(2), 0.125), (UserId(3), ItemId(4), -1e-300)];
        assert_eq!(parse_scores(&format_scores(&s), "x").unwrap(), s);
    }

    #[test]
    fn repeated_pairs_are_averaged() {
        let log = vec![
            RatingRecord::new(1, 5, false, 0),
            RatingRecord::new(1, 5, true, 9),
            RatingRecord::new(1, 6, false, 3),
        ];
        let agg = aggregate_scores(&log, &[0.25, 0.75, 0.375]);
        assert_eq!(agg, vec![(UserId(1), ItemId(5), 0.5), (UserId(1), ItemId(6), 0.375)]);
        let top = top_n(&agg, 1);
        assert_eq!(top[&UserId(1)], vec![ItemId(5)]);
        assert_eq!(format_rankings(&top), "1\t5\n");
    }
}
