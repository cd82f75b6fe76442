//! Attention model from recommendation durations.
//!
//! The duration of record `s` is the gap to the user's next record. Durations
//! are discretized into equal-frequency bins, `-1` marking positions outside
//! the user's sequence, and n-gram tables estimate how often a record with a
//! given duration context was accepted.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::RatingRecord;
use crate::error::{Error, Result};
use crate::session::for_each_user;

pub const DEFAULT_BINS: usize = 16;
pub const MAX_CONTEXT: usize = 5;

/// `θ_0 = 0 < θ_1 < ... < θ_B = ∞`; bin `k` is `[θ_k, θ_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinThresholds {
    pub bounds: Vec<f64>,
}

impl BinThresholds {
    pub fn bins(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn bin(&self, dt: f64) -> i8 {
        let inner = &self.bounds[1..self.bounds.len() - 1];
        inner.partition_point(|&t| t <= dt) as i8
    }
}

/// Equal-frequency thresholds: `θ_k` is the value at the `k/B` quantile,
/// pushed up to the next distinct value whenever that would repeat or
/// undercut the previous threshold.
pub fn fit_bins(intervals: &[f64], bins: usize) -> Result<BinThresholds> {
    if bins == 0 {
        return Err(Error::Config("behavior.bins must be >= 1".into()));
    }
    let mut sorted: Vec<f64> = intervals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let usable = distinct.iter().filter(|&&v| v > 0.0).count();
    if distinct.len() < bins || usable < bins - 1 {
        return Err(Error::TooFewDistinctIntervals {
            needed: bins,
            found: distinct.len(),
        });
    }

    let mut bounds = vec![0.0];
    let first_usable = distinct.len() - usable;
    let mut next = first_usable;
    for k in 1..bins {
        let q = sorted[k * sorted.len() / bins];
        let at = distinct.partition_point(|&v| v < q);
        let ceiling = distinct.len() - (bins - k);
        let idx = at.max(next).min(ceiling);
        bounds.push(distinct[idx]);
        next = idx + 1;
    }
    bounds.push(f64::INFINITY);
    Ok(BinThresholds { bounds })
}

/// `δ_s` for position `s` of a sequence with `m` durations.
pub fn discretize(s: i64, m: usize, dt: f64, thresholds: &BinThresholds) -> i8 {
    if s < 0 || s as usize >= m {
        -1
    } else {
        thresholds.bin(dt)
    }
}

/// `(δ_{s-2}, δ_{s-1}, δ_s, δ_{s+1}, δ_{s+2})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DurationContext(pub [i8; 5]);

impl DurationContext {
    pub fn at(&self, offset: i64) -> i8 {
        self.0[(offset + 2) as usize]
    }
}

/// Durations of one user's time-ordered records; the last record has none.
pub fn durations(timestamps: &[i64]) -> Vec<f64> {
    timestamps.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
}

/// Contexts for every record of one user's time-ordered timestamps.
pub fn user_contexts(timestamps: &[i64], thresholds: &BinThresholds) -> Vec<DurationContext> {
    let dts = durations(timestamps);
    let m = dts.len();
    let delta = |s: i64| {
        let dt = if s >= 0 && (s as usize) < m { dts[s as usize] } else { 0.0 };
        discretize(s, m, dt, thresholds)
    };
    (0..timestamps.len() as i64)
        .map(|s| DurationContext([delta(s - 2), delta(s - 1), delta(s), delta(s + 1), delta(s + 2)]))
        .collect()
}

/// Contexts aligned with a log sorted by `(user, timestamp)`.
pub fn log_contexts(log: &[RatingRecord], thresholds: &BinThresholds) -> Vec<DurationContext> {
    let mut out = Vec::with_capacity(log.len());
    for_each_user(log, |records| {
        let ts: Vec<i64> = records.iter().map(|r| r.timestamp).collect();
        out.extend(user_contexts(&ts, thresholds));
    });
    out
}

/// Every per-user duration of a log sorted by `(user, timestamp)`.
pub fn log_durations(log: &[RatingRecord]) -> Vec<f64> {
    let mut out = Vec::new();
    for_each_user(log, |records| {
        let ts: Vec<i64> = records.iter().map(|r| r.timestamp).collect();
        out.extend(durations(&ts));
    });
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub positives: u64,
    pub total: u64,
}

/// Smoothed acceptance rates per unigram, bigram and trigram of bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTables {
    pub bins: usize,
    pub smoothing: f64,
    /// Acceptance rate over all fitted records; used for unseen cells.
    pub marginal: f64,
    unigram: Vec<Cell>,
    bigram: Vec<Cell>,
    trigram: Vec<Cell>,
}

impl BehaviorTables {
    fn base(&self) -> usize {
        self.bins + 1
    }

    fn index(&self, values: &[i8]) -> Option<usize> {
        let base = self.base();
        values.iter().try_fold(0usize, |acc, &v| {
            let v = v as i64 + 1;
            (0..base as i64).contains(&v).then(|| acc * base + v as usize)
        })
    }

    fn lookup(&self, table: &[Cell], values: &[i8]) -> f64 {
        match self.index(values).map(|i| table[i]) {
            Some(c) if c.total > 0 => {
                (c.positives as f64 + self.smoothing) / (c.total as f64 + 2.0 * self.smoothing)
            }
            _ => self.marginal,
        }
    }

    pub fn p1(&self, a: i8) -> f64 {
        self.lookup(&self.unigram, &[a])
    }

    pub fn p2(&self, a: i8, b: i8) -> f64 {
        self.lookup(&self.bigram, &[a, b])
    }

    pub fn p3(&self, a: i8, b: i8, c: i8) -> f64 {
        self.lookup(&self.trigram, &[a, b, c])
    }

    pub fn cell(&self, values: &[i8]) -> Option<Cell> {
        let table = match values.len() {
            1 => &self.unigram,
            2 => &self.bigram,
            3 => &self.trigram,
            _ => return None,
        };
        self.index(values).map(|i| table[i])
    }

    /// The duration factor over a context of range `r`.
    pub fn gamma(&self, ctx: &DurationContext, r: usize) -> Result<f64> {
        let d = |o: i64| ctx.at(o);
        let left = || self.p3(d(-2), d(-1), d(0));
        let centre = || self.p3(d(-1), d(0), d(1));
        let right = || self.p3(d(0), d(1), d(2));
        Ok(match r {
            1 => self.p1(d(0)),
            2 => self.p2(d(-1), d(0)),
            3 => centre(),
            4 => left() + centre(),
            5 => left() + centre() + right(),
            _ => return Err(Error::ContextRange(r)),
        })
    }

    /// One line per observed cell: `context  positives  total  probability`.
    pub fn to_tsv(&self, thresholds: Option<&BinThresholds>) -> String {
        let mut s = String::new();
        if let Some(t) = thresholds {
            let b: Vec<String> = t.bounds.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "# thresholds {}", b.join(","));
        }
        let _ = writeln!(s, "# marginal {}", self.marginal);
        s.push_str("context\tpositives\ttotal\tprobability\n");
        let base = self.base();
        for (arity, table) in [(1, &self.unigram), (2, &self.bigram), (3, &self.trigram)] {
            for (idx, c) in table.iter().enumerate() {
                if c.total == 0 {
                    continue;
                }
                let mut values = vec![0i64; arity];
                let mut rest = idx;
                for v in values.iter_mut().rev() {
                    *v = (rest % base) as i64 - 1;
                    rest /= base;
                }
                let key: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                let key8: Vec<i8> = values.iter().map(|&v| v as i8).collect();
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}",
                    key.join(","),
                    c.positives,
                    c.total,
                    self.lookup(table, &key8)
                );
            }
        }
        s
    }
}

/// Counts every labeled context into the three tables.
pub fn estimate_tables(
    samples: &[(DurationContext, bool)],
    bins: usize,
    smoothing: f64,
) -> Result<BehaviorTables> {
    if samples.is_empty() {
        return Err(Error::EmptyBehaviorInput);
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Config("behavior.smoothing must be >= 0".into()));
    }
    let base = bins + 1;
    let mut tables = BehaviorTables {
        bins,
        smoothing,
        marginal: 0.0,
        unigram: vec![Cell::default(); base],
        bigram: vec![Cell::default(); base * base],
        trigram: vec![Cell::default(); base * base * base],
    };
    let mut positives = 0u64;
    for (ctx, accepted) in samples {
        let d = |o: i64| ctx.at(o);
        positives += *accepted as u64;
        let keys = [
            (1usize, tables.index(&[d(0)])),
            (2, tables.index(&[d(-1), d(0)])),
            (3, tables.index(&[d(-1), d(0), d(1)])),
        ];
        for (arity, key) in keys {
            let Some(i) = key else { continue };
            let table = match arity {
                1 => &mut tables.unigram,
                2 => &mut tables.bigram,
                _ => &mut tables.trigram,
            };
            table[i].total += 1;
            table[i].positives += *accepted as u64;
        }
    }
    tables.marginal = positives as f64 / samples.len() as f64;
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_thresholds() -> BinThresholds {
        let xs: Vec<f64> = (1..=1600).map(f64::from).collect();
        fit_bins(&xs, 16).unwrap()
    }

    #[test]
    fn uniform_intervals_fill_bins_evenly() {
        let t = uniform_thresholds();
        let mut counts = [0usize; 16];
        for x in 1..=1600 {
            counts[t.bin(x as f64) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| (99..=101).contains(&c)), "{counts:?}");
        assert!(t.bounds.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(t.bounds[0], 0.0);
        assert_eq!(*t.bounds.last().unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_bin() {
        let t = fit_bins(&[3.0, 9.0], 1).unwrap();
        assert_eq!(t.bin(0.0), 0);
        assert_eq!(t.bin(1e9), 0);
    }

    #[test]
    fn heavy_ties_still_strictly_increasing() {
        let mut xs = vec![5.0; 1000];
        xs.extend((1..=20).map(f64::from));
        let t = fit_bins(&xs, 16).unwrap();
        assert!(t.bounds.windows(2).all(|w| w[0] < w[1]), "{:?}", t.bounds);
    }

    #[test]
    fn too_few_distinct_values() {
        let xs = vec![1.0, 2.0, 2.0, 3.0];
        assert!(matches!(
            fit_bins(&xs, 16),
            Err(Error::TooFewDistinctIntervals { needed: 16, found: 3 })
        ));
    }

    #[test]
    fn discretize_edges() {
        let t = uniform_thresholds();
        assert_eq!(discretize(-1, 10, 50.0, &t), -1);
        assert_eq!(discretize(10, 10, 50.0, &t), -1);
        let k = 3;
        assert_eq!(discretize(0, 10, t.bounds[k], &t), k as i8);
    }

    #[test]
    fn contexts_pad_with_missing() {
        let t = fit_bins(&(1..=100).map(f64::from).collect::<Vec<_>>(), 4).unwrap();
        let ctx = user_contexts(&[0, 10, 100], &t);
        assert_eq!(ctx.len(), 3);
        assert_eq!(ctx[0].0[..2], [-1, -1]);
        assert_eq!(ctx[2].at(0), -1);
        assert_eq!(ctx[1].at(-1), t.bin(10.0));
        assert_eq!(ctx[1].at(0), t.bin(90.0));
    }

    fn ctx(c: [i8; 5]) -> DurationContext {
        DurationContext(c)
    }

    #[test]
    fn smoothed_cell() {
        let mut samples = vec![(ctx([0, 0, 3, 0, 0]), true); 2];
        samples.extend(vec![(ctx([0, 0, 3, 0, 0]), false); 6]);
        let t = estimate_tables(&samples, 16, 1.0).unwrap();
        assert!((t.p1(3) - 0.3).abs() < 1e-12);
        assert_eq!(t.p3(5, 5, 5), t.marginal);
        assert!((t.marginal - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unsmoothed_all_positive_cell() {
        let samples = vec![(ctx([1, 2, 3, 4, 5]), true), (ctx([1, 2, 4, 4, 5]), false)];
        let t = estimate_tables(&samples, 16, 0.0).unwrap();
        assert_eq!(t.p1(3), 1.0);
        assert_eq!(t.p1(4), 0.0);
    }

    #[test]
    fn gamma_range_checked() {
        let t = estimate_tables(&[(ctx([0; 5]), true)], 16, 1.0).unwrap();
        assert!(matches!(t.gamma(&ctx([0; 5]), 0), Err(Error::ContextRange(0))));
        assert!(matches!(t.gamma(&ctx([0; 5]), 6), Err(Error::ContextRange(6))));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(estimate_tables(&[], 16, 1.0), Err(Error::EmptyBehaviorInput)));
    }

    fn arb_ctx() -> impl Strategy<Value = DurationContext> {
        prop::array::uniform5(-1i8..4).prop_map(DurationContext)
    }

    proptest! {
        #[test]
        fn gamma_bounds(samples in prop::collection::vec((arb_ctx(), any::<bool>()), 1..60), probe in arb_ctx()) {
            let t = estimate_tables(&samples, 3, 1.0).unwrap();
            for (r, hi) in [(1, 1.0), (2, 1.0), (3, 1.0), (4, 2.0), (5, 3.0)] {
                let g = t.gamma(&probe, r).unwrap();
                prop_assert!((0.0..=hi).contains(&g));
            }
        }

        #[test]
        fn order_independent(mut samples in prop::collection::vec((arb_ctx(), any::<bool>()), 1..60), seed in any::<u64>()) {
            let a = estimate_tables(&samples, 3, 1.0).unwrap();
            let n = samples.len();
            samples.rotate_left((seed as usize) % n);
            samples.reverse();
            let b = estimate_tables(&samples, 3, 1.0).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn discretize_is_total(s in -5i64..50, m in 0usize..40, dt in 0.0f64..1e7) {
            let t = uniform_thresholds();
            let d = discretize(s, m, dt, &t);
            prop_assert!((-1..16).contains(&d));
        }
    }
}
