//! Session slicing of each user's log, removal of negatives the user most
//! likely never looked at, and supplementing positives from the social graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ItemId, RatingRecord, UserId};
use crate::error::{Error, Result};
use crate::ingest::{sort_log, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Base slicing threshold `tau0` in seconds.
    pub tau0: f64,
    /// Only gaps shorter than this enter the per-user mean gap.
    pub session_cap: f64,
    pub pi_minus: usize,
    pub pi_plus: usize,
    pub epsilon: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            tau0: 90.0,
            session_cap: 3600.0,
            pi_minus: 0,
            pi_plus: 3,
            epsilon: 0.86,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0) {
            return Err(Error::Config("filter.tau0 must be > 0".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config("filter.epsilon must be in (0, 1]".into()));
        }
        if !(self.session_cap > 0.0) {
            return Err(Error::Config("filter.session_cap must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupplementParams {
    pub xi_at: f64,
    pub xi_retweet: f64,
    pub xi_comment: f64,
    /// A user is eligible when `positives < imbalance_threshold * negatives`.
    pub imbalance_threshold: f64,
}

impl Default for SupplementParams {
    fn default() -> Self {
        Self {
            xi_at: 2.0,
            xi_retweet: 0.2,
            xi_comment: 1.0,
            imbalance_threshold: 0.5,
        }
    }
}

impl SupplementParams {
    pub fn validate(&self) -> Result<()> {
        if self.xi_at < 0.0 || self.xi_retweet < 0.0 || self.xi_comment < 0.0 {
            return Err(Error::Config("supplement weights must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub user: UserId,
    /// Time-ordered; a record's position is its within-session index.
    pub records: Vec<RatingRecord>,
    /// Smallest and largest index of a positive record.
    pub positive_span: Option<(usize, usize)>,
}

impl Session {
    fn new(user: UserId, records: Vec<RatingRecord>) -> Self {
        let first = records.iter().position(|r| r.accepted);
        let last = records.iter().rposition(|r| r.accepted);
        Self {
            user,
            records,
            positive_span: first.zip(last),
        }
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }
}

/// Per-user slicing threshold: half of `tau0` plus the mean of the gaps
/// shorter than `session_cap`; `tau0` itself when no such gap exists.
pub fn session_threshold(intervals: &[f64], tau0: f64, session_cap: f64) -> f64 {
    let (sum, n) = intervals
        .iter()
        .filter(|&&g| g < session_cap)
        .fold((0.0, 0usize), |(s, n), &g| (s + g, n + 1));
    if n == 0 {
        tau0
    } else {
        0.5 * (tau0 + sum / n as f64)
    }
}

pub fn intervals(records: &[RatingRecord]) -> Vec<f64> {
    records
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp) as f64)
        .collect()
}

/// Splits one user's time-ordered records wherever the gap exceeds `tau`.
pub fn split_with_threshold(records: &[RatingRecord], tau: f64) -> Vec<Session> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let user = first.user;
    let mut sessions = Vec::new();
    let mut current = vec![*first];
    for w in records.windows(2) {
        let gap = (w[1].timestamp - w[0].timestamp) as f64;
        if gap > tau {
            sessions.push(Session::new(user, std::mem::take(&mut current)));
        }
        current.push(w[1]);
    }
    sessions.push(Session::new(user, current));
    sessions
}

pub fn split_sessions(records: &[RatingRecord], params: &FilterParams) -> Vec<Session> {
    let tau = session_threshold(&intervals(records), params.tau0, params.session_cap);
    split_with_threshold(records, tau)
}

/// Indices of the records that survive the three validity conditions.
pub fn filter_session(session: &Session, params: &FilterParams) -> Vec<usize> {
    let Some((lo, hi)) = session.positive_span else {
        return Vec::new();
    };
    let ratio = session.positives() as f64 / session.records.len() as f64;
    if !(ratio > 0.0 && ratio <= params.epsilon) {
        return Vec::new();
    }
    (0..session.records.len())
        .filter(|&s| s.saturating_sub(lo) <= params.pi_minus && hi.saturating_sub(s) <= params.pi_plus)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterStats {
    pub input_records: usize,
    pub sessions: usize,
    pub kept_positive: usize,
    pub kept_negative: usize,
    /// Records in sessions without any positive.
    pub dropped_no_positive: usize,
    /// Records in sessions whose positive ratio exceeds epsilon.
    pub dropped_ratio: usize,
    /// Records failing the position bounds around the positives.
    pub dropped_position: usize,
    pub supplemented: usize,
}

/// Surviving records split by rating, each sorted by `(user, timestamp)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilteredLog {
    pub negatives: Vec<RatingRecord>,
    pub positives: Vec<RatingRecord>,
    pub stats: FilterStats,
}

impl FilteredLog {
    /// Treats every record as valid.
    pub fn unfiltered(log: &[RatingRecord]) -> Self {
        let (positives, negatives): (Vec<_>, Vec<_>) = log.iter().partition(|r| r.accepted);
        let stats = FilterStats {
            input_records: log.len(),
            kept_positive: positives.len(),
            kept_negative: negatives.len(),
            ..FilterStats::default()
        };
        Self {
            negatives,
            positives,
            stats,
        }
    }

    pub fn from_records(mut log: Vec<RatingRecord>) -> Self {
        sort_log(&mut log);
        Self::unfiltered(&log)
    }

    pub fn len(&self) -> usize {
        self.negatives.len() + self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Both partitions merged into one log sorted by `(user, timestamp)`.
    pub fn merged(&self) -> Vec<RatingRecord> {
        let mut all: Vec<RatingRecord> =
            self.negatives.iter().chain(&self.positives).copied().collect();
        sort_log(&mut all);
        all
    }

    pub fn stats_tsv(&self) -> String {
        let s = &self.stats;
        let mut out = String::new();
        for (k, v) in [
            ("input_records", s.input_records),
            ("sessions", s.sessions),
            ("kept_positive", s.kept_positive),
            ("kept_negative", s.kept_negative),
            ("dropped_no_positive", s.dropped_no_positive),
            ("dropped_ratio", s.dropped_ratio),
            ("dropped_position", s.dropped_position),
            ("supplemented", s.supplemented),
        ] {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }
}

/// Runs the per-user groups of a `(user, timestamp)`-sorted log through `f`.
pub fn for_each_user<'a>(log: &'a [RatingRecord], mut f: impl FnMut(&'a [RatingRecord])) {
    let mut start = 0;
    while start < log.len() {
        let user = log[start].user;
        let end = start + log[start..].iter().take_while(|r| r.user == user).count();
        f(&log[start..end]);
        start = end;
    }
}

pub fn filter_log(log: &[RatingRecord], params: &FilterParams) -> FilteredLog {
    let mut out = FilteredLog::default();
    out.stats.input_records = log.len();
    for_each_user(log, |records| {
        for session in split_sessions(records, params) {
            out.stats.sessions += 1;
            let n = session.records.len();
            let kept = filter_session(&session, params);
            if session.positive_span.is_none() {
                out.stats.dropped_no_positive += n;
            } else if kept.is_empty() {
                out.stats.dropped_ratio += n;
            } else {
                out.stats.dropped_position += n - kept.len();
            }
            for s in kept {
                let r = session.records[s];
                if r.accepted {
                    out.positives.push(r);
                } else {
                    out.negatives.push(r);
                }
            }
        }
    });
    out.stats.kept_positive = out.positives.len();
    out.stats.kept_negative = out.negatives.len();
    out
}

pub fn filter_dataset(dataset: &Dataset, params: &FilterParams) -> FilteredLog {
    filter_log(&dataset.rating_log, params)
}

/// Adds at most one positive per under-represented user: the followed item
/// the user interacts with most, by weighted action count.
pub fn supplement_positives(
    dataset: &Dataset,
    filtered: &FilteredLog,
    params: &SupplementParams,
) -> Vec<RatingRecord> {
    let mut counts: BTreeMap<UserId, (usize, usize)> = BTreeMap::new();
    let mut positive_items: BTreeSet<(UserId, ItemId)> = BTreeSet::new();
    for r in &filtered.positives {
        counts.entry(r.user).or_default().0 += 1;
        positive_items.insert((r.user, r.item));
    }
    for r in &filtered.negatives {
        counts.entry(r.user).or_default().1 += 1;
    }
    let mut last_seen: BTreeMap<UserId, i64> = BTreeMap::new();
    for r in &dataset.rating_log {
        let e = last_seen.entry(r.user).or_insert(r.timestamp);
        *e = (*e).max(r.timestamp);
    }

    let mut added = Vec::new();
    for (&user, &(pos, neg)) in &counts {
        if !((pos as f64) < params.imbalance_threshold * neg as f64) {
            continue;
        }
        let (Some(follows), Some(actions)) = (
            dataset.graph.followees(user),
            dataset.graph.action_targets(user),
        ) else {
            continue;
        };
        let mut best: Option<(f64, ItemId)> = None;
        for (target, c) in actions {
            if !follows.contains(target) || !dataset.item_keywords.contains_key(&target.as_item()) {
                continue;
            }
            let item = target.as_item();
            if positive_items.contains(&(user, item)) {
                continue;
            }
            let score = params.xi_at * c.at as f64
                + params.xi_retweet * c.retweet as f64
                + params.xi_comment * c.comment as f64;
            // candidates arrive in ascending id order, so strict > keeps the lowest id on ties
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, item));
            }
        }
        if let Some((_, item)) = best {
            let ts = last_seen.get(&user).copied().unwrap_or(dataset.window.1) + 1;
            added.push(RatingRecord {
                user,
                item,
                accepted: true,
                timestamp: ts,
            });
        }
    }
    added
}

/// Filtering (optional) followed by supplementing (optional).
pub fn preprocess(
    dataset: &Dataset,
    filter: Option<&FilterParams>,
    supplement: Option<&SupplementParams>,
) -> FilteredLog {
    let mut filtered = match filter {
        Some(p) => filter_dataset(dataset, p),
        None => FilteredLog::unfiltered(&dataset.rating_log),
    };
    if let Some(p) = supplement {
        let added = supplement_positives(dataset, &filtered, p);
        filtered.stats.supplemented = added.len();
        filtered.positives.extend(added);
        sort_log(&mut filtered.positives);
        filtered.stats.kept_positive = filtered.positives.len();
    }
    filtered
}
