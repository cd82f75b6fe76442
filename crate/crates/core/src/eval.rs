//! Average precision at N and its mean over users.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ItemId, RatingRecord, UserId};
use crate::error::{Error, Result};

pub const DEFAULT_N: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRanking {
    pub user: UserId,
    /// Best first, no duplicates.
    pub ranked: Vec<ItemId>,
    pub relevant: BTreeSet<ItemId>,
}

/// Orders scored items by descending score, ties by ascending id. Repeated
/// items keep their best score.
pub fn rank_items(scores: &[(ItemId, f64)]) -> Vec<ItemId> {
    let mut best: BTreeMap<ItemId, f64> = BTreeMap::new();
    for &(i, s) in scores {
        best.entry(i).and_modify(|b| *b = b.max(s)).or_insert(s);
    }
    let mut v: Vec<(ItemId, f64)> = best.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(i, _)| i).collect()
}

pub fn average_precision(ranking: &UserRanking, n: usize) -> f64 {
    let denom = ranking.relevant.len().min(n);
    if denom == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, item) in ranking.ranked.iter().take(n).enumerate() {
        if ranking.relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / denom as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub n: usize,
    pub map: f64,
    /// Evaluated users only, in user order.
    pub per_user: Vec<(UserId, f64)>,
}

impl MapReport {
    pub fn users(&self) -> usize {
        self.per_user.len()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# MAP@{}; users without relevant items are excluded", self.n);
        for (u, ap) in &self.per_user {
            let _ = writeln!(s, "{u}\t{ap}");
        }
        let _ = writeln!(s, "MAP {} users {}", self.map, self.users());
        s
    }
}

/// Mean AP@N over users with at least one relevant item.
pub fn map_at_n(rankings: &[UserRanking], n: usize) -> Result<MapReport> {
    if n == 0 {
        return Err(Error::Config("evaluation cutoff N must be >= 1".into()));
    }
    let mut per_user: Vec<(UserId, f64)> = rankings
        .iter()
        .filter(|r| !r.relevant.is_empty())
        .map(|r| (r.user, average_precision(r, n)))
        .collect();
    if per_user.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    per_user.sort_by_key(|e| e.0);
    let map = per_user.iter().map(|e| e.1).sum::<f64>() / per_user.len() as f64;
    Ok(MapReport { n, map, per_user })
}

/// Joins `(user, item, score)` predictions with a labeled log. Every truth
/// user becomes a ranking (empty when nothing was predicted for them).
pub fn rankings_from_scores(
    scores: &[(UserId, ItemId, f64)],
    truth: &[RatingRecord],
) -> Result<Vec<UserRanking>> {
    let mut by_user: BTreeMap<UserId, Vec<(ItemId, f64)>> = BTreeMap::new();
    for &(u, i, s) in scores {
        by_user.entry(u).or_default().push((i, s));
    }
    let mut relevant: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    for r in truth {
        let e = relevant.entry(r.user).or_default();
        if r.accepted {
            e.insert(r.item);
        }
    }
    if !relevant.keys().any(|u| by_user.contains_key(u)) {
        return Err(Error::DisjointUsers {
            predicted: by_user.len(),
            truth: relevant.len(),
        });
    }
    Ok(relevant
        .into_iter()
        .map(|(user, relevant)| UserRanking {
            user,
            ranked: by_user.get(&user).map(|s| rank_items(s)).unwrap_or_default(),
            relevant,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(ranked: &[u32], relevant: &[u32]) -> UserRanking {
        UserRanking {
            user: UserId(1),
            ranked: ranked.iter().map(|&i| ItemId(i)).collect(),
            relevant: relevant.iter().map(|&i| ItemId(i)).collect(),
        }
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&ranking(&[1, 2, 3], &[1, 3]), 3);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision(&ranking(&[1, 2, 3], &[1, 2, 3]), 3), 1.0);
        assert_eq!(average_precision(&ranking(&[1, 2, 3], &[2]), 3), 0.5);
        assert_eq!(average_precision(&ranking(&[], &[2]), 3), 0.0);
    }

    #[test]
    fn map_mean_and_exclusion() {
        let mut a = ranking(&[1, 2], &[1]);
        let mut b = ranking(&[1, 2], &[2]);
        let c = ranking(&[1, 2], &[]);
        a.user = UserId(1);
        b.user = UserId(2);
        let r = map_at_n(&[a, b, c], 3).unwrap();
        assert_eq!(r.map, 0.75);
        assert_eq!(r.users(), 2);
        assert!(r.to_tsv().ends_with("MAP 0.75 users 2\n"));
        assert!(matches!(map_at_n(&[ranking(&[1], &[])], 3), Err(Error::NoEvaluableUsers)));
    }

    #[test]
    fn ties_break_by_item_id() {
        let r = rank_items(&[(ItemId(9), 1.0), (ItemId(3), 1.0), (ItemId(5), 2.0), (ItemId(9), 0.0)]);
        assert_eq!(r, vec![ItemId(5), ItemId(3), ItemId(9)]);
    }

    #[test]
    fn disjoint_users_rejected() {
        let truth = vec![RatingRecord::new(1, 5, true, 0)];
        let err = rankings_from_scores(&[(UserId(2), ItemId(5), 1.0)], &truth).unwrap_err();
        assert!(err.to_string().contains("share no users"));
    }
}
