use serde::{Deserialize, Serialize};

use super::features::for_each_common;
use crate::data::{ItemId, KeywordId, TagId};
use crate::ingest::Dataset;

/// Keyword and tag description of an item used for the item distance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemVector {
    /// Sorted by keyword.
    pub keywords: Vec<(KeywordId, f64)>,
    /// Sorted, binary.
    pub tags: Vec<TagId>,
}

impl ItemVector {
    fn keyword_norm(&self) -> f64 {
        self.keywords.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

pub fn item_vectors(ds: &Dataset, items: &[ItemId]) -> Vec<ItemVector> {
    items
        .iter()
        .map(|i| ItemVector {
            keywords: ds
                .item_keywords
                .get(i)
                .map(|m| m.iter().map(|(k, w)| (*k, *w)).collect())
                .unwrap_or_default(),
            tags: ds
                .item_tags
                .get(i)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default(),
        })
        .collect()
}

fn keyword_distance(a: &ItemVector, b: &ItemVector) -> f64 {
    let (na, nb) = (a.keyword_norm(), b.keyword_norm());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let mut dot = 0.0;
    for_each_common(&a.keywords, &b.keywords, |x| x.0, |y| y.0, |x, y| dot += x.1 * y.1);
    1.0 - dot / (na * nb)
}

fn tag_distance(a: &ItemVector, b: &ItemVector) -> f64 {
    if a.tags.is_empty() || b.tags.is_empty() {
        return 1.0;
    }
    let mut shared = 0usize;
    for_each_common(&a.tags, &b.tags, |x| x, |y| y, |_, _| shared += 1);
    1.0 - shared as f64 / ((a.tags.len() * b.tags.len()) as f64).sqrt()
}

/// Blend of keyword and tag cosine distances; an empty side counts as
/// maximally distant.
pub fn item_distance(a: &ItemVector, b: &ItemVector, rho: f64) -> f64 {
    rho * keyword_distance(a, b) + (1.0 - rho) * tag_distance(a, b)
}

/// `D^k(i)` for every item: the `k` closest other items with their distance,
/// nearest first, ties broken by item position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborTable {
    pub k: usize,
    pub lists: Vec<Vec<(u32, f64)>>,
}

impl NeighborTable {
    pub fn of(&self, item: usize) -> &[(u32, f64)] {
        self.lists.get(item).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn build_neighbors(items: &[ItemVector], k: usize, rho: f64) -> NeighborTable {
    let n = items.len();
    let mut lists = Vec::with_capacity(n);
    let mut row: Vec<(u32, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (j as u32, item_distance(&items[i], &items[j], rho))),
        );
        let take = k.min(row.len());
        let by_distance = |a: &(u32, f64), b: &(u32, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        if take > 0 && take < row.len() {
            row.select_nth_unstable_by(take - 1, by_distance);
        }
        let mut nearest: Vec<(u32, f64)> = row[..take].to_vec();
        nearest.sort_unstable_by(by_distance);
        lists.push(nearest);
    }
    NeighborTable { k, lists }
}
