use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::MfmConfig;
use crate::data::{ItemId, KeywordId, TagId, UserId, UserProfile};
use crate::ingest::Dataset;

/// Dense indices for every id the model has parameters for.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "VocabLists", into = "VocabLists")]
pub struct Vocab {
    pub users: Vec<UserId>,
    pub items: Vec<ItemId>,
    pub keywords: Vec<KeywordId>,
    pub tags: Vec<TagId>,
    user_index: HashMap<UserId, u32>,
    item_index: HashMap<ItemId, u32>,
    keyword_index: HashMap<KeywordId, u32>,
    tag_index: HashMap<TagId, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    users: Vec<UserId>,
    items: Vec<ItemId>,
    keywords: Vec<KeywordId>,
    tags: Vec<TagId>,
}

impl From<VocabLists> for Vocab {
    fn from(v: VocabLists) -> Self {
        Vocab::new(v.users, v.items, v.keywords, v.tags)
    }
}

impl From<Vocab> for VocabLists {
    fn from(v: Vocab) -> Self {
        VocabLists {
            users: v.users,
            items: v.items,
            keywords: v.keywords,
            tags: v.tags,
        }
    }
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.users == other.users
            && self.items == other.items
            && self.keywords == other.keywords
            && self.tags == other.tags
    }
}

fn index_of<K: std::hash::Hash + Eq + Copy>(keys: &[K]) -> HashMap<K, u32> {
    keys.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect()
}

impl Vocab {
    pub fn new(
        users: Vec<UserId>,
        items: Vec<ItemId>,
        keywords: Vec<KeywordId>,
        tags: Vec<TagId>,
    ) -> Self {
        Self {
            user_index: index_of(&users),
            item_index: index_of(&items),
            keyword_index: index_of(&keywords),
            tag_index: index_of(&tags),
            users,
            items,
            keywords,
            tags,
        }
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        let users: Vec<UserId> = ds.profiles.keys().copied().collect();
        let items: Vec<ItemId> = ds.item_keywords.keys().copied().collect();
        let mut keywords: BTreeSet<KeywordId> = BTreeSet::new();
        let mut tags: BTreeSet<TagId> = BTreeSet::new();
        for p in ds.profiles.values() {
            keywords.extend(p.keywords.keys().copied());
            tags.extend(p.tags.iter().copied());
        }
        for kws in ds.item_keywords.values() {
            keywords.extend(kws.keys().copied());
        }
        for ts in ds.item_tags.values() {
            tags.extend(ts.iter().copied());
        }
        Self::new(
            users,
            items,
            keywords.into_iter().collect(),
            tags.into_iter().collect(),
        )
    }

    #[inline]
    pub fn user(&self, u: UserId) -> Option<usize> {
        self.user_index.get(&u).map(|&x| x as usize)
    }

    #[inline]
    pub fn item(&self, i: ItemId) -> Option<usize> {
        self.item_index.get(&i).map(|&x| x as usize)
    }

    pub fn keyword(&self, k: KeywordId) -> Option<usize> {
        self.keyword_index.get(&k).map(|&x| x as usize)
    }

    pub fn tag(&self, t: TagId) -> Option<usize> {
        self.tag_index.get(&t).map(|&x| x as usize)
    }
}

/// Side information of one user, resolved to dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserFeatures {
    pub age: usize,
    pub gender: usize,
    pub tweet: usize,
    /// `S(u)` including `u` itself, as user rows.
    pub follows: Vec<u32>,
    pub follows_scale: f64,
    /// Followed users that are also items, as sorted item rows.
    pub followed_items: Vec<u32>,
    pub actions: Vec<u32>,
    pub actions_scale: f64,
    /// `(keyword row, W(u,m))`, sorted by row.
    pub keywords: Vec<(u32, f64)>,
    pub tags: Vec<u32>,
    pub tags_scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemFeatures {
    pub age: usize,
    pub gender: usize,
    /// Sorted keyword rows.
    pub keywords: Vec<u32>,
    /// Sorted tag rows.
    pub tags: Vec<u32>,
}

/// Precomputed side information for every user and item of a vocabulary.
#[derive(Debug, Clone, Default)]
pub struct FeatureIndex {
    pub users: Vec<UserFeatures>,
    pub items: Vec<ItemFeatures>,
}

fn set_scale(n: usize, exponent: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64).powf(exponent)
    }
}

impl FeatureIndex {
    pub fn build(ds: &Dataset, vocab: &Vocab, config: &MfmConfig) -> Self {
        let default_profile = UserProfile::default();
        let users = vocab
            .users
            .iter()
            .map(|&u| {
                let p = ds.profiles.get(&u).unwrap_or(&default_profile);
                let mut follows: Vec<u32> = ds
                    .graph
                    .followees(u)
                    .into_iter()
                    .flatten()
                    .chain(std::iter::once(&u))
                    .filter_map(|v| vocab.user(*v).map(|x| x as u32))
                    .collect();
                follows.sort_unstable();
                follows.dedup();
                let mut followed_items: Vec<u32> = ds
                    .graph
                    .followees(u)
                    .into_iter()
                    .flatten()
                    .chain(std::iter::once(&u))
                    .filter_map(|v| vocab.item(v.as_item()).map(|x| x as u32))
                    .collect();
                followed_items.sort_unstable();
                followed_items.dedup();
                let mut actions: Vec<u32> = ds
                    .graph
                    .action_targets(u)
                    .into_iter()
                    .flat_map(|m| m.keys())
                    .filter_map(|v| vocab.user(*v).map(|x| x as u32))
                    .collect();
                actions.sort_unstable();
                actions.dedup();
                let mut keywords: Vec<(u32, f64)> = p
                    .keywords
                    .iter()
                    .filter_map(|(k, w)| vocab.keyword(*k).map(|x| (x as u32, *w)))
                    .collect();
                keywords.sort_unstable_by_key(|kw| kw.0);
                let mut tags: Vec<u32> = p
                    .tags
                    .iter()
                    .filter_map(|t| vocab.tag(*t).map(|x| x as u32))
                    .collect();
                tags.sort_unstable();
                UserFeatures {
                    age: p.age_bucket().index(),
                    gender: p.gender.index(),
                    tweet: p.tweet_bucket().index(),
                    follows_scale: set_scale(follows.len(), config.alpha_sns),
                    follows,
                    followed_items,
                    actions_scale: set_scale(actions.len(), config.alpha_action),
                    actions,
                    keywords,
                    tags_scale: set_scale(tags.len(), -0.5),
                    tags,
                }
            })
            .collect();

        let items = vocab
            .items
            .iter()
            .map(|&i| {
                let p = ds.profiles.get(&i.as_user()).unwrap_or(&default_profile);
                let mut keywords: Vec<u32> = ds
                    .item_keywords
                    .get(&i)
                    .into_iter()
                    .flat_map(|m| m.keys())
                    .filter_map(|k| vocab.keyword(*k).map(|x| x as u32))
                    .collect();
                keywords.sort_unstable();
                let mut tags: Vec<u32> = ds
                    .item_tags
                    .get(&i)
                    .into_iter()
                    .flatten()
                    .filter_map(|t| vocab.tag(*t).map(|x| x as u32))
                    .collect();
                tags.sort_unstable();
                ItemFeatures {
                    age: p.age_bucket().index(),
                    gender: p.gender.index(),
                    keywords,
                    tags,
                }
            })
            .collect();

        Self { users, items }
    }
}

/// Calls `f` for every element present in both sorted slices.
#[inline]
pub(crate) fn for_each_common<A: Copy, B: Copy, K: Ord>(
    a: &[A],
    b: &[B],
    ka: impl Fn(A) -> K,
    kb: impl Fn(B) -> K,
    mut f: impl FnMut(A, B),
) {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match ka(a[x]).cmp(&kb(b[y])) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                f(a[x], b[y]);
                x += 1;
                y += 1;
            }
        }
    }
}
