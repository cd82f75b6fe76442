//! Synthetic datasets with planted structure.
//!
//! Every user (items included, since items are users) gets a latent vector.
//! Affinity between a user and an item is the scaled dot product of their
//! vectors plus an item bias. The social graph, keywords, tags and profile
//! fields are all drawn from the latent vectors, so each side channel carries
//! some of the signal.
//!
//! Each user has a small candidate pool, drawn with a preference for liked
//! items, and the recommender keeps showing pool items until they are
//! accepted. Logs are per-user bursts: within a session records are 1 to 40
//! seconds apart, sessions are at least an hour apart. A record is accepted
//! only if the user was paying attention and then liked the item. Attention
//! depends on how long the user lingered around the record (the five gaps
//! centred on it), is switched off for whole sessions with probability
//! `noise_level`, and after an acceptance the user drifts away with
//! probability one half. Unnoticed records are negatives regardless of
//! affinity, so a liked item often collects several negatives before it is
//! finally accepted.
//!
//! The training and test periods are played forward together, so the test
//! period continues each user's pool where training left off.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    ActionCounts, Gender, ItemId, KeywordId, RatingRecord, SocialGraph, TagId, UserId,
    UserProfile, SECONDS_PER_DAY,
};
use crate::error::{Error, Result};
use crate::ingest::{sort_log, Dataset};
use crate::mfm::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    /// Items are the first `n_items` users.
    pub n_items: usize,
    /// Training log size.
    pub n_records: usize,
    pub n_test_records: usize,
    /// Users active in the test period.
    pub n_test_users: usize,
    pub latent_dim: usize,
    /// Target fraction of accepted training records.
    pub positive_rate: f64,
    /// Probability that a whole session goes unnoticed.
    pub noise_level: f64,
    pub seed: u64,
    /// Share of users that only appear in the test period.
    pub cold_fraction: f64,
    pub start: i64,
    pub train_days: i64,
    pub test_days: i64,
    pub n_keywords: usize,
    pub n_tags: usize,
    /// Mean number of followed items per user.
    pub follows: usize,
    /// Logit scale of the planted dot product.
    pub affinity_scale: f64,
    /// Logit scale of the lingering time in the attention model.
    pub attention_strength: f64,
    /// How strongly the candidate pool favours items the user likes.
    pub impression_bias: f64,
    /// Items the recommender keeps showing a user until they are accepted.
    pub pool_size: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 10_000,
            n_items: 500,
            n_records: 100_000,
            n_test_records: 30_000,
            n_test_users: 2_000,
            latent_dim: 8,
            positive_rate: 0.07,
            noise_level: 0.3,
            seed: 1,
            cold_fraction: 0.15,
            start: 1_318_348_785,
            train_days: 30,
            test_days: 7,
            n_keywords: 400,
            n_tags: 120,
            follows: 12,
            affinity_scale: 2.0,
            attention_strength: 2.5,
            impression_bias: 0.5,
            pool_size: 12,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic.{m}")));
        if self.n_users < 2 || self.n_items < 1 || self.n_records < 1 || self.latent_dim < 1 {
            return bad("counts must be >= 1 (and n_users >= 2)");
        }
        if self.n_items >= self.n_users {
            return bad("n_items must be smaller than n_users");
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad("positive_rate must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.noise_level) || !(0.0..1.0).contains(&self.cold_fraction) {
            return bad("noise_level must lie in [0, 1] and cold_fraction in [0, 1)");
        }
        if self.train_days < 1 || self.test_days < 0 {
            return bad("train_days must be >= 1 and test_days >= 0");
        }
        if self.pool_size < 1 {
            return bad("pool_size must be >= 1");
        }
        if self.n_keywords < self.latent_dim || self.n_tags < self.latent_dim {
            return bad("n_keywords and n_tags must be >= latent_dim");
        }
        Ok(())
    }
}

/// The generating parameters, plus the held-out test period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub user_factors: BTreeMap<UserId, Vec<f64>>,
    pub item_bias: BTreeMap<ItemId, f64>,
    /// Acceptance logit offset found by calibration.
    pub offset: f64,
    pub cold_users: BTreeSet<UserId>,
    /// Sorted by `(user, timestamp)`.
    pub test_log: Vec<RatingRecord>,
}

const GAP_CAP: u64 = 40;
const MAX_SESSION: u64 = 15;
const STAY_AFTER_ACCEPT: f64 = 0.5;
const ATTENTION_BASE: f64 = 0.5;

/// One impression, with all of its randomness drawn up front so the item
/// shown and the label are a deterministic function of the acceptance offset.
struct Slot {
    timestamp: i64,
    session_start: bool,
    session_awake: bool,
    test: bool,
    attention: f64,
    u_pick: f64,
    u_attend: f64,
    u_accept: f64,
    u_stay: f64,
    noise: f64,
}

/// A user's whole history: a candidate pool the recommender keeps showing
/// until items are accepted, and the impressions in time order.
struct Plan {
    user: usize,
    pool: Vec<u32>,
    slots: Vec<Slot>,
}

/// Plays every plan forward, calling `emit(user, slot, item, accepted)`.
/// Accepted items leave the user's pool; a session never repeats an item.
fn simulate(
    plans: &[Plan],
    world: &World,
    n_items: usize,
    offset: f64,
    mut emit: impl FnMut(usize, &Slot, u32, bool),
) {
    let mut pool = Vec::new();
    let mut shown: Vec<u32> = Vec::new();
    for plan in plans {
        let u = plan.user;
        pool.clone_from(&plan.pool);
        let mut engaged = false;
        for slot in &plan.slots {
            if slot.session_start {
                engaged = slot.session_awake;
                shown.clear();
            }
            let fresh = pool.iter().filter(|i| !shown.contains(i)).count();
            let item = if fresh > 0 {
                let k = ((slot.u_pick * fresh as f64) as usize).min(fresh - 1);
                *pool.iter().filter(|i| !shown.contains(i)).nth(k).unwrap()
            } else {
                let others = if u < n_items { n_items - 1 } else { n_items };
                let mut k = ((slot.u_pick * others as f64) as usize).min(others - 1);
                if u < n_items && k >= u {
                    k += 1;
                }
                k as u32
            };
            let logit = world.affinity(u, item as usize) + 0.3 * slot.noise;
            let accepted =
                engaged && slot.u_attend < slot.attention && slot.u_accept < sigmoid(logit + offset);
            if accepted {
                pool.retain(|&i| i != item);
                if slot.u_stay >= STAY_AFTER_ACCEPT {
                    engaged = false;
                }
            }
            shown.push(item);
            emit(u, slot, item, accepted);
        }
    }
}

fn calibrate(plans: &[Plan], world: &World, n_items: usize, target: f64) -> f64 {
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let (mut pos, mut all) = (0usize, 0usize);
        simulate(plans, world, n_items, mid, |_, slot, _, a| {
            if !slot.test {
                all += 1;
                pos += a as usize;
            }
        });
        if (pos as f64) < target * all.max(1) as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(xs: &[f64], scale: f64) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    xs.iter().map(|x| ((x - m) * scale).exp()).collect()
}

struct World {
    factors: Vec<Vec<f64>>,
    item_bias: Vec<f64>,
    scale: f64,
}

impl World {
    fn affinity(&self, u: usize, i: usize) -> f64 {
        self.scale * dot(&self.factors[u], &self.factors[i]) + self.item_bias[i]
    }
}

/// Lingering time of a record, standardized on the log scale.
fn linger(gap: Option<u64>) -> f64 {
    gap.map_or(0.0, |g| ((g as f64).ln() - 2.0) / 0.8)
}

/// Spreads `counts[u]` records per user over `days` from `start` as bursts.
fn draft_sessions(
    rng: &mut ChaCha8Rng,
    config: &SyntheticConfig,
    n: usize,
    start: i64,
    days: i64,
    test: bool,
    out: &mut Vec<Slot>,
) {
    if n == 0 {
        return;
    }
    let session_len = Geometric::new(0.25).unwrap();
    let gap_len = Geometric::new(0.12).unwrap();
    let span = days.max(1) * SECONDS_PER_DAY;
    let mut lengths = Vec::new();
    let mut left = n as u64;
    while left > 0 {
        let l = (1 + session_len.sample(rng)).min(MAX_SESSION).min(left);
        lengths.push(l as usize);
        left -= l;
    }
    let mut starts: Vec<i64> = lengths.iter().map(|_| start + rng.random_range(0..span)).collect();
    starts.sort_unstable();

    let mut prev_end: Option<i64> = None;
    for (&len, &planned) in lengths.iter().zip(&starts) {
        let gaps: Vec<u64> = (0..len.saturating_sub(1))
            .map(|_| (1 + gap_len.sample(rng)).min(GAP_CAP))
            .collect();
        let mut t = match prev_end {
            Some(end) => planned.max(end + 3600 + rng.random_range(0..1800)),
            None => planned,
        };
        let awake = rng.random::<f64>() >= config.noise_level;
        for s in 0..len {
            let around: f64 = (s as i64 - 2..=s as i64 + 2)
                .map(|j| linger((j >= 0).then(|| gaps.get(j as usize).copied()).flatten()))
                .sum();
            out.push(Slot {
                timestamp: t,
                session_start: s == 0,
                session_awake: awake,
                test,
                attention: sigmoid(ATTENTION_BASE + config.attention_strength * around / 2.0),
                u_pick: rng.random(),
                u_attend: rng.random(),
                u_accept: rng.random(),
                u_stay: rng.random(),
                noise: normal(rng),
            });
            if let Some(g) = gaps.get(s) {
                t += *g as i64;
            }
        }
        prev_end = Some(t);
    }
}

/// Record counts per user: `n` draws proportional to `activity` among the
/// `eligible` users.
fn allocate(rng: &mut ChaCha8Rng, activity: &[f64], eligible: &[bool], n: usize) -> Vec<usize> {
    let weights: Vec<f64> = activity
        .iter()
        .zip(eligible)
        .map(|(&a, &e)| if e { a } else { 0.0 })
        .collect();
    let mut counts = vec![0usize; activity.len()];
    if let Ok(pick) = WeightedIndex::new(&weights) {
        for _ in 0..n {
            counts[pick.sample(rng)] += 1;
        }
    }
    counts
}

/// Draws a dataset and its planted truth. A pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Dataset, PlantedTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n_users, n_items, k) = (config.n_users, config.n_items, config.latent_dim);
    let id = |u: usize| UserId(u as u32 + 1);

    let norm = (k as f64).powf(-0.25);
    let factors: Vec<Vec<f64>> = (0..n_users)
        .map(|_| (0..k).map(|_| normal(&mut rng) * norm).collect())
        .collect();
    let item_bias: Vec<f64> = (0..n_items).map(|_| 0.8 * normal(&mut rng)).collect();
    let scale = config.affinity_scale;
    let world = World {
        factors,
        item_bias,
        scale,
    };
    let mut follow_dists = Vec::with_capacity(n_users);
    let mut pools = Vec::with_capacity(n_users);
    for u in 0..n_users {
        let aff: Vec<f64> = (0..n_items).map(|i| world.affinity(u, i)).collect();
        let mut w = softmax(&aff, config.impression_bias);
        if u < n_items {
            w[u] = 0.0;
        }
        let size = config.pool_size.min(w.iter().filter(|&&x| x > 0.0).count());
        let pool = rand::seq::index::sample_weighted(&mut rng, n_items, |i| w[i], size)
            .expect("finite weights");
        pools.push(pool.into_iter().map(|i| i as u32).collect::<Vec<u32>>());
        follow_dists.push(WeightedIndex::new(softmax(&aff, 1.5)).expect("finite weights"));
    }

    // Side information.
    let per_topic_kw = config.n_keywords / k;
    let per_topic_tag = config.n_tags / k;
    let mut profiles = BTreeMap::new();
    let mut item_keywords = BTreeMap::new();
    let mut item_categories = BTreeMap::new();
    let mut graph = SocialGraph::default();
    for u in 0..n_users {
        let x = &world.factors[u];
        let topics = WeightedIndex::new(softmax(x, 2.0)).expect("finite weights");

        let mut keywords: BTreeMap<KeywordId, f64> = BTreeMap::new();
        for _ in 0..rng.random_range(3..=10) {
            let topic = topics.sample(&mut rng);
            let kw = KeywordId((1 + topic + k * rng.random_range(0..per_topic_kw)) as u32);
            *keywords.entry(kw).or_default() += rng.random_range(0.2..1.0);
        }
        let l2 = keywords.values().map(|w| w * w).sum::<f64>().sqrt();
        keywords.values_mut().for_each(|w| *w /= l2);

        let tags: BTreeSet<TagId> = (0..rng.random_range(0..=4))
            .map(|_| {
                let topic = topics.sample(&mut rng);
                TagId((1 + topic + k * rng.random_range(0..per_topic_tag)) as u32)
            })
            .collect();

        let birth_year = if rng.random_bool(0.05) {
            0
        } else {
            (1980.0 + 8.0 * x[0] + 6.0 * normal(&mut rng)).round().clamp(1930.0, 2010.0) as i32
        };
        let gender = if rng.random_bool(0.05) {
            Gender::Unknown
        } else if x[1.min(k - 1)] + 0.5 * normal(&mut rng) > 0.0 {
            Gender::Male
        } else {
            Gender::Female
        };
        let tweet_count = (4.0 + x[2.min(k - 1)] + 1.5 * normal(&mut rng)).exp().floor() as u64;
        profiles.insert(
            id(u),
            UserProfile {
                birth_year,
                gender,
                tweet_count,
                tags,
                keywords,
            },
        );

        if u < n_items {
            let kws: BTreeMap<KeywordId, f64> = (0..rng.random_range(4..=10))
                .map(|_| {
                    let topic = topics.sample(&mut rng);
                    (KeywordId((1 + topic + k * rng.random_range(0..per_topic_kw)) as u32), 1.0)
                })
                .collect();
            item_keywords.insert(id(u).as_item(), kws);
            let lead = (0..k).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(0);
            item_categories.insert(
                id(u).as_item(),
                format!("{}.{}.{}", lead + 1, rng.random_range(1..=4), rng.random_range(1..=4)),
            );
        }

        let wanted = ((config.follows as f64) * rng.random_range(0.5..1.5)).round() as usize;
        let mut followed: BTreeSet<UserId> = BTreeSet::new();
        for _ in 0..wanted * 2 {
            if followed.len() >= wanted.min(n_items - 1) {
                break;
            }
            let i = follow_dists[u].sample(&mut rng);
            if i != u {
                followed.insert(id(i));
            }
        }
        for _ in 0..rng.random_range(0..=2) {
            let v = rng.random_range(0..n_users);
            if v != u {
                followed.insert(id(v));
            }
        }
        let mut actions = BTreeMap::new();
        for &v in &followed {
            if rng.random_bool(0.3) {
                let counts = ActionCounts {
                    at: rng.random_range(0..=3),
                    retweet: rng.random_range(0..=10),
                    comment: rng.random_range(0..=3),
                };
                if !counts.is_empty() {
                    actions.insert(v, counts);
                }
            }
        }
        if !followed.is_empty() {
            graph.follows.insert(id(u), followed);
        }
        if !actions.is_empty() {
            graph.actions.insert(id(u), actions);
        }
    }

    // Logs.
    let activity: Vec<f64> = (0..n_users).map(|_| (0.8 * normal(&mut rng)).exp()).collect();
    let cold: Vec<bool> = (0..n_users).map(|_| rng.random_bool(config.cold_fraction)).collect();
    let warm: Vec<bool> = cold.iter().map(|c| !c).collect();
    let mut testers = vec![false; n_users];
    for u in rand::seq::index::sample(&mut rng, n_users, config.n_test_users.min(n_users)) {
        testers[u] = true;
    }
    let train_counts = allocate(&mut rng, &activity, &warm, config.n_records);
    let test_counts = allocate(&mut rng, &activity, &testers, config.n_test_records);
    let test_start = config.start + config.train_days * SECONDS_PER_DAY;
    let mut plans = Vec::new();
    for u in 0..n_users {
        let mut slots = Vec::new();
        draft_sessions(&mut rng, config, train_counts[u], config.start, config.train_days, false, &mut slots);
        draft_sessions(&mut rng, config, test_counts[u], test_start, config.test_days, true, &mut slots);
        if !slots.is_empty() {
            plans.push(Plan {
                user: u,
                pool: std::mem::take(&mut pools[u]),
                slots,
            });
        }
    }
    let offset = calibrate(&plans, &world, n_items, config.positive_rate);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    simulate(&plans, &world, n_items, offset, |u, slot, item, a| {
        let r = RatingRecord::new(u as u32 + 1, item + 1, a, slot.timestamp);
        if slot.test { test.push(r) } else { train.push(r) }
    });
    sort_log(&mut train);
    sort_log(&mut test);

    let mut ds = Dataset {
        rating_log: train,
        profiles,
        graph,
        item_keywords,
        item_categories,
        ..Dataset::default()
    };
    ds.normalize();

    let truth = PlantedTruth {
        user_factors: world
            .factors
            .iter()
            .enumerate()
            .map(|(u, f)| (id(u), f.clone()))
            .collect(),
        item_bias: world
            .item_bias
            .iter()
            .enumerate()
            .map(|(i, b)| (id(i).as_item(), *b))
            .collect(),
        offset,
        cold_users: (0..n_users).filter(|&u| cold[u]).map(id).collect(),
        test_log: test,
    };
    Ok((ds, truth))
}
