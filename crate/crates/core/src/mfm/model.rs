use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{for_each_common, FeatureIndex};
pub use super::features::Vocab;
use super::layout::{Layout, Sizes, Table};
use super::neighbors::{build_neighbors, item_vectors, NeighborTable};
use super::MfmConfig;
use crate::data::{hour_bin, ItemId, RatingRecord, UserId, GENDERS};
use crate::ingest::Dataset;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-user rating averages backing the neighborhood term.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingStats {
    /// `mu_u`, indexed by user row.
    pub user_mean: Vec<f64>,
    /// `(item row, r̄_uj)` sorted by item row, indexed by user row.
    pub rated: Vec<Vec<(u32, f64)>>,
}

impl RatingStats {
    pub fn from_log(log: &[RatingRecord], vocab: &Vocab) -> Self {
        let n = vocab.users.len();
        let mut sums: Vec<Vec<(u32, f64, u32)>> = vec![Vec::new(); n];
        for r in log {
            let (Some(u), Some(i)) = (vocab.user(r.user), vocab.item(r.item)) else {
                continue;
            };
            sums[u].push((i as u32, r.rating(), 1));
        }
        let mut user_mean = vec![0.0; n];
        let mut rated = vec![Vec::new(); n];
        for (u, mut entries) in sums.into_iter().enumerate() {
            if entries.is_empty() {
                continue;
            }
            user_mean[u] = entries.iter().map(|e| e.1).sum::<f64>() / entries.len() as f64;
            entries.sort_unstable_by_key(|e| e.0);
            let mut merged: Vec<(u32, f64, u32)> = Vec::new();
            for e in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == e.0 => {
                        last.1 += e.1;
                        last.2 += 1;
                    }
                    _ => merged.push(e),
                }
            }
            rated[u] = merged.into_iter().map(|(i, s, c)| (i, s / c as f64)).collect();
        }
        Self { user_mean, rated }
    }
}

/// Time range and size of the log a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub start: i64,
    pub end: i64,
    pub records: usize,
}

impl Provenance {
    pub fn of(log: &[RatingRecord]) -> Option<Self> {
        let start = log.iter().map(|r| r.timestamp).min()?;
        let end = log.iter().map(|r| r.timestamp).max()?;
        Some(Self {
            start,
            end,
            records: log.len(),
        })
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.start..=self.end).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfmModel {
    pub config: MfmConfig,
    pub vocab: Vocab,
    pub layout: Layout,
    pub params: Vec<f64>,
    /// Global mean rating.
    pub mu: f64,
    pub neighbors: NeighborTable,
    pub ratings: RatingStats,
    pub provenance: Option<Provenance>,
}

impl MfmModel {
    /// A freshly initialized model covering every user, item, keyword and
    /// tag of `ds`.
    pub fn new(ds: &Dataset, config: MfmConfig) -> Self {
        let vocab = Vocab::from_dataset(ds);
        let neighbors = if config.flags.knn {
            build_neighbors(&item_vectors(ds, &vocab.items), config.neighbors, config.rho)
        } else {
            NeighborTable::default()
        };
        Self::with_parts(config, vocab, neighbors)
    }

    pub fn with_parts(config: MfmConfig, vocab: Vocab, neighbors: NeighborTable) -> Self {
        let layout = Self::layout_for(&config, &vocab);
        let mut model = Self {
            params: vec![0.0; layout.total()],
            layout,
            config,
            vocab,
            mu: 0.0,
            neighbors,
            ratings: RatingStats::default(),
            provenance: None,
        };
        model.initialize();
        model
    }

    pub(crate) fn layout_for(config: &MfmConfig, vocab: &Vocab) -> Layout {
        Layout::new(
            &Sizes {
                users: vocab.users.len(),
                items: vocab.items.len(),
                keywords: vocab.keywords.len(),
                tags: vocab.tags.len(),
                neighbors: config.neighbors,
                dim: config.latent_dim,
            },
            &config.flags,
        )
    }

    /// Biases and neighborhood weights at zero, latent entries uniform in
    /// `±init_scale/sqrt(d)`, drawn from the configured seed.
    pub fn initialize(&mut self) {
        self.params.iter_mut().for_each(|p| *p = 0.0);
        let bound = self.config.init_scale / (self.config.latent_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        for t in Table::ALL {
            if !t.is_latent() {
                continue;
            }
            let s = self.layout.spec(t);
            for p in &mut self.params[s.offset..s.offset + s.len()] {
                *p = if bound > 0.0 {
                    rng.random_range(-bound..bound)
                } else {
                    0.0
                };
            }
        }
    }

    /// Sets the global mean, the per-user rating averages and the provenance
    /// from the training log.
    pub fn fit_statistics(&mut self, log: &[RatingRecord]) {
        self.mu = if log.is_empty() {
            0.0
        } else {
            log.iter().map(RatingRecord::rating).sum::<f64>() / log.len() as f64
        };
        self.ratings = RatingStats::from_log(log, &self.vocab);
        self.provenance = Provenance::of(log);
    }

    pub fn dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn table(&self, t: Table) -> &[f64] {
        let s = self.layout.spec(t);
        &self.params[s.offset..s.offset + s.len()]
    }

    pub fn table_mut(&mut self, t: Table) -> &mut [f64] {
        let s = self.layout.spec(t);
        &mut self.params[s.offset..s.offset + s.len()]
    }

    pub fn row(&self, t: Table, row: usize) -> &[f64] {
        let s = self.layout.spec(t);
        let o = self.layout.at(t, row);
        &self.params[o..o + s.width]
    }

    pub fn row_mut(&mut self, t: Table, row: usize) -> &mut [f64] {
        let s = self.layout.spec(t);
        let o = self.layout.at(t, row);
        &mut self.params[o..o + s.width]
    }

    // ---- term visitors ---------------------------------------------------
    //
    // Each visitor reports `(offset, coefficient)` pairs such that the part of
    // the score it covers is the coefficient-weighted sum of the parameters
    // (scalars) or parameter rows (vectors) at those offsets. Prediction and
    // gradients are both derived from these.

    #[inline]
    pub(crate) fn visit_bias(
        &self,
        fx: &FeatureIndex,
        u: Option<usize>,
        i: Option<usize>,
        t: i64,
        f: &mut impl FnMut(usize, f64),
    ) {
        let flags = &self.config.flags;
        let l = &self.layout;
        if let Some(u) = u {
            f(l.at(Table::UserBias, u), 1.0);
            if flags.tweetnum {
                f(l.at(Table::Tweet, fx.users[u].tweet), 1.0);
            }
        }
        if flags.hour {
            f(l.at(Table::Hour, hour_bin(t).index()), 1.0);
        }
        let Some(i) = i else { return };
        f(l.at(Table::ItemBias, i), 1.0);
        if flags.day {
            let a = self.config.window.day_weight(t);
            f(l.at(Table::DayMinus, i), a);
            f(l.at(Table::DayPlus, i), 1.0 - a);
        }
        if flags.second {
            let a = self.config.window.sec_weight(t);
            f(l.at(Table::SecMinus, i), a);
            f(l.at(Table::SecPlus, i), 1.0 - a);
        }
        let Some(u) = u else { return };
        let (uf, itf) = (&fx.users[u], &fx.items[i]);
        if flags.profile {
            f(l.at(Table::UserToItemGender, u) + itf.gender, 1.0);
            f(l.at(Table::UserToItemAge, u) + itf.age, 1.0);
            f(l.at(Table::GenderToItem, i) + uf.gender, 1.0);
            f(l.at(Table::AgeToItem, i) + uf.age, 1.0);
        }
        if flags.keywords {
            for_each_common(&uf.keywords, &itf.keywords, |x| x.0, |y| y, |(m, _), _| {
                f(l.at(Table::Keyword, m as usize), 1.0)
            });
        }
        if flags.tags {
            for_each_common(&uf.tags, &itf.tags, |x| x, |y| y, |n, _| {
                f(l.at(Table::Tag, n as usize), 1.0)
            });
        }
    }

    #[inline]
    pub(crate) fn visit_knn(
        &self,
        fx: &FeatureIndex,
        u: Option<usize>,
        i: Option<usize>,
        f: &mut impl FnMut(usize, f64),
    ) {
        if !self.config.flags.knn {
            return;
        }
        let (Some(u), Some(i)) = (u, i) else { return };
        let nbrs = self.neighbors.of(i);
        if nbrs.is_empty() {
            return;
        }
        if let (Some(rated), Some(&mean_u)) = (self.ratings.rated.get(u), self.ratings.user_mean.get(u)) {
            let found = |j: u32| rated.binary_search_by_key(&j, |e| e.0).ok().map(|x| rated[x].1);
            let n = nbrs.iter().filter(|(j, _)| found(*j).is_some()).count();
            if n > 0 {
                let scale = 1.0 / (n as f64).sqrt();
                let base = self.layout.at(Table::KnnRated, i);
                for (slot, (j, _)) in nbrs.iter().enumerate() {
                    if let Some(rbar) = found(*j) {
                        f(base + slot, scale * (rbar - mean_u));
                    }
                }
            }
        }
        let followed = &fx.users[u].followed_items;
        let n = nbrs
            .iter()
            .filter(|(j, _)| followed.binary_search(j).is_ok())
            .count();
        if n > 0 {
            let scale = 1.0 / (n as f64).sqrt();
            let base = self.layout.at(Table::KnnFollowed, i);
            for (slot, (j, _)) in nbrs.iter().enumerate() {
                if followed.binary_search(j).is_ok() {
                    f(base + slot, scale);
                }
            }
        }
    }

    #[inline]
    pub(crate) fn visit_item_rows(&self, i: usize, t: i64, f: &mut impl FnMut(usize, f64)) {
        let flags = &self.config.flags;
        let l = &self.layout;
        f(l.at(Table::ItemFactor, i), 1.0);
        if flags.day {
            let a = self.config.window.day_weight(t);
            f(l.at(Table::ZDayMinus, i), a);
            f(l.at(Table::ZDayPlus, i), 1.0 - a);
        }
        if flags.second {
            let a = self.config.window.sec_weight(t);
            f(l.at(Table::ZSecMinus, i), a);
            f(l.at(Table::ZSecPlus, i), 1.0 - a);
        }
    }

    #[inline]
    pub(crate) fn visit_user_rows(&self, fx: &FeatureIndex, u: usize, f: &mut impl FnMut(usize, f64)) {
        let flags = &self.config.flags;
        let l = &self.layout;
        let uf = &fx.users[u];
        f(l.at(Table::UserFactor, u), 1.0);
        if flags.profile {
            f(l.at(Table::YAge, uf.age), 1.0);
            f(l.at(Table::YAgeGender, uf.age * GENDERS + uf.gender), 1.0);
        }
        if flags.tweetnum {
            f(l.at(Table::YTweet, uf.tweet), 1.0);
        }
        if flags.sns {
            for &k in &uf.follows {
                f(l.at(Table::YSns, k as usize), uf.follows_scale);
            }
        }
        if flags.action {
            for &a in &uf.actions {
                f(l.at(Table::YAction, a as usize), uf.actions_scale);
            }
        }
        if flags.keywords {
            for &(m, w) in &uf.keywords {
                f(l.at(Table::YKeyword, m as usize), w);
            }
        }
        if flags.tags {
            for &n in &uf.tags {
                f(l.at(Table::YTag, n as usize), uf.tags_scale);
            }
        }
    }

    // ---- evaluation by dense index -----------------------------------------

    pub(crate) fn bias_index(&self, fx: &FeatureIndex, u: Option<usize>, i: Option<usize>, t: i64) -> f64 {
        let mut s = 0.0;
        self.visit_bias(fx, u, i, t, &mut |o, c| s += c * self.params[o]);
        s
    }

    pub(crate) fn knn_index(&self, fx: &FeatureIndex, u: Option<usize>, i: Option<usize>) -> f64 {
        let mut s = 0.0;
        self.visit_knn(fx, u, i, &mut |o, c| s += c * self.params[o]);
        s
    }

    /// Adds `p̈_u` into `out`.
    pub(crate) fn add_user_vector(&self, fx: &FeatureIndex, u: usize, out: &mut [f64]) {
        let d = self.dim();
        let params = &self.params;
        self.visit_user_rows(fx, u, &mut |o, c| {
            for (x, p) in out.iter_mut().zip(&params[o..o + d]) {
                *x += c * p;
            }
        });
    }

    /// Adds `q̈_i(t)` into `out`.
    pub(crate) fn add_item_vector(&self, i: usize, t: i64, out: &mut [f64]) {
        let d = self.dim();
        let params = &self.params;
        self.visit_item_rows(i, t, &mut |o, c| {
            for (x, p) in out.iter_mut().zip(&params[o..o + d]) {
                *x += c * p;
            }
        });
    }

    /// Score with a precomputed user vector; `user_vec` must be `p̈_u` (or
    /// zeros for an unknown user).
    pub(crate) fn score_with_user_vector(
        &self,
        fx: &FeatureIndex,
        u: Option<usize>,
        i: Option<usize>,
        t: i64,
        user_vec: &[f64],
        scratch: &mut [f64],
    ) -> f64 {
        if u.is_none() && i.is_none() {
            return self.mu;
        }
        let mut s = self.mu + self.bias_index(fx, u, i, t) + self.knn_index(fx, u, i);
        if let (Some(_), Some(i)) = (u, i) {
            scratch.iter_mut().for_each(|x| *x = 0.0);
            self.add_item_vector(i, t, scratch);
            s += dot(scratch, user_vec);
        }
        s
    }

    pub fn score_index(&self, fx: &FeatureIndex, u: Option<usize>, i: Option<usize>, t: i64) -> f64 {
        let d = self.dim();
        let mut pu = vec![0.0; d];
        if let Some(u) = u {
            self.add_user_vector(fx, u, &mut pu);
        }
        let mut scratch = vec![0.0; d];
        self.score_with_user_vector(fx, u, i, t, &pu, &mut scratch)
    }

    // ---- public API by id ------------------------------------------------------

    /// Full bias part including the global mean.
    pub fn bias_term(&self, fx: &FeatureIndex, u: UserId, i: ItemId, t: i64) -> f64 {
        let (u, i) = (self.vocab.user(u), self.vocab.item(i));
        if u.is_none() && i.is_none() {
            return self.mu;
        }
        self.mu + self.bias_index(fx, u, i, t)
    }

    pub fn user_vector(&self, fx: &FeatureIndex, u: UserId) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if let Some(u) = self.vocab.user(u) {
            self.add_user_vector(fx, u, &mut out);
        }
        out
    }

    pub fn item_vector(&self, i: ItemId, t: i64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if let Some(i) = self.vocab.item(i) {
            self.add_item_vector(i, t, &mut out);
        }
        out
    }

    pub fn knn_term(&self, fx: &FeatureIndex, u: UserId, i: ItemId) -> f64 {
        self.knn_index(fx, self.vocab.user(u), self.vocab.item(i))
    }

    /// Raw (unwarped) score used for ranking.
    pub fn predict(&self, fx: &FeatureIndex, u: UserId, i: ItemId, t: i64) -> f64 {
        self.score_index(fx, self.vocab.user(u), self.vocab.item(i), t)
    }

    /// `f(mu + b_u + b_i + q_i·p_u)` with the sigmoid as warp, ignoring all
    /// other terms.
    pub fn baseline_predict(&self, u: UserId, i: ItemId) -> f64 {
        let mut s = self.mu;
        let (u, i) = (self.vocab.user(u), self.vocab.item(i));
        if let Some(u) = u {
            s += self.row(Table::UserBias, u)[0];
        }
        if let Some(i) = i {
            s += self.row(Table::ItemBias, i)[0];
        }
        if let (Some(u), Some(i)) = (u, i) {
            s += dot(self.row(Table::ItemFactor, i), self.row(Table::UserFactor, u));
        }
        sigmoid(s)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
