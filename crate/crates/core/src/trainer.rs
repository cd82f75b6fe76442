//! Stochastic gradient training of [`MfmModel`].
//!
//! The pairwise objective pairs every negative record with a positive record
//! of the same user and maximizes `sigmoid(score(u,j,t_j) - score(u,i,t_i))`;
//! the loss is its negative log plus L2 on every touched parameter. The
//! pointwise objective is the squared error of the sigmoid-warped score, used
//! for the plain SVD baseline.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ItemId, RatingRecord, UserId};
use crate::error::{Error, Result};
use crate::mfm::{sigmoid, FeatureIndex, MfmModel, Table};
use crate::session::FilteredLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Pairwise,
    Pointwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub learning_rate: f64,
    /// L2 strength for every table without an override.
    pub lambda: f64,
    /// Per-table L2 strengths keyed by table name (see [`Table::name`]).
    pub lambda_overrides: BTreeMap<String, f64>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Pairwise,
            learning_rate: 0.001,
            lambda: 0.01,
            lambda_overrides: BTreeMap::new(),
            epochs: 10,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("train.lambda must be >= 0".into()));
        }
        for (name, l) in &self.lambda_overrides {
            if Table::from_name(name).is_none() {
                return Err(Error::Config(format!("train.lambda_overrides: unknown table {name:?}")));
            }
            if !(*l >= 0.0) {
                return Err(Error::Config(format!("train.lambda_overrides.{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub user: UserId,
    pub negative: ItemId,
    pub positive: ItemId,
    pub t_negative: i64,
    pub t_positive: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairStats {
    pub pairs: usize,
    /// Negatives whose user has no usable positive.
    pub skipped: usize,
}

/// One pair per negative record, the positive drawn uniformly from the same
/// user's positives (excluding the negative's own item).
pub fn sample_pairs(filtered: &FilteredLog, seed: u64) -> (Vec<TrainingPair>, PairStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: BTreeMap<UserId, Vec<(ItemId, i64)>> = BTreeMap::new();
    for r in &filtered.positives {
        positives.entry(r.user).or_default().push((r.item, r.timestamp));
    }
    let mut pairs = Vec::with_capacity(filtered.negatives.len());
    let mut stats = PairStats::default();
    for r in &filtered.negatives {
        let Some(pos) = positives.get(&r.user) else {
            stats.skipped += 1;
            continue;
        };
        let usable = pos.iter().filter(|p| p.0 != r.item).count();
        if usable == 0 {
            stats.skipped += 1;
            continue;
        }
        let pick = rng.random_range(0..usable);
        let &(item, ts) = pos.iter().filter(|p| p.0 != r.item).nth(pick).unwrap();
        pairs.push(TrainingPair {
            user: r.user,
            negative: r.item,
            positive: item,
            t_negative: r.timestamp,
            t_positive: ts,
        });
    }
    stats.pairs = pairs.len();
    (pairs, stats)
}

/// Probability that the positive item outranks the negative one.
pub fn pairwise_prob(model: &MfmModel, fx: &FeatureIndex, pair: &TrainingPair) -> f64 {
    let u = model.vocab.user(pair.user);
    let si = model.score_index(fx, u, model.vocab.item(pair.negative), pair.t_negative);
    let sj = model.score_index(fx, u, model.vocab.item(pair.positive), pair.t_positive);
    sigmoid(sj - si)
}

/// Per-table L2 strengths looked up by flat parameter offset.
#[derive(Debug, Clone)]
pub struct Regularizer {
    ends: Vec<usize>,
    lambdas: Vec<f64>,
}

impl Regularizer {
    pub fn new(model: &MfmModel, config: &TrainConfig) -> Self {
        let mut ends = Vec::new();
        let mut lambdas = Vec::new();
        for t in Table::ALL {
            let s = model.layout.spec(t);
            if s.is_empty() {
                continue;
            }
            ends.push(s.offset + s.len());
            lambdas.push(config.lambda_overrides.get(t.name()).copied().unwrap_or(config.lambda));
        }
        Self { ends, lambdas }
    }

    #[inline]
    fn at(&self, offset: usize) -> f64 {
        self.lambdas[self.ends.partition_point(|&e| e <= offset)]
    }
}

/// Scratch space for one gradient evaluation.
#[derive(Debug, Default)]
pub struct Workspace {
    pu: Vec<f64>,
    gp: Vec<f64>,
    tmp: Vec<f64>,
    scalars: Vec<(usize, f64)>,
    item_rows: Vec<(usize, f64)>,
    user_rows: Vec<(usize, f64)>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            pu: vec![0.0; dim],
            gp: vec![0.0; dim],
            tmp: vec![0.0; dim],
            ..Self::default()
        }
    }
}

/// Evaluates `Σ sign_k · score(u, item_k, t_k)` and records its derivative
/// structure in `ws`:
/// scalar offsets carry their coefficient, item rows carry a coefficient on
/// `p̈_u`, user rows a coefficient on `Σ sign_k q̈_k`.
fn signed_score(
    model: &MfmModel,
    fx: &FeatureIndex,
    u: usize,
    terms: &[(usize, i64, f64)],
    ws: &mut Workspace,
) -> f64 {
    ws.scalars.clear();
    ws.item_rows.clear();
    ws.user_rows.clear();
    ws.pu.iter_mut().for_each(|x| *x = 0.0);
    ws.gp.iter_mut().for_each(|x| *x = 0.0);

    model.add_user_vector(fx, u, &mut ws.pu);
    model.visit_user_rows(fx, u, &mut |o, c| ws.user_rows.push((o, c)));

    let mut value = 0.0;
    for &(i, t, sign) in terms {
        value += sign * model.mu;
        let scalars = &mut ws.scalars;
        model.visit_bias(fx, Some(u), Some(i), t, &mut |o, c| scalars.push((o, sign * c)));
        model.visit_knn(fx, Some(u), Some(i), &mut |o, c| scalars.push((o, sign * c)));
        model.visit_item_rows(i, t, &mut |o, c| ws.item_rows.push((o, sign * c)));
        ws.tmp.iter_mut().for_each(|x| *x = 0.0);
        model.add_item_vector(i, t, &mut ws.tmp);
        for (g, q) in ws.gp.iter_mut().zip(&ws.tmp) {
            *g += sign * q;
        }
    }
    value += ws.scalars.iter().map(|&(o, c)| c * model.params[o]).sum::<f64>();
    value += ws.gp.iter().zip(&ws.pu).map(|(a, b)| a * b).sum::<f64>();
    value
}

/// `θ ← θ + step·∂value/∂θ − lr·λ·θ` over every parameter recorded in `ws`.
fn apply(model: &mut MfmModel, ws: &mut Workspace, step: f64, lr: f64, reg: &Regularizer) {
    let d = model.dim();
    ws.scalars.sort_unstable_by_key(|e| e.0);
    let mut k = 0;
    while k < ws.scalars.len() {
        let o = ws.scalars[k].0;
        let mut c = 0.0;
        while k < ws.scalars.len() && ws.scalars[k].0 == o {
            c += ws.scalars[k].1;
            k += 1;
        }
        let p = &mut model.params[o];
        *p += step * c - lr * reg.at(o) * *p;
    }
    for &(o, c) in &ws.item_rows {
        let decay = lr * reg.at(o);
        for (p, v) in model.params[o..o + d].iter_mut().zip(&ws.pu) {
            *p += step * c * v - decay * *p;
        }
    }
    for &(o, c) in &ws.user_rows {
        let decay = lr * reg.at(o);
        for (p, g) in model.params[o..o + d].iter_mut().zip(&ws.gp) {
            *p += step * c * g - decay * *p;
        }
    }
}

/// Dense-index form of a pair, resolved once per epoch.
#[derive(Debug, Clone, Copy)]
struct IndexedPair {
    u: usize,
    i: usize,
    j: usize,
    ti: i64,
    tj: i64,
}

fn index_pair(model: &MfmModel, p: &TrainingPair) -> Option<IndexedPair> {
    Some(IndexedPair {
        u: model.vocab.user(p.user)?,
        i: model.vocab.item(p.negative)?,
        j: model.vocab.item(p.positive)?,
        ti: p.t_negative,
        tj: p.t_positive,
    })
}

/// `-log sigmoid(x)` without overflow.
fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// One SGD step on a pair; returns the pair's loss before the update.
pub fn sgd_step(
    model: &mut MfmModel,
    fx: &FeatureIndex,
    pair: &TrainingPair,
    config: &TrainConfig,
    reg: &Regularizer,
    ws: &mut Workspace,
) -> Result<f64> {
    let Some(p) = index_pair(model, pair) else {
        return Ok(0.0);
    };
    pair_step(model, fx, p, config.learning_rate, reg, ws).ok_or(Error::NonFinite { epoch: 0, pair: 0 })
}

fn pair_step(
    model: &mut MfmModel,
    fx: &FeatureIndex,
    p: IndexedPair,
    lr: f64,
    reg: &Regularizer,
    ws: &mut Workspace,
) -> Option<f64> {
    let diff = signed_score(model, fx, p.u, &[(p.j, p.tj, 1.0), (p.i, p.ti, -1.0)], ws);
    let e = 1.0 - sigmoid(diff);
    if !diff.is_finite() || !e.is_finite() {
        return None;
    }
    apply(model, ws, lr * e, lr, reg);
    Some(softplus_neg(diff))
}

fn point_step(
    model: &mut MfmModel,
    fx: &FeatureIndex,
    u: usize,
    i: usize,
    t: i64,
    r: f64,
    lr: f64,
    reg: &Regularizer,
    ws: &mut Workspace,
) -> Option<f64> {
    let s = signed_score(model, fx, u, &[(i, t, 1.0)], ws);
    let f = sigmoid(s);
    let e = (r - f) * f * (1.0 - f);
    if !s.is_finite() || !e.is_finite() {
        return None;
    }
    apply(model, ws, lr * e, lr, reg);
    Some(0.5 * (r - f) * (r - f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub epochs: Vec<EpochLoss>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,pairs\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.mean_loss, e.pairs);
        }
        s
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs `config.epochs` shuffled passes. Pairwise epochs resample one positive
/// per negative; pointwise epochs visit every record once.
pub fn train(
    model: &mut MfmModel,
    fx: &FeatureIndex,
    filtered: &FilteredLog,
    config: &TrainConfig,
) -> Result<LossTrace> {
    config.validate()?;
    let reg = Regularizer::new(model, config);
    let mut ws = Workspace::new(model.dim());
    let mut trace = LossTrace::default();
    let lr = config.learning_rate;

    let points: Vec<(usize, usize, i64, f64)> = match config.objective {
        Objective::Pointwise => filtered
            .merged()
            .iter()
            .filter_map(|r: &RatingRecord| {
                Some((model.vocab.user(r.user)?, model.vocab.item(r.item)?, r.timestamp, r.rating()))
            })
            .collect(),
        Objective::Pairwise => Vec::new(),
    };

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch));
        let mut total = 0.0;
        let count;
        match config.objective {
            Objective::Pairwise => {
                let (pairs, _) = sample_pairs(filtered, rng.random());
                let mut pairs: Vec<IndexedPair> =
                    pairs.iter().filter_map(|p| index_pair(model, p)).collect();
                pairs.shuffle(&mut rng);
                for (n, p) in pairs.iter().enumerate() {
                    total += pair_step(model, fx, *p, lr, &reg, &mut ws)
                        .ok_or(Error::NonFinite { epoch, pair: n })?;
                }
                count = pairs.len();
            }
            Objective::Pointwise => {
                let mut order: Vec<usize> = (0..points.len()).collect();
                order.shuffle(&mut rng);
                for (n, &k) in order.iter().enumerate() {
                    let (u, i, t, r) = points[k];
                    total += point_step(model, fx, u, i, t, r, lr, &reg, &mut ws)
                        .ok_or(Error::NonFinite { epoch, pair: n })?;
                }
                count = points.len();
            }
        }
        trace.epochs.push(EpochLoss {
            epoch,
            mean_loss: if count > 0 { total / count as f64 } else { 0.0 },
            pairs: count,
        });
    }
    Ok(trace)
}

// ---- loss and gradient inspection -------------------------------------------

/// `-log pairwise_prob` without regularization.
pub fn pair_loss(model: &MfmModel, fx: &FeatureIndex, pair: &TrainingPair) -> f64 {
    let p = index_pair(model, pair).expect("pair ids known to the model");
    let mut ws = Workspace::new(model.dim());
    let diff = signed_score(model, fx, p.u, &[(p.j, p.tj, 1.0), (p.i, p.ti, -1.0)], &mut ws);
    softplus_neg(diff)
}

/// Analytic gradient of [`pair_loss`] keyed by flat parameter offset.
pub fn pair_loss_gradient(model: &MfmModel, fx: &FeatureIndex, pair: &TrainingPair) -> HashMap<usize, f64> {
    let p = index_pair(model, pair).expect("pair ids known to the model");
    let mut ws = Workspace::new(model.dim());
    let diff = signed_score(model, fx, p.u, &[(p.j, p.tj, 1.0), (p.i, p.ti, -1.0)], &mut ws);
    expand(model, &ws, -(1.0 - sigmoid(diff)))
}

/// Squared error of the warped score for one record.
pub fn record_loss(model: &MfmModel, fx: &FeatureIndex, r: &RatingRecord) -> f64 {
    let f = sigmoid(model.predict(fx, r.user, r.item, r.timestamp));
    0.5 * (r.rating() - f).powi(2)
}

pub fn record_loss_gradient(model: &MfmModel, fx: &FeatureIndex, r: &RatingRecord) -> HashMap<usize, f64> {
    let u = model.vocab.user(r.user).expect("known user");
    let i = model.vocab.item(r.item).expect("known item");
    let mut ws = Workspace::new(model.dim());
    let s = signed_score(model, fx, u, &[(i, r.timestamp, 1.0)], &mut ws);
    let f = sigmoid(s);
    expand(model, &ws, -(r.rating() - f) * f * (1.0 - f))
}

fn expand(model: &MfmModel, ws: &Workspace, outer: f64) -> HashMap<usize, f64> {
    let d = model.dim();
    let mut g: HashMap<usize, f64> = HashMap::new();
    for &(o, c) in &ws.scalars {
        *g.entry(o).or_default() += outer * c;
    }
    for &(o, c) in &ws.item_rows {
        for k in 0..d {
            *g.entry(o + k).or_default() += outer * c * ws.pu[k];
        }
    }
    for &(o, c) in &ws.user_rows {
        for k in 0..d {
            *g.entry(o + k).or_default() += outer * c * ws.gp[k];
        }
    }
    g
}
