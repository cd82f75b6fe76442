//! Ablation presets: each row switches on one more ingredient than the row
//! before it, starting from a pointwise-trained plain factorization model.

use crate::config::RunConfig;
use crate::mfm::FeatureFlags;
use crate::trainer::Objective;

pub const ROWS: [&str; 14] = [
    "basic MF",
    "+pairwise",
    "+preprocess",
    "+sns",
    "+action",
    "+day",
    "+second",
    "+age&gender",
    "+tags",
    "+keywords",
    "+tweetnum",
    "d=100",
    "+knn",
    "+supplement",
];

/// Latent size and learning-rate factor of the larger model rows.
pub const WIDE_DIM: usize = 100;
pub const WIDE_RATE_FACTOR: f64 = 0.25;

/// Defaults tuned for the bundled synthetic generator. At the library
/// defaults (rate 0.001, latent entries within ±0.01/√d) ten epochs over 10⁵
/// synthetic records barely move the latent factors away from their start.
pub fn synthetic_preset() -> RunConfig {
    let mut c = RunConfig::default();
    c.train.learning_rate = 0.01;
    c.train.epochs = 10;
    c.model.init_scale = 1.0;
    c
}

/// `base` configured as ladder row `row` (1-based). The learning rate of the
/// narrow rows is the base rate; the wide rows use a quarter of it.
pub fn ladder_config(base: &RunConfig, row: usize) -> RunConfig {
    assert!((1..=ROWS.len()).contains(&row), "ladder rows are 1..={}", ROWS.len());
    let mut c = base.clone();
    let on = |k: usize| row >= k;
    c.train.objective = if on(2) { Objective::Pairwise } else { Objective::Pointwise };
    c.preprocess.filter = on(3);
    c.preprocess.supplement = on(14);
    c.model.flags = FeatureFlags {
        sns: on(4),
        action: on(5),
        day: on(6),
        second: on(7),
        hour: on(7),
        profile: on(8),
        tags: on(9),
        keywords: on(10),
        tweetnum: on(11),
        knn: on(13),
    };
    if on(12) {
        c.model.latent_dim = WIDE_DIM;
        c.train.learning_rate = base.train.learning_rate * WIDE_RATE_FACTOR;
    }
    c
}
