//! The multifaceted factorization model.
//!
//! A score is `b(u,i,t) + d(u,i) + q(i,t)·p(u)` where each of the three parts
//! is a sum over many parameter tables (temporal, social, profile, keyword,
//! tag and neighborhood terms). Every table can be switched off through
//! [`FeatureFlags`]; a disabled table is not allocated at all.

mod features;
mod io;
mod layout;
mod model;
mod neighbors;

pub use features::{FeatureIndex, ItemFeatures, UserFeatures};
pub use io::{decode_model, encode_model, read_model, write_model};
pub use layout::{Layout, Table};
pub use model::{sigmoid, MfmModel, Provenance, RatingStats, Vocab};
pub use neighbors::{build_neighbors, item_distance, item_vectors, ItemVector, NeighborTable};

use serde::{Deserialize, Serialize};

use crate::data::SECONDS_PER_DAY;
use crate::error::{Error, Result};

/// Which terms of the model are active. The plain SVD baseline is
/// [`FeatureFlags::none`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureFlags {
    /// Follow relations as implicit feedback.
    pub sns: bool,
    /// at/retweet/comment targets as implicit feedback.
    pub action: bool,
    /// Day-interpolated item bias and item factor.
    pub day: bool,
    /// Second-of-day interpolated item bias and item factor.
    pub second: bool,
    /// Global hour-of-day bias.
    pub hour: bool,
    /// Age and gender cross biases and user factors.
    pub profile: bool,
    pub tags: bool,
    pub keywords: bool,
    pub tweetnum: bool,
    /// Item-item neighborhood term.
    pub knn: bool,
}

impl FeatureFlags {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self {
            sns: true,
            action: true,
            day: true,
            second: true,
            hour: true,
            profile: true,
            tags: true,
            keywords: true,
            tweetnum: true,
            knn: true,
        }
    }
}

/// Interpolation endpoints for the day and second-of-day terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub day_start: i64,
    pub day_end: i64,
    pub sec_start: i64,
    pub sec_end: i64,
}

impl Default for TimeWindow {
    fn default() -> Self {
        Self {
            day_start: 1_318_348_785,
            day_end: 1_322_668_798,
            sec_start: 0,
            sec_end: SECONDS_PER_DAY,
        }
    }
}

impl TimeWindow {
    pub fn with_days(day_start: i64, day_end: i64) -> Self {
        Self {
            day_start,
            day_end,
            ..Self::default()
        }
    }

    /// Weight on the `-` endpoint; the `+` endpoint receives `1 - w`.
    /// Timestamps outside the window are clamped.
    pub fn day_weight(&self, t: i64) -> f64 {
        lerp_weight(t, self.day_start, self.day_end)
    }

    pub fn sec_weight(&self, t: i64) -> f64 {
        lerp_weight(crate::data::second_of_day(t), self.sec_start, self.sec_end)
    }
}

fn lerp_weight(t: i64, lo: i64, hi: i64) -> f64 {
    if hi <= lo {
        return 0.5;
    }
    let t = t.clamp(lo, hi);
    (t - lo) as f64 / (hi - lo) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfmConfig {
    pub latent_dim: usize,
    pub flags: FeatureFlags,
    /// Normalization exponent for the follow set.
    pub alpha_sns: f64,
    /// Normalization exponent for the action set.
    pub alpha_action: f64,
    /// Neighbors kept per item.
    pub neighbors: usize,
    /// Keyword share of the item distance.
    pub rho: f64,
    pub window: TimeWindow,
    /// Latent entries start uniform in `±init_scale / sqrt(d)`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MfmConfig {
    fn default() -> Self {
        Self {
            latent_dim: 40,
            flags: FeatureFlags::all(),
            alpha_sns: -0.4,
            alpha_action: -0.5,
            neighbors: 20,
            rho: 0.6,
            window: TimeWindow::default(),
            init_scale: 0.01,
            seed: 1,
        }
    }
}

impl MfmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("model.latent_dim must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config("model.rho must be in [0, 1]".into()));
        }
        if self.flags.knn && self.neighbors == 0 {
            return Err(Error::Config("model.neighbors must be >= 1 when knn is enabled".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config("model.init_scale must be >= 0".into()));
        }
        Ok(())
    }
}
