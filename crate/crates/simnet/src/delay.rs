//! Per-link packet delay models.

use std::collections::BTreeMap;

use bdsas_core::{NodeId, SimDuration};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Delay distribution for one link: normal around `mean` with standard
/// deviation `jitter`, truncated to `[mean - 3*jitter, mean + 3*jitter]`
/// and floored at zero.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DelayModel {
    pub mean: SimDuration,
    pub jitter: SimDuration,
}

impl DelayModel {
    pub const ZERO: DelayModel =
        DelayModel { mean: SimDuration::ZERO, jitter: SimDuration::ZERO };

    pub fn from_millis(mean_ms: u64, jitter_ms: u64) -> Self {
        DelayModel {
            mean: SimDuration::from_millis(mean_ms),
            jitter: SimDuration::from_millis(jitter_ms),
        }
    }

    pub fn fixed(mean: SimDuration) -> Self {
        DelayModel { mean, jitter: SimDuration::ZERO }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SimDuration {
        if self.jitter.0 == 0 {
            return self.mean;
        }
        let mean = self.mean.0 as f64;
        let sigma = self.jitter.0 as f64;
        let normal = Normal::new(mean, sigma).expect("jitter is positive and finite");
        let (lo, hi) = (mean - 3.0 * sigma, mean + 3.0 * sigma);
        // Rejection keeps the distribution an honest truncation instead of
        // piling clipped mass onto the bounds. P(accept) > 0.997 per draw.
        let x = loop {
            let x = normal.sample(rng);
            if x >= lo && x <= hi {
                break x;
            }
        };
        SimDuration(x.max(0.0) as u64)
    }
}

/// Who delays what: most links use the default regime, a node can override
/// everything it sends (the per-entity shorthand), and a single directed
/// link can override both.
#[derive(Clone, Debug, Default)]
pub struct DelayMap {
    pub default: DelayModel,
    pub egress: BTreeMap<NodeId, DelayModel>,
    pub per_link: BTreeMap<(NodeId, NodeId), DelayModel>,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::ZERO
    }
}

impl DelayMap {
    pub fn uniform(model: DelayModel) -> Self {
        DelayMap { default: model, ..Default::default() }
    }

    pub fn model_for(&self, from: &NodeId, to: &NodeId) -> DelayModel {
        if let Some(m) = self.per_link.get(&(from.clone(), to.clone())) {
            return *m;
        }
        if let Some(m) = self.egress.get(from) {
            return *m;
        }
        self.default
    }
}
