//! Continuously updated session-based baselines.
//!
//! | name | idea |
//! | ---- | ---- |
//! | `co` | pairwise co-occurrence with the last clicked article |
//! | `sr` | sequential rules weighted by click distance |
//! | `itemknn` | smoothed cosine over session incidence vectors |
//! | `vsknn` | neighbor sessions with decayed prefix weights |
//! | `rp` | recent popularity |
//! | `cb` | cosine of content embeddings |

mod cooccurrence;
mod popular;
mod sequential;
mod vsknn;

use serde::{Deserialize, Serialize};

pub use cooccurrence::{CoOccurrence, CooccurrenceMatrix, ItemKnn, ItemKnnConfig};
pub use popular::{cosine, ContentBased, RandomScorer, RecentlyPopular};
pub use sequential::{SequentialRules, SrConfig};
pub use vsknn::{SamplingStrategy, SessionSimilarity, VsKnn, VsknnConfig};

/// Weight of an item `distance` steps away (1 = adjacent / most recent).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    Same,
    #[default]
    Div,
    Linear,
    Log,
    Quadratic,
}

impl Decay {
    pub fn weight(self, distance: usize) -> f64 {
        let x = distance.max(1) as f64;
        match self {
            Decay::Same => 1.0,
            Decay::Div => 1.0 / x,
            Decay::Linear => (1.0 - 0.1 * (x - 1.0)).max(0.0),
            Decay::Log => 1.0 / (x + 1.0).log2(),
            Decay::Quadratic => 1.0 / (x * x),
        }
    }
}
