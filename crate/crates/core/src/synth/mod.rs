//! Synthetic paired dataset: grammar, trajectories, rendering, splits.

use serde::{Deserialize, Serialize};

pub mod dataset;
pub mod grammar;
pub mod pattern;
pub mod render;
pub mod split;
pub mod trajectory;

pub use dataset::{build_dataset, Dataset, DatasetConfig, Sample};
pub use pattern::{enumerate_patterns, ActionType, Pattern, Side};
pub use render::{render_frame, FrameSize, Image};
pub use split::Split;

/// Which camera a visual feature stream comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Viewpoint {
    /// The robot's own viewpoint.
    #[serde(rename = "self")]
    Own,
    Opposite,
}

impl Viewpoint {
    pub fn name(self) -> &'static str {
        match self {
            Viewpoint::Own => "self",
            Viewpoint::Opposite => "opposite",
        }
    }
}
