//! The graph tagger: per-vertex encoder, embedding raise, multi-structure
//! gated propagation, and two softmax heads.

mod layers;
mod network;

pub use layers::{Ctx, Dense, Mlp};
pub use network::{locality_ball, ModelCheckpoint, RoadTagger, Trace, MODEL_FORMAT, MODEL_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::predictions::{LANE_CLASSES, TYPE_CLASSES};
use crate::road_graph::StructureKind;

/// Width of the synthetic observation vector.
pub const DEFAULT_FEATURE_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub encoder_hidden: Vec<usize>,
    /// Width `m` of one structure's slice of the hidden state.
    pub hidden_chunk: usize,
    /// One hidden chunk per entry; order fixes chunk positions.
    pub structures: Vec<StructureKind>,
    pub steps: usize,
    pub head_hidden: Vec<usize>,
    pub lane_classes: usize,
    pub type_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            embed_dim: 64,
            encoder_hidden: vec![64, 64],
            hidden_chunk: 128,
            structures: vec![
                StructureKind::Original,
                StructureKind::RoadForward,
                StructureKind::RoadBackward,
                StructureKind::Aux,
            ],
            steps: 8,
            head_hidden: vec![128, 64],
            lane_classes: LANE_CLASSES,
            type_classes: TYPE_CLASSES,
        }
    }
}

impl ModelConfig {
    /// Number of structures `k`.
    pub fn structure_count(&self) -> usize {
        self.structures.len()
    }

    /// Full hidden width `k·m`.
    pub fn hidden_width(&self) -> usize {
        self.structure_count() * self.hidden_chunk
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.structures.is_empty() {
            return bad("at least one graph structure is required");
        }
        if self.feature_dim == 0 || self.embed_dim == 0 || self.hidden_chunk == 0 {
            return bad("layer widths must be positive");
        }
        if self.encoder_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.lane_classes != LANE_CLASSES || self.type_classes != TYPE_CLASSES {
            return bad("class counts are fixed at 6 lanes and 2 road types");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("expected {expected} graph structures, got {got}")]
    StructureCount { expected: usize, got: usize },
    #[error("feature matrix has {got} columns, model expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("structure {name} covers {got} vertices, features cover {expected}")]
    VertexCount {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
