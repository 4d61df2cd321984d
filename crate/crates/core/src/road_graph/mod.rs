//! Road network representation, densification, road chains and the
//! propagation structures derived from them.

mod chains;
mod graph;
mod sampling;
mod structures;

pub use chains::{extract_road_chains, turn_angle, RoadChain, DEFAULT_CHAIN_ANGLE};
pub use graph::{densify, GeoPoint, RoadGraph, WayId};
pub use sampling::{sample_subgraph, traverse, SubgraphSample, TraversalMode};
pub use structures::{
    build_structures, structure_aux_parallel, structure_original, structure_road,
    structure_road_directional, union_sources, GraphStructure, StructureKind,
    DEFAULT_AUX_ANGLE, DEFAULT_AUX_DISTANCE,
};

use thiserror::Error;

/// Default vertex spacing after densification, meters.
pub const DEFAULT_SPACING: f64 = 20.0;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex {0} out of range for graph of {1} vertices")]
    VertexOutOfRange(usize, usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("vertex {0} has a non-finite position")]
    NonFinitePosition(usize),
    #[error("densify spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("subgraph size must be at least 1")]
    EmptySample,
    #[error("corrupt graph: {0}")]
    Corrupt(String),
}
