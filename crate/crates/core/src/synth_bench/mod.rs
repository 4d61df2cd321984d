//! Synthetic road worlds: per-vertex observation features rendered from
//! ground truth, with controlled disruptions that hide that truth.

mod features;
mod io;
mod suite;
mod world;

pub use features::{
    channel_names, render_clean, render_occluder, Occluder, CH_LEFT, CH_MARKINGS, CH_NOISE, CH_OCCLUDER, CH_RIGHT, CH_SURFACE,
    CH_WIDTH, FEATURE_DIM, NOISE_SIGMA,
};
pub use io::{
    read_features, read_manifest, write_features, write_suite, write_world, ManifestSplit, SuiteManifest, WorldData,
    WorldFiles, MANIFEST_FILE,
};
pub use suite::{random_spec, scenario_suite, Preset, Split, Suite, SuiteOptions};
pub use world::{generate_world, inject_disruption, World};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{IngestError, RoadType};
use crate::road_graph::GraphError;

/// Road layouts. Lengths are in meters and must be whole multiples of the
/// vertex spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    /// One straight road.
    StraightCorridor { length: f64 },
    /// Two roads crossing at a shared junction; `arm` is the half-length.
    PlusIntersection { arm: f64 },
    /// Two unconnected parallel roads `separation` meters apart.
    ParallelPair { length: f64, separation: f64 },
    /// Road 0 passes under road 1 without a junction.
    OverpassCrossing { arm: f64 },
    /// `cols × rows` blocks; horizontal roads first, then vertical ones.
    CityGrid { cols: usize, rows: usize, block: f64 },
}

impl Topology {
    pub fn road_count(&self) -> usize {
        match self {
            Topology::StraightCorridor { .. } => 1,
            Topology::PlusIntersection { .. } | Topology::ParallelPair { .. } | Topology::OverpassCrossing { .. } => 2,
            Topology::CityGrid { cols, rows, .. } => cols + rows + 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Topology::StraightCorridor { .. } => "straight_corridor",
            Topology::PlusIntersection { .. } => "plus_intersection",
            Topology::ParallelPair { .. } => "parallel_pair",
            Topology::OverpassCrossing { .. } => "overpass_crossing",
            Topology::CityGrid { .. } => "city_grid",
        }
    }
}

/// Lane count from vertex `start` (index along the road) onwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSegment {
    pub start: usize,
    pub lanes: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadProfile {
    /// Piecewise-constant lane counts; the first segment starts at 0.
    pub lanes: Vec<LaneSegment>,
    pub road_type: RoadType,
    /// Extra paved width beyond the lanes, meters.
    pub shoulder: f64,
}

impl RoadProfile {
    pub fn constant(lanes: u8, road_type: RoadType, shoulder: f64) -> Self {
        Self {
            lanes: vec![LaneSegment { start: 0, lanes }],
            road_type,
            shoulder,
        }
    }

    pub fn lanes_at(&self, index: usize) -> u8 {
        self.lanes
            .iter()
            .rev()
            .find(|s| s.start <= index)
            .map_or(self.lanes[0].lanes, |s| s.lanes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisruptionKind {
    RemoveMarkings,
    AlternateSideOcclusion,
    TreeOcclusion,
    BuildingOcclusion,
    OverpassOcclusion,
    LaneChangeUnderOcclusion,
}

impl DisruptionKind {
    pub const ALL: [DisruptionKind; 6] = [
        DisruptionKind::RemoveMarkings,
        DisruptionKind::AlternateSideOcclusion,
        DisruptionKind::TreeOcclusion,
        DisruptionKind::BuildingOcclusion,
        DisruptionKind::OverpassOcclusion,
        DisruptionKind::LaneChangeUnderOcclusion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DisruptionKind::RemoveMarkings => "remove_markings",
            DisruptionKind::AlternateSideOcclusion => "alternate_side_occlusion",
            DisruptionKind::TreeOcclusion => "tree_occlusion",
            DisruptionKind::BuildingOcclusion => "building_occlusion",
            DisruptionKind::OverpassOcclusion => "overpass_occlusion",
            DisruptionKind::LaneChangeUnderOcclusion => "lane_change_under_occlusion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Whether the road surface is fully hidden, so that the observation
    /// carries no information about the road's own attributes.
    pub fn occludes(self) -> bool {
        matches!(
            self,
            DisruptionKind::TreeOcclusion
                | DisruptionKind::BuildingOcclusion
                | DisruptionKind::OverpassOcclusion
                | DisruptionKind::LaneChangeUnderOcclusion
        )
    }
}

/// Attributes of the road seen on top of an overpass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpperRoad {
    pub lanes: u8,
    pub road_type: RoadType,
    pub shoulder: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisruptionSpec {
    pub kind: DisruptionKind,
    pub road: usize,
    /// First affected vertex, as an index along the road.
    pub start: usize,
    pub len: usize,
    /// New lane count after the hidden change (lane-change kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_lanes: Option<u8>,
    /// What the overpass shows (overpass kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<UpperRoad>,
}

impl DisruptionSpec {
    pub fn new(kind: DisruptionKind, road: usize, start: usize, len: usize) -> Self {
        Self {
            kind,
            road,
            start,
            len,
            new_lanes: None,
            upper: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub topology: Topology,
    pub spacing: f64,
    /// One profile per topology road.
    pub roads: Vec<RoadProfile>,
    pub disruptions: Vec<DisruptionSpec>,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("disruption on road {road} at {start}..{end} overlaps an earlier disruption at vertex {vertex}")]
    Overlap {
        road: usize,
        start: usize,
        end: usize,
        vertex: usize,
    },
    #[error("feature file: {0}")]
    Features(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
