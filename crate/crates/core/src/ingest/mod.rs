//! Road networks and labels from GeoJSON and OSM XML; prediction export.

mod geojson;
mod osm;
mod projection;
mod write;

pub use geojson::parse_geojson_network;
pub use osm::parse_osm_xml;
pub use projection::{GeoOrigin, DEFAULT_ORIGIN};
pub use write::{network_document, predictions_document, write_atomic, write_predictions};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::road_graph::{GraphError, RoadGraph};

pub const MIN_LANES: u8 = 1;
pub const MAX_LANES: u8 = 6;

/// Coordinates closer than this (meters, after projection) share a vertex.
pub const MERGE_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadType {
    Residential,
    Primary,
}

impl RoadType {
    pub fn class_index(self) -> usize {
        match self {
            RoadType::Residential => 0,
            RoadType::Primary => 1,
        }
    }

    pub fn from_class(c: usize) -> Option<Self> {
        match c {
            0 => Some(RoadType::Residential),
            1 => Some(RoadType::Primary),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoadType::Residential => "residential",
            RoadType::Primary => "primary",
        }
    }
}

/// A road graph with optional per-vertex ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledNetwork {
    pub graph: RoadGraph,
    /// Lane count in `1..=6`; `None` is a masked label.
    pub lanes: Vec<Option<u8>>,
    pub road_type: Vec<Option<RoadType>>,
    /// Lon/lat of the planar origin, when the network came from (or will go
    /// to) geographic coordinates.
    pub origin: Option<GeoOrigin>,
}

impl LabeledNetwork {
    pub fn unlabeled(graph: RoadGraph) -> Self {
        let n = graph.vertex_count();
        Self {
            graph,
            lanes: vec![None; n],
            road_type: vec![None; n],
            origin: None,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    /// Zero-based lane class, `lanes - 1`.
    pub fn lane_class(&self, v: usize) -> Option<usize> {
        self.lanes[v].map(|l| l as usize - 1)
    }

    pub fn type_class(&self, v: usize) -> Option<usize> {
        self.road_type[v].map(RoadType::class_index)
    }

    pub fn lane_classes(&self) -> Vec<Option<usize>> {
        (0..self.vertex_count()).map(|v| self.lane_class(v)).collect()
    }

    pub fn type_classes(&self) -> Vec<Option<usize>> {
        (0..self.vertex_count()).map(|v| self.type_class(v)).collect()
    }

    pub fn lane_mask(&self) -> Vec<bool> {
        self.lanes.iter().map(Option::is_some).collect()
    }

    pub fn type_mask(&self) -> Vec<bool> {
        self.road_type.iter().map(Option::is_some).collect()
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        self.graph.validate()?;
        let n = self.vertex_count();
        if self.lanes.len() != n || self.road_type.len() != n {
            return Err(IngestError::Invalid("label arrays do not match vertex count".into()));
        }
        if let Some(l) = self.lanes.iter().flatten().find(|l| !(MIN_LANES..=MAX_LANES).contains(l)) {
            return Err(IngestError::Invalid(format!("lane count {l} outside 1..=6")));
        }
        Ok(())
    }

    /// Densifies the graph; inserted vertices inherit a label when both edge
    /// endpoints agree on it, otherwise it is masked.
    pub fn densified(&self, spacing: f64) -> Result<LabeledNetwork, IngestError> {
        let graph = crate::road_graph::densify(&self.graph, spacing)?;
        let n0 = self.vertex_count();
        let mut lanes = self.lanes.clone();
        let mut road_type = self.road_type.clone();
        lanes.resize(graph.vertex_count(), None);
        road_type.resize(graph.vertex_count(), None);
        // Inserted vertices form runs between two original endpoints; each
        // run is a path whose ends touch original vertices.
        for v in n0..graph.vertex_count() {
            let ends = run_endpoints(&graph, v, n0);
            if let Some((a, b)) = ends {
                if self.lanes[a] == self.lanes[b] {
                    lanes[v] = self.lanes[a];
                }
                if self.road_type[a] == self.road_type[b] {
                    road_type[v] = self.road_type[a];
                }
            }
        }
        Ok(LabeledNetwork {
            graph,
            lanes,
            road_type,
            origin: self.origin,
        })
    }
}

/// The two original vertices at the ends of the inserted run containing `v`.
fn run_endpoints(graph: &RoadGraph, v: usize, n0: usize) -> Option<(usize, usize)> {
    let ns = graph.neighbors(v);
    if ns.len() != 2 {
        return None;
    }
    let mut ends = [0usize; 2];
    for (slot, &start) in ends.iter_mut().zip(ns) {
        let (mut prev, mut cur) = (v, start);
        while cur >= n0 {
            let next = graph.neighbors(cur).iter().copied().find(|&u| u != prev)?;
            prev = cur;
            cur = next;
        }
        *slot = cur;
    }
    Some((ends[0], ends[1]))
}

/// Maps OSM `highway` values onto the two road-type classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagMapping {
    pub residential: Vec<String>,
    pub primary: Vec<String>,
}

impl Default for TagMapping {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            residential: s(&["residential", "living_street", "unclassified"]),
            primary: s(&["primary", "secondary", "trunk", "motorway", "tertiary"]),
        }
    }
}

impl TagMapping {
    pub fn classify(&self, highway: &str) -> Option<RoadType> {
        if self.residential.iter().any(|h| h == highway) {
            Some(RoadType::Residential)
        } else if self.primary.iter().any(|h| h == highway) {
            Some(RoadType::Primary)
        } else {
            None
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| IngestError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// Clamps a raw lane value into `1..=6`, recording a warning when clamped.
pub(crate) fn clamp_lanes(raw: i64, context: &str, warnings: &mut Vec<String>) -> u8 {
    let clamped = raw.clamp(MIN_LANES as i64, MAX_LANES as i64);
    if clamped != raw {
        warnings.push(format!("{context}: lanes={raw} clamped to {clamped}"));
    }
    clamped as u8
}

pub(crate) fn parse_lanes_text(text: &str, context: &str, warnings: &mut Vec<String>) -> Option<u8> {
    match text.trim().parse::<i64>() {
        Ok(v) => Some(clamp_lanes(v, context, warnings)),
        Err(_) => {
            warnings.push(format!("{context}: unparseable lanes value {text:?}, label masked"));
            None
        }
    }
}

/// A parsed network plus the non-fatal issues met while parsing.
#[derive(Clone, Debug)]
pub struct Parsed {
    pub network: LabeledNetwork,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("JSON parse error at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("XML parse error: {0}")]
    Xml(String),
    #[error("way {way} references missing node {node}")]
    MissingNode { way: i64, node: i64 },
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Merges coordinates within [`MERGE_TOLERANCE`] into shared vertices.
pub(crate) struct VertexMerger {
    cells: std::collections::HashMap<(i64, i64), Vec<usize>>,
}

impl VertexMerger {
    pub fn new() -> Self {
        Self {
            cells: Default::default(),
        }
    }

    fn cell(p: crate::road_graph::GeoPoint) -> (i64, i64) {
        (
            (p.x / MERGE_TOLERANCE).floor() as i64,
            (p.y / MERGE_TOLERANCE).floor() as i64,
        )
    }

    pub fn vertex_for(
        &mut self,
        graph: &mut RoadGraph,
        p: crate::road_graph::GeoPoint,
    ) -> Result<(usize, bool), GraphError> {
        let (cx, cy) = Self::cell(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &v in bucket {
                        let d = graph.position(v).distance(p);
                        if d <= MERGE_TOLERANCE && best.is_none_or(|(bd, bv)| d < bd || (d == bd && v < bv)) {
                            best = Some((d, v));
                        }
                    }
                }
            }
        }
        if let Some((_, v)) = best {
            return Ok((v, false));
        }
        let v = graph.add_vertex(p)?;
        self.cells.entry((cx, cy)).or_default().push(v);
        Ok((v, true))
    }
}
