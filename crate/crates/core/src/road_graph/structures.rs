use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::chains::RoadChain;
use super::graph::RoadGraph;

pub const DEFAULT_AUX_DISTANCE: f64 = 30.0;
pub const DEFAULT_AUX_ANGLE: f64 = 30.0;

/// Message-flow adjacency over a shared vertex set: vertex `v` aggregates
/// messages from every vertex in `sources[v]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStructure {
    pub name: String,
    pub sources: Vec<Vec<usize>>,
    pub directed: bool,
}

impl GraphStructure {
    pub fn empty(name: &str, vertex_count: usize, directed: bool) -> Self {
        Self {
            name: name.to_string(),
            sources: vec![Vec::new(); vertex_count],
            directed,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.sources.len()
    }

    pub fn edge_count(&self) -> usize {
        self.sources.iter().map(Vec::len).sum()
    }

    fn add(&mut self, v: usize, source: usize) {
        if let Err(pos) = self.sources[v].binary_search(&source) {
            self.sources[v].insert(pos, source);
        }
    }

    /// Restricts to `ids` (global indices) and relabels to positions in `ids`.
    pub fn restrict(&self, ids: &[usize]) -> GraphStructure {
        let local: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let sources = ids
            .iter()
            .map(|&g| {
                let mut s: Vec<usize> = self.sources[g].iter().filter_map(|u| local.get(u).copied()).collect();
                s.sort_unstable();
                s
            })
            .collect();
        GraphStructure {
            name: self.name.clone(),
            sources,
            directed: self.directed,
        }
    }

    /// Relabels vertices: new index of old vertex `v` is `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> GraphStructure {
        let mut sources = vec![Vec::new(); self.sources.len()];
        for (v, srcs) in self.sources.iter().enumerate() {
            let mut s: Vec<usize> = srcs.iter().map(|&u| perm[u]).collect();
            s.sort_unstable();
            sources[perm[v]] = s;
        }
        GraphStructure {
            name: self.name.clone(),
            sources,
            directed: self.directed,
        }
    }
}

/// Which propagation structure to derive from a road graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    Original,
    Road,
    RoadForward,
    RoadBackward,
    Aux,
}

impl StructureKind {
    pub fn name(self) -> &'static str {
        match self {
            StructureKind::Original => "original",
            StructureKind::Road => "road",
            StructureKind::RoadForward => "road_forward",
            StructureKind::RoadBackward => "road_backward",
            StructureKind::Aux => "aux",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "original" => Some(StructureKind::Original),
            "road" => Some(StructureKind::Road),
            "road_forward" => Some(StructureKind::RoadForward),
            "road_backward" => Some(StructureKind::RoadBackward),
            "aux" => Some(StructureKind::Aux),
            _ => None,
        }
    }
}

pub fn structure_original(graph: &RoadGraph) -> GraphStructure {
    GraphStructure {
        name: "original".into(),
        sources: graph.adjacency().to_vec(),
        directed: false,
    }
}

pub fn structure_road(graph: &RoadGraph, chains: &[RoadChain]) -> GraphStructure {
    let mut s = GraphStructure::empty("road", graph.vertex_count(), false);
    for chain in chains {
        for (a, b) in chain.edges() {
            s.add(a, b);
            s.add(b, a);
        }
    }
    s
}

/// Forward: each vertex hears its predecessor along every chain through it.
/// Backward: its successor.
pub fn structure_road_directional(graph: &RoadGraph, chains: &[RoadChain]) -> (GraphStructure, GraphStructure) {
    let n = graph.vertex_count();
    let mut fwd = GraphStructure::empty("road_forward", n, true);
    let mut bwd = GraphStructure::empty("road_backward", n, true);
    for chain in chains {
        for (a, b) in chain.edges() {
            fwd.add(b, a);
            bwd.add(a, b);
        }
    }
    (fwd, bwd)
}

/// Chain membership: `Some(c)` when the vertex lies on exactly one chain.
fn sole_chain(n: usize, chains: &[RoadChain]) -> Vec<Option<usize>> {
    let mut count = vec![0usize; n];
    let mut owner = vec![None; n];
    for (ci, chain) in chains.iter().enumerate() {
        let mut seen: Vec<usize> = chain.vertices.clone();
        seen.sort_unstable();
        seen.dedup();
        for v in seen {
            count[v] += 1;
            owner[v] = Some(ci);
        }
    }
    owner
        .into_iter()
        .zip(count)
        .map(|(o, c)| if c == 1 { o } else { None })
        .collect()
}

/// Unit-free local direction of `v` along its chain (neighbor difference).
fn local_direction(graph: &RoadGraph, chain: &RoadChain, pos: usize) -> (f64, f64) {
    let vs = &chain.vertices;
    let n = vs.len();
    let prev = if pos > 0 {
        vs[pos - 1]
    } else if chain.closed {
        vs[n - 1]
    } else {
        vs[pos]
    };
    let next = if pos + 1 < n {
        vs[pos + 1]
    } else if chain.closed {
        vs[0]
    } else {
        vs[pos]
    };
    let (a, b) = (graph.position(prev), graph.position(next));
    (b.x - a.x, b.y - a.y)
}

/// Auxiliary edges between parallel road pairs.
///
/// Every vertex lying on exactly one chain is matched to its nearest vertex
/// on a different chain (junction vertices take no part). The pair is kept
/// when the two are at most `max_dist` meters apart and their local chain
/// directions are within `max_angle` degrees of parallel or antiparallel.
/// Kept pairs become symmetric edges.
pub fn structure_aux_parallel(
    graph: &RoadGraph,
    chains: &[RoadChain],
    max_dist: f64,
    max_angle: f64,
) -> GraphStructure {
    let n = graph.vertex_count();
    let mut s = GraphStructure::empty("aux", n, false);
    if n == 0 || max_dist <= 0.0 {
        return s;
    }
    let owner = sole_chain(n, chains);
    let mut direction = vec![(0.0, 0.0); n];
    for chain in chains {
        for (pos, &v) in chain.vertices.iter().enumerate() {
            if owner[v].is_some() {
                direction[v] = local_direction(graph, chain, pos);
            }
        }
    }

    let cell = |x: f64| (x / max_dist).floor() as i64;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for v in 0..n {
        if owner[v].is_some() {
            let p = graph.position(v);
            grid.entry((cell(p.x), cell(p.y))).or_default().push(v);
        }
    }

    let cos_limit = max_angle.to_radians().cos();
    for v in 0..n {
        let Some(cv) = owner[v] else { continue };
        let p = graph.position(v);
        let (gx, gy) = (cell(p.x), cell(p.y));
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(gx + dx, gy + dy)) else { continue };
                for &u in bucket {
                    if owner[u] == Some(cv) {
                        continue;
                    }
                    let d = p.distance(graph.position(u));
                    let better = match best {
                        None => true,
                        Some((bd, bu)) => d < bd || (d == bd && u < bu),
                    };
                    if better {
                        best = Some((d, u));
                    }
                }
            }
        }
        let Some((d, u)) = best else { continue };
        if d > max_dist {
            continue;
        }
        let (a, b) = (direction[v], direction[u]);
        let norm = a.0.hypot(a.1) * b.0.hypot(b.1);
        if norm == 0.0 {
            continue;
        }
        let cos = ((a.0 * b.0 + a.1 * b.1) / norm).abs();
        if cos + 1e-12 >= cos_limit {
            s.add(v, u);
            s.add(u, v);
        }
    }
    s
}

/// Builds the requested structures in order.
pub fn build_structures(
    graph: &RoadGraph,
    chains: &[RoadChain],
    kinds: &[StructureKind],
) -> Vec<GraphStructure> {
    let mut directional = None;
    kinds
        .iter()
        .map(|kind| match kind {
            StructureKind::Original => structure_original(graph),
            StructureKind::Road => structure_road(graph, chains),
            StructureKind::RoadForward | StructureKind::RoadBackward => {
                let (f, b) = directional
                    .get_or_insert_with(|| structure_road_directional(graph, chains))
                    .clone();
                if *kind == StructureKind::RoadForward {
                    f
                } else {
                    b
                }
            }
            StructureKind::Aux => structure_aux_parallel(graph, chains, DEFAULT_AUX_DISTANCE, DEFAULT_AUX_ANGLE),
        })
        .collect()
}

/// Union of several structures' source sets, per vertex.
pub fn union_sources(structures: &[GraphStructure], n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    for s in structures {
        for (v, srcs) in s.sources.iter().enumerate() {
            out[v].extend_from_slice(srcs);
        }
    }
    for list in &mut out {
        list.sort_unstable();
        list.dedup();
    }
    out
}
