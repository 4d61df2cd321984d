use std::collections::BTreeMap;

use super::GraphError;

/// Planar position in meters (east, north).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: GeoPoint, t: f64) -> GeoPoint {
        GeoPoint {
            x: self.x + (other.x - self.x) * t,
            y: self.y + (other.y - self.y) * t,
        }
    }
}

/// Identifier of the source way an edge was built from.
pub type WayId = i64;

/// Undirected road network: positioned vertices with symmetric adjacency.
///
/// Adjacency lists are kept sorted, so every traversal over the graph is
/// deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoadGraph {
    vertices: Vec<GeoPoint>,
    adjacency: Vec<Vec<usize>>,
    edge_meta: BTreeMap<(usize, usize), WayId>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, p: GeoPoint) -> Result<usize, GraphError> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(GraphError::NonFinitePosition(self.vertices.len()));
        }
        self.vertices.push(p);
        self.adjacency.push(Vec::new());
        Ok(self.vertices.len() - 1)
    }

    /// Adds the undirected edge `a–b`. Returns `false` if it already existed.
    pub fn add_edge(&mut self, a: usize, b: usize, way: Option<WayId>) -> Result<bool, GraphError> {
        let n = self.vertices.len();
        if a >= n || b >= n {
            return Err(GraphError::VertexOutOfRange(a.max(b), n));
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        match self.adjacency[a].binary_search(&b) {
            Ok(_) => return Ok(false),
            Err(pos) => self.adjacency[a].insert(pos, b),
        }
        let pos = self.adjacency[b].binary_search(&a).unwrap_err();
        self.adjacency[b].insert(pos, a);
        if let Some(w) = way {
            self.edge_meta.insert(key(a, b), w);
        }
        Ok(true)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn position(&self, v: usize) -> GeoPoint {
        self.vertices[v]
    }

    pub fn positions(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.adjacency.len() && self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn edge_way(&self, a: usize, b: usize) -> Option<WayId> {
        self.edge_meta.get(&key(a, b)).copied()
    }

    /// Undirected edges as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        self.vertices[a].distance(self.vertices[b])
    }

    /// Checks the structural invariants; graphs built through `add_edge`
    /// always satisfy them.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.vertices.len();
        if self.adjacency.len() != n {
            return Err(GraphError::Corrupt("adjacency length differs from vertex count".into()));
        }
        for (v, ns) in self.adjacency.iter().enumerate() {
            if !self.vertices[v].x.is_finite() || !self.vertices[v].y.is_finite() {
                return Err(GraphError::NonFinitePosition(v));
            }
            for w in ns.windows(2) {
                if w[0] >= w[1] {
                    return Err(GraphError::Corrupt(format!("vertex {v} adjacency unsorted or duplicated")));
                }
            }
            for &u in ns {
                if u >= n {
                    return Err(GraphError::VertexOutOfRange(u, n));
                }
                if u == v {
                    return Err(GraphError::SelfLoop(v));
                }
                if !self.has_edge(u, v) {
                    return Err(GraphError::Corrupt(format!("edge {v}-{u} is not symmetric")));
                }
            }
        }
        Ok(())
    }
}

/// Splits every edge of length `L` into `ceil(L / spacing)` equal segments.
///
/// Original vertices keep their indices and positions; inserted vertices are
/// appended edge by edge in [`RoadGraph::edges`] order, running from the
/// lower-indexed endpoint to the higher one.
pub fn densify(graph: &RoadGraph, spacing: f64) -> Result<RoadGraph, GraphError> {
    if !spacing.is_finite() || spacing <= 0.0 {
        return Err(GraphError::BadSpacing(spacing));
    }
    let mut out = RoadGraph::new();
    for &p in graph.positions() {
        out.add_vertex(p)?;
    }
    for (a, b) in graph.edges() {
        let way = graph.edge_way(a, b);
        let len = graph.edge_length(a, b);
        // The small slack keeps already-dense edges (L/n ≤ spacing) intact
        // under floating error, which makes densify idempotent.
        let segments = ((len / spacing) - 1e-9).ceil().max(1.0) as usize;
        let (pa, pb) = (graph.position(a), graph.position(b));
        let mut prev = a;
        for s in 1..segments {
            let v = out.add_vertex(pa.lerp(pb, s as f64 / segments as f64))?;
            out.add_edge(prev, v, way)?;
            prev = v;
        }
        out.add_edge(prev, b, way)?;
    }
    Ok(out)
}
