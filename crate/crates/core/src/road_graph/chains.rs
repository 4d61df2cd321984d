use std::collections::BTreeSet;

use super::graph::RoadGraph;

pub const DEFAULT_CHAIN_ANGLE: f64 = 60.0;

/// A maximal run of edges belonging to one logical road.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoadChain {
    pub vertices: Vec<usize>,
    /// A closed chain also has the edge `last → first`.
    pub closed: bool,
}

impl RoadChain {
    /// Consecutive vertex pairs, including the closing pair of a loop.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.vertices.len();
        let wrap = if self.closed && n > 2 { Some((self.vertices[n - 1], self.vertices[0])) } else { None };
        self.vertices.windows(2).map(|w| (w[0], w[1])).chain(wrap)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Turning angle in degrees when travelling `u → v → w`: the smallest angle
/// between the bearings of `u→v` and `v→w`. Reversing the walk gives the
/// same value.
pub fn turn_angle(graph: &RoadGraph, u: usize, v: usize, w: usize) -> f64 {
    let (pu, pv, pw) = (graph.position(u), graph.position(v), graph.position(w));
    let (ax, ay) = (pv.x - pu.x, pv.y - pu.y);
    let (bx, by) = (pw.x - pv.x, pw.y - pv.y);
    let cross = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    cross.abs().atan2(dot).to_degrees()
}

/// Per-vertex continuation table: `pairs[v]` lists `(u, w)` meaning a chain
/// entering `v` from `u` leaves towards `w` (stored in both directions).
fn pair_junctions(graph: &RoadGraph, threshold: f64) -> Vec<Vec<(usize, usize)>> {
    let mut pairs = vec![Vec::new(); graph.vertex_count()];
    for (v, slot) in pairs.iter_mut().enumerate() {
        let ns = graph.neighbors(v);
        if ns.len() < 2 {
            continue;
        }
        let mut candidates = Vec::new();
        for (i, &u) in ns.iter().enumerate() {
            for &w in &ns[i + 1..] {
                let angle = turn_angle(graph, u, v, w);
                if angle < threshold {
                    candidates.push((angle, u, w));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used = BTreeSet::new();
        for (_, u, w) in candidates {
            if used.contains(&u) || used.contains(&w) {
                continue;
            }
            used.insert(u);
            used.insert(w);
            slot.push((u, w));
            slot.push((w, u));
        }
    }
    pairs
}

fn continuation(pairs: &[Vec<(usize, usize)>], v: usize, from: usize) -> Option<usize> {
    pairs[v].iter().find(|(u, _)| *u == from).map(|&(_, w)| w)
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Partitions the edges of `graph` into road chains.
///
/// At every vertex, incident edges are paired greedily by smallest turning
/// angle (ties to the lowest vertex indices); a pair only continues a chain
/// when its angle is below `angle_threshold` degrees.
pub fn extract_road_chains(graph: &RoadGraph, angle_threshold: f64) -> Vec<RoadChain> {
    let pairs = pair_junctions(graph, angle_threshold);
    let mut visited: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut chains = Vec::new();

    for (a, b) in graph.edges() {
        if visited.contains(&(a, b)) {
            continue;
        }
        visited.insert((a, b));
        let mut forward = vec![a, b];
        let mut closed = false;
        let (mut prev, mut cur) = (a, b);
        while let Some(next) = continuation(&pairs, cur, prev) {
            let k = edge_key(cur, next);
            if k == (a, b) {
                closed = true;
                break;
            }
            if !visited.insert(k) {
                break;
            }
            forward.push(next);
            prev = cur;
            cur = next;
        }
        if closed {
            // The walk came back to `a`; drop the repeated endpoint.
            forward.pop();
            chains.push(RoadChain {
                vertices: forward,
                closed: true,
            });
            continue;
        }
        let mut backward = Vec::new();
        let (mut prev, mut cur) = (b, a);
        while let Some(next) = continuation(&pairs, cur, prev) {
            if !visited.insert(edge_key(cur, next)) {
                break;
            }
            backward.push(next);
            prev = cur;
            cur = next;
        }
        backward.reverse();
        backward.extend(forward);
        if backward.first() > backward.last() {
            backward.reverse();
        }
        chains.push(RoadChain {
            vertices: backward,
            closed: false,
        });
    }
    chains
}
