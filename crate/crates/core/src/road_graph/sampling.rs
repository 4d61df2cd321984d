use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::RoadGraph;
use super::structures::GraphStructure;
use super::GraphError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraversalMode {
    Bfs,
    Dfs,
}

/// A connected training subgraph with locally relabelled structures.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphSample {
    /// Global vertex ids in traversal order; local index = position here.
    pub vertex_ids: Vec<usize>,
    /// Each input structure restricted to the sampled vertices (local ids).
    pub structures: Vec<GraphStructure>,
    /// Road-graph adjacency restricted to the sample (local ids).
    pub graph_neighbors: Vec<Vec<usize>>,
    /// Global ids of the vertices that enter the loss.
    pub loss_vertex_ids: Vec<usize>,
    /// Local positions of `loss_vertex_ids`.
    pub loss_positions: Vec<usize>,
}

/// Vertices reachable from `start` in BFS or DFS preorder, neighbors
/// visited in ascending index order, stopping after `limit` vertices.
pub fn traverse(graph: &RoadGraph, start: usize, limit: usize, mode: TraversalMode) -> Vec<usize> {
    let adjacency: Vec<&[usize]> = (0..graph.vertex_count()).map(|v| graph.neighbors(v)).collect();
    traverse_lists(&adjacency, start, limit, mode)
}

fn traverse_lists<L: AsRef<[usize]>>(adjacency: &[L], start: usize, limit: usize, mode: TraversalMode) -> Vec<usize> {
    let mut seen = vec![false; adjacency.len()];
    let mut order = Vec::new();
    match mode {
        TraversalMode::Bfs => {
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                order.push(v);
                if order.len() == limit {
                    break;
                }
                for &u in adjacency[v].as_ref() {
                    if !seen[u] {
                        seen[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
        TraversalMode::Dfs => {
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                order.push(v);
                if order.len() == limit {
                    break;
                }
                for &u in adjacency[v].as_ref().iter().rev() {
                    if !seen[u] {
                        stack.push(u);
                    }
                }
            }
        }
    }
    order
}

/// Road-graph adjacency widened by every structure's links, sorted and
/// deduplicated. Structures derived from the roads add nothing; auxiliary
/// links let a traversal cross to an unconnected parallel road.
fn union_adjacency(graph: &RoadGraph, structures: &[GraphStructure]) -> Vec<Vec<usize>> {
    (0..graph.vertex_count())
        .map(|v| {
            let mut nb: Vec<usize> = graph.neighbors(v).to_vec();
            for s in structures {
                nb.extend_from_slice(&s.sources[v]);
            }
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect()
}

/// First `n` vertices of a traversal from `seed_vertex` over the road graph
/// and the structure links, with `loss_count` of them drawn uniformly
/// without replacement for the loss.
#[allow(clippy::too_many_arguments)]
pub fn sample_subgraph(
    graph: &RoadGraph,
    structures: &[GraphStructure],
    seed_vertex: usize,
    n: usize,
    mode: TraversalMode,
    loss_count: usize,
    rng_seed: u64,
) -> Result<SubgraphSample, GraphError> {
    if seed_vertex >= graph.vertex_count() {
        return Err(GraphError::VertexOutOfRange(seed_vertex, graph.vertex_count()));
    }
    if n == 0 {
        return Err(GraphError::EmptySample);
    }
    if let Some(s) = structures.iter().find(|s| s.vertex_count() != graph.vertex_count()) {
        return Err(GraphError::Corrupt(format!(
            "structure covers {} vertices, graph has {}",
            s.vertex_count(),
            graph.vertex_count()
        )));
    }
    let vertex_ids = traverse_lists(&union_adjacency(graph, structures), seed_vertex, n, mode);
    let restricted = structures.iter().map(|s| s.restrict(&vertex_ids)).collect();
    let graph_neighbors = super::structures::structure_original(graph)
        .restrict(&vertex_ids)
        .sources;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let k = loss_count.min(vertex_ids.len());
    let mut loss_positions = sample(&mut rng, vertex_ids.len(), k).into_vec();
    loss_positions.sort_unstable();
    let loss_vertex_ids = loss_positions.iter().map(|&p| vertex_ids[p]).collect();
    Ok(SubgraphSample {
        vertex_ids,
        structures: restricted,
        graph_neighbors,
        loss_vertex_ids,
        loss_positions,
    })
}

#[cfg(test)]
mod tests {
    use super::super::graph::GeoPoint;
    use super::super::structures::structure_original;
    use super::*;
    use proptest::prelude::*;

    fn grid(side: usize) -> RoadGraph {
        let mut g = RoadGraph::new();
        for i in 0..side {
            for j in 0..side {
                g.add_vertex(GeoPoint::new(i as f64 * 20.0, j as f64 * 20.0)).unwrap();
            }
        }
        for i in 0..side {
            for j in 0..side {
                let v = i * side + j;
                if j + 1 < side {
                    g.add_edge(v, v + 1, None).unwrap();
                }
                if i + 1 < side {
                    g.add_edge(v, v + side, None).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn samples_256_with_128_loss_vertices() {
        let g = grid(64); // 4096 vertices
        let s = structure_original(&g);
        for mode in [TraversalMode::Bfs, TraversalMode::Dfs] {
            let sample = sample_subgraph(&g, std::slice::from_ref(&s), 1000, 256, mode, 128, 9).unwrap();
            assert_eq!(sample.vertex_ids.len(), 256);
            assert_eq!(sample.loss_vertex_ids.len(), 128);
            for (&p, &id) in sample.loss_positions.iter().zip(&sample.loss_vertex_ids) {
                assert_eq!(sample.vertex_ids[p], id);
            }
            for srcs in &sample.structures[0].sources {
                assert!(srcs.iter().all(|&u| u < 256));
            }
        }
    }

    #[test]
    fn small_component_returned_whole() {
        let g = grid(3);
        let sample = sample_subgraph(&g, &[], 0, 256, TraversalMode::Bfs, 128, 1).unwrap();
        assert_eq!(sample.vertex_ids.len(), 9);
        assert_eq!(sample.loss_vertex_ids.len(), 9);
    }

    #[test]
    fn sample_crosses_to_parallel_road() {
        use super::super::chains::{extract_road_chains, DEFAULT_CHAIN_ANGLE};
        use super::super::structures::structure_aux_parallel;
        let mut g = RoadGraph::new();
        for y in [0.0, 15.0] {
            let base = g.vertex_count();
            for i in 0..6 {
                g.add_vertex(GeoPoint::new(i as f64 * 20.0, y)).unwrap();
            }
            for i in 1..6 {
                g.add_edge(base + i - 1, base + i, None).unwrap();
            }
        }
        let chains = extract_road_chains(&g, DEFAULT_CHAIN_ANGLE);
        let aux = structure_aux_parallel(&g, &chains, 30.0, 30.0);
        assert_eq!(traverse(&g, 0, 256, TraversalMode::Bfs).len(), 6);
        let sample = sample_subgraph(&g, &[structure_original(&g), aux], 0, 256, TraversalMode::Bfs, 4, 1).unwrap();
        assert_eq!(sample.vertex_ids.len(), 12);
        // Smoothness neighbors stay on the road graph.
        assert!(sample.graph_neighbors.iter().all(|nb| nb.len() <= 2));
    }

    #[test]
    fn mismatched_structure_rejected() {
        let g = grid(3);
        let s = structure_original(&grid(2));
        assert!(sample_subgraph(&g, &[s], 0, 4, TraversalMode::Bfs, 2, 1).is_err());
    }

    #[test]
    fn same_seed_same_sample() {
        let g = grid(20);
        let s = [structure_original(&g)];
        let a = sample_subgraph(&g, &s, 5, 100, TraversalMode::Dfs, 40, 3).unwrap();
        let b = sample_subgraph(&g, &s, 5, 100, TraversalMode::Dfs, 40, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_seed_vertex_is_an_error() {
        let g = grid(2);
        assert!(sample_subgraph(&g, &[], 4, 3, TraversalMode::Bfs, 1, 0).is_err());
    }

    #[test]
    fn dfs_goes_deep_first() {
        let g = grid(3);
        // 0 -> 1 -> 2 -> 5 ...
        assert_eq!(&traverse(&g, 0, 4, TraversalMode::Dfs), &[0, 1, 2, 5]);
        assert_eq!(&traverse(&g, 0, 4, TraversalMode::Bfs), &[0, 1, 3, 2]);
    }

    proptest! {
        #[test]
        fn samples_are_connected_prefixes(
            side in 2usize..7,
            seed in 0usize..49,
            n in 1usize..60,
            bfs in any::<bool>(),
            loss_frac in 0.0f64..1.0,
            rng_seed in any::<u64>(),
        ) {
            let g = grid(side);
            let seed = seed % g.vertex_count();
            let loss = 1 + ((n - 1) as f64 * loss_frac) as usize;
            let mode = if bfs { TraversalMode::Bfs } else { TraversalMode::Dfs };
            let s = sample_subgraph(&g, &[structure_original(&g)], seed, n, mode, loss, rng_seed).unwrap();
            let k = s.vertex_ids.len();
            prop_assert_eq!(k, n.min(g.vertex_count()));
            prop_assert_eq!(s.vertex_ids[0], seed);
            let mut ids = s.vertex_ids.clone();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), k);
            prop_assert_eq!(s.loss_vertex_ids.len(), loss.min(k));
            for (&p, &v) in s.loss_positions.iter().zip(&s.loss_vertex_ids) {
                prop_assert_eq!(s.vertex_ids[p], v);
            }
            for (a, nbrs) in s.graph_neighbors.iter().enumerate() {
                for &b in nbrs {
                    prop_assert!(s.graph_neighbors[b].contains(&a));
                    prop_assert!(g.has_edge(s.vertex_ids[a], s.vertex_ids[b]));
                }
            }
            // Every sampled vertex after the first touches an earlier one.
            for i in 1..k {
                prop_assert!(s.graph_neighbors[i].iter().any(|&j| j < i));
            }
        }
    }
}
