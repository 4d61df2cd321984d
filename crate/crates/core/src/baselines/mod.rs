//! Comparison schemes: a per-vertex classifier, neighborhood smoothing of
//! its outputs, and exact chain MRF post-processing.

mod classifier;
mod mrf;

pub use classifier::{
    train_classifier, window_features, Classifier, ClassifierCheckpoint, ClassifierConfig, ClassifierOutcome,
    CLASSIFIER_FORMAT, CLASSIFIER_VERSION,
};
pub use mrf::{
    chain_energy, chain_min_energy, mrf_grid_search, mrf_infer, mrf_predictions, unaries, GridScore, LabelDistance,
    MrfGrid, MrfParams, MrfSettings, SearchInput, PROB_FLOOR,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::metrics_eval::MetricsError;
use crate::predictions::{PredictionSet, ProbTable};
use crate::road_graph::{RoadChain, RoadGraph};
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("config: {0}")]
    Config(String),
    #[error("expected {expected} feature columns, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// For every vertex, the longest chain through it (lowest index on ties)
/// and its position in that chain.
pub fn home_chains(vertices: usize, chains: &[RoadChain]) -> Vec<Option<(usize, usize)>> {
    let mut home: Vec<Option<(usize, usize)>> = vec![None; vertices];
    for (ci, chain) in chains.iter().enumerate() {
        for (pos, &v) in chain.vertices.iter().enumerate() {
            let better = match home[v] {
                None => true,
                Some((cj, _)) => chain.len() > chains[cj].len(),
            };
            if better {
                home[v] = Some((ci, pos));
            }
        }
    }
    home
}

fn smooth_table(t: &ProbTable, graph: &RoadGraph) -> ProbTable {
    let k = t.classes();
    let mut out = Vec::with_capacity(t.len() * k);
    for v in 0..t.len() {
        let nb = graph.neighbors(v);
        let mut acc = t.row(v).to_vec();
        for &u in nb {
            for (a, x) in acc.iter_mut().zip(t.row(u)) {
                *a += x;
            }
        }
        let inv = 1.0 / (1 + nb.len()) as f64;
        out.extend(acc.into_iter().map(|a| a * inv));
    }
    ProbTable::new(k, out)
}

/// Each vertex's probabilities averaged with those of its graph neighbors.
pub fn smooth_predictions(preds: &PredictionSet, graph: &RoadGraph) -> PredictionSet {
    PredictionSet {
        lanes: smooth_table(&preds.lanes, graph),
        road_type: smooth_table(&preds.road_type, graph),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_graph::GeoPoint;
    use proptest::prelude::*;

    fn path(n: usize) -> RoadGraph {
        let mut g = RoadGraph::new();
        for i in 0..n {
            g.add_vertex(GeoPoint::new(i as f64 * 10.0, 0.0)).unwrap();
        }
        for i in 1..n {
            g.add_edge(i - 1, i, None).unwrap();
        }
        g
    }

    fn set(rows: &[Vec<f64>]) -> PredictionSet {
        PredictionSet {
            lanes: ProbTable::from_rows(rows[0].len(), rows),
            road_type: ProbTable::from_rows(rows[0].len(), rows),
        }
    }

    #[test]
    fn middle_vertex_flips() {
        let p = set(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let s = smooth_predictions(&p, &path(3));
        let b = s.lanes.row(1);
        assert!((b[0] - 2.0 / 3.0).abs() < 1e-12 && (b[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.lanes.argmax()[1], 0);
    }

    #[test]
    fn isolated_vertex_unchanged() {
        let mut g = RoadGraph::new();
        g.add_vertex(GeoPoint::new(0.0, 0.0)).unwrap();
        let p = set(&[vec![0.3, 0.7]]);
        assert_eq!(smooth_predictions(&p, &g), p);
    }

    proptest! {
        #[test]
        fn stays_on_simplex(raw in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 2..12)) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-3;
                r.iter().map(|x| (x + 1e-3 / 3.0) / s).collect()
            }).collect();
            let s = smooth_predictions(&set(&rows), &path(rows.len()));
            for v in 0..rows.len() {
                let row = s.lanes.row(v);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_is_a_fixed_point() {
        let p = set(&vec![vec![0.25; 4]; 5]);
        let s = smooth_predictions(&p, &path(5));
        for v in 0..5 {
            assert!(s.lanes.row(v).iter().all(|x| (x - 0.25).abs() < 1e-15));
        }
    }
}
