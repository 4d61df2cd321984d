//! Finite-difference check of the whole model and loss on a tiny graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{total_loss, LossTargets};
use super::TrainError;
use crate::autodiff::{check_gradients, GradCheckOptions, GradCheckReport, Tensor};
use crate::model::{Ctx, ModelConfig, RoadTagger};
use crate::road_graph::{
    build_structures, extract_road_chains, GeoPoint, GraphStructure, RoadGraph, StructureKind, DEFAULT_CHAIN_ANGLE,
};

pub const TOY_VERTICES: usize = 6;

/// Small widths so that every parameter entry can be perturbed quickly.
pub fn toy_model_config(steps: usize) -> ModelConfig {
    ModelConfig {
        feature_dim: 3,
        embed_dim: 4,
        encoder_hidden: vec![5],
        hidden_chunk: 3,
        structures: vec![StructureKind::Original, StructureKind::RoadForward, StructureKind::RoadBackward],
        steps,
        head_hidden: vec![5, 4],
        ..ModelConfig::default()
    }
}

/// A random 6-vertex road: a wiggly path with a side branch.
fn toy_graph(rng: &mut impl Rng) -> RoadGraph {
    let mut g = RoadGraph::new();
    let mut x = 0.0;
    for _ in 0..5 {
        g.add_vertex(GeoPoint::new(x, rng.random_range(-3.0..3.0))).unwrap();
        x += rng.random_range(12.0..20.0);
    }
    for v in 0..4 {
        g.add_edge(v, v + 1, None).unwrap();
    }
    let at = rng.random_range(1..4);
    let p = g.position(at);
    let side = g.add_vertex(GeoPoint::new(p.x + 1.0, p.y + 15.0)).unwrap();
    g.add_edge(at, side, None).unwrap();
    g
}

/// One random instance with the full loss, smoothness penalty included.
/// Dropout stays off: its barrier deliberately makes the analytic gradient
/// disagree with finite differences on dropped rows, and it has its own
/// zeroing test.
pub fn model_gradient_check(seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = toy_graph(&mut rng);
    let chains = extract_road_chains(&graph, DEFAULT_CHAIN_ANGLE);
    let config = toy_model_config(8);
    let structures: Vec<GraphStructure> = build_structures(&graph, &chains, &config.structures);
    let mut model = RoadTagger::new(config.clone(), rng.random())?;
    // Fresh biases are all zero; with layers this narrow a vertex whose
    // previous ReLU layer is fully off then sits exactly on the next kink,
    // where a central difference reads half the slope. Check at a generic
    // point instead.
    let store = model.params_mut();
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".bias") {
            for x in store.get_mut(id).data_mut() {
                *x = rng.random_range(-0.5..0.5);
            }
        }
    }
    let n = graph.vertex_count();
    let features = Tensor::matrix(
        n,
        config.feature_dim,
        (0..n * config.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    // Few distinct labels so that some vertices pass the smoothness gate.
    let lanes: Vec<Option<usize>> = (0..n).map(|_| Some(rng.random_range(0..2))).collect();
    let types: Vec<Option<usize>> = (0..n).map(|v| (v % 3 != 0).then_some(1)).collect();
    let neighbors: Vec<Vec<usize>> = graph.adjacency().to_vec();
    let loss_vertices: Vec<usize> = (0..n).collect();

    let report = check_gradients(
        &format!("model#{seed}"),
        model.params(),
        |tape, store| {
            let mut ctx = Ctx::new(tape, store);
            let x = ctx.tape.constant(features.clone())?;
            let trace = model
                .forward_on(&mut ctx, x, &structures, None)
                .map_err(|e| match e {
                    crate::model::ModelError::Autodiff(a) => a,
                    other => panic!("toy model rejected its own inputs: {other}"),
                })?;
            let targets = LossTargets {
                lanes: &lanes,
                road_type: &types,
                neighbors: &neighbors,
                loss_vertices: &loss_vertices,
            };
            let parts = total_loss(
                ctx.tape,
                (trace.lane_logits, trace.type_logits),
                (trace.lane_probs, trace.type_probs),
                &targets,
                3.0,
            )
            .map_err(|e| match e {
                TrainError::Autodiff(a) => a,
                other => panic!("toy loss failed: {other}"),
            })?;
            Ok(parts.total)
        },
        opts,
    )?;
    Ok(report)
}

/// Options used for the model check: a slightly larger step than the op
/// checks, since the loss passes through eight recurrent steps.
pub fn model_check_options(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        step: 1e-5,
        tolerance: 1e-5,
        max_entries: None,
        norm_floor: 1e-6,
        seed,
    }
}
