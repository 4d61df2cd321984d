use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::data::PreparedNetwork;
use super::loss::{total_loss, vertex_dropout, LossTargets};
use super::optim::Adam;
use super::TrainError;
use crate::autodiff::{AutodiffError, Tape};
use crate::metrics_eval::{accuracy, ale};
use crate::model::{Ctx, RoadTagger};
use crate::predictions::PredictionSet;
use crate::road_graph::{sample_subgraph, TraversalMode};

pub const METRICS_HEADER: [&str; 8] = [
    "iteration",
    "loss",
    "ce_lane",
    "ce_type",
    "reg",
    "val_acc_lane",
    "val_acc_type",
    "ale",
];

/// Pooled accuracy over a set of networks; `None` where nothing is labeled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ValidationScore {
    pub lane_accuracy: Option<f64>,
    pub type_accuracy: Option<f64>,
    pub ale: Option<f64>,
}

impl ValidationScore {
    /// Selection score: mean of whichever attribute accuracies exist.
    pub fn mean_accuracy(&self) -> Option<f64> {
        match (self.lane_accuracy, self.type_accuracy) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            (a, b) => a.or(b),
        }
    }
}

/// One optimizer step, plus validation numbers on steps where it ran.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    pub ce_lane: f64,
    pub ce_type: f64,
    pub reg: f64,
    pub validation: Option<ValidationScore>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best model on validation, or the last one when there is no
    /// validation data.
    pub model: RoadTagger,
    pub history: Vec<HistoryRow>,
    pub best_iteration: Option<usize>,
    pub best_score: Option<f64>,
}

fn cell(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

/// The metrics log as CSV text, one row per step.
pub fn metrics_csv(history: &[HistoryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for r in history {
        let v = r.validation.unwrap_or_default();
        w.write_record([
            r.iteration.to_string(),
            r.loss.to_string(),
            r.ce_lane.to_string(),
            r.ce_type.to_string(),
            r.reg.to_string(),
            cell(v.lane_accuracy),
            cell(v.type_accuracy),
            cell(v.ale),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// Scores already-computed predictions against each network's labels,
/// pooling all vertices.
pub fn score_predictions(nets: &[PreparedNetwork], preds: &[PredictionSet]) -> ValidationScore {
    let mut lane_pred = Vec::new();
    let mut lane_true = Vec::new();
    let mut type_pred = Vec::new();
    let mut type_true = Vec::new();
    for (net, p) in nets.iter().zip(preds) {
        lane_pred.extend(p.lanes.argmax());
        lane_true.extend_from_slice(&net.lane_labels);
        type_pred.extend(p.road_type.argmax());
        type_true.extend_from_slice(&net.type_labels);
    }
    ValidationScore {
        lane_accuracy: accuracy(&lane_pred, &lane_true).ok(),
        type_accuracy: accuracy(&type_pred, &type_true).ok(),
        ale: ale(&lane_pred, &lane_true).ok(),
    }
}

/// Predicts every network in full.
pub fn predict_all(
    model: &RoadTagger,
    nets: &[PreparedNetwork],
    max_vertices: usize,
) -> Result<Vec<PredictionSet>, TrainError> {
    nets.iter()
        .map(|n| Ok(model.predict(&n.features, &n.structures, max_vertices)?))
        .collect()
}

pub fn validate(model: &RoadTagger, nets: &[PreparedNetwork], max_vertices: usize) -> Result<ValidationScore, TrainError> {
    Ok(score_predictions(nets, &predict_all(model, nets, max_vertices)?))
}

fn diverged(iteration: usize, loss: f64) -> TrainError {
    TrainError::Diverged { iteration, loss }
}

/// Trains from a fresh model seeded by `config.seed`.
pub fn train(
    train_set: &[PreparedNetwork],
    validation: &[PreparedNetwork],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(train_set, validation, config, &mut |_| {})
}

/// As [`train`], calling `observer` after every step.
pub fn train_with(
    train_set: &[PreparedNetwork],
    validation: &[PreparedNetwork],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&HistoryRow),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let total: usize = train_set.iter().map(PreparedNetwork::vertex_count).sum();
    if total == 0 {
        return Err(TrainError::Data("no training vertices".into()));
    }
    let mut model = RoadTagger::new(config.model.clone(), config.seed)?;
    for net in train_set.iter().chain(validation) {
        model.check_inputs(&net.features, &net.structures)?;
    }
    let mut adam = Adam::new(config.adam.clone(), model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7261_696e);
    let mut history = Vec::with_capacity(config.iterations);
    let mut best: Option<(f64, usize, RoadTagger)> = None;

    for it in 0..config.iterations {
        // A uniformly random vertex over all training networks.
        let mut pick = rng.random_range(0..total);
        let net = train_set
            .iter()
            .find(|n| {
                if pick < n.vertex_count() {
                    true
                } else {
                    pick -= n.vertex_count();
                    false
                }
            })
            .expect("pick < total");
        let mode = if rng.random_bool(0.5) { TraversalMode::Bfs } else { TraversalMode::Dfs };
        let sample = sample_subgraph(
            &net.network.graph,
            &net.structures,
            pick,
            config.subgraph_size,
            mode,
            config.loss_vertex_count,
            rng.random(),
        )?;
        let ids = &sample.vertex_ids;
        let lanes: Vec<_> = ids.iter().map(|&g| net.lane_labels[g]).collect();
        let types: Vec<_> = ids.iter().map(|&g| net.type_labels[g]).collect();
        let targets = LossTargets {
            lanes: &lanes,
            road_type: &types,
            neighbors: &sample.graph_neighbors,
            loss_vertices: &sample.loss_positions,
        };

        let mut drop_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let rate = config.dropout_rate;
        let mut hook = |tape: &mut Tape, e| vertex_dropout(tape, e, rate, &mut drop_rng).map(|(v, _)| v);
        let mut tape = Tape::new();
        let parts = {
            let mut ctx = Ctx::new(&mut tape, model.params());
            let x = ctx.tape.constant(net.features.select_rows(ids))?;
            let trace = match model.forward_on(&mut ctx, x, &sample.structures, Some(&mut hook)) {
                Err(crate::model::ModelError::Autodiff(AutodiffError::NonFinite { .. })) => {
                    return Err(diverged(it, f64::NAN))
                }
                other => other?,
            };
            total_loss(
                ctx.tape,
                (trace.lane_logits, trace.type_logits),
                (trace.lane_probs, trace.type_probs),
                &targets,
                config.laplace_weight,
            )
        };
        let parts = match parts {
            Err(TrainError::Autodiff(AutodiffError::NonFinite { .. })) => return Err(diverged(it, f64::NAN)),
            Err(TrainError::EmptyLossSet) => {
                // An unlabeled neighborhood: nothing to learn from this draw.
                continue;
            }
            other => other?,
        };
        let loss = tape.value(parts.total).item();
        if !loss.is_finite() {
            return Err(diverged(it, loss));
        }
        let grads = tape.backward(parts.total)?;
        adam.step(model.params_mut(), &grads, config.learning_rate_at(it));

        let last = it + 1 == config.iterations;
        let validation_score = if !validation.is_empty() && ((it + 1) % config.validation_interval == 0 || last) {
            let score = validate(&model, validation, config.eval_batch_vertices)?;
            if let Some(s) = score.mean_accuracy() {
                if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                    best = Some((s, it, model.clone()));
                }
            }
            Some(score)
        } else {
            None
        };
        let row = HistoryRow {
            iteration: it,
            loss,
            ce_lane: parts.ce_lane,
            ce_type: parts.ce_type,
            reg: parts.reg,
            validation: validation_score,
        };
        observer(&row);
        history.push(row);
    }

    Ok(match best {
        Some((score, it, m)) => TrainOutcome {
            model: m,
            history,
            best_iteration: Some(it),
            best_score: Some(score),
        },
        None => TrainOutcome {
            model,
            history,
            best_iteration: None,
            best_score: None,
        },
    })
}
