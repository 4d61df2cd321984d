use rand::seq::index::sample;
use rand::Rng;

use super::TrainError;
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::predictions::PredictionSet;

/// Replaces `⌊rate·V⌋` uniformly chosen embedding rows with `e ⊙ r`,
/// `r ~ U[-1, 1]` per coordinate, and blocks gradient flow through those
/// rows. Returns the new variable and the dropped row indices (sorted).
pub fn vertex_dropout(
    tape: &mut Tape,
    embeddings: Var,
    rate: f64,
    rng: &mut impl Rng,
) -> Result<(Var, Vec<usize>), AutodiffError> {
    let (n, d) = {
        let e = tape.value(embeddings);
        (e.rows(), e.cols())
    };
    let count = (rate * n as f64).floor() as usize;
    if count == 0 {
        return Ok((embeddings, Vec::new()));
    }
    let mut dropped = sample(rng, n, count).into_vec();
    dropped.sort_unstable();
    let mut keep = Tensor::filled(&[n, d], 1.0);
    let mut scale = Tensor::zeros(&[n, d]);
    for &v in &dropped {
        keep.row_mut(v).fill(0.0);
        for r in scale.row_mut(v) {
            *r = rng.random_range(-1.0..=1.0);
        }
    }
    // out = e ⊙ keep + stop(e) ⊙ r: kept rows pass through untouched,
    // dropped rows carry the scaled value but no gradient.
    let keep = tape.constant(keep)?;
    let scale = tape.constant(scale)?;
    let frozen = tape.stop_gradient(embeddings)?;
    let live = tape.mul(embeddings, keep)?;
    let noisy = tape.mul(frozen, scale)?;
    Ok((tape.add(live, noisy)?, dropped))
}

/// Labels and neighborhoods for one loss evaluation, all in local ids.
#[derive(Clone, Copy, Debug)]
pub struct LossTargets<'a> {
    pub lanes: &'a [Option<usize>],
    pub road_type: &'a [Option<usize>],
    /// Road-graph neighbors used by the smoothness penalty.
    pub neighbors: &'a [Vec<usize>],
    pub loss_vertices: &'a [usize],
}

/// The scalar loss and its parts as plain numbers.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub ce_lane: f64,
    pub ce_type: f64,
    pub reg: f64,
}

/// The penalty applies at `v` only if `v` and every neighbor carry the same
/// ground-truth label.
pub fn laplace_gate(v: usize, labels: &[Option<usize>], neighbors: &[Vec<usize>]) -> bool {
    match labels[v] {
        Some(l) => !neighbors[v].is_empty() && neighbors[v].iter().all(|&u| labels[u] == Some(l)),
        None => false,
    }
}

fn laplace_on_tape(
    tape: &mut Tape,
    probs: Var,
    labels: &[Option<usize>],
    neighbors: &[Vec<usize>],
    vertices: &[usize],
    scale: f64,
) -> Result<Option<Var>, AutodiffError> {
    let gated: Vec<usize> = vertices.iter().copied().filter(|&v| laplace_gate(v, labels, neighbors)).collect();
    if gated.is_empty() || scale == 0.0 {
        return Ok(None);
    }
    let own: Vec<Vec<usize>> = gated.iter().map(|&v| vec![v]).collect();
    let around: Vec<Vec<usize>> = gated.iter().map(|&v| neighbors[v].clone()).collect();
    let own = tape.mean_rows(probs, &own)?;
    let around = tape.mean_rows(probs, &around)?;
    let diff = tape.sub(own, around)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq)?;
    Ok(Some(tape.scale(total, scale)?))
}

/// Smoothness penalty on plain predictions: `λ |y_v − mean_{N(v)} y|²`
/// summed over gated vertices and both attributes, divided by the number
/// of `vertices`.
pub fn laplace_regularizer(
    predictions: &PredictionSet,
    neighbors: &[Vec<usize>],
    lanes: &[Option<usize>],
    road_type: &[Option<usize>],
    vertices: &[usize],
    weight: f64,
) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (table, labels) in [(&predictions.lanes, lanes), (&predictions.road_type, road_type)] {
        for &v in vertices {
            if !laplace_gate(v, labels, neighbors) {
                continue;
            }
            let inv = 1.0 / neighbors[v].len() as f64;
            for c in 0..table.classes() {
                let mean: f64 = neighbors[v].iter().map(|&u| table.row(u)[c]).sum::<f64>() * inv;
                total += (table.row(v)[c] - mean).powi(2);
            }
        }
    }
    weight * total / vertices.len() as f64
}

/// Cross-entropy of each head over its labeled loss vertices, summed, plus
/// the smoothness penalty averaged over all loss vertices.
pub fn total_loss(
    tape: &mut Tape,
    logits: (Var, Var),
    probs: (Var, Var),
    targets: &LossTargets,
    laplace_weight: f64,
) -> Result<LossParts, TrainError> {
    let mut terms = Vec::new();
    let mut ce = [0.0; 2];
    for (i, (logit, labels)) in [(logits.0, targets.lanes), (logits.1, targets.road_type)].into_iter().enumerate() {
        let (rows, classes): (Vec<usize>, Vec<usize>) = targets
            .loss_vertices
            .iter()
            .filter_map(|&v| labels[v].map(|c| (v, c)))
            .unzip();
        if rows.is_empty() {
            continue;
        }
        let term = tape.cross_entropy(logit, &rows, &classes)?;
        ce[i] = tape.value(term).item();
        terms.push(term);
    }
    if terms.is_empty() {
        return Err(TrainError::EmptyLossSet);
    }
    let scale = laplace_weight / targets.loss_vertices.len() as f64;
    let mut reg = 0.0;
    for (p, labels) in [(probs.0, targets.lanes), (probs.1, targets.road_type)] {
        if let Some(r) = laplace_on_tape(tape, p, labels, targets.neighbors, targets.loss_vertices, scale)? {
            reg += tape.value(r).item();
            terms.push(r);
        }
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(LossParts {
        total,
        ce_lane: ce[0],
        ce_type: ce[1],
        reg,
    })
}
