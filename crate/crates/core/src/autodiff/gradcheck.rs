//! Central finite-difference checks against the tape's analytic gradients.
//!
//! The numerical side only ever calls the forward closure, so it shares no
//! code with the backward rules it checks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::AutodiffError;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Entries per parameter to perturb; `None` checks every entry.
    pub max_entries: Option<usize>,
    /// Denominator floor for the relative error.
    pub norm_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-5,
            max_entries: None,
            norm_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub analytic_norm: f64,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)` over the
    /// checked entries.
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub label: String,
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

pub fn check_gradients<F>(
    label: &str,
    store: &ParamStore,
    loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    let grads = tape.backward(loss)?;
    let eval = |s: &ParamStore| -> Result<f64, AutodiffError> {
        let mut t = Tape::new();
        let l = loss_fn(&mut t, s)?;
        Ok(t.value(l).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = store.clone();
    let mut params = Vec::new();
    for id in store.ids() {
        let analytic = grads.param_or_zeros(id, store);
        let n = analytic.numel();
        let entries: Vec<usize> = match opts.max_entries {
            Some(k) if k < n => {
                let mut e = sample(&mut rng, n, k).into_vec();
                e.sort_unstable();
                e
            }
            _ => (0..n).collect(),
        };
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for &e in &entries {
            let numeric = central_difference(&mut work, id, e, opts.step, &eval)?;
            let a = analytic.data()[e];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let denom = a2.sqrt().max(n2.sqrt()).max(opts.norm_floor);
        params.push(ParamCheck {
            name: store.name(id).to_string(),
            entries: entries.len(),
            analytic_norm: a2.sqrt(),
            rel_error: diff2.sqrt() / denom,
        });
    }
    Ok(GradCheckReport {
        label: label.to_string(),
        params,
        tolerance: opts.tolerance,
    })
}

fn central_difference(
    work: &mut ParamStore,
    id: ParamId,
    entry: usize,
    h: f64,
    eval: &impl Fn(&ParamStore) -> Result<f64, AutodiffError>,
) -> Result<f64, AutodiffError> {
    let orig = work.get(id).data()[entry];
    work.get_mut(id).data_mut()[entry] = orig + h;
    let plus = eval(work)?;
    work.get_mut(id).data_mut()[entry] = orig - h;
    let minus = eval(work)?;
    work.get_mut(id).data_mut()[entry] = orig;
    Ok((plus - minus) / (2.0 * h))
}

fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Values in `[-1, -0.05] ∪ [0.05, 1]`, keeping relu inputs off the kink.
fn off_kink_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let mag = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Reduces an op output to a scalar through a fixed random projection so
/// every output entry receives a distinct upstream gradient.
fn project(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var, AutodiffError> {
    let w = tape.constant(weights.clone())?;
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

pub const OP_NAMES: &[&str] = &[
    "matmul",
    "add",
    "add_broadcast",
    "sub",
    "mul",
    "scale",
    "sigmoid",
    "tanh",
    "relu",
    "concat",
    "slice_chunk",
    "softmax",
    "cross_entropy",
    "mean_rows",
    "scale_rows",
    "sum",
];

/// Randomized finite-difference check of one op: `instances` random shapes
/// up to 8×8.
pub fn check_op(
    op: &str,
    instances: usize,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<Vec<GradCheckReport>, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(instances);
    for inst in 0..instances {
        let r = rng.random_range(1..=8usize);
        let c = rng.random_range(1..=8usize);
        let k = rng.random_range(1..=8usize);
        let mut store = ParamStore::new();
        let label = format!("{op}#{inst}");
        let report = match op {
            "matmul" => {
                store.insert("a", random_tensor(&mut rng, r, k, -1.0, 1.0))?;
                store.insert("b", random_tensor(&mut rng, k, c, -1.0, 1.0))?;
                let w = random_tensor(&mut rng, r, c, -1.0, 1.0);
                check_gradients(&label, &store, |t, s| {
                    let a = t.param(s, s.require("a")?)?;
                    let b = t.param(s, s.require("b")?)?;
                    let y = t.matmul(a, b)?;
                    project(t, y, &w)
                }, opts)?
            }
            "add" | "sub" | "mul" => {
                store.insert("a", random_tensor(&mut rng, r, c, -1.0, 1.0))?;
                store.insert("b", random_tensor(&mut rng, r, c, -1.0, 1.0))?;
                let w = random_tensor(&mut rng, r, c, -1.0, 1.0);
                let op = op.to_string();
                check_gradients(&label, &store, |t, s| {
                    let a = t.param(s, s.require("a")?)?;
                    let b = t.param(s, s.require("b")?)?;
                    let y = match op.as_str() {
                        "add" => t.add(a, b)?,
                        "sub" => t.sub(a, b)?,
                        _ => t.mul(a, b)?,
                    };
                    project(t, y, &w)
                }, opts)?
            }
            "add_broadcast" => {
                store.insert("a", random_tensor(&mut rng, r, c, -1.0, 1.0))?;
                store.insert("b", Tensor::new(vec![c], random_tensor(&mut rng, 1, c, -1.0, 1.0).into_data())?)?;
                let w = random_tensor(&mut rng, r, c, -1.0, 1.0);
                check_gradients(&label, &store, |t, s| {
                    let a = t.param(s, s.require("a")?)?;
                    let b = t.param(s, s.require("b")?)?;
                    let y = t.add(a, b)?;
                    project(t, y, &w)
                }, opts)?
            }
            "scale" | "sigmoid" | "tanh" | "relu" | "softmax" | "sum" => {
                let x = if op == "relu" {
                    off_kink_tensor(&mut rng, r, c)
                } else {
                    random_tensor(&mut rng, r, c, -2.0, 2.0)
                };
                store.insert("x", x)?;
                let w = random_tensor(&mut rng, r, c, -1.0, 1.0);
                let factor = rng.random_range(-2.0..2.0);
                let op = op.to_string();
                check_gradients(&label, &store, |t, s| {
                    let x = t.param(s, s.require("x")?)?;
                    let y = match op.as_str() {
                        "scale" => t.scale(x, factor)?,
                        "sigmoid" => t.sigmoid(x)?,
                        "tanh" => t.tanh(x)?,
                        "relu" => t.relu(x)?,
                        "softmax" => t.softmax(x)?,
                        _ => {
                            let sq = t.mul(x, x)?;
                            return t.sum(sq);
                        }
                    };
                    project(t, y, &w)
                }, opts)?
            }
            "concat" => {
                store.insert("a", random_tensor(&mut rng, r, c, -1.0, 1.0))?;
                store.insert("b", random_tensor(&mut rng, r, k, -1.0, 1.0))?;
                let w = random_tensor(&mut rng, r, c + 2 * k, -1.0, 1.0);
                check_gradients(&label, &store, |t, s| {
                    let a = t.param(s, s.require("a")?)?;
                    let b = t.param(s, s.require("b")?)?;
                    let y = t.concat(&[a, b, b])?;
                    project(t, y, &w)
                }, opts)?
            }
            "slice_chunk" => {
                let chunks = rng.random_range(1..=4usize);
                let width = rng.random_range(1..=2usize);
                let index = rng.random_range(0..chunks);
                store.insert("x", random_tensor(&mut rng, r, chunks * width, -1.0, 1.0))?;
                let w = random_tensor(&mut rng, r, width, -1.0, 1.0);
                check_gradients(&label, &store, |t, s| {
                    let x = t.param(s, s.require("x")?)?;
                    let y = t.slice_chunk(x, index, chunks)?;
                    project(t, y, &w)
                }, opts)?
            }
            "cross_entropy" => {
                store.insert("x", random_tensor(&mut rng, r, c.max(2), -2.0, 2.0))?;
                let n = rng.random_range(1..=r);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..r)).collect();
                let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..c.max(2))).collect();
                check_gradients(&label, &store, |t, s| {
                    let x = t.param(s, s.require("x")?)?;
                    t.cross_entropy(x, &rows, &classes)
                }, opts)?
            }
            "mean_rows" => {
                store.insert("x", random_tensor(&mut rng, r, c, -1.0, 1.0))?;
                let out_rows = rng.random_range(1..=8usize);
                let lists: Vec<Vec<usize>> = (0..out_rows)
                    .map(|_| {
                        let len = rng.random_range(0..=r.min(4));
                        (0..len).map(|_| rng.random_range(0..r)).collect()
                    })
                    .collect();
                let w = random_tensor(&mut rng, out_rows, c, -1.0, 1.0);
                check_gradients(&label, &store, |t, s| {
                    let x = t.param(s, s.require("x")?)?;
                    let y = t.mean_rows(x, &lists)?;
                    project(t, y, &w)
                }, opts)?
            }
            "scale_rows" => {
                store.insert("x", random_tensor(&mut rng, r, c, -1.0, 1.0))?;
                let weights: Vec<f64> = (0..r).map(|_| rng.random_range(-3.0..3.0)).collect();
                let w = random_tensor(&mut rng, r, c, -1.0, 1.0);
                check_gradients(&label, &store, |t, s| {
                    let x = t.param(s, s.require("x")?)?;
                    let y = t.scale_rows(x, weights.clone())?;
                    project(t, y, &w)
                }, opts)?
            }
            other => return Err(AutodiffError::UnknownOp(other.to_string())),
        };
        reports.push(report);
    }
    Ok(reports)
}
