use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{home_chains, BaselineError};
use crate::autodiff::{ParamCheckpoint, ParamStore, Tape, Tensor};
use crate::model::{Ctx, Mlp, DEFAULT_FEATURE_DIM};
use crate::predictions::{PredictionSet, ProbTable, LANE_CLASSES, TYPE_CLASSES};
use crate::road_graph::RoadChain;
use crate::training::{score_predictions, Adam, HistoryRow, PreparedNetwork, TrainConfig, TrainError};

pub const CLASSIFIER_FORMAT: &str = "roadtagger-classifier";
pub const CLASSIFIER_VERSION: u32 = 1;

/// Per-vertex classifier: the tagger's encoder and heads with no
/// propagation. `hops > 0` widens the input to the features of the `hops`
/// vertices on either side along the vertex's road chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub hops: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            embed_dim: 64,
            encoder_hidden: vec![64, 64],
            head_hidden: vec![128, 64],
            hops: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn input_width(&self) -> usize {
        self.feature_dim * (2 * self.hops + 1)
    }
}

/// Concatenates each vertex's features with those of the vertices up to
/// `hops` steps before and after it along its chain, nearest-first order
/// `[-hops .. +hops]`. Missing positions are zero; closed chains wrap.
pub fn window_features(features: &Tensor, chains: &[RoadChain], hops: usize) -> Tensor {
    if hops == 0 {
        return features.clone();
    }
    let (n, d) = (features.rows(), features.cols());
    let width = d * (2 * hops + 1);
    let home = home_chains(n, chains);
    let mut out = Tensor::zeros(&[n, width]);
    for v in 0..n {
        let row = out.row_mut(v);
        for (slot, off) in (-(hops as isize)..=hops as isize).enumerate() {
            let src = match home[v] {
                None => (off == 0).then_some(v),
                Some((ci, pos)) => {
                    let chain = &chains[ci];
                    let len = chain.len() as isize;
                    let p = pos as isize + off;
                    if chain.closed {
                        Some(chain.vertices[p.rem_euclid(len) as usize])
                    } else {
                        (0..len).contains(&p).then(|| chain.vertices[p as usize])
                    }
                }
            };
            if let Some(u) = src {
                row[slot * d..(slot + 1) * d].copy_from_slice(features.row(u));
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Classifier {
    config: ClassifierConfig,
    params: ParamStore,
    encoder: Mlp,
    lane_head: Mlp,
    type_head: Mlp,
}

impl Classifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self, BaselineError> {
        if config.feature_dim == 0 || config.embed_dim == 0 {
            return Err(BaselineError::Config("classifier widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut enc = vec![config.input_width()];
        enc.extend(&config.encoder_hidden);
        enc.push(config.embed_dim);
        let encoder = Mlp::register(&mut store, "encoder", &enc, &mut rng)?;
        let head = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, classes: usize| {
            let mut sizes = vec![config.embed_dim];
            sizes.extend(&config.head_hidden);
            sizes.push(classes);
            Mlp::register(store, name, &sizes, rng)
        };
        let lane_head = head(&mut store, &mut rng, "head.lanes", LANE_CLASSES)?;
        let type_head = head(&mut store, &mut rng, "head.type", TYPE_CLASSES)?;
        Ok(Self {
            config,
            params: store,
            encoder,
            lane_head,
            type_head,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Logits `(lanes, type)` for already-windowed inputs.
    fn logits(&self, ctx: &mut Ctx, x: crate::autodiff::Var) -> Result<(crate::autodiff::Var, crate::autodiff::Var), BaselineError> {
        let e = self.encoder.forward(ctx, x)?;
        Ok((self.lane_head.forward(ctx, e)?, self.type_head.forward(ctx, e)?))
    }

    /// Probabilities for every vertex. `chains` supplies the ordering used
    /// by the widened inputs and is ignored when `hops == 0`.
    pub fn forward(&self, features: &Tensor, chains: &[RoadChain]) -> Result<PredictionSet, BaselineError> {
        if features.cols() != self.config.feature_dim {
            return Err(BaselineError::Dimension {
                expected: self.config.feature_dim,
                got: features.cols(),
            });
        }
        let x = window_features(features, chains, self.config.hops);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &self.params);
        let xv = ctx.tape.constant(x)?;
        let (l, t) = self.logits(&mut ctx, xv)?;
        let lp = tape.softmax(l)?;
        let tp = tape.softmax(t)?;
        Ok(PredictionSet {
            lanes: ProbTable::from_tensor(tape.value(lp)),
            road_type: ProbTable::from_tensor(tape.value(tp)),
        })
    }

    pub fn predict_network(&self, net: &PreparedNetwork) -> Result<PredictionSet, BaselineError> {
        self.forward(&net.features, &net.chains)
    }

    pub fn to_checkpoint(&self) -> ClassifierCheckpoint {
        ClassifierCheckpoint {
            format: CLASSIFIER_FORMAT.to_string(),
            version: CLASSIFIER_VERSION,
            config: self.config.clone(),
            params: self.params.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ckpt: &ClassifierCheckpoint) -> Result<Self, BaselineError> {
        if ckpt.format != CLASSIFIER_FORMAT || ckpt.version != CLASSIFIER_VERSION {
            return Err(BaselineError::Checkpoint(format!(
                "unsupported classifier header {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut c = Self::new(ckpt.config.clone(), 0)?;
        c.params.load_values(&ParamStore::from_checkpoint(&ckpt.params)?)?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierCheckpoint {
    pub format: String,
    pub version: u32,
    pub config: ClassifierConfig,
    pub params: ParamCheckpoint,
}

#[derive(Clone, Debug)]
pub struct ClassifierOutcome {
    pub classifier: Classifier,
    pub history: Vec<HistoryRow>,
    pub best_iteration: Option<usize>,
    pub best_score: Option<f64>,
}

/// Plain cross-entropy training on batches of `loss_vertex_count` labeled
/// vertices drawn from all training networks. Shares the optimizer,
/// schedule and checkpoint selection of the tagger's loop; the subgraph,
/// dropout and smoothness settings do not apply.
pub fn train_classifier(
    train_set: &[PreparedNetwork],
    validation: &[PreparedNetwork],
    config: &ClassifierConfig,
    schedule: &TrainConfig,
) -> Result<ClassifierOutcome, BaselineError> {
    let mut model = Classifier::new(config.clone(), schedule.seed)?;
    let windows: Vec<Tensor> = train_set
        .iter()
        .map(|n| {
            if n.features.cols() != config.feature_dim {
                return Err(BaselineError::Dimension {
                    expected: config.feature_dim,
                    got: n.features.cols(),
                });
            }
            Ok(window_features(&n.features, &n.chains, config.hops))
        })
        .collect::<Result<_, _>>()?;
    // Every vertex with at least one label, as (network, vertex).
    let pool: Vec<(usize, usize)> = train_set
        .iter()
        .enumerate()
        .flat_map(|(i, n)| {
            (0..n.vertex_count())
                .filter(move |&v| n.lane_labels[v].is_some() || n.type_labels[v].is_some())
                .map(move |v| (i, v))
        })
        .collect();
    if pool.is_empty() {
        return Err(BaselineError::Train(TrainError::Data("no labeled training vertices".into())));
    }
    let mut adam = Adam::new(schedule.adam.clone(), &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x636c_6173);
    let batch = schedule.loss_vertex_count.min(pool.len());
    let width = config.input_width();
    let mut history = Vec::with_capacity(schedule.iterations);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for it in 0..schedule.iterations {
        let picks = sample(&mut rng, pool.len(), batch).into_vec();
        let mut data = Vec::with_capacity(batch * width);
        let mut lanes = Vec::new();
        let mut types = Vec::new();
        for (row, &p) in picks.iter().enumerate() {
            let (i, v) = pool[p];
            data.extend_from_slice(windows[i].row(v));
            if let Some(c) = train_set[i].lane_labels[v] {
                lanes.push((row, c));
            }
            if let Some(c) = train_set[i].type_labels[v] {
                types.push((row, c));
            }
        }
        let mut tape = Tape::new();
        let (total, ce_lane, ce_type) = {
            let mut ctx = Ctx::new(&mut tape, &model.params);
            let x = ctx.tape.constant(Tensor::matrix(batch, width, data)?)?;
            let (l, t) = model.logits(&mut ctx, x)?;
            let mut terms = Vec::new();
            let mut ce = [0.0; 2];
            for (k, (logits, labeled)) in [(l, &lanes), (t, &types)].into_iter().enumerate() {
                if labeled.is_empty() {
                    continue;
                }
                let (rows, classes): (Vec<usize>, Vec<usize>) = labeled.iter().copied().unzip();
                let term = ctx.tape.cross_entropy(logits, &rows, &classes)?;
                ce[k] = ctx.tape.value(term).item();
                terms.push(term);
            }
            let total = match terms[..] {
                [a] => a,
                [a, b] => ctx.tape.add(a, b)?,
                _ => unreachable!("every pooled vertex has a label"),
            };
            (total, ce[0], ce[1])
        };
        let loss = tape.value(total).item();
        if !loss.is_finite() {
            return Err(BaselineError::Train(TrainError::Diverged { iteration: it, loss }));
        }
        let grads = tape.backward(total)?;
        adam.step(&mut model.params, &grads, schedule.learning_rate_at(it));

        let last = it + 1 == schedule.iterations;
        let validation_score = if !validation.is_empty() && ((it + 1) % schedule.validation_interval == 0 || last) {
            let preds = validation
                .iter()
                .map(|n| model.predict_network(n))
                .collect::<Result<Vec<_>, _>>()?;
            let score = score_predictions(validation, &preds);
            if let Some(s) = score.mean_accuracy() {
                if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                    best = Some((s, it, model.params.clone()));
                }
            }
            Some(score)
        } else {
            None
        };
        history.push(HistoryRow {
            iteration: it,
            loss,
            ce_lane,
            ce_type,
            reg: 0.0,
            validation: validation_score,
        });
    }
    let (best_iteration, best_score) = match best {
        Some((s, it, params)) => {
            model.params = params;
            (Some(it), Some(s))
        }
        None => (None, None),
    };
    Ok(ClassifierOutcome {
        classifier: model,
        history,
        best_iteration,
        best_score,
    })
}
