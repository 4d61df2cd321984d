use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::AutodiffError;

pub const CHECKPOINT_FORMAT: &str = "roadtagger-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, AutodiffError> {
        if self.index.contains_key(name) {
            return Err(AutodiffError::DuplicateParam(name.to_string()));
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<ParamId, AutodiffError> {
        self.id(name)
            .ok_or_else(|| AutodiffError::MissingParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.ids()
            .zip(self.names.iter().zip(&self.values))
            .map(|(id, (n, v))| (id, n.as_str(), v))
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn to_checkpoint(&self) -> ParamCheckpoint {
        ParamCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: self
                .iter()
                .map(|(_, name, t)| ParamEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Copies values from `other`, which must hold exactly the same names
    /// and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), AutodiffError> {
        if other.len() != self.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        for (_, name, value) in other.iter() {
            let own = self.require(name)?;
            if self.get(own).shape() != value.shape() {
                return Err(AutodiffError::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    self.get(own).shape()
                )));
            }
            *self.get_mut(own) = value.clone();
        }
        Ok(())
    }

    pub fn from_checkpoint(ckpt: &ParamCheckpoint) -> Result<Self, AutodiffError> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "unsupported checkpoint header {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut store = ParamStore::new();
        for p in &ckpt.params {
            store.insert(&p.name, Tensor::new(p.shape.clone(), p.values.clone())?)?;
        }
        Ok(store)
    }
}

/// Serialized parameter map: versioned header, then name → shape + flat
/// row-major values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamCheckpoint {
    pub format: String,
    pub version: u32,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    GlorotUniform,
    Zeros,
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [.., i, o] => {
            let receptive: usize = shape[..shape.len() - 2].iter().product();
            (i * receptive, o * receptive)
        }
    };
    (6.0 / (fan_in + fan_out).max(1) as f64).sqrt()
}

pub fn init_params(shape: &[usize], scheme: Init, rng_seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    init_with_rng(shape, scheme, &mut rng)
}

pub fn init_with_rng(shape: &[usize], scheme: Init, rng: &mut impl Rng) -> Tensor {
    match scheme {
        Init::Zeros => Tensor::zeros(shape),
        Init::GlorotUniform => {
            let bound = glorot_bound(shape);
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
            Tensor::new(shape.to_vec(), data).expect("length matches shape")
        }
    }
}
