use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::{init_with_rng, AutodiffError, Init, ParamId, ParamStore, Tape, Var};

/// A tape plus the parameter store it reads from. Each parameter is
/// recorded on the tape at most once per forward pass.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    pub store: &'a ParamStore,
    bound: HashMap<ParamId, Var>,
}

impl<'a> Ctx<'a> {
    pub fn new(tape: &'a mut Tape, store: &'a ParamStore) -> Self {
        Self {
            tape,
            store,
            bound: HashMap::new(),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Result<Var, AutodiffError> {
        if let Some(&v) = self.bound.get(&id) {
            return Ok(v);
        }
        let v = self.tape.param(self.store, id)?;
        self.bound.insert(id, v);
        Ok(v)
    }
}

/// Fully-connected layer `x·W + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, AutodiffError> {
        let weight = store.insert(
            &format!("{name}.weight"),
            init_with_rng(&[inputs, outputs], Init::GlorotUniform, rng),
        )?;
        let bias = store.insert(&format!("{name}.bias"), init_with_rng(&[outputs], Init::Zeros, rng))?;
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var, AutodiffError> {
        let w = ctx.param(self.weight)?;
        let b = ctx.param(self.bias)?;
        let y = ctx.tape.matmul(x, w)?;
        ctx.tape.add(y, b)
    }
}

/// Stack of dense layers with relu between them; the last layer is linear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes` lists the input width followed by every layer's output width.
    pub fn register(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self, AutodiffError> {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::register(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var, AutodiffError> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(ctx, h)?;
            if i + 1 < self.layers.len() {
                h = ctx.tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn input_width(&self, store: &ParamStore) -> usize {
        store.get(self.layers[0].weight).shape()[0]
    }
}
