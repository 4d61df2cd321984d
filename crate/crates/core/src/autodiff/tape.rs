use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use super::AutodiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    StopGradient,
    Matmul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    SliceChunk { src: Var, index: usize, count: usize },
    Softmax(Var),
    CrossEntropy { logits: Var, rows: Vec<usize>, classes: Vec<usize> },
    MeanRows { src: Var, lists: Vec<Vec<usize>> },
    ScaleRows(Var, Vec<f64>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Dynamic reverse-mode tape. Rebuilt for every forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: gradients for every recorded node and
/// accumulated gradients for every parameter that appeared on the tape.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a recorded value, if any flowed.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.nodes.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Parameter gradient, or zeros shaped like the parameter when nothing
    /// reached it.
    pub fn param_or_zeros(&self, id: ParamId, store: &ParamStore) -> Tensor {
        self.param(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a value that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, AutodiffError> {
        self.push("constant", value, Op::Constant)
    }

    /// Records a leaf whose gradient is accumulated into the parameter slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var, AutodiffError> {
        self.push("param", store.get(id).clone(), Op::Param(id))
    }

    /// Forward identity, backward barrier.
    pub fn stop_gradient(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a).clone();
        self.push("stop_gradient", v, Op::StopGradient)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        let value = Tensor::matrix(m, n, out)?;
        self.push("matmul", value, Op::Matmul(a, b))
    }

    /// Elementwise sum of equal shapes, or broadcast of a single row
    /// (`[m]` or `[1, m]`) over the leading axis of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let mut v = ta.clone();
            v.add_assign(tb);
            return self.push("add", v, Op::Add(a, b));
        }
        if tb.numel() == ta.cols() && tb.cols() == ta.cols() {
            let mut v = ta.clone();
            let c = ta.cols();
            for r in 0..v.rows() {
                for (x, y) in v.row_mut(r).iter_mut().zip(tb.data()) {
                    *x += y;
                }
            }
            debug_assert_eq!(c, tb.numel());
            return self.push("add", v, Op::AddRow(a, b));
        }
        Err(mismatch("add", ta, tb))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("sub", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("sub", v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("mul", v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, AutodiffError> {
        let v = self.value(a).map(|x| x * factor);
        self.push("scale", v, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a).map(sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a).map(f64::tanh);
        self.push("tanh", v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push("relu", v, Op::Relu(a))
    }

    /// Concatenates matrices with equal row counts along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = match parts.first() {
            Some(&p) => self.value(p),
            None => return Err(AutodiffError::EmptyInput { op: "concat" }),
        };
        let rows = first.rows();
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat", first, t));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::matrix(rows, total, data)?;
        self.push("concat", v, Op::Concat(parts.to_vec()))
    }

    /// Column chunk `index` of `count` equal chunks.
    pub fn slice_chunk(&mut self, a: Var, index: usize, count: usize) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        if count == 0 || index >= count || !t.cols().is_multiple_of(count) {
            return Err(AutodiffError::BadChunk {
                cols: t.cols(),
                index,
                count,
            });
        }
        let width = t.cols() / count;
        let rows = t.rows();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[index * width..(index + 1) * width]);
        }
        let v = Tensor::matrix(rows, width, data)?;
        self.push("slice_chunk", v, Op::SliceChunk { src: a, index, count })
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        let mut v = Tensor::zeros(t.shape());
        for r in 0..t.rows() {
            softmax_row(t.row(r), v.row_mut(r));
        }
        self.push("softmax", v, Op::Softmax(a))
    }

    /// Mean over `rows` of `-log softmax(logits[row])[class]`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        rows: &[usize],
        classes: &[usize],
    ) -> Result<Var, AutodiffError> {
        let t = self.value(logits);
        if rows.len() != classes.len() || rows.is_empty() {
            return Err(AutodiffError::EmptyInput { op: "cross_entropy" });
        }
        let c = t.cols();
        let mut total = 0.0;
        for (&r, &k) in rows.iter().zip(classes) {
            if r >= t.rows() || k >= c {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: r.max(k),
                    len: t.rows().min(c),
                });
            }
            let row = t.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[k];
        }
        let v = Tensor::scalar(total / rows.len() as f64);
        self.push(
            "cross_entropy",
            v,
            Op::CrossEntropy {
                logits,
                rows: rows.to_vec(),
                classes: classes.to_vec(),
            },
        )
    }

    /// Output row `i` is the mean of `src` rows listed in `lists[i]`, or a
    /// zero row when the list is empty.
    pub fn mean_rows(&mut self, src: Var, lists: &[Vec<usize>]) -> Result<Var, AutodiffError> {
        let t = self.value(src);
        let c = t.cols();
        let mut v = Tensor::zeros(&[lists.len(), c]);
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let out = v.row_mut(i);
            for &j in list {
                if j >= t.rows() {
                    return Err(AutodiffError::IndexOutOfRange {
                        op: "mean_rows",
                        index: j,
                        len: t.rows(),
                    });
                }
                for (o, x) in out.iter_mut().zip(t.row(j)) {
                    *o += x;
                }
            }
            let inv = 1.0 / list.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        self.push(
            "mean_rows",
            v,
            Op::MeanRows {
                src,
                lists: lists.to_vec(),
            },
        )
    }

    /// Multiplies row `r` by the constant `weights[r]`.
    pub fn scale_rows(&mut self, a: Var, weights: Vec<f64>) -> Result<Var, AutodiffError> {
        let t = self.value(a);
        if weights.len() != t.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "scale_rows",
                left: t.shape().to_vec(),
                right: vec![weights.len()],
            });
        }
        let mut v = t.clone();
        for (r, w) in weights.iter().enumerate() {
            v.row_mut(r).iter_mut().for_each(|x| *x *= w);
        }
        self.push("scale_rows", v, Op::ScaleRows(a, weights))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(AutodiffError::NoForward);
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Option<Tensor>> = Vec::new();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::StopGradient => {}
                Op::Param(id) => {
                    let slot = id.index();
                    if param_grads.len() <= slot {
                        param_grads.resize_with(slot + 1, || None);
                    }
                    accumulate(&mut param_grads[slot], &g);
                }
                Op::Matmul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), true, &mut ga, 0.0);
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g.data(), false, &mut gb, 0.0);
                    accumulate(&mut grads[a.0], &Tensor::new(ta.shape().to_vec(), ga)?);
                    accumulate(&mut grads[b.0], &Tensor::new(tb.shape().to_vec(), gb)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::AddRow(a, b) => {
                    let tb = self.value(*b);
                    let mut gb = vec![0.0; tb.numel()];
                    for r in 0..g.rows() {
                        for (s, x) in gb.iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    accumulate(&mut grads[b.0], &Tensor::new(tb.shape().to_vec(), gb)?);
                    accumulate(&mut grads[a.0], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads[a.0], &zip_map(&g, tb, |x, y| x * y));
                    accumulate(&mut grads[b.0], &zip_map(&g, ta, |x, y| x * y));
                }
                Op::Scale(a, f) => {
                    accumulate(&mut grads[a.0], &g.map(|x| x * f));
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, &node.value, |d, y| d * y * (1.0 - y));
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, &node.value, |d, y| d * (1.0 - y * y));
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 });
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let tp = self.value(*p);
                        let w = tp.cols();
                        let mut gp = Tensor::zeros(tp.shape());
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        accumulate(&mut grads[p.0], &gp);
                        offset += w;
                    }
                }
                Op::SliceChunk { src, index, count } => {
                    let ts = self.value(*src);
                    let w = ts.cols() / count;
                    let mut gs = Tensor::zeros(ts.shape());
                    for r in 0..g.rows() {
                        gs.row_mut(r)[index * w..(index + 1) * w].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads[src.0], &gs);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.shape());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = p * (q - dot);
                        }
                    }
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::CrossEntropy {
                    logits,
                    rows,
                    classes,
                } => {
                    let t = self.value(*logits);
                    let scale = g.item() / rows.len() as f64;
                    let mut gl = Tensor::zeros(t.shape());
                    let mut probs = vec![0.0; t.cols()];
                    for (&r, &k) in rows.iter().zip(classes) {
                        softmax_row(t.row(r), &mut probs);
                        let out = gl.row_mut(r);
                        for (o, p) in out.iter_mut().zip(&probs) {
                            *o += scale * p;
                        }
                        out[k] -= scale;
                    }
                    accumulate(&mut grads[logits.0], &gl);
                }
                Op::MeanRows { src, lists } => {
                    let ts = self.value(*src);
                    let mut gs = Tensor::zeros(ts.shape());
                    for (i, list) in lists.iter().enumerate() {
                        if list.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / list.len() as f64;
                        for &j in list {
                            for (o, x) in gs.row_mut(j).iter_mut().zip(g.row(i)) {
                                *o += x * inv;
                            }
                        }
                    }
                    accumulate(&mut grads[src.0], &gs);
                }
                Op::ScaleRows(a, weights) => {
                    let mut ga = g.clone();
                    for (r, w) in weights.iter().enumerate() {
                        ga.row_mut(r).iter_mut().for_each(|x| *x *= w);
                    }
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    accumulate(&mut grads[a.0], &Tensor::filled(ta.shape(), g.item()));
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            nodes: grads,
            params: param_grads,
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) {
    match slot {
        Some(existing) => existing.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked at record time")
}
