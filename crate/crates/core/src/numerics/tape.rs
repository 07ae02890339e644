//! Reverse-mode automatic differentiation over a linear operation record.
//!
//! Every operation appends a node holding its forward value. `backward` walks
//! the nodes once in reverse, adding each node's adjoint contribution into its
//! inputs, so a value consumed by `k` operations receives the sum of `k`
//! contributions.

use std::collections::BTreeMap;

use super::ops::{self, matmul_nt_raw, matmul_raw, matmul_tn_raw};
use super::{NumericsError, ParamSet, RngStream, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    /// `a·bᵀ`
    MatmulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Broadcast a length-`cols` vector over every row.
    AddRow(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Relu(Var),
    Square(Var),
    Dropout(Var, Vec<f64>),
    Transpose(Var),
    SliceCols {
        src: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MeanRows {
        src: Var,
        mask: Option<Vec<bool>>,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Operation record for one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// Adjoints for every node reached from the loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), NumericsError> {
    if t.rank() == 2 {
        Ok((t.shape()[0], t.shape()[1]))
    } else {
        Err(NumericsError::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded operations, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Register a named parameter. Registering the same path twice returns the
    /// original handle so all uses share one adjoint.
    pub fn param(&mut self, path: &str, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(path) {
            return v;
        }
        let v = self.leaf(value.clone());
        self.params.insert(path.to_string(), v);
        v
    }

    pub fn param_var(&self, path: &str) -> Option<Var> {
        self.params.get(path).copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    /// `a·bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = rank2("matmul_nt", av)?;
        let (n, k2) = rank2("matmul_nt", bv)?;
        if k != k2 {
            return Err(shape_err("matmul_nt", av, bv));
        }
        let out = Tensor::from_parts(vec![m, n], matmul_nt_raw(av.data(), bv.data(), m, k, n));
        Ok(self.push(out, Op::MatmulNt(a, b)))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (av, rv) = (self.value(a), self.value(row));
        let c = av.cols();
        if rv.len() != c {
            return Err(shape_err("add_row", av, rv));
        }
        let mut data = av.data().to_vec();
        for chunk in data.chunks_mut(c) {
            for (x, y) in chunk.iter_mut().zip(rv.data()) {
                *x += y;
            }
        }
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = ops::relu(self.value(a));
        self.push(out, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// Inverted dropout. In evaluation mode (or at rate 0) this records nothing
    /// and returns `a` unchanged.
    pub fn dropout(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: Option<&mut RngStream>,
    ) -> Result<Var, NumericsError> {
        match ops::dropout_scales(self.value(a).len(), rate, training, rng)? {
            None => Ok(a),
            Some(scales) => {
                let av = self.value(a);
                let data = av.data().iter().zip(&scales).map(|(x, s)| x * s).collect();
                let out = Tensor::from_parts(av.shape().to_vec(), data);
                Ok(self.push(out, Op::Dropout(a, scales)))
            }
        }
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).transpose()?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let av = self.value(a);
        let (r, c) = rank2("slice_cols", av)?;
        if len == 0 || start + len > c {
            return Err(NumericsError::Shape {
                op: "slice_cols",
                lhs: av.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(r * len);
        for row in 0..r {
            data.extend_from_slice(&av.row_slice(row)[start..start + len]);
        }
        let out = Tensor::from_parts(vec![r, len], data);
        Ok(self.push(out, Op::SliceCols { src: a, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = self.value(*parts.first().ok_or(NumericsError::EmptyConcat)?);
        let (r, _) = rank2("concat_cols", first)?;
        let mut total = 0;
        for &p in parts {
            let pv = self.value(p);
            let (pr, pc) = rank2("concat_cols", pv)?;
            if pr != r {
                return Err(shape_err("concat_cols", first, pv));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for row in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(row));
            }
        }
        let out = Tensor::from_parts(vec![r, total], data);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = self.value(*parts.first().ok_or(NumericsError::EmptyConcat)?);
        let (_, c) = rank2("concat_rows", first)?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            let (pr, pc) = rank2("concat_rows", pv)?;
            if pc != c {
                return Err(shape_err("concat_rows", first, pv));
            }
            rows += pr;
            data.extend_from_slice(pv.data());
        }
        let out = Tensor::from_parts(vec![rows, c], data);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Row-wise masked softmax; see [`ops::softmax_masked`].
    pub fn softmax_masked(&mut self, a: Var, mask: &[bool]) -> Result<Var, NumericsError> {
        let out = ops::softmax_masked(self.value(a), mask)?;
        Ok(self.push(out, Op::Softmax(a)))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, NumericsError> {
        let parts = ops::layer_norm_parts(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            parts.output,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized: parts.normalized,
                inv_std: parts.inv_std,
            },
        ))
    }

    /// Mean over rows (optionally only rows flagged valid), giving `1×cols`.
    pub fn mean_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, NumericsError> {
        let av = self.value(a);
        let (r, c) = rank2("mean_rows", av)?;
        if let Some(m) = mask {
            if m.len() != r {
                return Err(NumericsError::Shape {
                    op: "mean_rows",
                    lhs: av.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
        }
        let valid = |row: usize| mask.is_none_or(|m| m[row]);
        let count = (0..r).filter(|&row| valid(row)).count();
        if count == 0 {
            return Err(NumericsError::DegenerateMask);
        }
        let mut out = vec![0.0; c];
        for row in (0..r).filter(|&row| valid(row)) {
            for (o, v) in out.iter_mut().zip(av.row_slice(row)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= count as f64;
        }
        let out = Tensor::from_parts(vec![1, c], out);
        Ok(self.push(
            out,
            Op::MeanRows {
                src: a,
                mask: mask.map(<[bool]>::to_vec),
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.data().iter().sum::<f64>() / av.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Differentiable mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var, NumericsError> {
        let t = self.leaf(target.clone());
        let diff = self.sub(pred, t)?;
        let sq = self.square(diff);
        Ok(self.mean(sq))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let seed = self.value(loss);
        if seed.len() != 1 {
            return Err(NumericsError::NonScalarSeed(seed.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(seed.shape()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients for every path in `params`; paths that never reached the tape
    /// (or were not on the loss path) get exact zeros.
    pub fn param_gradients(&self, grads: &Gradients, params: &ParamSet) -> ParamSet {
        params
            .iter()
            .map(|(path, value)| {
                let g = self
                    .param_var(path)
                    .and_then(|v| grads.get(v))
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(value.shape()));
                (path.to_string(), g)
            })
            .collect()
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        let like = |v: Var, data: Vec<f64>| Tensor::from_parts(self.value(v).shape().to_vec(), data);

        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                accumulate(grads, *a, like(*a, matmul_nt_raw(gd, bv.data(), m, n, k)));
                accumulate(grads, *b, like(*b, matmul_tn_raw(av.data(), gd, m, k, n)));
            }
            Op::MatmulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[0];
                accumulate(grads, *a, like(*a, matmul_raw(gd, bv.data(), m, n, k)));
                accumulate(grads, *b, like(*b, matmul_tn_raw(gd, av.data(), m, n, k)));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = gd.iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                let db = gd.iter().zip(av.data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *a, like(*a, da));
                accumulate(grads, *b, like(*b, db));
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let c = g.cols();
                let mut dr = vec![0.0; c];
                for chunk in gd.chunks(c) {
                    for (d, x) in dr.iter_mut().zip(chunk) {
                        *d += x;
                    }
                }
                accumulate(grads, *row, like(*row, dr));
            }
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Scale(a, s) => accumulate(grads, *a, g.map(|x| x * s)),
            Op::Relu(a) => {
                let av = self.value(*a);
                let d = gd
                    .iter()
                    .zip(av.data())
                    .map(|(x, &v)| if v > 0.0 { *x } else { 0.0 })
                    .collect();
                accumulate(grads, *a, like(*a, d));
            }
            Op::Square(a) => {
                let av = self.value(*a);
                let d = gd.iter().zip(av.data()).map(|(x, v)| 2.0 * v * x).collect();
                accumulate(grads, *a, like(*a, d));
            }
            Op::Dropout(a, scales) => {
                let d = gd.iter().zip(scales).map(|(x, s)| x * s).collect();
                accumulate(grads, *a, like(*a, d));
            }
            Op::Transpose(a) => {
                let t = g.transpose().expect("transpose output is rank 2");
                accumulate(grads, *a, t);
            }
            Op::SliceCols { src, start } => {
                let sv = self.value(*src);
                let (r, c) = (sv.shape()[0], sv.shape()[1]);
                let len = g.cols();
                let mut d = vec![0.0; r * c];
                for row in 0..r {
                    d[row * c + start..row * c + start + len].copy_from_slice(g.row_slice(row));
                }
                accumulate(grads, *src, like(*src, d));
            }
            Op::ConcatCols(parts) => {
                let r = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    let mut d = Vec::with_capacity(r * pc);
                    for row in 0..r {
                        d.extend_from_slice(&g.row_slice(row)[offset..offset + pc]);
                    }
                    accumulate(grads, p, like(p, d));
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    accumulate(grads, p, like(p, gd[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for ((dr, yr), gr) in d.chunks_mut(c).zip(y.data().chunks(c)).zip(gd.chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((dv, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *dv = yv * (gv - dot);
                    }
                }
                accumulate(grads, *a, like(*a, d));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let gam = self.value(*gamma).data();
                let c = g.cols();
                let n = c as f64;
                let mut dx = vec![0.0; g.len()];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (r, is) in inv_std.iter().enumerate() {
                    let gr = &gd[r * c..(r + 1) * c];
                    let xh = &normalized[r * c..(r + 1) * c];
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..c {
                        let dxh = gr[j] * gam[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                        dgamma[j] += gr[j] * xh[j];
                        dbeta[j] += gr[j];
                    }
                    for j in 0..c {
                        let dxh = gr[j] * gam[j];
                        dx[r * c + j] = is / n * (n * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
                accumulate(grads, *x, like(*x, dx));
                accumulate(grads, *gamma, like(*gamma, dgamma));
                accumulate(grads, *beta, like(*beta, dbeta));
            }
            Op::MeanRows { src, mask } => {
                let sv = self.value(*src);
                let (r, c) = (sv.shape()[0], sv.shape()[1]);
                let valid = |row: usize| mask.as_ref().is_none_or(|m| m[row]);
                let count = (0..r).filter(|&row| valid(row)).count() as f64;
                let mut d = vec![0.0; r * c];
                for row in (0..r).filter(|&row| valid(row)) {
                    for j in 0..c {
                        d[row * c + j] = gd[j] / count;
                    }
                }
                accumulate(grads, *src, like(*src, d));
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                accumulate(grads, *a, Tensor::full(av.shape(), gd[0]));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                accumulate(grads, *a, Tensor::full(av.shape(), gd[0] / av.len() as f64));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, contribution: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}
