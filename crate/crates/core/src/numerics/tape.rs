//! Define-by-run reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation in execution order, so node inputs
//! always precede the node itself. [`Tape::backward`] walks the tape in
//! reverse and accumulates adjoints. Tapes are rebuilt for every batch.

use std::f64::consts::LN_2;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise scalar functions with known derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Unary {
    Identity,
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Abs,
    Square,
    /// `slope·x + (1 − slope)·softplus(x)`: smooth, strictly increasing.
    LeakySoft {
        slope: f64,
    },
    /// Log-derivative of [`Unary::LeakySoft`].
    LeakySoftLogDeriv {
        slope: f64,
    },
    Softplus,
    LogCosh,
    /// Standard Laplace log-density.
    LaplaceLogPdf,
    /// Standard logistic log-density.
    LogisticLogPdf,
    /// Unit-variance symmetric mixture of two Gaussians, log-density.
    GaussMix2LogPdf,
}

/// Mixture mean and component standard deviation for [`Unary::GaussMix2LogPdf`].
pub(crate) const MIX_MU: f64 = 0.9;
pub(crate) const MIX_SD: f64 = 0.435_889_894_354_067_4; // sqrt(1 - 0.81)

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Identity => x,
            Unary::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
            Unary::LeakySoft { slope } => slope * x + (1.0 - slope) * softplus(x),
            Unary::LeakySoftLogDeriv { slope } => (slope + (1.0 - slope) * sigmoid(x)).ln(),
            Unary::Softplus => softplus(x),
            Unary::LogCosh => log_cosh(x),
            Unary::LaplaceLogPdf => -x.abs() - LN_2,
            Unary::LogisticLogPdf => -2.0 * log_cosh(0.5 * x) - 2.0 * LN_2,
            Unary::GaussMix2LogPdf => {
                let s2 = MIX_SD * MIX_SD;
                -(MIX_SD * (2.0 * std::f64::consts::PI).sqrt()).ln() - (x * x + MIX_MU * MIX_MU) / (2.0 * s2)
                    + log_cosh(MIX_MU * x / s2)
            }
        }
    }

    /// Derivative at `x`, given `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Identity => 1.0,
            Unary::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Tanh => 1.0 - y * y,
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Square => 2.0 * x,
            Unary::LeakySoft { slope } => slope + (1.0 - slope) * sigmoid(x),
            Unary::LeakySoftLogDeriv { slope } => {
                let s = sigmoid(x);
                (1.0 - slope) * s * (1.0 - s) / (slope + (1.0 - slope) * s)
            }
            Unary::Softplus => sigmoid(x),
            Unary::LogCosh => x.tanh(),
            Unary::LaplaceLogPdf => -Unary::Abs.derivative(x, y),
            Unary::LogisticLogPdf => -(0.5 * x).tanh(),
            Unary::GaussMix2LogPdf => {
                let s2 = MIX_SD * MIX_SD;
                -x / s2 + (MIX_MU / s2) * (MIX_MU * x / s2).tanh()
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Map(Var, Unary),
    ColSlice(Var, usize),
    RowSlice(Var, usize),
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxXent(Var, Rc<[usize]>),
    BceLogits(Var, Rc<[f64]>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
    is_param: bool,
}

/// Adjoints computed by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adj.get(v.0).and_then(Option::as_ref)
    }

    /// Takes ownership of an adjoint.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.adj.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
            is_param: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    /// A trainable leaf; always receives an adjoint.
    pub fn param(&mut self, t: Tensor) -> Var {
        let v = self.push(Op::Leaf, t, true);
        self.nodes[v.0].is_param = true;
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let g = self.grad(a) || self.grad(b);
        Ok(self.push(Op::MatMul(a, b), value, g))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        let g = self.grad(a) || self.grad(bias);
        Ok(self.push(Op::AddRow(a, bias), value, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let g = self.grad(a) || self.grad(b);
        Ok(self.push(Op::Add(a, b), value, g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let g = self.grad(a) || self.grad(b);
        Ok(self.push(Op::Sub(a, b), value, g))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let g = self.grad(a) || self.grad(b);
        Ok(self.push(Op::Mul(a, b), value, g))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let g = self.grad(a);
        self.push(Op::Scale(a, c), value, g)
    }

    pub fn map(&mut self, a: Var, f: Unary) -> Var {
        let value = self.value(a).map(|x| f.apply(x));
        let g = self.grad(a);
        self.push(Op::Map(a, f), value, g)
    }

    /// Columns `start..end` of `a`.
    pub fn col_slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let src = self.value(a);
        if start >= end || end > src.cols() {
            return Err(Error::dim(
                "col_slice",
                format!("range within 0..{}", src.cols()),
                format!("{start}..{end}"),
            ));
        }
        let idx: Vec<usize> = (start..end).collect();
        let value = src.select_cols(&idx);
        let g = self.grad(a);
        Ok(self.push(Op::ColSlice(a, start), value, g))
    }

    /// Rows `start..end` of `a`.
    pub fn row_slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let src = self.value(a);
        if start >= end || end > src.rows() {
            return Err(Error::dim(
                "row_slice",
                format!("range within 0..{}", src.rows()),
                format!("{start}..{end}"),
            ));
        }
        let value = src.slice_rows(start, end);
        let g = self.grad(a);
        Ok(self.push(Op::RowSlice(a, start), value, g))
    }

    pub fn vcat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::vcat(&tensors)?;
        let g = parts.iter().any(|&p| self.grad(p));
        Ok(self.push(Op::VCat(parts.to_vec()), value, g))
    }

    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::hcat(&tensors)?;
        let g = parts.iter().any(|&p| self.grad(p));
        Ok(self.push(Op::HCat(parts.to_vec()), value, g))
    }

    /// Row sums as a `rows × 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let value = Tensor::from_fn(src.rows(), 1, |i, _| src.row(i).iter().sum());
        let g = self.grad(a);
        self.push(Op::SumRows(a), value, g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let g = self.grad(a);
        self.push(Op::Sum(a), value, g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let value = Tensor::scalar(src.sum() / src.data().len() as f64);
        let g = self.grad(a);
        self.push(Op::Mean(a), value, g)
    }

    /// Mean multinomial cross-entropy of `logits` (`batch × classes`).
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        if z.rows() != labels.len() {
            return Err(Error::dim("softmax_cross_entropy labels", z.rows(), labels.len()));
        }
        let k = z.cols();
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::dim("softmax_cross_entropy label", format!("< {k}"), y));
            }
            let row = z.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let value = Tensor::scalar(total / labels.len() as f64);
        let g = self.grad(logits);
        Ok(self.push(Op::SoftmaxXent(logits, labels.into()), value, g))
    }

    /// Mean binary cross-entropy of a `batch × 1` logit column against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let z = self.value(logits);
        if z.cols() != 1 || z.rows() != targets.len() {
            return Err(Error::dim(
                "bce_with_logits",
                format!("{}x1", targets.len()),
                format!("{}x{}", z.rows(), z.cols()),
            ));
        }
        let total: f64 = z.data().iter().zip(targets).map(|(&l, &y)| softplus(l) - y * l).sum();
        let value = Tensor::scalar(total / targets.len() as f64);
        let g = self.grad(logits);
        Ok(self.push(Op::BceLogits(logits, targets.into()), value, g))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let n = self.nodes.len();
        if loss.0 >= n {
            return Err(Error::Contract(format!("loss node {} not on tape", loss.0)));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            let (r, c) = self.nodes[loss.0].value.shape();
            return Err(Error::Contract(format!("backward requires a scalar loss, got {r}x{c}")));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; n];
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.grad(*a) {
                        let da = g.matmul_nt(self.value(*b))?;
                        accumulate(&mut adj, *a, da);
                    }
                    if self.grad(*b) {
                        let db = self.value(*a).matmul_tn(&g)?;
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.grad(*bias) {
                        let db = Tensor::from_fn(1, g.cols(), |_, j| (0..g.rows()).map(|i| g.get(i, j)).sum());
                        accumulate(&mut adj, *bias, db);
                    }
                    if self.grad(*a) {
                        accumulate(&mut adj, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.grad(*a) {
                        accumulate(&mut adj, *a, g.clone());
                    }
                    if self.grad(*b) {
                        accumulate(&mut adj, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.grad(*b) {
                        accumulate(&mut adj, *b, g.scale(-1.0));
                    }
                    if self.grad(*a) {
                        accumulate(&mut adj, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.grad(*a) {
                        accumulate(&mut adj, *a, g.zip_map(self.value(*b), |x, y| x * y)?);
                    }
                    if self.grad(*b) {
                        accumulate(&mut adj, *b, g.zip_map(self.value(*a), |x, y| x * y)?);
                    }
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.scale(*c)),
                Op::Map(a, f) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut d = g;
                    for ((gv, &xv), &yv) in d.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                        *gv *= f.derivative(xv, yv);
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::RowSlice(a, start) => {
                    let src = self.value(*a);
                    let mut d = Tensor::zeros(src.rows(), src.cols());
                    let w = src.cols();
                    d.data_mut()[start * w..(start + g.rows()) * w].copy_from_slice(g.data());
                    accumulate(&mut adj, *a, d);
                }
                Op::VCat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        if self.grad(p) {
                            accumulate(&mut adj, p, g.slice_rows(offset, offset + h));
                        }
                        offset += h;
                    }
                }
                Op::ColSlice(a, start) => {
                    let src = self.value(*a);
                    let mut d = Tensor::zeros(src.rows(), src.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            d.set(i, start + j, g.get(i, j));
                        }
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::HCat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.grad(p) {
                            let d = Tensor::from_fn(g.rows(), w, |i, j| g.get(i, offset + j));
                            accumulate(&mut adj, p, d);
                        }
                        offset += w;
                    }
                }
                Op::SumRows(a) => {
                    let src = self.value(*a);
                    let d = Tensor::from_fn(src.rows(), src.cols(), |i, _| g.get(i, 0));
                    accumulate(&mut adj, *a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Tensor::filled(r, c, g.get(0, 0)));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Tensor::filled(r, c, g.get(0, 0) / (r * c) as f64));
                }
                Op::SoftmaxXent(logits, labels) => {
                    let z = self.value(*logits);
                    let scale = g.get(0, 0) / labels.len() as f64;
                    let mut d = Tensor::zeros(z.rows(), z.cols());
                    for (i, &y) in labels.iter().enumerate() {
                        let row = z.row(i);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - m).exp()).sum();
                        let out = d.row_mut(i);
                        for (o, &v) in out.iter_mut().zip(row) {
                            *o = scale * (v - m).exp() / denom;
                        }
                        out[y] -= scale;
                    }
                    accumulate(&mut adj, *logits, d);
                }
                Op::BceLogits(logits, targets) => {
                    let z = self.value(*logits);
                    let scale = g.get(0, 0) / targets.len() as f64;
                    let data = z
                        .data()
                        .iter()
                        .zip(targets.iter())
                        .map(|(&l, &y)| scale * (sigmoid(l) - y))
                        .collect();
                    accumulate(&mut adj, *logits, Tensor::from_vec(z.rows(), 1, data)?);
                }
            }
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if node.is_param && adj[idx].is_none() {
                let (r, c) = node.value.shape();
                adj[idx] = Some(Tensor::zeros(r, c));
            } else if !matches!(node.op, Op::Leaf) {
                adj[idx] = None;
            }
        }
        Ok(Gradients { adj })
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, d: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(d.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn unary_derivatives_match_finite_differences() {
        let fns = [
            Unary::Tanh,
            Unary::Square,
            Unary::LeakySoft { slope: 0.2 },
            Unary::LeakySoftLogDeriv { slope: 0.2 },
            Unary::Softplus,
            Unary::LogCosh,
            Unary::LogisticLogPdf,
            Unary::GaussMix2LogPdf,
        ];
        for f in fns {
            for &x in &[-3.1, -0.7, 0.05, 0.9, 2.4] {
                let analytic = f.derivative(x, f.apply(x));
                let numeric = fd(|v| f.apply(v), x);
                assert!(
                    (analytic - numeric).abs() < 1e-6,
                    "{f:?} at {x}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for f in [Unary::LaplaceLogPdf, Unary::LogisticLogPdf, Unary::GaussMix2LogPdf] {
            let h = 1e-3;
            let mass: f64 = (-40_000..40_000).map(|k| f.apply(k as f64 * h).exp() * h).sum();
            assert!((mass - 1.0).abs() < 1e-6, "{f:?} mass {mass}");
        }
        let h = 1e-3;
        let var: f64 = (-20_000..20_000)
            .map(|k| {
                let x = k as f64 * h;
                x * x * Unary::GaussMix2LogPdf.apply(x).exp() * h
            })
            .sum();
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_map_gradient_is_outer_product_structure() {
        // loss = sum(x · W) with x fixed: dL/dW[p][q] = sum_i x[i][p]
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap());
        let w = tape.param(Tensor::from_rows(&[vec![0.3, -1.0, 2.0], vec![0.1, 0.0, 4.0]]).unwrap());
        let y = tape.matmul(x, w).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        let gw = grads.get(w).unwrap();
        for q in 0..3 {
            assert_eq!(gw.get(0, q), -2.0);
            assert_eq!(gw.get(1, q), 2.5);
        }
    }

    #[test]
    fn tanh_gradient_at_zero_is_input() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(&[0.7, -1.3, 2.0]).unwrap());
        let w = tape.param(Tensor::from_vec(1, 3, vec![0.0; 3]).unwrap());
        let wx = tape.matmul(w, x).unwrap();
        let loss = tape.map(wx, Unary::Tanh);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[0.7, -1.3, 2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_params_get_zero_adjoint() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::filled(1, 1, 2.0));
        let b = tape.param(Tensor::zeros(3, 2));
        let loss = tape.map(a, Unary::Square);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[4.0]);
        assert_eq!(grads.get(b).unwrap().shape(), (3, 2));
        assert_eq!(grads.get(b).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn loss_heads_match_finite_differences() {
        let logits = Tensor::from_rows(&[vec![0.2, -1.0, 0.5], vec![2.0, 0.1, -0.3]]).unwrap();
        let labels = [2usize, 0];
        let eval = |t: &Tensor| {
            let mut tape = Tape::new();
            let v = tape.param(t.clone());
            let l = tape.softmax_cross_entropy(v, &labels).unwrap();
            tape.value(l).get(0, 0)
        };
        let mut tape = Tape::new();
        let v = tape.param(logits.clone());
        let l = tape.softmax_cross_entropy(v, &labels).unwrap();
        let g = tape.backward(l).unwrap();
        for k in 0..6 {
            let mut p = logits.clone();
            p.data_mut()[k] += 1e-6;
            let mut m = logits.clone();
            m.data_mut()[k] -= 1e-6;
            let num = (eval(&p) - eval(&m)) / 2e-6;
            assert!((num - g.get(v).unwrap().data()[k]).abs() < 1e-8);
        }

        let z = Tensor::column(&[0.3, -2.0, 1.5]).unwrap();
        let y = [1.0, 0.0, 0.0];
        let mut tape = Tape::new();
        let v = tape.param(z.clone());
        let l = tape.bce_with_logits(v, &y).unwrap();
        let g = tape.backward(l).unwrap();
        for k in 0..3 {
            let want = (sigmoid(z.data()[k]) - y[k]) / 3.0;
            assert!((g.get(v).unwrap().data()[k] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn slices_and_concatenations_route_gradients() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_fn(4, 3, |i, j| (i * 3 + j) as f64));
        let top = tape.row_slice(a, 0, 2).unwrap();
        let bottom = tape.row_slice(a, 1, 4).unwrap();
        let stacked = tape.vcat(&[top, bottom, top]).unwrap();
        assert_eq!(tape.value(stacked).shape(), (7, 3));
        let mid = tape.col_slice(stacked, 1, 2).unwrap();
        let wide = tape.hcat(&[mid, mid]).unwrap();
        let loss = tape.sum(wide);
        let grads = tape.backward(loss).unwrap();
        // column 1 of row r is used twice per appearance of r in the stack
        let g = grads.get(a).unwrap();
        assert_eq!(g.col(1), vec![4.0, 6.0, 2.0, 2.0]);
        assert_eq!(g.col(0), vec![0.0; 4]);
        assert!(tape.row_slice(a, 3, 5).is_err());
    }
}
