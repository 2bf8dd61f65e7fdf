//! Reverse-mode differentiation over batched 2-D tensors.
//!
//! A [`Tape`] records every operation of a forward computation as a node.
//! [`Tape::backward`] replays the nodes in reverse, accumulating adjoints for
//! every node that depends on a parameter leaf. Values are always viewed as
//! `[rows, cols]` matrices; bias vectors may be 1-D.

use std::collections::BTreeMap;

use super::tensor::{gemm, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Denominator floor for L1 normalization.
pub const L1_GUARD: f64 = 1e-8;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[r, c]` times a per-row `[r, 1]` factor.
    RowScale(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    MaxConst(Var, f64),
    ConcatCols(Var, Var),
    /// Saved per-row denominators; `None` marks a row that fell back to uniform.
    L1NormalizeRows(Var, Vec<Option<f64>>),
    L2NormRows(Var),
    SumCols(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Parameter leaves bound on a tape, by name.
#[derive(Debug, Default, Clone)]
pub struct Bindings {
    vars: BTreeMap<String, Var>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::config(format!("unbound parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn map_grad(g: &Tensor, f: impl Fn(usize, f64) -> f64) -> Tensor {
    let vals = g.values().iter().enumerate().map(|(i, d)| f(i, *d)).collect();
    let (r, c) = shape2(g);
    Tensor::matrix(r, c, vals).expect("adjoint size")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let t = self.value(v);
        if t.len() != 1 {
            return Err(Error::contract(format!(
                "expected scalar, got shape {:?}",
                t.shape()
            )));
        }
        Ok(t.values()[0])
    }

    /// A differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A constant leaf; gradients never flow into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Bind every tensor in `params` as a differentiable leaf.
    pub fn bind_params(&mut self, params: &ParamSet) -> Bindings {
        self.bind(params, true)
    }

    /// Bind every tensor in `params` as a constant.
    pub fn bind_constants(&mut self, params: &ParamSet) -> Bindings {
        self.bind(params, false)
    }

    fn bind(&mut self, params: &ParamSet, trainable: bool) -> Bindings {
        let vars = params
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    self.param(t.clone())
                } else {
                    self.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bindings { vars }
    }

    /// Copy of `v`'s value as a constant: the gradient path stops here.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = shape2(self.value(a));
        let (k2, n) = shape2(self.value(b));
        if k != k2 {
            return Err(Error::config(format!(
                "matmul shape mismatch: [{m},{k}] x [{k2},{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).values(),
            false,
            self.value(b).values(),
            false,
            &mut out,
            false,
        );
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), ng))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = shape2(self.value(x));
        if self.value(b).len() != c {
            return Err(Error::config(format!(
                "bias length {} does not match width {c}",
                self.value(b).len()
            )));
        }
        let mut out = self.value(x).values().to_vec();
        let bias = self.value(b).values();
        for i in 0..r {
            for (o, bb) in out[i * c..(i + 1) * c].iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::AddBias(x, b), ng))
    }

    /// `x·w + b` with `w: [in, out]` and `b: [out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if shape2(ta) != shape2(tb) {
            return Err(Error::config(format!(
                "elementwise shape mismatch: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (r, c) = shape2(ta);
        let out = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(r, c, out)?, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Multiply each row of `x: [r, c]` by the matching entry of `s: [r, 1]`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let (r, c) = shape2(self.value(x));
        if shape2(self.value(s)) != (r, 1) {
            return Err(Error::config(format!(
                "row_scale expects [{r},1] factors, got {:?}",
                self.value(s).shape()
            )));
        }
        let xs = self.value(x).values();
        let ss = self.value(s).values();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            out.extend(xs[i * c..(i + 1) * c].iter().map(|v| v * ss[i]));
        }
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::RowScale(x, s), ng))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let (r, c) = shape2(t);
        let out: Vec<f64> = t.values().iter().map(|v| f(*v)).collect();
        let ng = self.ng(x);
        self.push(Tensor::matrix(r, c, out).expect("unary keeps size"), op, ng)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, |v| v * k, Op::Scale(x, k))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, |v| v + k, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// Elementwise `max(x, c)`; the gradient is zero where `x ≤ c`.
    pub fn max_const(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| if v > c { v } else { c }, Op::MaxConst(x, c))
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = shape2(self.value(a));
        let (rb, cb) = shape2(self.value(b));
        if ra != rb {
            return Err(Error::config(format!(
                "concat row mismatch: {ra} vs {rb}"
            )));
        }
        let (va, vb) = (self.value(a).values(), self.value(b).values());
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&va[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&vb[i * cb..(i + 1) * cb]);
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(ra, ca + cb, out)?, Op::ConcatCols(a, b), ng))
    }

    /// Divide each row by `max(‖row‖₁, 1e-8)`. A row that is exactly zero maps
    /// to the uniform vector `1/c` so the result always has unit L1 norm.
    pub fn l1_normalize_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = shape2(t);
        let mut out = Vec::with_capacity(r * c);
        let mut denoms = Vec::with_capacity(r);
        for i in 0..r {
            let row = t.row(i);
            let s: f64 = row.iter().map(|v| v.abs()).sum();
            if s == 0.0 {
                out.extend(std::iter::repeat(1.0 / c as f64).take(c));
                denoms.push(None);
            } else {
                let d = s.max(L1_GUARD);
                out.extend(row.iter().map(|v| v / d));
                denoms.push(Some(d));
            }
        }
        let ng = self.ng(x);
        self.push(
            Tensor::matrix(r, c, out).expect("size preserved"),
            Op::L1NormalizeRows(x, denoms),
            ng,
        )
    }

    /// Per-row Euclidean norm, `[r, c] → [r, 1]`.
    pub fn l2_norm_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let r = t.rows();
        let out: Vec<f64> = (0..r)
            .map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let ng = self.ng(x);
        self.push(
            Tensor::matrix(r, 1, out).expect("column"),
            Op::L2NormRows(x),
            ng,
        )
    }

    /// Per-row sum, `[r, c] → [r, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let r = t.rows();
        let out: Vec<f64> = (0..r).map(|i| t.row(i).iter().sum()).collect();
        let ng = self.ng(x);
        self.push(Tensor::matrix(r, 1, out).expect("column"), Op::SumCols(x), ng)
    }

    /// Mean over all elements, `→ [1, 1]`.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.values().iter().sum::<f64>() / t.len() as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    /// Mean over all elements of `(a − b)²`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }

    /// Adjoints of every node with respect to the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.values_mut().iter_mut().zip(delta.values()) {
                    *a += b;
                }
            }
            slot @ None => {
                // Keep the leaf's own shape (bias vectors may be 1-D).
                let shape = self.value(v).shape().to_vec();
                *slot = Some(Tensor::new(shape, delta.into_values()).expect("adjoint size"));
            }
        }
    }

    fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        if !self.ng(v) {
            return;
        }
        let t = self.value(v);
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(t.shape()));
        f(slot.values_mut());
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = shape2(self.value(*a));
                let n = self.value(*b).cols();
                let bv = self.value(*b).values();
                let av = self.value(*a).values();
                self.accumulate_with(grads, *a, |da| {
                    gemm(m, n, k, g.values(), false, bv, true, da, true);
                });
                self.accumulate_with(grads, *b, |db| {
                    gemm(k, m, n, av, true, g.values(), false, db, true);
                });
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                let (r, c) = shape2(g);
                self.accumulate_with(grads, *b, |db| {
                    for i in 0..r {
                        for (d, v) in db.iter_mut().zip(&g.values()[i * c..(i + 1) * c]) {
                            *d += v;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let neg = map_grad(g, |_, d| -d);
                self.accumulate(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                let ga = map_grad(g, |i, d| d * bv[i]);
                let gb = map_grad(g, |i, d| d * av[i]);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::RowScale(x, s) => {
                let (r, c) = shape2(g);
                let xv = self.value(*x).values();
                let sv = self.value(*s).values();
                let gx = map_grad(g, |i, d| d * sv[i / c]);
                self.accumulate(grads, *x, gx);
                let gs: Vec<f64> = (0..r)
                    .map(|i| {
                        g.values()[i * c..(i + 1) * c]
                            .iter()
                            .zip(&xv[i * c..(i + 1) * c])
                            .map(|(d, v)| d * v)
                            .sum()
                    })
                    .collect();
                self.accumulate(grads, *s, Tensor::matrix(r, 1, gs).expect("column"));
            }
            Op::Scale(x, k) => {
                let gx = map_grad(g, |_, d| d * k);
                self.accumulate(grads, *x, gx);
            }
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::Relu(x) => {
                let xv = self.value(*x).values();
                let gx = map_grad(g, |i, d| if xv[i] > 0.0 { d } else { 0.0 });
                self.accumulate(grads, *x, gx);
            }
            Op::Tanh(x) => {
                let yv = out.values();
                let gx = map_grad(g, |i, d| d * (1.0 - yv[i] * yv[i]));
                self.accumulate(grads, *x, gx);
            }
            Op::Exp(x) => {
                let yv = out.values();
                let gx = map_grad(g, |i, d| d * yv[i]);
                self.accumulate(grads, *x, gx);
            }
            Op::Square(x) => {
                let xv = self.value(*x).values();
                let gx = map_grad(g, |i, d| 2.0 * xv[i] * d);
                self.accumulate(grads, *x, gx);
            }
            Op::MaxConst(x, c) => {
                let xv = self.value(*x).values();
                let gx = map_grad(g, |i, d| if xv[i] > *c { d } else { 0.0 });
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatCols(a, b) => {
                let (r, c) = shape2(g);
                let ca = self.value(*a).cols();
                let cb = c - ca;
                let mut ga = Vec::with_capacity(r * ca);
                let mut gb = Vec::with_capacity(r * cb);
                for i in 0..r {
                    let row = &g.values()[i * c..(i + 1) * c];
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                self.accumulate(grads, *a, Tensor::matrix(r, ca, ga).expect("split"));
                self.accumulate(grads, *b, Tensor::matrix(r, cb, gb).expect("split"));
            }
            Op::L1NormalizeRows(x, denoms) => {
                let (r, c) = shape2(g);
                let xv = self.value(*x).values();
                let yv = out.values();
                let gv = g.values();
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    let Some(d) = denoms[i] else {
                        continue;
                    };
                    let span = i * c..(i + 1) * c;
                    if d > L1_GUARD {
                        let dot: f64 = gv[span.clone()]
                            .iter()
                            .zip(&yv[span.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        for j in span {
                            let sign = if xv[j] > 0.0 {
                                1.0
                            } else if xv[j] < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            gx[j] = (gv[j] - sign * dot) / d;
                        }
                    } else {
                        for j in span {
                            gx[j] = gv[j] / d;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::matrix(r, c, gx).expect("size"));
            }
            Op::L2NormRows(x) => {
                let t = self.value(*x);
                let (r, c) = shape2(t);
                let nv = out.values();
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    if nv[i] > 0.0 {
                        let k = g.values()[i] / nv[i];
                        for (o, v) in gx[i * c..(i + 1) * c].iter_mut().zip(t.row(i)) {
                            *o = k * v;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::matrix(r, c, gx).expect("size"));
            }
            Op::SumCols(x) => {
                let (r, c) = shape2(self.value(*x));
                let mut gx = Vec::with_capacity(r * c);
                for i in 0..r {
                    gx.extend(std::iter::repeat(g.values()[i]).take(c));
                }
                self.accumulate(grads, *x, Tensor::matrix(r, c, gx).expect("size"));
            }
            Op::Mean(x) => {
                let t = self.value(*x);
                let (r, c) = shape2(t);
                let k = g.values()[0] / t.len() as f64;
                self.accumulate(grads, *x, Tensor::matrix(r, c, vec![k; r * c]).expect("size"));
            }
        }
    }
}

/// Evaluate a scalar computation and its gradient with respect to `params`.
///
/// The closure receives the tape and the bindings of every entry of `params`
/// (all differentiable); it returns the loss node. The returned gradient set
/// has exactly the names and shapes of `params`; parameters that do not
/// influence the loss get zero gradients.
pub fn eval_with_grads<F>(params: &ParamSet, f: F) -> Result<(f64, ParamSet)>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bindings = tape.bind_params(params);
    let loss = f(&mut tape, &bindings)?;
    let value = tape.scalar(loss)?;
    let adj = tape.backward(loss)?;
    let mut grads = params.zeros_like();
    for (name, var) in bindings.iter() {
        if let Some(g) = &adj[var.0] {
            let dst = grads.get_mut(name).expect("same names");
            dst.values_mut().copy_from_slice(g.values());
        }
    }
    Ok((value, grads))
}

/// Evaluate a scalar computation without differentiating it.
pub fn eval_value<F>(params: &ParamSet, f: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bindings = tape.bind_constants(params);
    let loss = f(&mut tape, &bindings)?;
    tape.scalar(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::scalar(v));
        p
    }

    #[test]
    fn square_value_and_grad() {
        let p = single("x", 3.0);
        let (v, g) = eval_with_grads(&p, |t, b| {
            let x = b.get("x")?;
            Ok(t.square(x))
        })
        .unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g.get("x").unwrap().values(), &[6.0]);
    }

    #[test]
    fn inactive_relu_has_zero_grad() {
        let p = single("x", -1.0);
        let (_, g) = eval_with_grads(&p, |t, b| Ok(t.relu(b.get("x")?))).unwrap();
        assert_eq!(g.get("x").unwrap().values(), &[0.0]);
    }

    #[test]
    fn max_const_routes_gradient() {
        let p = single("x", 2.0);
        let (v, g) = eval_with_grads(&p, |t, b| Ok(t.max_const(b.get("x")?, 1.0))).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(g.get("x").unwrap().values(), &[1.0]);
        let p = single("x", 0.5);
        let (v, g) = eval_with_grads(&p, |t, b| Ok(t.max_const(b.get("x")?, 1.0))).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(g.get("x").unwrap().values(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::row_vector(&[1.0, 2.0]));
        let r = eval_with_grads(&p, |_, b| b.get("x"));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn stop_gradient_blocks_path() {
        let p = single("x", 2.0);
        let (v, g) = eval_with_grads(&p, |t, b| {
            let x = b.get("x")?;
            let c = t.stop_gradient(x);
            t.mul(x, c)
        })
        .unwrap();
        assert_eq!(v, 4.0);
        // d/dx (x · const) = const
        assert_eq!(g.get("x").unwrap().values(), &[2.0]);
    }

    #[test]
    fn zero_row_normalizes_to_uniform() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::matrix(2, 4, vec![0.0, 0.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.0]).unwrap());
        let y = tape.l1_normalize_rows(x);
        assert_eq!(tape.value(y).row(0), &[0.25; 4]);
        assert_eq!(tape.value(y).row(1), &[0.25, 0.75, 0.0, 0.0]);
        let s = tape.sum_cols(y);
        let m = tape.mean(s);
        let g = tape.backward(m).unwrap();
        assert!(g[x.0].as_ref().unwrap().all_finite());
    }
}
