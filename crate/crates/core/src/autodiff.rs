//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every primitive in execution order, so the node index
//! order is already topological and [`Tape::backward`] is a single reverse
//! sweep that visits each node once. Handles ([`Var`]) are plain indices into
//! the tape that created them.
//!
//! Every op checks its output and fails fast with
//! [`Error::NonFiniteValue`] instead of letting NaN leak into training.
//!
//! ```
//! use pulse_core::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(vec![1.0, 2.0, 3.0], &[3]).unwrap();
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.mean(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! let g = grads.wrt(x);
//! assert!((g[0] - 2.0 / 3.0).abs() < 1e-15);
//! assert!((g[2] - 2.0).abs() < 1e-15);
//! ```

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Floor applied to the denominator of [`Tape::normalize_sum`].
pub const NORMALIZE_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sqrt(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    MeanCenter(Var),
    NormalizeSum(Var),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        cin: usize,
        cout: usize,
        k: usize,
        len: usize,
    },
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        n: usize,
        p: usize,
    },
    Project {
        input: Var,
        matrix: Arc<[f64]>,
        rows: usize,
    },
    Select(Var, usize),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
}

/// Records a computation for one backward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
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

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, name: &'static str) -> Result<Var> {
        debug_assert_eq!(value.len(), numel(&shape));
        if value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { op: name });
        }
        self.nodes.push(Node { value, shape, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn check_shape(&self, op: &'static str, shape: &[usize], values: &[f64]) -> Result<()> {
        if numel(shape) != values.len() {
            return Err(Error::ShapeMismatch {
                op,
                left: shape.to_vec(),
                right: vec![values.len()],
            });
        }
        Ok(())
    }

    /// A differentiable input; its gradient is reported by `backward`.
    pub fn leaf(&mut self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.check_shape("leaf", shape, &values)?;
        self.push(values, shape.to_vec(), Op::Leaf, "leaf")
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.check_shape("constant", shape, &values)?;
        self.push(values, shape.to_vec(), Op::Constant, "constant")
    }

    pub fn scalar_constant(&mut self, value: f64) -> Result<Var> {
        self.constant(vec![value], &[])
    }

    /// Copies `v` into a constant node, blocking gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let node = &self.nodes[v.0];
        let (value, shape) = (node.value.clone(), node.shape.clone());
        self.push(value, shape, Op::Constant, "detach")
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa.clone(),
                right: sb.clone(),
            });
        }
        Ok(())
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(value, shape, op, name)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let value = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(value, shape, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.unary("scale", a, |x| k * x, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, math::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.nodes[a.0].value.iter().any(|&x| x < 0.0) {
            return Err(Error::NonFiniteValue { op: "sqrt" });
        }
        self.unary("sqrt", a, math::sqrt, Op::Sqrt(a))
    }

    /// Elementwise natural log; non-positive inputs fail.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.nodes[a.0].value.iter().any(|&x| x <= 0.0) {
            return Err(Error::NonFiniteValue { op: "log" });
        }
        self.unary("log", a, math::ln, Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], Vec::new(), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(vec![m], Vec::new(), Op::Mean(a), "mean")
    }

    /// Subtracts the mean over all elements.
    pub fn mean_center(&mut self, a: Var) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.unary("mean_center", a, |x| x - m, Op::MeanCenter(a))
    }

    /// `x / max(Σx, NORMALIZE_EPS)`.
    pub fn normalize_sum(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].value.iter().sum::<f64>().max(NORMALIZE_EPS);
        self.unary("normalize_sum", a, |x| x / s, Op::NormalizeSum(a))
    }

    /// Same-padded 1-D cross-correlation along time.
    ///
    /// `input` is `[cin, T]`, `weight` is `[cout, cin, k]` and `bias` is
    /// `[cout]`; the result is `[cout, T]` with zero padding of `(k-1)/2`
    /// frames on the left.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (
            self.nodes[input.0].shape.clone(),
            self.nodes[weight.0].shape.clone(),
            self.nodes[bias.0].shape.clone(),
        );
        if xs.len() != 2 || ws.len() != 3 || xs[0] != ws[1] || ws[2] == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                left: xs,
                right: ws,
            });
        }
        if bs != [ws[0]] {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                left: bs,
                right: vec![ws[0]],
            });
        }
        let (cin, len, cout, k) = (xs[0], xs[1], ws[0], ws[2]);
        let pad = (k - 1) / 2;
        let x = &self.nodes[input.0].value;
        let w = &self.nodes[weight.0].value;
        let b = &self.nodes[bias.0].value;
        let mut out = vec![0.0; cout * len];
        for o in 0..cout {
            let row = &mut out[o * len..(o + 1) * len];
            row.iter_mut().for_each(|y| *y = b[o]);
            for i in 0..cin {
                let xi = &x[i * len..(i + 1) * len];
                let wk = &w[(o * cin + i) * k..(o * cin + i + 1) * k];
                for (kk, &wv) in wk.iter().enumerate() {
                    // out[t] += wv * x[t + kk - pad]
                    let (t0, t1) = valid_range(len, kk, pad);
                    let src = t0 + kk - pad;
                    for (y, &xv) in row[t0..t1].iter_mut().zip(&xi[src..src + (t1 - t0)]) {
                        *y += wv * xv;
                    }
                }
            }
        }
        self.push(
            out,
            vec![cout, len],
            Op::Conv1d {
                input,
                weight,
                bias,
                cin,
                cout,
                k,
                len,
            },
            "conv1d",
        )
    }

    /// Dense `[m, n] × [n, p]` product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.nodes[a.0].shape.clone(), self.nodes[b.0].shape.clone());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let (m, n, p) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            for l in 0..n {
                let x = av[i * n + l];
                for j in 0..p {
                    out[i * p + j] += x * bv[l * p + j];
                }
            }
        }
        self.push(out, vec![m, p], Op::MatMul { a, b, m, n, p }, "matmul")
    }

    /// Fixed linear map `y = M x` with a row-major `rows × numel(x)` matrix.
    pub fn project(&mut self, input: Var, matrix: Arc<[f64]>, rows: usize) -> Result<Var> {
        let x = &self.nodes[input.0].value;
        if rows == 0 || matrix.len() != rows * x.len() {
            return Err(Error::ShapeMismatch {
                op: "project",
                left: vec![matrix.len()],
                right: vec![rows, x.len()],
            });
        }
        let out = matrix
            .chunks_exact(x.len())
            .map(|row| row.iter().zip(x).map(|(m, v)| m * v).sum())
            .collect();
        self.push(out, vec![rows], Op::Project { input, matrix, rows }, "project")
    }

    /// Picks one element as a scalar.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let Some(&x) = v.get(index) else {
            return Err(Error::ShapeMismatch {
                op: "select",
                left: self.nodes[a.0].shape.clone(),
                right: vec![index],
            });
        };
        self.push(vec![x], Vec::new(), Op::Select(a, index), "select")
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.nodes[a.0].value.clone();
        if numel(shape) != v.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.nodes[a.0].shape.clone(),
                right: shape.to_vec(),
            });
        }
        self.push(v, shape.to_vec(), Op::Reshape(a), "reshape")
    }

    /// Reverse sweep from a single-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.nodes[output.0].value.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: self.nodes[output.0].shape.clone(),
                right: Vec::new(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient);
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g, self);
                    accumulate(&mut grads, *b, &g, self);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g, self);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut grads, *b, &neg, self);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads, *a, &ga, self);
                    accumulate(&mut grads, *b, &gb, self);
                }
                Op::Div(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(g, y)| g / y).collect();
                    let gb: Vec<f64> = g
                        .iter()
                        .zip(av.iter().zip(bv))
                        .map(|(g, (x, y))| -g * x / (y * y))
                        .collect();
                    accumulate(&mut grads, *a, &ga, self);
                    accumulate(&mut grads, *b, &gb, self);
                }
                Op::Scale(a, k) => {
                    let ga: Vec<f64> = g.iter().map(|g| g * k).collect();
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g.iter().zip(&node.value).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::Relu(a) => {
                    // subgradient 0 at 0
                    let av = &self.nodes[a.0].value;
                    let ga: Vec<f64> = g.iter().zip(av).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::Sqrt(a) => {
                    let ga: Vec<f64> = g.iter().zip(&node.value).map(|(g, y)| g / (2.0 * y)).collect();
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::Log(a) => {
                    let av = &self.nodes[a.0].value;
                    let ga: Vec<f64> = g.iter().zip(av).map(|(g, x)| g / x).collect();
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    accumulate(&mut grads, *a, &vec![g[0]; n], self);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.len();
                    accumulate(&mut grads, *a, &vec![g[0] / n as f64; n], self);
                }
                Op::MeanCenter(a) => {
                    let mg = g.iter().sum::<f64>() / g.len() as f64;
                    let ga: Vec<f64> = g.iter().map(|g| g - mg).collect();
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::NormalizeSum(a) => {
                    let av = &self.nodes[a.0].value;
                    let s: f64 = av.iter().sum();
                    let ga: Vec<f64> = if s > NORMALIZE_EPS {
                        let dot: f64 = g.iter().zip(av).map(|(g, x)| g * x).sum();
                        g.iter().map(|g| g / s - dot / (s * s)).collect()
                    } else {
                        g.iter().map(|g| g / NORMALIZE_EPS).collect()
                    };
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    cin,
                    cout,
                    k,
                    len,
                } => {
                    let (cin, cout, k, len) = (*cin, *cout, *k, *len);
                    let pad = (k - 1) / 2;
                    let x = &self.nodes[input.0].value;
                    let w = &self.nodes[weight.0].value;
                    let mut gx = vec![0.0; cin * len];
                    let mut gw = vec![0.0; cout * cin * k];
                    let mut gb = vec![0.0; cout];
                    for o in 0..cout {
                        let go = &g[o * len..(o + 1) * len];
                        gb[o] = go.iter().sum();
                        for i in 0..cin {
                            let xi = &x[i * len..(i + 1) * len];
                            let gxi = &mut gx[i * len..(i + 1) * len];
                            for kk in 0..k {
                                let widx = (o * cin + i) * k + kk;
                                let wv = w[widx];
                                let (t0, t1) = valid_range(len, kk, pad);
                                let src = t0 + kk - pad;
                                let n = t1 - t0;
                                let mut acc = 0.0;
                                for ((gv, xv), gxv) in go[t0..t1]
                                    .iter()
                                    .zip(&xi[src..src + n])
                                    .zip(gxi[src..src + n].iter_mut())
                                {
                                    acc += gv * xv;
                                    *gxv += gv * wv;
                                }
                                gw[widx] += acc;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, &gx, self);
                    accumulate(&mut grads, *weight, &gw, self);
                    accumulate(&mut grads, *bias, &gb, self);
                }
                Op::MatMul { a, b, m, n, p } => {
                    let (m, n, p) = (*m, *n, *p);
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let mut ga = vec![0.0; m * n];
                    let mut gb = vec![0.0; n * p];
                    for i in 0..m {
                        for l in 0..n {
                            let mut acc = 0.0;
                            for j in 0..p {
                                acc += g[i * p + j] * bv[l * p + j];
                                gb[l * p + j] += av[i * n + l] * g[i * p + j];
                            }
                            ga[i * n + l] = acc;
                        }
                    }
                    accumulate(&mut grads, *a, &ga, self);
                    accumulate(&mut grads, *b, &gb, self);
                }
                Op::Project { input, matrix, rows } => {
                    let cols = matrix.len() / rows;
                    let mut gx = vec![0.0; cols];
                    for (row, gr) in matrix.chunks_exact(cols).zip(&g) {
                        for (gxv, m) in gx.iter_mut().zip(row) {
                            *gxv += gr * m;
                        }
                    }
                    accumulate(&mut grads, *input, &gx, self);
                }
                Op::Select(a, index) => {
                    let mut ga = vec![0.0; self.nodes[a.0].value.len()];
                    ga[*index] = g[0];
                    accumulate(&mut grads, *a, &ga, self);
                }
                Op::Reshape(a) => accumulate(&mut grads, *a, &g, self),
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }

        // Only leaves keep their gradient.
        for (idx, g) in grads.iter_mut().enumerate() {
            if !matches!(self.nodes[idx].op, Op::Leaf) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }
}

/// Output indices `[t0, t1)` for which `t + kk - pad` is a valid input index.
fn valid_range(len: usize, kk: usize, pad: usize) -> (usize, usize) {
    let t0 = pad.saturating_sub(kk);
    let t1 = (len + pad).saturating_sub(kk).min(len);
    (t0, t1.max(t0))
}

fn accumulate(grads: &mut [Option<Vec<f64>>], target: Var, g: &[f64], tape: &Tape) {
    if matches!(tape.nodes[target.0].op, Op::Constant) {
        return;
    }
    match &mut grads[target.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

/// Leaf gradients from one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf, if the output depends on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a leaf of `tape`, zeros when the output does not reach it.
    pub fn wrt_in(&self, tape: &Tape, v: Var) -> Vec<f64> {
        self.get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
    }

    /// Gradient of a leaf; panics if the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        self.get(v).expect("output does not depend on this leaf").to_vec()
    }
}

/// A differentiable input for [`grad_check`]: values plus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Point {
    pub fn new(values: Vec<f64>, shape: &[usize]) -> Self {
        Self {
            values,
            shape: shape.to_vec(),
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::new(values, &[n])
    }
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`.
///
/// Returns the maximum over all coordinates of every input of
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, points: &[Point], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |pts: &[Point]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = pts
            .iter()
            .map(|p| tape.constant(p.values.clone(), &p.shape))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let vars = points
        .iter()
        .map(|p| tape.leaf(p.values.clone(), &p.shape))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = points.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.wrt_in(&tape, *var);
        for (j, &a) in analytic.iter().enumerate() {
            let orig = probe[pi].values[j];
            probe[pi].values[j] = orig + h;
            let up = eval(&probe)?;
            probe[pi].values[j] = orig - h;
            let down = eval(&probe)?;
            probe[pi].values[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = math::abs(a - numeric) / math::abs(numeric).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_backward_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(vec![0.3, -1.0, 7.0, 2.0], &[2, 2]).unwrap();
        let s = t.sum(x).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(x), vec![1.0; 4]);
    }

    #[test]
    fn mean_of_squares_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let sq = t.mul(x, x).unwrap();
        let m = t.mean(sq).unwrap();
        let g = t.backward(m).unwrap().wrt(x);
        for (a, b) in g.iter().zip([2.0 / 3.0, 4.0 / 3.0, 2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(vec![-1.0, 0.0, 2.0], &[3]).unwrap();
        let r = t.relu(x).unwrap();
        let s = t.sum(r).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(x), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0], &[2]).unwrap();
        let d = t.detach(x).unwrap();
        let p = t.mul(x, d).unwrap();
        let s = t.sum(p).unwrap();
        // d(x * stop(x))/dx = stop(x)
        assert_eq!(t.backward(s).unwrap().wrt(x), vec![1.0, 2.0]);
    }

    #[test]
    fn constants_have_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0], &[1]).unwrap();
        let c = t.constant(vec![3.0], &[1]).unwrap();
        let p = t.mul(x, c).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(x), vec![3.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, 2.0], &[2]).unwrap();
        let b = t.leaf(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        assert!(matches!(t.add(a, b), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(t.leaf(vec![1.0], &[2]), Err(Error::ShapeMismatch { .. })));
        let m = t.leaf(vec![1.0; 6], &[2, 3]).unwrap();
        assert!(matches!(t.matmul(m, m), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_fails_fast() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, 0.0], &[2]).unwrap();
        let b = t.leaf(vec![0.0, 0.0], &[2]).unwrap();
        assert_eq!(t.div(a, b), Err(Error::NonFiniteValue { op: "div" }));
        assert_eq!(t.log(b), Err(Error::NonFiniteValue { op: "log" }));
        assert!(t.leaf(vec![f64::NAN], &[1]).is_err());
    }

    #[test]
    fn normalize_uses_epsilon_floor() {
        let mut t = Tape::new();
        let x = t.leaf(vec![0.0, 0.0], &[2]).unwrap();
        let n = t.normalize_sum(x).unwrap();
        assert_eq!(t.value(n), &[0.0, 0.0]);
        let s = t.sum(n).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(x), vec![1.0 / NORMALIZE_EPS; 2]);
    }

    #[test]
    fn conv1d_same_padding_matches_direct_sum() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0, 3.0, 4.0, 5.0], &[1, 5]).unwrap();
        let w = t.leaf(vec![1.0, 10.0, 100.0], &[1, 1, 3]).unwrap();
        let b = t.leaf(vec![0.5], &[1]).unwrap();
        let y = t.conv1d(x, w, b).unwrap();
        // y[t] = b + x[t-1] + 10 x[t] + 100 x[t+1]
        assert_eq!(t.value(y), &[210.5, 321.5, 432.5, 543.5, 54.5]);
    }

    #[test]
    fn matmul_values() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = t.leaf(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn grad_check_sum_of_squares() {
        let err = grad_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                t.sum(sq)
            },
            &[Point::vector(vec![0.3, -1.2, 2.5, 0.01])],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-7, "{err}");
    }
}
