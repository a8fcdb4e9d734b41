//! Reverse-mode tape over matrix-valued primitives.
//!
//! Each node stores its output and, where the reverse sweep needs them, the
//! local partials computed during the forward pass. Nodes are appended in
//! evaluation order, so the node list is topologically sorted by
//! construction and the reverse sweep is a single backwards scan.

use std::borrow::Cow;

use super::fastmath::{fix_large, sin_cos_reduced};
use crate::error::{Error, Result};
use crate::matrix::{gemm_a_bt, gemm_acc_a_b, gemm_acc_at_b, Matrix};
use crate::summation::CompensatedSum;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise functions with the derivatives the tape needs up to third order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Sin,
    Cos,
    /// `0.5 sin(z) + 0.5 cos(z)`
    SinCos,
    Tanh,
    Exp,
    Sqrt,
    Square,
    Recip,
    /// `max(0, z)^2`
    Requ,
    Powi(i32),
}

impl UnaryKind {
    fn forward(self, z: &[f64], out: &mut [f64], d1: &mut [f64]) {
        let it = z.iter().zip(out.iter_mut()).zip(d1.iter_mut());
        match self {
            UnaryKind::Sin => {
                for ((&z, o), d) in it {
                    let (s, c) = sin_cos_reduced(z);
                    *o = s;
                    *d = c;
                }
                fix_large(z, |i, s, c| {
                    out[i] = s;
                    d1[i] = c;
                });
            }
            UnaryKind::Cos => {
                for ((&z, o), d) in it {
                    let (s, c) = sin_cos_reduced(z);
                    *o = c;
                    *d = -s;
                }
                fix_large(z, |i, s, c| {
                    out[i] = c;
                    d1[i] = -s;
                });
            }
            UnaryKind::SinCos => {
                for ((&z, o), d) in it {
                    let (s, c) = sin_cos_reduced(z);
                    *o = 0.5 * s + 0.5 * c;
                    *d = 0.5 * c - 0.5 * s;
                }
                fix_large(z, |i, s, c| {
                    out[i] = 0.5 * s + 0.5 * c;
                    d1[i] = 0.5 * c - 0.5 * s;
                });
            }
            UnaryKind::Tanh => {
                for ((&z, o), d) in it {
                    let t = z.tanh();
                    *o = t;
                    *d = 1.0 - t * t;
                }
            }
            UnaryKind::Exp => {
                for ((&z, o), d) in it {
                    let e = z.exp();
                    *o = e;
                    *d = e;
                }
            }
            UnaryKind::Sqrt => {
                for ((&z, o), d) in it {
                    let s = z.sqrt();
                    *o = s;
                    *d = 0.5 / s;
                }
            }
            UnaryKind::Square => {
                for ((&z, o), d) in it {
                    *o = z * z;
                    *d = 2.0 * z;
                }
            }
            UnaryKind::Recip => {
                for ((&z, o), d) in it {
                    let r = 1.0 / z;
                    *o = r;
                    *d = -r * r;
                }
            }
            UnaryKind::Requ => {
                for ((&z, o), d) in it {
                    let r = z.max(0.0);
                    *o = r * r;
                    *d = 2.0 * r;
                }
            }
            UnaryKind::Powi(n) => {
                let nf = n as f64;
                for ((&z, o), d) in it {
                    *o = z.powi(n);
                    *d = nf * z.powi(n - 1);
                }
            }
        }
    }

    /// Second and third derivatives from the input `z`, the value `f(z)` and
    /// the first derivative `f'(z)`.
    #[inline]
    fn higher(self, z: f64, f: f64, d1: f64) -> (f64, f64) {
        match self {
            UnaryKind::Sin | UnaryKind::Cos | UnaryKind::SinCos => (-f, -d1),
            UnaryKind::Tanh => (-2.0 * f * d1, -2.0 * d1 * d1 + 4.0 * f * f * d1),
            UnaryKind::Exp => (f, f),
            UnaryKind::Sqrt => (-0.25 / (f * z), 0.375 / (f * z * z)),
            UnaryKind::Square => (2.0, 0.0),
            UnaryKind::Recip => (2.0 * f * f * f, -6.0 * f * f * f * f),
            UnaryKind::Requ => (if z > 0.0 { 2.0 } else { 0.0 }, 0.0),
            UnaryKind::Powi(n) => {
                let nf = n as f64;
                (
                    nf * (nf - 1.0) * z.powi(n - 2),
                    nf * (nf - 1.0) * (nf - 2.0) * z.powi(n - 3),
                )
            }
        }
    }

    fn domain_violation(self, z: f64) -> Option<&'static str> {
        match self {
            UnaryKind::Sqrt if z < 0.0 => Some("square root of a negative value"),
            UnaryKind::Recip if z == 0.0 => Some("reciprocal of zero"),
            UnaryKind::Powi(n) if n < 0 && z == 0.0 => Some("negative power of zero"),
            _ => None,
        }
    }
}

enum Op {
    Constant,
    Param {
        slot: usize,
    },
    /// `x * w^T + b`
    Affine {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    /// `x + c` for a constant `c`; only the identity partial is needed.
    Offset(Var),
    MulConst(Var, Vec<f64>),
    Unary {
        kind: UnaryKind,
        x: Var,
        d1: Vec<f64>,
    },
    /// `f'(z) * t` where `primal = f(z)` is a unary node.
    Jvp {
        primal: Var,
        tangent: Var,
        d2: Vec<f64>,
    },
    /// `f''(z) * t^2 + f'(z) * s`
    Jvp2 {
        primal: Var,
        tangent: Var,
        second: Option<Var>,
        d2: Vec<f64>,
        d3: Vec<f64>,
    },
    Columns {
        x: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    Sum(Var),
    SumSquares(Var),
    LinComb(Vec<(Var, f64)>),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// A recorded computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<String>,
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

    /// First domain violation (division by zero, negative square root) seen
    /// while recording, if any.
    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.len(), 1);
        m.as_slice()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn record_fault(&mut self, msg: impl Into<String>) {
        if self.fault.is_none() {
            self.fault = Some(msg.into());
        }
    }

    fn same_shape(&self, a: Var, b: Var) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "operand shapes differ"
        );
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A trainable leaf whose gradient lands at `grad[slot..slot + len]`.
    pub fn param(&mut self, value: Matrix, slot: usize) -> Var {
        self.push(value, Op::Param { slot }, true)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (n, k) = self.value(x).shape();
        let (m, kw) = self.value(w).shape();
        assert_eq!(k, kw, "affine: input width {k} vs weight width {kw}");
        let mut out = Matrix::zeros(n, m);
        gemm_a_bt(self.value(x), self.value(w), &mut out, 0.0);
        if let Some(b) = b {
            let bias = self.value(b).as_slice();
            assert_eq!(bias.len(), m, "affine: bias length");
            for row in out.as_mut_slice().chunks_exact_mut(m.max(1)) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        let needs = self.grad(x) || self.grad(w) || b.is_some_and(|b| self.grad(b));
        self.push(out, Op::Affine { x, w, b }, needs)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        self.same_shape(a, b);
        let (r, c) = self.value(a).shape();
        let data = self
            .value(a)
            .as_slice()
            .iter()
            .zip(self.value(b).as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Matrix::from_vec(r, c, data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x + y);
        let needs = self.grad(a) || self.grad(b);
        self.push(out, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x - y);
        let needs = self.grad(a) || self.grad(b);
        self.push(out, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x * y);
        let needs = self.grad(a) || self.grad(b);
        self.push(out, Op::Mul(a, b), needs)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        if self.value(b).as_slice().contains(&0.0) {
            self.record_fault("division by zero");
        }
        let out = self.zip_with(a, b, |x, y| x / y);
        let needs = self.grad(a) || self.grad(b);
        self.push(out, Op::Div(a, b), needs)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| k * v);
        let needs = self.grad(x);
        self.push(out, Op::Scale(x, k), needs)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    /// `x + c` for a constant matrix `c` of the same shape.
    pub fn add_const(&mut self, x: Var, c: &[f64]) -> Var {
        let m = self.value(x);
        assert_eq!(m.len(), c.len(), "add_const: length");
        let data = m.as_slice().iter().zip(c).map(|(&v, &k)| v + k).collect();
        let out = Matrix::from_vec(m.rows(), m.cols(), data).expect("shape preserved");
        let needs = self.grad(x);
        self.push(out, Op::Offset(x), needs)
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Var {
        let m = self.value(x);
        assert_eq!(m.len(), c.len(), "mul_const: length");
        let data = m.as_slice().iter().zip(&c).map(|(&v, &k)| v * k).collect();
        let out = Matrix::from_vec(m.rows(), m.cols(), data).expect("shape preserved");
        let needs = self.grad(x);
        self.push(out, Op::MulConst(x, c), needs)
    }

    pub fn unary(&mut self, kind: UnaryKind, x: Var) -> Var {
        let z = self.value(x);
        if let Some(msg) = z.as_slice().iter().find_map(|&v| kind.domain_violation(v)) {
            self.record_fault(msg);
        }
        let z = self.value(x);
        let mut out = Matrix::zeros(z.rows(), z.cols());
        let mut d1 = vec![0.0; z.len()];
        kind.forward(z.as_slice(), out.as_mut_slice(), &mut d1);
        let needs = self.grad(x);
        if !needs {
            d1 = Vec::new();
        }
        self.push(out, Op::Unary { kind, x, d1 }, needs)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sin, x)
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Cos, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sqrt, x)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Square, x)
    }

    pub fn powi(&mut self, x: Var, n: i32) -> Var {
        self.unary(UnaryKind::Powi(n), x)
    }

    fn unary_parts(&self, primal: Var) -> (UnaryKind, Var, Option<&[f64]>) {
        match &self.nodes[primal.0].op {
            Op::Unary { kind, x, d1 } => {
                let d1 = if d1.is_empty() { None } else { Some(d1.as_slice()) };
                (*kind, *x, d1)
            }
            _ => panic!("jvp expects a unary node as primal"),
        }
    }

    /// First derivative of `f(z)` along a tangent: `f'(z) * t`.
    ///
    /// `primal` must be the node returned by [`Tape::unary`] for `f(z)`; its
    /// stored partial is reused so no transcendental is re-evaluated.
    pub fn jvp(&mut self, primal: Var, tangent: Var) -> Var {
        self.same_shape(primal, tangent);
        let (kind, z, d1) = self.unary_parts(primal);
        let zv = self.value(z).as_slice();
        let fv = self.value(primal).as_slice();
        let t = self.value(tangent).as_slice();
        let d1_store: Cow<'_, [f64]> = match d1 {
            Some(d) => Cow::Borrowed(d),
            None => Cow::Owned(recompute_d1(kind, zv)),
        };
        let d1: &[f64] = &d1_store;
        let data: Vec<f64> = d1.iter().zip(t).map(|(&d, &t)| d * t).collect();
        let needs_z = self.grad(z);
        let d2 = if needs_z {
            zv.iter()
                .zip(fv)
                .zip(d1)
                .map(|((&z, &f), &d)| kind.higher(z, f, d).0)
                .collect()
        } else {
            Vec::new()
        };
        let (r, c) = self.value(tangent).shape();
        let out = Matrix::from_vec(r, c, data).expect("shape preserved");
        let needs = needs_z || self.grad(tangent);
        self.push(
            out,
            Op::Jvp {
                primal,
                tangent,
                d2,
            },
            needs,
        )
    }

    /// Second derivative of `f(z)` along a direction, given the first and
    /// second derivatives `t`, `s` of `z`: `f''(z) t^2 + f'(z) s`. A missing
    /// `s` means `z` is affine along the direction.
    pub fn jvp2(&mut self, primal: Var, tangent: Var, second: Option<Var>) -> Var {
        self.same_shape(primal, tangent);
        if let Some(s) = second {
            self.same_shape(primal, s);
        }
        let (kind, z, d1) = self.unary_parts(primal);
        let zv = self.value(z).as_slice();
        let fv = self.value(primal).as_slice();
        let t = self.value(tangent).as_slice();
        let d1_store: Cow<'_, [f64]> = match d1 {
            Some(d) => Cow::Borrowed(d),
            None => Cow::Owned(recompute_d1(kind, zv)),
        };
        let d1: &[f64] = &d1_store;
        let (d2, d3): (Vec<f64>, Vec<f64>) = zv
            .iter()
            .zip(fv)
            .zip(d1)
            .map(|((&z, &f), &d)| kind.higher(z, f, d))
            .unzip();
        let mut data: Vec<f64> = d2.iter().zip(t).map(|(&a, &t)| a * t * t).collect();
        if let Some(s) = second {
            for ((o, &d), &sv) in data.iter_mut().zip(d1).zip(self.value(s).as_slice()) {
                *o += d * sv;
            }
        }
        let (r, c) = self.value(tangent).shape();
        let out = Matrix::from_vec(r, c, data).expect("shape preserved");
        let needs =
            self.grad(z) || self.grad(tangent) || second.is_some_and(|s| self.grad(s));
        self.push(
            out,
            Op::Jvp2 {
                primal,
                tangent,
                second,
                d2,
                d3,
            },
            needs,
        )
    }

    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        assert!(start + len <= m.cols(), "columns out of range");
        let mut data = Vec::with_capacity(m.rows() * len);
        for row in m.iter_rows() {
            data.extend_from_slice(&row[start..start + len]);
        }
        let out = Matrix::from_vec(m.rows(), len, data).expect("shape preserved");
        let needs = self.grad(x);
        self.push(out, Op::Columns { x, start }, needs)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat: row counts differ");
            let w = m.cols();
            for (i, row) in m.iter_rows().enumerate() {
                out.as_mut_slice()[i * cols + offset..i * cols + offset + w].copy_from_slice(row);
            }
            offset += w;
        }
        let needs = parts.iter().any(|&p| self.grad(p));
        self.push(out, Op::Concat(parts.to_vec()), needs)
    }

    /// Sum of all entries (compensated), as a `1 x 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = CompensatedSum::new();
        acc.extend(self.value(x).as_slice().iter().copied());
        let needs = self.grad(x);
        self.push(Matrix::scalar(acc.value()), Op::Sum(x), needs)
    }

    /// Sum of squared entries (compensated), as a `1 x 1` node.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let mut acc = CompensatedSum::new();
        acc.extend(self.value(x).as_slice().iter().map(|v| v * v));
        let needs = self.grad(x);
        self.push(Matrix::scalar(acc.value()), Op::SumSquares(x), needs)
    }

    /// `sum_i c_i x_i` over equally shaped nodes.
    pub fn lin_comb(&mut self, terms: &[(Var, f64)]) -> Var {
        assert!(!terms.is_empty());
        let (r, c) = self.value(terms[0].0).shape();
        let mut out = Matrix::zeros(r, c);
        for &(v, k) in terms {
            assert_eq!(self.value(v).shape(), (r, c), "lin_comb: shapes differ");
            for (o, &x) in out.as_mut_slice().iter_mut().zip(self.value(v).as_slice()) {
                *o += k * x;
            }
        }
        let needs = terms.iter().any(|&(v, _)| self.grad(v));
        self.push(out, Op::LinComb(terms.to_vec()), needs)
    }

    /// Gradient of the scalar node `output` with respect to every parameter
    /// leaf, laid out in a vector of length `n_params`.
    pub fn gradient(&self, output: Var, n_params: usize) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; n_params];
        self.accumulate_gradient(output, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient of the scalar node `output` into `grad`.
    pub fn accumulate_gradient(&self, output: Var, grad: &mut [f64]) -> Result<()> {
        if let Some(f) = &self.fault {
            return Err(Error::Numeric(f.clone()));
        }
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::Shape(format!(
                "gradient needs a scalar output, got {:?}",
                out.shape()
            )));
        }
        if !out.as_slice()[0].is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite output {}",
                out.as_slice()[0]
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::new();
        adj.resize_with(output.0 + 1, || None);
        adj[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param { slot } => {
                    let dst = grad.get_mut(*slot..*slot + g.len()).ok_or_else(|| {
                        Error::Shape(format!("parameter slot {slot} outside gradient"))
                    })?;
                    for (d, v) in dst.iter_mut().zip(&g) {
                        *d += v;
                    }
                }
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (n, k) = xv.shape();
                    let m = wv.rows();
                    if let Some(dx) = self.slot(&mut adj, *x) {
                        gemm_acc_a_b(&g, wv.as_slice(), dx, n, m, k);
                    }
                    if let Some(dw) = self.slot(&mut adj, *w) {
                        gemm_acc_at_b(&g, xv.as_slice(), dw, m, n, k);
                    }
                    if let Some(b) = b {
                        if let Some(db) = self.slot(&mut adj, *b) {
                            for row in g.chunks_exact(m.max(1)) {
                                for (d, &v) in db.iter_mut().zip(row) {
                                    *d += v;
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(d) = self.slot(&mut adj, v) {
                            axpy(d, 1.0, &g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(d) = self.slot(&mut adj, *a) {
                        axpy(d, 1.0, &g);
                    }
                    if let Some(d) = self.slot(&mut adj, *b) {
                        axpy(d, -1.0, &g);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).as_slice(), self.value(*b).as_slice());
                    if let Some(d) = self.slot(&mut adj, *a) {
                        for ((d, &g), &y) in d.iter_mut().zip(&g).zip(bv) {
                            *d += g * y;
                        }
                    }
                    if let Some(d) = self.slot(&mut adj, *b) {
                        for ((d, &g), &x) in d.iter_mut().zip(&g).zip(av) {
                            *d += g * x;
                        }
                    }
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b).as_slice();
                    let q = node.value.as_slice();
                    if let Some(d) = self.slot(&mut adj, *a) {
                        for ((d, &g), &y) in d.iter_mut().zip(&g).zip(bv) {
                            *d += g / y;
                        }
                    }
                    if let Some(d) = self.slot(&mut adj, *b) {
                        for (((d, &g), &y), &q) in d.iter_mut().zip(&g).zip(bv).zip(q) {
                            *d -= g * q / y;
                        }
                    }
                }
                Op::Scale(x, k) => {
                    if let Some(d) = self.slot(&mut adj, *x) {
                        axpy(d, *k, &g);
                    }
                }
                Op::Offset(x) => {
                    if let Some(d) = self.slot(&mut adj, *x) {
                        axpy(d, 1.0, &g);
                    }
                }
                Op::MulConst(x, c) => {
                    if let Some(d) = self.slot(&mut adj, *x) {
                        for ((d, &g), &k) in d.iter_mut().zip(&g).zip(c) {
                            *d += g * k;
                        }
                    }
                }
                Op::Unary { x, d1, .. } => {
                    if let Some(d) = self.slot(&mut adj, *x) {
                        for ((d, &g), &p) in d.iter_mut().zip(&g).zip(d1) {
                            *d += g * p;
                        }
                    }
                }
                Op::Jvp {
                    primal,
                    tangent,
                    d2,
                } => {
                    let (kind, z, d1) = self.unary_parts(*primal);
                    let owned;
                    let d1 = match d1 {
                        Some(d) => d,
                        None => {
                            owned = recompute_d1(kind, self.value(z).as_slice());
                            &owned
                        }
                    };
                    let t = self.value(*tangent).as_slice();
                    if let Some(d) = self.slot(&mut adj, *tangent) {
                        for ((d, &g), &p) in d.iter_mut().zip(&g).zip(d1) {
                            *d += g * p;
                        }
                    }
                    if let Some(d) = self.slot(&mut adj, z) {
                        for (((d, &g), &p2), &t) in d.iter_mut().zip(&g).zip(d2).zip(t) {
                            *d += g * p2 * t;
                        }
                    }
                }
                Op::Jvp2 {
                    primal,
                    tangent,
                    second,
                    d2,
                    d3,
                } => {
                    let (kind, z, d1) = self.unary_parts(*primal);
                    let owned;
                    let d1 = match d1 {
                        Some(d) => d,
                        None => {
                            owned = recompute_d1(kind, self.value(z).as_slice());
                            &owned
                        }
                    };
                    let t = self.value(*tangent).as_slice();
                    if let Some(d) = self.slot(&mut adj, *tangent) {
                        for (((d, &g), &p2), &t) in d.iter_mut().zip(&g).zip(d2).zip(t) {
                            *d += 2.0 * g * p2 * t;
                        }
                    }
                    if let Some(s) = second {
                        if let Some(d) = self.slot(&mut adj, *s) {
                            for ((d, &g), &p) in d.iter_mut().zip(&g).zip(d1) {
                                *d += g * p;
                            }
                        }
                    }
                    if let Some(dz) = self.slot(&mut adj, z) {
                        for (i, (((d, &g), &p3), &t)) in
                            dz.iter_mut().zip(&g).zip(d3).zip(t).enumerate()
                        {
                            *d += g * p3 * t * t;
                            if let Some(s) = second {
                                *d += g * d2[i] * self.nodes[s.0].value.as_slice()[i];
                            }
                        }
                    }
                }
                Op::Columns { x, start } => {
                    let cols = self.value(*x).cols();
                    let w = node.value.cols();
                    if let Some(d) = self.slot(&mut adj, *x) {
                        for (drow, grow) in d.chunks_exact_mut(cols).zip(g.chunks_exact(w.max(1))) {
                            for (dv, &gv) in drow[*start..*start + w].iter_mut().zip(grow) {
                                *dv += gv;
                            }
                        }
                    }
                }
                Op::Concat(parts) => {
                    let cols = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if let Some(d) = self.slot(&mut adj, p) {
                            for (drow, grow) in d.chunks_exact_mut(w.max(1)).zip(g.chunks_exact(cols)) {
                                for (dv, &gv) in drow.iter_mut().zip(&grow[offset..offset + w]) {
                                    *dv += gv;
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::Sum(x) => {
                    if let Some(d) = self.slot(&mut adj, *x) {
                        d.iter_mut().for_each(|v| *v += g[0]);
                    }
                }
                Op::SumSquares(x) => {
                    let xv = self.value(*x).as_slice();
                    if let Some(d) = self.slot(&mut adj, *x) {
                        for (d, &v) in d.iter_mut().zip(xv) {
                            *d += 2.0 * g[0] * v;
                        }
                    }
                }
                Op::LinComb(terms) => {
                    for &(v, k) in terms {
                        if let Some(d) = self.slot(&mut adj, v) {
                            axpy(d, k, &g);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn slot<'a>(&self, adj: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut [f64]> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(adj[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }
}

fn recompute_d1(kind: UnaryKind, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    let mut d1 = vec![0.0; z.len()];
    kind.forward(z, &mut out, &mut d1);
    d1
}

#[inline]
fn axpy(dst: &mut [f64], k: f64, src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

/// Records `f` on a fresh tape with every entry of `params` registered as a
/// scalar parameter, then returns the output value and its gradient.
pub fn record_and_backprop(
    params: &[f64],
    f: impl FnOnce(&mut Tape, &[Var]) -> Var,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .enumerate()
        .map(|(i, &p)| tape.param(Matrix::scalar(p), i))
        .collect();
    let out = f(&mut tape, &vars);
    let grad = tape.gradient(out, params.len())?;
    Ok((tape.scalar(out), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_rule() {
        let (v, g) = record_and_backprop(&[3.0], |t, p| t.square(p[0])).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn least_squares() {
        let (_, g) = record_and_backprop(&[1.0], |t, p| {
            let x = t.constant(Matrix::scalar(2.0));
            let r = t.mul(p[0], x);
            let r = t.add_const(r, &[-1.0]);
            t.square(r)
        })
        .unwrap();
        assert_eq!(g, vec![4.0]);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let res = record_and_backprop(&[1.0], |t, p| {
            let z = t.constant(Matrix::scalar(0.0));
            t.div(p[0], z)
        });
        assert!(matches!(res, Err(Error::Numeric(_))));
        let res = record_and_backprop(&[-1.0], |t, p| t.sqrt(p[0]));
        assert!(matches!(res, Err(Error::Numeric(_))));
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let res = record_and_backprop(&[1000.0], |t, p| t.exp(p[0]));
        assert!(matches!(res, Err(Error::Numeric(_))));
    }

    fn fd_check(params: &[f64], f: impl Fn(&mut Tape, &[Var]) -> Var + Copy) {
        let (_, g) = record_and_backprop(params, f).unwrap();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut p = params.to_vec();
            p[i] += h;
            let (fp, _) = record_and_backprop(&p, f).unwrap();
            p[i] -= 2.0 * h;
            let (fm, _) = record_and_backprop(&p, f).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() <= 1e-6 * g[i].abs().max(1.0),
                "param {i}: {} vs {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        fd_check(&[0.7, -1.3, 2.1], |t, p| {
            let a = t.sin(p[0]);
            let b = t.tanh(p[1]);
            let c = t.mul(a, b);
            let d = t.div(c, p[2]);
            let e = t.exp(d);
            let f = t.sub(e, p[1]);
            let g = t.powi(f, 3);
            let h = t.sqrt(p[2]);
            let k = t.unary(UnaryKind::SinCos, h);
            let r = t.unary(UnaryKind::Recip, p[2]);
            t.lin_comb(&[(g, 0.5), (k, 2.0), (r, 1.0)])
        });
    }

    #[test]
    fn affine_and_reductions_match_finite_differences() {
        // weight 2x3 at slots 0..6, bias at 6..8
        let w: Vec<f64> = vec![0.3, -0.2, 0.5, 1.1, 0.4, -0.7, 0.05, -0.1];
        fd_check(&w, |t, p| {
            let wm = t.concat_cols(&p[0..3]);
            let wm2 = t.concat_cols(&p[3..6]);
            // stack rows: build W (2x3) via transposing through affine with identity
            let x = t.constant(Matrix::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap());
            let y1 = t.affine(x, wm, Some(p[6]));
            let y2 = t.affine(x, wm2, Some(p[7]));
            let y = t.concat_cols(&[y1, y2]);
            let a = t.unary(UnaryKind::SinCos, y);
            let col = t.columns(a, 1, 1);
            let s1 = t.sum_squares(a);
            let s2 = t.sum(col);
            t.lin_comb(&[(s1, 1.0), (s2, -0.5)])
        });
    }

    #[test]
    fn jvp_nodes_match_finite_differences() {
        for kind in [UnaryKind::SinCos, UnaryKind::Tanh, UnaryKind::Cos, UnaryKind::Powi(3), UnaryKind::Exp] {
            fd_check(&[0.4, 0.9, -0.3], |t, p| {
                let z = t.mul(p[0], p[1]);
                let f = t.unary(kind, z);
                let tz = t.add(p[1], p[2]);
                let j = t.jvp(f, tz);
                let s = t.mul(p[2], p[0]);
                let j2 = t.jvp2(f, tz, Some(s));
                let j2b = t.jvp2(f, tz, None);
                let q = t.mul(j, j2);
                t.lin_comb(&[(q, 1.0), (j2b, 0.25)])
            });
        }
    }

    #[test]
    fn jvp_is_the_forward_derivative() {
        // d/dx sincos(3x) at x=0.2 along dx=1: f'(0.6) * 3
        let mut t = Tape::new();
        let x = t.constant(Matrix::scalar(0.6));
        let f = t.unary(UnaryKind::SinCos, x);
        let tz = t.constant(Matrix::scalar(3.0));
        let j = t.jvp(f, tz);
        let j2 = t.jvp2(f, tz, None);
        let expect = 3.0 * (0.5 * 0.6f64.cos() - 0.5 * 0.6f64.sin());
        assert!((t.scalar(j) - expect).abs() < 1e-15);
        let expect2 = -9.0 * (0.5 * 0.6f64.sin() + 0.5 * 0.6f64.cos());
        assert!((t.scalar(j2) - expect2).abs() < 1e-14);
    }

    #[test]
    fn constants_are_not_differentiated() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::scalar(2.0));
        let s = t.square(c);
        assert!(t.gradient(s, 0).unwrap().is_empty());
    }
}
