use super::{Aggregation, HiddenActivation, LayerRole, LayerSpec, Network, Parameters};
use crate::autodiff::{Dual1, Dual2, Scalar, Tape, UnaryKind, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Outputs at a point with their first (and optionally second) derivatives
/// along one coordinate direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Option<Vec<f64>>,
}

/// Anything that maps a point to `(u, phi_1, ..., phi_d)` (or just `u`) with
/// exact directional derivatives: the network itself, or a closed-form stub.
pub trait FieldModel {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn values(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jet(&self, x: &[f64], dir: usize, second: bool) -> Result<Jet>;
}

/// Tape nodes produced by [`Network::record`]. `d1[k]` and `d2[k]` hold the
/// derivatives along coordinate `k` of every output column.
pub struct TapeOutputs {
    pub value: Var,
    pub d1: Vec<Var>,
    pub d2: Vec<Var>,
}

fn activate<S: Scalar>(act: HiddenActivation, z: S) -> S {
    match act {
        HiddenActivation::Sincos => z.sin().scale(0.5) + z.cos().scale(0.5),
        HiddenActivation::Tanh => z.tanh(),
        HiddenActivation::Requ => z.requ(),
    }
}

fn unary_kind(act: HiddenActivation) -> UnaryKind {
    match act {
        HiddenActivation::Sincos => UnaryKind::SinCos,
        HiddenActivation::Tanh => UnaryKind::Tanh,
        HiddenActivation::Requ => UnaryKind::Requ,
    }
}

fn affine_scalar<S: Scalar>(spec: &LayerSpec, params: &[f64], h: &[S]) -> Vec<S> {
    let w = &params[spec.weight_offset..spec.bias_offset];
    let b = &params[spec.bias_offset..spec.bias_offset + spec.rows];
    (0..spec.rows)
        .map(|r| {
            let row = &w[r * spec.cols..(r + 1) * spec.cols];
            let mut acc = h[0].scale(row[0]);
            for (hv, &wv) in h[1..].iter().zip(&row[1..]) {
                acc = acc + hv.scale(wv);
            }
            acc.offset(b[r])
        })
        .collect()
}

impl Network {
    /// Output of one subnetwork for an already stretched input.
    pub fn subnet_forward<S: Scalar>(&self, params: &[f64], subnet: usize, x_scaled: &[S]) -> Result<Vec<S>> {
        let mut layers = self.subnet_trace(params, subnet, x_scaled)?;
        Ok(layers.pop().expect("at least one layer"))
    }

    /// Every layer's output of one subnetwork, first layer first.
    pub fn subnet_trace<S: Scalar>(&self, params: &[f64], subnet: usize, x_scaled: &[S]) -> Result<Vec<Vec<S>>> {
        self.check_params(params)?;
        let layers = self
            .subnets
            .get(subnet)
            .ok_or_else(|| Error::Shape(format!("no subnetwork {subnet}")))?;
        if x_scaled.len() != self.config.dim_in {
            return Err(Error::Shape(format!(
                "point has {} coordinates, network expects {}",
                x_scaled.len(),
                self.config.dim_in
            )));
        }
        let s = self.config.soften;
        let mut h = x_scaled.to_vec();
        let mut trace = Vec::with_capacity(layers.len());
        for (l, spec) in layers.iter().enumerate() {
            let z = affine_scalar(spec, params, &h);
            h = match spec.role {
                LayerRole::Fourier => {
                    let mut o = Vec::with_capacity(2 * z.len());
                    o.extend(z.iter().map(|v| v.scale(s).cos()));
                    o.extend(z.iter().map(|v| v.scale(s).sin()));
                    o
                }
                LayerRole::First(act) => z.into_iter().map(|v| activate(act, v)).collect(),
                LayerRole::Hidden { activation, skip } => {
                    if skip {
                        z.into_iter()
                            .zip(&h)
                            .map(|(v, &prev)| activate(activation, v) + prev)
                            .collect()
                    } else {
                        z.into_iter().map(|v| activate(activation, v)).collect()
                    }
                }
                LayerRole::Output => z,
            };
            if !h.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLayer { layer: l });
            }
            trace.push(h.clone());
        }
        Ok(trace)
    }

    /// Network outputs at one point, generic over plain and dual numbers.
    pub fn forward_scalar<S: Scalar>(&self, params: &[f64], xs: &[S]) -> Result<Vec<S>> {
        self.check_params(params)?;
        let out = self.config.dim_out;
        let mut parts = Vec::with_capacity(self.subnets.len());
        for (i, &a) in self.config.scales.iter().enumerate() {
            let scaled: Vec<S> = xs.iter().map(|v| v.scale(a)).collect();
            parts.push(self.subnet_forward(params, i, &scaled)?);
        }
        match (&self.config.aggregation, &self.head) {
            (Aggregation::LinearHead, Some(head)) => {
                let concat: Vec<S> = parts.into_iter().flatten().collect();
                let y = affine_scalar(head, params, &concat);
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteLayer {
                        layer: self.subnets[0].len(),
                    });
                }
                Ok(y)
            }
            _ => {
                let mut y: Vec<S> = parts[0].iter().map(|v| v.scale(self.mean_weight(0))).collect();
                for (i, f) in parts.iter().enumerate().skip(1) {
                    let w = self.mean_weight(i);
                    for j in 0..out {
                        y[j] = y[j] + f[j].scale(w);
                    }
                }
                Ok(y)
            }
        }
    }

    pub fn forward(&self, params: &Parameters, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_scalar(params.as_slice(), x)
    }

    /// Outputs and their exact derivatives along coordinate `dir`; `order` 2
    /// adds second derivatives.
    pub fn forward_directional(&self, params: &[f64], x: &[f64], dir: usize, order: u8) -> Result<Jet> {
        if dir >= self.config.dim_in {
            return Err(Error::Shape(format!(
                "direction {dir} in a {}-dimensional input",
                self.config.dim_in
            )));
        }
        match order {
            1 => {
                let xs: Vec<Dual1> = x
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| if k == dir { Dual1::variable(v) } else { Dual1::constant(v) })
                    .collect();
                let y = self.forward_scalar(params, &xs)?;
                Ok(Jet {
                    values: y.iter().map(|v| v.value).collect(),
                    d1: y.iter().map(|v| v.deriv).collect(),
                    d2: None,
                })
            }
            2 => {
                let xs: Vec<Dual2> = x
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| if k == dir { Dual2::variable(v) } else { Dual2::constant(v) })
                    .collect();
                let y = self.forward_scalar(params, &xs)?;
                Ok(Jet {
                    values: y.iter().map(|v| v.value).collect(),
                    d1: y.iter().map(|v| v.d1).collect(),
                    d2: Some(y.iter().map(|v| v.d2).collect()),
                })
            }
            _ => Err(Error::config("order", format!("must be 1 or 2, got {order}"))),
        }
    }

    /// Outputs at every row of `points`, evaluated in blocks through the
    /// matrix engine without recording gradients.
    pub fn forward_batch(&self, params: &[f64], points: &Matrix) -> Result<Matrix> {
        self.check_params(params)?;
        const BLOCK: usize = 512;
        let mut data = Vec::with_capacity(points.rows() * self.config.dim_out);
        let mut start = 0;
        while start < points.rows() {
            let end = (start + BLOCK).min(points.rows());
            let block = points.row_range(start, end);
            let mut tape = Tape::new();
            let out = self.record(&mut tape, params, &block, 0, false)?;
            data.extend_from_slice(tape.value(out.value).as_slice());
            start = end;
        }
        Matrix::from_vec(points.rows(), self.config.dim_out, data)
    }

    fn register(&self, tape: &mut Tape, params: &[f64], spec: &LayerSpec, trainable: bool) -> (Var, Var) {
        let w = Matrix::from_vec(
            spec.rows,
            spec.cols,
            params[spec.weight_offset..spec.bias_offset].to_vec(),
        )
        .expect("layout shape");
        let b = Matrix::from_vec(1, spec.rows, params[spec.bias_offset..spec.bias_offset + spec.rows].to_vec())
            .expect("layout shape");
        if trainable {
            (tape.param(w, spec.weight_offset), tape.param(b, spec.bias_offset))
        } else {
            (tape.constant(w), tape.constant(b))
        }
    }

    /// Records the batched forward pass for `points` (one per row) on `tape`.
    ///
    /// `order` 1 adds first derivatives along every coordinate, `order` 2
    /// also second derivatives; both are recorded so reverse mode flows
    /// through them. With `trainable` the weights become parameter leaves
    /// whose gradient slots match the flat layout.
    pub fn record(
        &self,
        tape: &mut Tape,
        params: &[f64],
        points: &Matrix,
        order: u8,
        trainable: bool,
    ) -> Result<TapeOutputs> {
        self.check_params(params)?;
        let d = self.config.dim_in;
        if points.cols() != d {
            return Err(Error::Shape(format!(
                "points have {} columns, network expects {d}",
                points.cols()
            )));
        }
        if order > 2 {
            return Err(Error::config("order", format!("must be at most 2, got {order}")));
        }
        let n = points.rows();
        let dirs = if order >= 1 { d } else { 0 };
        let s = self.config.soften;

        let mut ys = Vec::with_capacity(self.subnets.len());
        let mut dys: Vec<Vec<Var>> = Vec::with_capacity(self.subnets.len());
        let mut d2ys: Vec<Vec<Var>> = Vec::with_capacity(self.subnets.len());

        for (i, layers) in self.subnets.iter().enumerate() {
            let a = self.config.scales[i];
            let xhat = tape.constant(points.map(|v| a * v));
            let mut h = xhat;
            let mut dh: Vec<Var> = Vec::new();
            let mut d2h: Vec<Var> = Vec::new();
            for (l, spec) in layers.iter().enumerate() {
                let layer_trainable = trainable && !(l == 0 && self.config.freeze_first);
                let (w, b) = self.register(tape, params, spec, layer_trainable);
                let z = tape.affine(h, w, Some(b));
                if l == 0 {
                    // d xhat / d x_k = a e_k, and xhat is affine in x.
                    let mut tz: Vec<Var> = (0..dirs)
                        .map(|k| {
                            let mut e = Matrix::zeros(n, d);
                            for r in 0..n {
                                e.set(r, k, a);
                            }
                            let e = tape.constant(e);
                            tape.affine(e, w, None)
                        })
                        .collect();
                    let z = if s != 1.0 && spec.role == LayerRole::Fourier {
                        tz = tz.into_iter().map(|t| tape.scale(t, s)).collect();
                        tape.scale(z, s)
                    } else {
                        z
                    };
                    match spec.role {
                        LayerRole::Fourier => {
                            let cz = tape.cos(z);
                            let sz = tape.sin(z);
                            h = tape.concat_cols(&[cz, sz]);
                            for &t in &tz {
                                let dc = tape.jvp(cz, t);
                                let ds = tape.jvp(sz, t);
                                dh.push(tape.concat_cols(&[dc, ds]));
                                if order >= 2 {
                                    let dc2 = tape.jvp2(cz, t, None);
                                    let ds2 = tape.jvp2(sz, t, None);
                                    d2h.push(tape.concat_cols(&[dc2, ds2]));
                                }
                            }
                        }
                        LayerRole::First(act) => {
                            let f = tape.unary(unary_kind(act), z);
                            h = f;
                            for &t in &tz {
                                dh.push(tape.jvp(f, t));
                                if order >= 2 {
                                    d2h.push(tape.jvp2(f, t, None));
                                }
                            }
                        }
                        LayerRole::Output => {
                            h = z;
                            dh = tz;
                            if order >= 2 {
                                // affine in x: no curvature
                                let zero = tape.constant(Matrix::zeros(n, spec.rows));
                                d2h = vec![zero; dirs];
                            }
                        }
                        LayerRole::Hidden { .. } => unreachable!("first layer role"),
                    }
                } else {
                    let tz: Vec<Var> = dh.iter().map(|&t| tape.affine(t, w, None)).collect();
                    let sz: Vec<Var> = d2h.iter().map(|&t| tape.affine(t, w, None)).collect();
                    match spec.role {
                        LayerRole::Hidden { activation, skip } => {
                            let f = tape.unary(unary_kind(activation), z);
                            let mut ndh = Vec::with_capacity(dirs);
                            let mut nd2h = Vec::with_capacity(sz.len());
                            for k in 0..dirs {
                                ndh.push(tape.jvp(f, tz[k]));
                                if order >= 2 {
                                    nd2h.push(tape.jvp2(f, tz[k], Some(sz[k])));
                                }
                            }
                            if skip {
                                h = tape.add(f, h);
                                for k in 0..dirs {
                                    ndh[k] = tape.add(ndh[k], dh[k]);
                                    if order >= 2 {
                                        nd2h[k] = tape.add(nd2h[k], d2h[k]);
                                    }
                                }
                            } else {
                                h = f;
                            }
                            dh = ndh;
                            d2h = nd2h;
                        }
                        LayerRole::Output => {
                            h = z;
                            dh = tz;
                            d2h = sz;
                        }
                        _ => unreachable!("later layer role"),
                    }
                }
                if !tape.value(h).all_finite() {
                    return Err(Error::NonFiniteLayer { layer: l });
                }
            }
            ys.push(h);
            dys.push(dh);
            d2ys.push(d2h);
        }

        let combine = |tape: &mut Tape, parts: Vec<Var>, with_bias: bool| -> Var {
            match &self.head {
                Some(head) => {
                    let (w, b) = self.register(tape, params, head, trainable);
                    let cat = tape.concat_cols(&parts);
                    tape.affine(cat, w, if with_bias { Some(b) } else { None })
                }
                None => {
                    let terms: Vec<(Var, f64)> =
                        parts.iter().enumerate().map(|(i, &v)| (v, self.mean_weight(i))).collect();
                    tape.lin_comb(&terms)
                }
            }
        };
        let value = combine(tape, ys, true);
        let d1 = (0..dirs)
            .map(|k| combine(tape, dys.iter().map(|v| v[k]).collect(), false))
            .collect();
        let d2 = if order >= 2 {
            (0..dirs)
                .map(|k| combine(tape, d2ys.iter().map(|v| v[k]).collect(), false))
                .collect()
        } else {
            Vec::new()
        };
        Ok(TapeOutputs { value, d1, d2 })
    }

    pub fn bind<'a>(&'a self, params: &'a Parameters) -> NetworkModel<'a> {
        NetworkModel { network: self, params }
    }
}

/// A network paired with concrete parameter values.
pub struct NetworkModel<'a> {
    pub network: &'a Network,
    pub params: &'a Parameters,
}

impl FieldModel for NetworkModel<'_> {
    fn dim_in(&self) -> usize {
        self.network.config.dim_in
    }

    fn dim_out(&self) -> usize {
        self.network.config.dim_out
    }

    fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.network.forward_scalar(self.params.as_slice(), x)
    }

    fn jet(&self, x: &[f64], dir: usize, second: bool) -> Result<Jet> {
        self.network
            .forward_directional(self.params.as_slice(), x, dir, if second { 2 } else { 1 })
    }
}
