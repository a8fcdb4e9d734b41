//! Mixed-formulation and residual losses, the boundary penalty and its
//! schedule.
//!
//! Two evaluation paths exist. The pointwise path works on any
//! [`FieldModel`] through dual numbers and serves as the reference. The
//! batched path records the network on tapes and also yields the parameter
//! gradient; it is what training uses.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual2, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{FieldModel, Jet, Network};
use crate::problems::{Expr, Problem};
use crate::sampling::SampleBatch;
use crate::summation::CompensatedSum;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Mixed formulation with a learned flux.
    #[default]
    Fmpinn,
    /// Second-order residual of the original equation.
    Mpinn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fmpinn => "fmpinn",
            Method::Mpinn => "mpinn",
        }
    }

    /// Number of network outputs the method needs in dimension `d`.
    pub fn outputs(self, d: usize) -> usize {
        match self {
            Method::Fmpinn => d + 1,
            Method::Mpinn => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Divergence residual (mixed) or full second-order residual (baseline).
    pub interior_pde: f64,
    /// Flux mismatch `|phi - A grad u|^2`; zero for the baseline.
    pub interior_flux: f64,
    pub boundary: f64,
    pub gamma: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(interior_pde: f64, interior_flux: f64, boundary: f64, beta: f64, gamma: f64) -> Self {
        Self {
            interior_pde,
            interior_flux,
            boundary,
            gamma,
            beta,
            total: interior_pde + beta * interior_flux + gamma * boundary,
        }
    }
}

/// Boundary penalty multiplier: `gamma0` growing to `500 gamma0` at the
/// fractions 0.1, 0.2, 0.25, 0.5, 0.75 of the epoch budget, each interval
/// closed on the left.
pub fn gamma_schedule(epoch: u64, max_epochs: u64, gamma0: f64) -> Result<f64> {
    if epoch >= max_epochs {
        return Err(Error::config(
            "epoch",
            format!("{epoch} outside a budget of {max_epochs} epochs"),
        ));
    }
    // Integer comparisons: epoch < f * M with f = p/q  <=>  q * epoch < p * M.
    let (e, m) = (epoch as u128, max_epochs as u128);
    let factor = if 10 * e < m {
        1.0
    } else if 5 * e < m {
        10.0
    } else if 4 * e < m {
        50.0
    } else if 2 * e < m {
        100.0
    } else if 4 * e < 3 * m {
        200.0
    } else {
        500.0
    };
    Ok(factor * gamma0)
}

/// Signature of a boundary-penalty schedule, so alternatives can be injected.
pub type GammaScheduleFn = fn(u64, u64, f64) -> Result<f64>;

fn lift(x: &[f64], k: usize) -> Vec<Dual2> {
    x.iter()
        .enumerate()
        .map(|(j, &v)| if j == k { Dual2::variable(v) } else { Dual2::constant(v) })
        .collect()
}

/// A closed-form field `(u, phi_1, ..., phi_d)` standing in for a network.
#[derive(Clone, Debug)]
pub struct ExprStub {
    dim: usize,
    outputs: Vec<Expr>,
}

impl ExprStub {
    /// `u` followed by flux components (empty for a single-output stub).
    pub fn new(dim: usize, u: Expr, flux: Vec<Expr>) -> Self {
        let mut outputs = vec![u];
        outputs.extend(flux);
        Self { dim, outputs }
    }

    /// The exact solution of `problem` with its flux `A grad u`.
    pub fn exact(problem: &Problem) -> Result<Self> {
        let (Some(u), Some(grad)) = (problem.exact_expr(), problem.exact_gradient_exprs()) else {
            return Err(Error::config("problem", format!("{} has no closed-form solution", problem.name())));
        };
        let a = problem.coefficient_expr();
        let flux = grad.iter().map(|g| a.clone() * g.clone()).collect();
        Ok(Self::new(problem.dim(), u.clone(), flux))
    }

    /// The exact solution alone, for the residual formulation.
    pub fn exact_solution_only(problem: &Problem) -> Result<Self> {
        let u = problem
            .exact_expr()
            .ok_or_else(|| Error::config("problem", format!("{} has no closed-form solution", problem.name())))?;
        Ok(Self::new(problem.dim(), u.clone(), vec![]))
    }
}

impl FieldModel for ExprStub {
    fn dim_in(&self) -> usize {
        self.dim
    }

    fn dim_out(&self) -> usize {
        self.outputs.len()
    }

    fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.outputs.iter().map(|e| e.value(x)).collect()
    }

    fn jet(&self, x: &[f64], dir: usize, second: bool) -> Result<Jet> {
        let xs = lift(x, dir);
        let ys = self.outputs.iter().map(|e| e.eval(&xs)).collect::<Result<Vec<Dual2>>>()?;
        Ok(Jet {
            values: ys.iter().map(|v| v.value).collect(),
            d1: ys.iter().map(|v| v.d1).collect(),
            d2: second.then(|| ys.iter().map(|v| v.d2).collect()),
        })
    }
}

fn check_outputs(model: &dyn FieldModel, needed: usize, d: usize) -> Result<()> {
    if model.dim_in() != d {
        return Err(Error::Shape(format!("model takes {} inputs, problem has {d}", model.dim_in())));
    }
    if model.dim_out() < needed {
        return Err(Error::Shape(format!("model has {} outputs, need {needed}", model.dim_out())));
    }
    Ok(())
}

/// Pointwise mixed interior loss: `(|Omega|/N) sum |-div phi - f|^2` and
/// `(|Omega|/N) sum |phi - A grad u|^2`.
pub fn fmpinn_interior_loss(
    model: &dyn FieldModel,
    interior: &Matrix,
    domain_measure: f64,
    problem: &Problem,
) -> Result<(f64, f64)> {
    let d = problem.dim();
    check_outputs(model, d + 1, d)?;
    let mut pde = CompensatedSum::new();
    let mut flux = CompensatedSum::new();
    for x in interior.iter_rows() {
        let a = problem.coefficient(x)?;
        let f = problem.forcing(x)?;
        let mut div = 0.0;
        let mut mismatch = 0.0;
        for k in 0..d {
            let jet = model.jet(x, k, false)?;
            div += jet.d1[1 + k];
            let e = jet.values[1 + k] - a * jet.d1[0];
            mismatch += e * e;
        }
        let r = -div - f;
        pde.add(r * r);
        flux.add(mismatch);
    }
    let w = domain_measure / interior.rows() as f64;
    Ok((w * pde.value(), w * flux.value()))
}

/// Pointwise boundary loss `(1/N) sum (u - g)^2`.
pub fn boundary_loss(model: &dyn FieldModel, boundary: &Matrix, problem: &Problem) -> Result<f64> {
    check_outputs(model, 1, problem.dim())?;
    if boundary.rows() == 0 {
        return Err(Error::config("n_boundary", "must be positive"));
    }
    let mut acc = CompensatedSum::new();
    for x in boundary.iter_rows() {
        let e = model.values(x)?[0] - problem.boundary(x)?;
        acc.add(e * e);
    }
    Ok(acc.value() / boundary.rows() as f64)
}

/// Pointwise second-order residual `(1/N) sum |-div(A grad u) - f|^2`.
pub fn mpinn_interior_loss(model: &dyn FieldModel, interior: &Matrix, problem: &Problem) -> Result<f64> {
    let d = problem.dim();
    check_outputs(model, 1, d)?;
    let mut acc = CompensatedSum::new();
    for x in interior.iter_rows() {
        let a = problem.coefficient(x)?;
        let f = problem.forcing(x)?;
        let mut div = 0.0;
        for k in 0..d {
            let jet = model.jet(x, k, true)?;
            let d2 = jet.d2.as_ref().expect("second-order jet")[0];
            div += problem.coefficient_partial(x, k)? * jet.d1[0] + a * d2;
        }
        let r = -div - f;
        acc.add(r * r);
    }
    Ok(acc.value() / interior.rows() as f64)
}

/// Pointwise total loss of either method.
pub fn total_loss(
    model: &dyn FieldModel,
    batch: &SampleBatch,
    problem: &Problem,
    method: Method,
    beta: f64,
    gamma: f64,
) -> Result<LossBreakdown> {
    let bd = boundary_loss(model, &batch.boundary, problem)?;
    Ok(match method {
        Method::Fmpinn => {
            let (pde, flux) = fmpinn_interior_loss(model, &batch.interior, batch.domain_measure, problem)?;
            LossBreakdown::new(pde, flux, bd, beta, gamma)
        }
        Method::Mpinn => {
            let res = mpinn_interior_loss(model, &batch.interior, problem)?;
            LossBreakdown::new(res, 0.0, bd, 0.0, gamma)
        }
    })
}

/// Pointwise mixed total loss.
pub fn fmpinn_total_loss(
    model: &dyn FieldModel,
    batch: &SampleBatch,
    problem: &Problem,
    beta: f64,
    gamma: f64,
) -> Result<LossBreakdown> {
    total_loss(model, batch, problem, Method::Fmpinn, beta, gamma)
}

/// Problem data at the collocation points, computed once per batch.
struct PointData {
    forcing: Vec<f64>,
    coefficient: Vec<f64>,
    /// `d_k A` per direction (baseline only).
    coefficient_partials: Vec<Vec<f64>>,
    boundary: Vec<f64>,
}

impl PointData {
    fn gather(problem: &Problem, batch: &SampleBatch, method: Method) -> Result<Self> {
        let d = problem.dim();
        let mut forcing = Vec::with_capacity(batch.interior.rows());
        let mut coefficient = Vec::with_capacity(batch.interior.rows());
        let mut partials = vec![Vec::new(); if method == Method::Mpinn { d } else { 0 }];
        for x in batch.interior.iter_rows() {
            forcing.push(problem.forcing(x)?);
            coefficient.push(problem.coefficient(x)?);
            for (k, p) in partials.iter_mut().enumerate() {
                p.push(problem.coefficient_partial(x, k)?);
            }
        }
        let boundary = batch
            .boundary
            .iter_rows()
            .map(|x| problem.boundary(x))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            forcing,
            coefficient,
            coefficient_partials: partials,
            boundary,
        })
    }
}

/// Batched loss evaluation and (optionally) its parameter gradient.
pub struct BatchedLoss<'a> {
    pub network: &'a Network,
    pub problem: &'a Problem,
    pub method: Method,
    pub beta: f64,
    /// Collocation points per recorded tape.
    pub chunk: usize,
}

impl BatchedLoss<'_> {
    /// Loss parts over the whole batch. When `grad` is given, the gradient of
    /// the total with respect to every parameter is added into it.
    pub fn evaluate(
        &self,
        params: &[f64],
        batch: &SampleBatch,
        gamma: f64,
        mut grad: Option<&mut [f64]>,
    ) -> Result<LossBreakdown> {
        let d = self.problem.dim();
        let net_cfg = self.network.config();
        if net_cfg.dim_in != d {
            return Err(Error::config("network.dim_in", format!("{} does not match problem dimension {d}", net_cfg.dim_in)));
        }
        if net_cfg.dim_out < self.method.outputs(d) {
            return Err(Error::config(
                "network.dim_out",
                format!("{} outputs, {} needs {}", net_cfg.dim_out, self.method.name(), self.method.outputs(d)),
            ));
        }
        if batch.interior.rows() == 0 || batch.boundary.rows() == 0 {
            return Err(Error::config("batch", "needs interior and boundary points"));
        }
        if let Some(g) = grad.as_deref() {
            if g.len() != self.network.param_count() {
                return Err(Error::Shape(format!("gradient buffer of {} for {} parameters", g.len(), self.network.param_count())));
            }
        }
        let data = PointData::gather(self.problem, batch, self.method)?;
        let chunk = self.chunk.max(1);
        let n_in = batch.interior.rows();
        let n_bd = batch.boundary.rows();
        let trainable = grad.is_some();
        let interior_weight = match self.method {
            Method::Fmpinn => batch.domain_measure / n_in as f64,
            Method::Mpinn => 1.0 / n_in as f64,
        };

        let mut pde = CompensatedSum::new();
        let mut flux = CompensatedSum::new();
        let mut bd = CompensatedSum::new();

        let mut start = 0;
        while start < n_in {
            let end = (start + chunk).min(n_in);
            let pts = batch.interior.row_range(start, end);
            let mut tape = Tape::new();
            let order = if self.method == Method::Fmpinn { 1 } else { 2 };
            let out = self.network.record(&mut tape, params, &pts, order, trainable)?;
            let neg_f: Vec<f64> = data.forcing[start..end].iter().map(|f| -f).collect();
            let coef = data.coefficient[start..end].to_vec();
            let objective = match self.method {
                Method::Fmpinn => {
                    let mut div_terms = Vec::with_capacity(d);
                    let mut mismatch = Vec::with_capacity(d);
                    for k in 0..d {
                        div_terms.push((tape.columns(out.d1[k], 1 + k, 1), -1.0));
                        let phi = tape.columns(out.value, 1 + k, 1);
                        let du = tape.columns(out.d1[k], 0, 1);
                        let a_du = tape.mul_const(du, coef.clone());
                        let e = tape.sub(phi, a_du);
                        mismatch.push((tape.sum_squares(e), interior_weight));
                    }
                    let neg_div = tape.lin_comb(&div_terms);
                    let r = tape.add_const(neg_div, &neg_f);
                    let rs = tape.sum_squares(r);
                    let p = tape.scale(rs, interior_weight);
                    let fl = tape.lin_comb(&mismatch);
                    pde.add(tape.scalar(p));
                    flux.add(tape.scalar(fl));
                    tape.lin_comb(&[(p, 1.0), (fl, self.beta)])
                }
                Method::Mpinn => {
                    let mut terms: Vec<(Var, f64)> = Vec::with_capacity(2 * d);
                    for k in 0..d {
                        let du = tape.columns(out.d1[k], 0, 1);
                        let d2u = tape.columns(out.d2[k], 0, 1);
                        let t1 = tape.mul_const(du, data.coefficient_partials[k][start..end].to_vec());
                        let t2 = tape.mul_const(d2u, coef.clone());
                        terms.push((t1, -1.0));
                        terms.push((t2, -1.0));
                    }
                    let neg_div = tape.lin_comb(&terms);
                    let r = tape.add_const(neg_div, &neg_f);
                    let rs = tape.sum_squares(r);
                    let p = tape.scale(rs, interior_weight);
                    pde.add(tape.scalar(p));
                    p
                }
            };
            if let Some(g) = grad.as_deref_mut() {
                tape.accumulate_gradient(objective, g)?;
            } else if let Some(f) = tape.fault() {
                return Err(Error::Numeric(f.to_string()));
            }
            start = end;
        }

        let mut start = 0;
        while start < n_bd {
            let end = (start + chunk).min(n_bd);
            let pts = batch.boundary.row_range(start, end);
            let mut tape = Tape::new();
            let out = self.network.record(&mut tape, params, &pts, 0, trainable)?;
            let u = tape.columns(out.value, 0, 1);
            let neg_g: Vec<f64> = data.boundary[start..end].iter().map(|g| -g).collect();
            let e = tape.add_const(u, &neg_g);
            let s = tape.sum_squares(e);
            let b = tape.scale(s, 1.0 / n_bd as f64);
            bd.add(tape.scalar(b));
            if let Some(g) = grad.as_deref_mut() {
                let objective = tape.scale(b, gamma);
                tape.accumulate_gradient(objective, g)?;
            }
            start = end;
        }

        let beta = if self.method == Method::Fmpinn { self.beta } else { 0.0 };
        let out = LossBreakdown::new(pde.value(), flux.value(), bd.value(), beta, gamma);
        if !out.total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {:?}", out)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{c, x, Forcing, TestLayout};
    use crate::sampling::BoxDomain;

    fn toy(coef: Expr, f: f64) -> Problem {
        Problem::new(
            "toy",
            BoxDomain::cube(1, 0.0, 1.0).unwrap(),
            coef,
            Forcing::Given(c(f)),
            c(0.0),
            None,
            vec![],
            TestLayout::Random { n: 10 },
        )
        .unwrap()
    }

    fn column(v: &[f64]) -> Matrix {
        Matrix::column(v.to_vec())
    }

    #[test]
    fn gamma_table() {
        let m = 50_000;
        let cases = [
            (0, 10.0),
            (4999, 10.0),
            (5000, 100.0),
            (9999, 100.0),
            (10000, 500.0),
            (12499, 500.0),
            (12500, 1000.0),
            (24999, 1000.0),
            (25000, 2000.0),
            (37499, 2000.0),
            (37500, 5000.0),
            (49999, 5000.0),
        ];
        for (e, g) in cases {
            assert_eq!(gamma_schedule(e, m, 10.0).unwrap(), g, "epoch {e}");
        }
        assert!(gamma_schedule(m, m, 10.0).is_err());
    }

    #[test]
    fn zero_field_against_unit_forcing() {
        let p = toy(c(1.0), 1.0);
        let zero = ExprStub::new(1, c(0.0), vec![c(0.0)]);
        let pts = column(&[0.1, 0.4, 0.8]);
        let (pde, flux) = fmpinn_interior_loss(&zero, &pts, 1.0, &p).unwrap();
        assert_eq!((pde, flux), (1.0, 0.0));
        let single = ExprStub::new(1, c(0.0), vec![]);
        assert_eq!(mpinn_interior_loss(&single, &pts, &p).unwrap(), 1.0);
    }

    #[test]
    fn linear_flux_has_unit_divergence() {
        let stub = ExprStub::new(1, c(0.0), vec![x(0)]);
        for &t in &[0.2, 0.7] {
            assert_eq!(stub.jet(&[t], 0, false).unwrap().d1[1], 1.0);
        }
        // -div phi - f vanishes for f = -1
        let p = toy(c(1.0), -1.0);
        let (pde, _) = fmpinn_interior_loss(&stub, &column(&[0.3, 0.6]), 1.0, &p).unwrap();
        assert_eq!(pde, 0.0);
    }

    #[test]
    fn quadratic_solves_constant_forcing() {
        let p = toy(c(1.0), -2.0);
        let stub = ExprStub::new(1, x(0) * x(0), vec![]);
        assert_eq!(mpinn_interior_loss(&stub, &column(&[0.1, 0.5, 0.9]), &p).unwrap(), 0.0);
    }

    #[test]
    fn boundary_loss_cases() {
        let p = toy(c(1.0), 1.0);
        let pts = column(&[0.0, 1.0]);
        assert_eq!(boundary_loss(&ExprStub::new(1, c(0.0), vec![]), &pts, &p).unwrap(), 0.0);
        assert_eq!(boundary_loss(&ExprStub::new(1, c(1.0), vec![]), &pts, &p).unwrap(), 1.0);
    }

    #[test]
    fn breakdown_arithmetic() {
        let b = LossBreakdown::new(2.0, 3.0, 0.5, 10.0, 10.0);
        assert_eq!(b.total, 37.0);
        assert_eq!(LossBreakdown::new(0.0, 0.0, 0.0, 10.0, 10.0).total, 0.0);
    }
}
