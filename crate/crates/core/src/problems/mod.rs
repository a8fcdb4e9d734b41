//! Benchmark problems `-div(A grad u) = f` on boxes with Dirichlet data.

mod catalog;
mod expr;

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

pub use catalog::{
    by_name, example_1d_three_scale, example_1d_two_scale, example_2d_multifreq,
    example_2d_two_scale, example_3d, example_8d, rough_1d, CATALOG_NAMES,
};
pub use expr::{c, x, Expr};

use crate::autodiff::{Dual1, Dual2, Primitive, Scalar};
use crate::error::{Error, Result};
use crate::sampling::{sample_interior, stream_rng, BoxDomain, Stream};

/// Right-hand side of the equation.
#[derive(Clone, Debug)]
pub enum Forcing {
    Given(Expr),
    /// `f = -div(A grad u)` evaluated by second-order forward differentiation.
    Derived { coefficient: Expr, solution: Expr },
}

impl Forcing {
    pub fn eval(&self, xs: &[f64]) -> Result<f64> {
        match self {
            Forcing::Given(e) => e.value(xs),
            Forcing::Derived {
                coefficient,
                solution,
            } => {
                let mut acc = 0.0;
                for k in 0..xs.len() {
                    let lifted = lift::<Dual2>(xs, k, Dual2::variable);
                    let a = coefficient.eval(&lifted)?;
                    let u = solution.eval(&lifted)?;
                    acc += a.d1 * u.d1 + a.value * u.d2;
                }
                let f = -acc;
                if !f.is_finite() {
                    return Err(Error::Numeric(format!("non-finite forcing at {xs:?}")));
                }
                Ok(f)
            }
        }
    }

    fn primitives(&self) -> BTreeSet<Primitive> {
        match self {
            Forcing::Given(e) => e.primitives(),
            Forcing::Derived {
                coefficient,
                solution,
            } => {
                let mut p = coefficient.primitives();
                p.extend(solution.primitives());
                p
            }
        }
    }
}

/// Forcing `-sum_k d_k(A d_k u)` for a coefficient and a solution that are
/// twice differentiable through the primitive set.
pub fn differentiate_forcing(coefficient: &Expr, solution: &Expr) -> Forcing {
    Forcing::Derived {
        coefficient: coefficient.clone(),
        solution: solution.clone(),
    }
}

fn lift<S: Scalar>(xs: &[f64], k: usize, active: impl Fn(f64) -> S) -> Vec<S> {
    xs.iter()
        .enumerate()
        .map(|(j, &v)| if j == k { active(v) } else { S::constant(v) })
        .collect()
}

/// How the test set of a problem is laid out.
#[derive(Clone, Debug, PartialEq)]
pub enum TestLayout {
    /// Equidistant grid with spacing `h`, optionally pinning coordinates.
    Grid { h: f64, slice: Vec<(usize, f64)> },
    /// Uniform random points from the dedicated test stream.
    Random { n: usize },
}

/// One boundary value problem.
#[derive(Clone, Debug)]
pub struct Problem {
    name: String,
    domain: BoxDomain,
    coefficient: Expr,
    forcing: Forcing,
    boundary: Expr,
    exact: Option<Expr>,
    exact_gradient: Option<Vec<Expr>>,
    epsilons: Vec<f64>,
    test_layout: TestLayout,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        domain: BoxDomain,
        coefficient: Expr,
        forcing: Forcing,
        boundary: Expr,
        exact: Option<Expr>,
        epsilons: Vec<f64>,
        test_layout: TestLayout,
    ) -> Result<Self> {
        let d = domain.dim();
        let mut exprs = vec![("coefficient", &coefficient), ("boundary", &boundary)];
        if let Some(u) = &exact {
            exprs.push(("solution", u));
        }
        if let Forcing::Given(f) = &forcing {
            exprs.push(("forcing", f));
        }
        for (field, e) in exprs {
            if e.arity() > d {
                return Err(Error::config(
                    field,
                    format!("uses x{} in a {d}-dimensional problem", e.arity()),
                ));
            }
        }
        let exact_gradient = exact.as_ref().map(|u| (0..d).map(|k| u.diff(k)).collect());
        Ok(Self {
            name: name.into(),
            domain,
            coefficient,
            forcing,
            boundary,
            exact,
            exact_gradient,
            epsilons,
            test_layout,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn test_layout(&self) -> &TestLayout {
        &self.test_layout
    }

    pub fn coefficient_expr(&self) -> &Expr {
        &self.coefficient
    }

    pub fn forcing_def(&self) -> &Forcing {
        &self.forcing
    }

    pub fn exact_expr(&self) -> Option<&Expr> {
        self.exact.as_ref()
    }

    /// Symbolic gradient of the exact solution.
    pub fn exact_gradient_exprs(&self) -> Option<&[Expr]> {
        self.exact_gradient.as_deref()
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn coefficient(&self, xs: &[f64]) -> Result<f64> {
        self.coefficient.value(xs)
    }

    /// `d_k A` by first-order forward differentiation.
    pub fn coefficient_partial(&self, xs: &[f64], k: usize) -> Result<f64> {
        let lifted = lift::<Dual1>(xs, k, Dual1::variable);
        Ok(self.coefficient.eval(&lifted)?.deriv)
    }

    pub fn forcing(&self, xs: &[f64]) -> Result<f64> {
        self.forcing.eval(xs)
    }

    pub fn boundary(&self, xs: &[f64]) -> Result<f64> {
        self.boundary.value(xs)
    }

    pub fn exact(&self, xs: &[f64]) -> Result<Option<f64>> {
        self.exact.as_ref().map(|u| u.value(xs)).transpose()
    }

    /// `A grad u` of the exact solution, from its symbolic gradient.
    pub fn exact_flux(&self, xs: &[f64]) -> Result<Option<Vec<f64>>> {
        let Some(grad) = &self.exact_gradient else {
            return Ok(None);
        };
        let a = self.coefficient(xs)?;
        let flux = grad
            .iter()
            .map(|g| Ok(a * g.value(xs)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Some(flux))
    }

    /// Every primitive operation used by the problem's expressions.
    pub fn primitive_audit(&self) -> BTreeSet<Primitive> {
        let mut p = self.coefficient.primitives();
        p.extend(self.forcing.primitives());
        p.extend(self.boundary.primitives());
        if let Some(u) = &self.exact {
            p.extend(u.primitives());
        }
        p
    }

    /// Minimum and maximum of the coefficient over `n` random interior points.
    pub fn ellipticity_probe(&self, n: usize, seed: u64) -> Result<(f64, f64)> {
        let pts = sample_interior(n, &self.domain, &mut stream_rng(seed, Stream::Probe))?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in pts.iter_rows() {
            let a = self.coefficient(p)?;
            lo = lo.min(a);
            hi = hi.max(a);
        }
        Ok((lo, hi))
    }

    /// Loads a user problem from a TOML file.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: CustomProblem =
            toml::from_str(text).map_err(|e| Error::Parse(format!("problem file: {e}")))?;
        spec.build()
    }
}

/// File format for user-defined problems.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomProblem {
    name: String,
    lo: Vec<f64>,
    hi: Vec<f64>,
    coefficient: String,
    forcing: Option<String>,
    boundary: Option<String>,
    solution: Option<String>,
    #[serde(default)]
    epsilons: Vec<f64>,
    test_h: Option<f64>,
    test_points: Option<usize>,
}

impl CustomProblem {
    fn build(self) -> Result<Problem> {
        let domain = BoxDomain::new(self.lo, self.hi)?;
        let coefficient = Expr::parse(&self.coefficient)?;
        let solution = self.solution.as_deref().map(Expr::parse).transpose()?;
        let forcing = match (&self.forcing, &solution) {
            (Some(f), _) => Forcing::Given(Expr::parse(f)?),
            (None, Some(u)) => differentiate_forcing(&coefficient, u),
            (None, None) => {
                return Err(Error::config("forcing", "required when no solution is given"))
            }
        };
        let boundary = match (&self.boundary, &solution) {
            (Some(g), _) => Expr::parse(g)?,
            (None, Some(u)) => u.clone(),
            (None, None) => {
                return Err(Error::config("boundary", "required when no solution is given"))
            }
        };
        let test_layout = match (self.test_h, self.test_points) {
            (Some(h), None) => TestLayout::Grid { h, slice: vec![] },
            (None, Some(n)) => TestLayout::Random { n },
            (None, None) => TestLayout::Random { n: 1000 },
            (Some(_), Some(_)) => {
                return Err(Error::config("test_h", "give either test_h or test_points"))
            }
        };
        Problem::new(
            self.name,
            domain,
            coefficient,
            forcing,
            boundary,
            solution,
            self.epsilons,
            test_layout,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forcing_of_a_quadratic() {
        let f = differentiate_forcing(&c(1.0), &(x(0) * x(0)));
        assert!((f.eval(&[0.3]).unwrap() + 2.0).abs() < 1e-15);
    }

    #[test]
    fn forcing_of_the_laplacian_eigenfunction() {
        let u = (0..8).map(|j| (c(std::f64::consts::PI) * x(j)).sin()).reduce(|a, b| a * b).unwrap();
        let f = differentiate_forcing(&c(1.0), &u);
        let p = [0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9];
        let uv = u.value(&p).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((f.eval(&p).unwrap() - 8.0 * pi2 * uv).abs() < 1e-12);
    }

    #[test]
    fn custom_problem_from_text() {
        let p = Problem::from_toml_str(
            r#"
name = "bump"
lo = [0.0]
hi = [1.0]
coefficient = "1 + x1^2"
solution = "sin(pi*x1)"
test_h = 0.01
"#,
        )
        .unwrap();
        let xs = [0.3];
        let pi = std::f64::consts::PI;
        // -(A u')' = -(2x pi cos(pi x) - (1+x^2) pi^2 sin(pi x))
        let expect = -(2.0 * 0.3 * pi * (pi * 0.3).cos() - 1.09 * pi * pi * (pi * 0.3).sin());
        assert!((p.forcing(&xs).unwrap() - expect).abs() < 1e-12);
        assert_eq!(p.boundary(&[1.0]).unwrap(), p.exact(&[1.0]).unwrap().unwrap());
    }

    #[test]
    fn custom_problem_rejects_bad_input() {
        let missing = r#"
name = "m"
lo = [0.0]
hi = [1.0]
coefficient = "1"
"#;
        assert!(matches!(
            Problem::from_toml_str(missing),
            Err(Error::Config { .. })
        ));
        let arity = r#"
name = "m"
lo = [0.0]
hi = [1.0]
coefficient = "1 + x2"
forcing = "1"
boundary = "0"
"#;
        assert!(Problem::from_toml_str(arity).is_err());
    }
}
