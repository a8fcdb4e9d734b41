use std::f64::consts::PI;

use super::{c, differentiate_forcing, x, Expr, Forcing, Problem, TestLayout};
use crate::error::{Error, Result};
use crate::sampling::BoxDomain;

/// Names accepted by [`by_name`] (each may carry an `_eps...` suffix where
/// the problem has scale parameters).
pub const CATALOG_NAMES: [&str; 7] = ["ex1", "ex2", "ex3", "ex4", "ex5", "ex6", "rough1d"];

fn check_scale(field: &str, eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::config(field, format!("must be positive, got {eps}")));
    }
    let inv = 1.0 / eps;
    if (inv - inv.round()).abs() > 1e-9 * inv.max(1.0) {
        return Err(Error::config(field, format!("1/{eps} is not an integer")));
    }
    Ok(())
}

/// `sin` or `cos` of `2 pi x_k / eps`, written as a multiple of `x_k`.
fn wave(k: usize, eps: f64) -> Expr {
    c(2.0 * PI / eps) * x(k)
}

fn unit_grid_1d() -> TestLayout {
    TestLayout::Grid {
        h: 1.0 / 999.0,
        slice: vec![],
    }
}

/// Two-scale problem on `[0, 1]`: `A = 1 / (2 + cos(2 pi x / eps))`, `f = 1`.
pub fn example_1d_two_scale(eps: f64) -> Result<Problem> {
    check_scale("epsilon", eps)?;
    let coefficient = (c(2.0) + wave(0, eps).cos()).recip();
    let s = wave(0, eps).sin();
    let cs = wave(0, eps).cos();
    let four_pi2 = 4.0 * PI * PI;
    let u = x(0) - x(0).square()
        + c(eps)
            * (c(1.0 / (4.0 * PI)) * s.clone() - c(1.0 / (2.0 * PI)) * x(0) * s
                - c(eps / four_pi2) * cs
                + c(eps / four_pi2));
    Problem::new(
        format!("ex1_eps{eps}"),
        BoxDomain::cube(1, 0.0, 1.0)?,
        coefficient,
        Forcing::Given(c(1.0)),
        u.clone(),
        Some(u),
        vec![eps],
        unit_grid_1d(),
    )
}

/// Three-scale problem on `[0, 1]` with a product coefficient; the forcing
/// is generated from the closed-form solution.
pub fn example_1d_three_scale(eps1: f64, eps2: f64) -> Result<Problem> {
    check_scale("epsilon1", eps1)?;
    check_scale("epsilon2", eps2)?;
    let coefficient = (c(2.0) + wave(0, eps1).cos()) * (c(2.0) + wave(0, eps2).cos());
    let u = x(0) - x(0).square()
        + c(eps1 / (4.0 * PI)) * wave(0, eps1).sin()
        + c(eps2 / (4.0 * PI)) * wave(0, eps2).sin();
    let forcing = differentiate_forcing(&coefficient, &u);
    Problem::new(
        format!("ex2_eps{eps1}_{eps2}"),
        BoxDomain::cube(1, 0.0, 1.0)?,
        coefficient,
        forcing,
        u.clone(),
        Some(u),
        vec![eps1, eps2],
        unit_grid_1d(),
    )
}

/// Two-scale coefficient on `[-1, 1]^2` with `f = 5`, `g = 0`.
pub fn example_2d_two_scale(eps: f64) -> Result<Problem> {
    check_scale("epsilon", eps)?;
    let s1 = c(1.5) + wave(0, eps).sin();
    let s2 = c(1.5) + wave(1, eps).sin();
    let c1 = c(1.5) + wave(0, eps).cos();
    let coefficient = s1 / s2.clone()
        + s2 / c1
        + (c(4.0) * x(0).square() * x(1).square()).sin()
        + c(1.0);
    Problem::new(
        format!("ex3_eps{eps}"),
        BoxDomain::cube(2, -1.0, 1.0)?,
        coefficient,
        Forcing::Given(c(5.0)),
        c(0.0),
        None,
        vec![eps],
        TestLayout::Grid {
            h: 1.0 / 128.0,
            slice: vec![],
        },
    )
}

/// Product of five two-direction oscillations on `[-1, 1]^2`, `f = 1`, `g = 0`.
pub fn example_2d_multifreq() -> Result<Problem> {
    let mut coefficient = c(1.0);
    for i in 1..=5 {
        let k = 2f64.powi(i) * PI;
        let along = c(1.0) + c(0.5) * (c(k) * (x(0) + x(1))).cos();
        let across = c(1.0) + c(0.5) * (c(k) * (x(1) - c(3.0) * x(0))).sin();
        coefficient = coefficient * along * across;
    }
    Problem::new(
        "ex4",
        BoxDomain::cube(2, -1.0, 1.0)?,
        coefficient,
        Forcing::Given(c(1.0)),
        c(0.0),
        None,
        vec![],
        TestLayout::Grid {
            h: 1.0 / 128.0,
            slice: vec![],
        },
    )
}

/// `A = 2 + sin sin sin` on `[0, 1]^3`, `f = 20`, `g = 0`.
pub fn example_3d(eps: f64) -> Result<Problem> {
    check_scale("epsilon", eps)?;
    let coefficient = c(2.0) + wave(0, eps).sin() * wave(1, eps).sin() * wave(2, eps).sin();
    Problem::new(
        format!("ex5_eps{eps}"),
        BoxDomain::cube(3, 0.0, 1.0)?,
        coefficient,
        Forcing::Given(c(20.0)),
        c(0.0),
        None,
        vec![eps],
        TestLayout::Grid {
            h: 1.0 / 64.0,
            slice: vec![(2, 0.3125)],
        },
    )
}

/// Eight-dimensional problem with `u = prod sin(pi x_j)` on `[0, 1]^8`.
pub fn example_8d() -> Result<Problem> {
    let freqs = [2.0, 4.0, 8.0, 16.0, 16.0, 8.0, 4.0, 2.0];
    let sum = (0..8)
        .map(|j| (c(freqs[j] * PI) * x(j)).cos())
        .reduce(|a, b| a + b)
        .expect("eight terms");
    let coefficient = c(1.0) + c(0.125) * sum;
    let u = (0..8)
        .map(|j| (c(PI) * x(j)).sin())
        .reduce(|a, b| a * b)
        .expect("eight factors");
    let forcing = differentiate_forcing(&coefficient, &u);
    Problem::new(
        "ex6",
        BoxDomain::cube(8, 0.0, 1.0)?,
        coefficient,
        forcing,
        c(0.0),
        Some(u),
        vec![],
        TestLayout::Random { n: 1600 },
    )
}

/// The one-dimensional problem on which the second-order residual loss is
/// known to struggle: `A = (1 + x^2) / (2 + sin(2 pi x / eps))`,
/// `f = 5 cos(pi x)`, homogeneous boundary.
pub fn rough_1d(eps: f64) -> Result<Problem> {
    check_scale("epsilon", eps)?;
    let coefficient = (c(1.0) + x(0).square()) / (c(2.0) + wave(0, eps).sin());
    Problem::new(
        format!("rough1d_eps{eps}"),
        BoxDomain::cube(1, 0.0, 1.0)?,
        coefficient,
        Forcing::Given(c(5.0) * (c(PI) * x(0)).cos()),
        c(0.0),
        None,
        vec![eps],
        unit_grid_1d(),
    )
}

fn parse_eps(name: &str, text: &str) -> Result<Vec<f64>> {
    text.split('_')
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::UnknownProblem(name.to_string()))
        })
        .collect()
}

/// Resolves `ex1_eps0.01`, `ex2`, `ex3_eps0.05`, `ex4`, `ex5_eps0.1`, `ex6`,
/// `rough1d_eps0.03125`. Omitted scales take the benchmark defaults.
pub fn by_name(name: &str) -> Result<Problem> {
    let (base, eps) = match name.split_once("_eps") {
        Some((b, rest)) => (b, Some(parse_eps(name, rest)?)),
        None => (name, None),
    };
    let unknown = || Error::UnknownProblem(name.to_string());
    let one = |default: f64| -> Result<f64> {
        match &eps {
            None => Ok(default),
            Some(v) if v.len() == 1 => Ok(v[0]),
            _ => Err(unknown()),
        }
    };
    match base {
        "ex1" => example_1d_two_scale(one(0.1)?),
        "ex2" => match eps.as_deref() {
            None => example_1d_three_scale(0.1, 0.01),
            Some([a, b]) => example_1d_three_scale(*a, *b),
            _ => Err(unknown()),
        },
        "ex3" => example_2d_two_scale(one(0.05)?),
        "ex4" if eps.is_none() => example_2d_multifreq(),
        "ex5" => example_3d(one(0.1)?),
        "ex6" if eps.is_none() => example_8d(),
        "rough1d" => rough_1d(one(1.0 / 32.0)?),
        _ => Err(unknown()),
    }
}
