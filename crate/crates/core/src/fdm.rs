//! Finite-difference reference solver on tensor grids.
//!
//! The operator is the flux-conservative `2d + 1` point stencil with
//! harmonic-mean face coefficients. Dirichlet nodes are eliminated, which
//! leaves a symmetric positive definite system solved by Jacobi
//! preconditioned conjugate gradients.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::sampling::{grid_coordinate, grid_intervals, BoxDomain};
use crate::summation::CompensatedSum;

const MAGIC: &[u8; 8] = b"FMPGRID1";

/// Nodal values on a uniform tensor grid, last coordinate varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    domain: BoxDomain,
    h: f64,
    intervals: Vec<usize>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: BoxDomain, h: f64, values: Vec<f64>) -> Result<Self> {
        let intervals = grid_intervals(&domain, h)?;
        let expected: usize = intervals.iter().map(|n| n + 1).product();
        if values.len() != expected {
            return Err(Error::Shape(format!("grid needs {expected} values, got {}", values.len())));
        }
        Ok(Self {
            domain,
            h,
            intervals,
            values,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(domain: BoxDomain, h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Self> {
        let intervals = grid_intervals(&domain, h)?;
        let grid = Grid::new(&domain, &intervals);
        let mut x = vec![0.0; domain.dim()];
        let mut values = Vec::with_capacity(grid.len());
        for node in 0..grid.len() {
            grid.coordinates(node, &mut x);
            values.push(f(&x)?);
        }
        Ok(Self {
            domain,
            h,
            intervals,
            values,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of node `index`.
    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.domain.dim()];
        Grid::new(&self.domain, &self.intervals).coordinates(index, &mut x);
        x
    }

    /// Multilinear interpolation from the surrounding `2^d` nodes. Points on a
    /// node return the stored value exactly.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        self.domain.check_point(x)?;
        let d = self.domain.dim();
        let grid = Grid::new(&self.domain, &self.intervals);
        let mut base = 0usize;
        let mut frac = Vec::with_capacity(d);
        for k in 0..d {
            let (lo, hi, n) = (self.domain.lo()[k], self.domain.hi()[k], self.intervals[k]);
            let s = (x[k] - lo) / (hi - lo) * n as f64;
            let mut i = (s.floor().max(0.0) as usize).min(n - 1);
            let mut t = s - i as f64;
            if grid_coordinate(lo, hi, i, n) == x[k] {
                t = 0.0;
            } else if grid_coordinate(lo, hi, i + 1, n) == x[k] {
                if i + 1 < n {
                    i += 1;
                    t = 0.0;
                } else {
                    t = 1.0;
                }
            }
            base += i * grid.strides[k];
            frac.push(t.clamp(0.0, 1.0));
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    if frac[k] == 0.0 {
                        w = 0.0;
                        break;
                    }
                    w *= frac[k];
                    idx += grid.strides[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        Ok(acc)
    }

    /// Writes the binary form: magic, dimension, per-axis `lo hi intervals`,
    /// `h`, value count and little-endian values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.domain.dim() as u64).to_le_bytes())?;
        for k in 0..self.domain.dim() {
            w.write_all(&self.domain.lo()[k].to_le_bytes())?;
            w.write_all(&self.domain.hi()[k].to_le_bytes())?;
            w.write_all(&(self.intervals[k] as u64).to_le_bytes())?;
        }
        w.write_all(&self.h.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse(format!("{} is not a grid file", path.display())));
        }
        let d = read_u64(&mut r)? as usize;
        if d == 0 || d > 16 {
            return Err(Error::Parse(format!("implausible grid dimension {d}")));
        }
        let (mut lo, mut hi) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for _ in 0..d {
            lo.push(read_f64(&mut r)?);
            hi.push(read_f64(&mut r)?);
            read_u64(&mut r)?;
        }
        let h = read_f64(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let mut bytes = vec![0u8; n.checked_mul(8).ok_or_else(|| Error::Parse("value count overflows".into()))?];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(BoxDomain::new(lo, hi)?, h, values)
    }

    /// CSV of the nodes whose pinned coordinates match `slice` (nearest grid
    /// line per pinned axis), with columns `x1..xd,u`.
    pub fn write_csv(&self, path: &Path, slice: &[(usize, f64)]) -> Result<()> {
        let d = self.domain.dim();
        let mut pinned = vec![None; d];
        for &(axis, v) in slice {
            if axis >= d {
                return Err(Error::config("slice", format!("axis {axis} beyond dimension {d}")));
            }
            let (lo, hi, n) = (self.domain.lo()[axis], self.domain.hi()[axis], self.intervals[axis]);
            let i = ((v - lo) / (hi - lo) * n as f64).round().clamp(0.0, n as f64) as usize;
            pinned[axis] = Some(i);
        }
        let grid = Grid::new(&self.domain, &self.intervals);
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("u".into());
        w.write_record(&header)?;
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        for node in 0..grid.len() {
            grid.multi_index(node, &mut idx);
            if pinned.iter().zip(&idx).any(|(p, &i)| p.is_some_and(|p| p != i)) {
                continue;
            }
            grid.coordinates(node, &mut x);
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(self.values[node].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Index arithmetic for a tensor grid.
struct Grid<'a> {
    domain: &'a BoxDomain,
    intervals: &'a [usize],
    strides: Vec<usize>,
    len: usize,
}

impl<'a> Grid<'a> {
    fn new(domain: &'a BoxDomain, intervals: &'a [usize]) -> Self {
        let d = intervals.len();
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (intervals[k + 1] + 1);
        }
        let len = intervals.iter().map(|n| n + 1).product();
        Self {
            domain,
            intervals,
            strides,
            len,
        }
    }

    fn len(&self) -> usize {
        self.len
    }

    fn multi_index(&self, mut node: usize, idx: &mut [usize]) {
        for (k, i) in idx.iter_mut().enumerate() {
            *i = node / self.strides[k];
            node %= self.strides[k];
        }
    }

    fn coordinates(&self, node: usize, x: &mut [f64]) {
        let mut rest = node;
        for k in 0..x.len() {
            let i = rest / self.strides[k];
            rest %= self.strides[k];
            x[k] = grid_coordinate(self.domain.lo()[k], self.domain.hi()[k], i, self.intervals[k]);
        }
    }

    fn on_boundary(&self, node: usize) -> bool {
        let mut rest = node;
        for k in 0..self.intervals.len() {
            let i = rest / self.strides[k];
            rest %= self.strides[k];
            if i == 0 || i == self.intervals[k] {
                return true;
            }
        }
        false
    }
}

/// Solver controls.
#[derive(Clone, Debug)]
pub struct FdmOptions {
    /// Relative residual at which conjugate gradients stops.
    pub tolerance: f64,
    /// Accept a mesh coarser than a tenth of the finest coefficient scale.
    pub allow_underresolved: bool,
    /// Starting iterate on the full grid; boundary entries are ignored.
    pub initial_guess: Option<Vec<f64>>,
}

impl Default for FdmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            allow_underresolved: false,
            initial_guess: None,
        }
    }
}

/// The assembled linear system, scaled by `h^2`.
pub struct FdmSystem {
    domain: BoxDomain,
    h: f64,
    intervals: Vec<usize>,
    strides: Vec<usize>,
    interior: Vec<bool>,
    /// `faces[k][p]`: coefficient on the face between `p` and `p + e_k`.
    faces: Vec<Vec<f64>>,
    diagonal: Vec<f64>,
    rhs: Vec<f64>,
    boundary_values: Vec<f64>,
}

impl FdmSystem {
    pub fn assemble(problem: &Problem, h: f64, options: &FdmOptions) -> Result<Self> {
        let domain = problem.domain().clone();
        let d = domain.dim();
        if !(1..=3).contains(&d) {
            return Err(Error::config("dimension", format!("finite differences support d = 1, 2, 3, got {d}")));
        }
        let finest = problem.epsilons().iter().cloned().fold(f64::INFINITY, f64::min);
        if finest.is_finite() && h > finest / 10.0 * (1.0 + 1e-12) {
            if options.allow_underresolved {
                log::warn!("mesh size {h} does not resolve scale {finest} (h > eps/10)");
            } else {
                return Err(Error::config(
                    "h",
                    format!("mesh size {h} exceeds a tenth of the finest scale {finest}"),
                ));
            }
        }
        let intervals = grid_intervals(&domain, h)?;
        let grid = Grid::new(&domain, &intervals);
        let n = grid.len();
        let strides = grid.strides.clone();
        let mut x = vec![0.0; d];
        let mut coef = Vec::with_capacity(n);
        let mut forcing = vec![0.0; n];
        let mut boundary_values = vec![0.0; n];
        let mut interior = vec![false; n];
        for p in 0..n {
            grid.coordinates(p, &mut x);
            let a = problem.coefficient(&x)?;
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Numeric(format!("coefficient {a} at {x:?} is not positive")));
            }
            coef.push(a);
            if grid.on_boundary(p) {
                boundary_values[p] = problem.boundary(&x)?;
            } else {
                interior[p] = true;
                forcing[p] = problem.forcing(&x)?;
            }
        }
        let mut idx = vec![0usize; d];
        let mut faces = vec![vec![0.0; n]; d];
        for p in 0..n {
            grid.multi_index(p, &mut idx);
            for k in 0..d {
                if idx[k] < intervals[k] {
                    let q = p + strides[k];
                    faces[k][p] = 2.0 / (1.0 / coef[p] + 1.0 / coef[q]);
                }
            }
        }
        let h2 = h * h;
        let mut diagonal = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for p in 0..n {
            if !interior[p] {
                continue;
            }
            let mut diag = 0.0;
            let mut b = h2 * forcing[p];
            for k in 0..d {
                let (up, down) = (p + strides[k], p - strides[k]);
                let (wu, wd) = (faces[k][p], faces[k][down]);
                diag += wu + wd;
                if !interior[up] {
                    b += wu * boundary_values[up];
                }
                if !interior[down] {
                    b += wd * boundary_values[down];
                }
            }
            diagonal[p] = diag;
            rhs[p] = b;
        }
        Ok(Self {
            domain,
            h,
            intervals,
            strides,
            interior,
            faces,
            diagonal,
            rhs,
            boundary_values,
        })
    }

    /// Number of grid nodes (unknowns plus eliminated boundary nodes).
    pub fn nodes(&self) -> usize {
        self.interior.len()
    }

    pub fn unknowns(&self) -> usize {
        self.interior.iter().filter(|&&i| i).count()
    }

    pub fn is_unknown(&self, node: usize) -> bool {
        self.interior[node]
    }

    /// `y = A x` on the full grid; boundary entries of `x` are treated as zero
    /// and boundary entries of `y` are set to zero.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = self.strides.len();
        for p in 0..self.interior.len() {
            if !self.interior[p] {
                y[p] = 0.0;
                continue;
            }
            let mut acc = self.diagonal[p] * x[p];
            for k in 0..d {
                let (up, down) = (p + self.strides[k], p - self.strides[k]);
                if self.interior[up] {
                    acc -= self.faces[k][p] * x[up];
                }
                if self.interior[down] {
                    acc -= self.faces[k][down] * x[down];
                }
            }
            y[p] = acc;
        }
    }

    /// Jacobi-preconditioned conjugate gradients; boundary nodes receive `g`.
    pub fn solve(&self, options: &FdmOptions) -> Result<GridField> {
        let n = self.nodes();
        let mut u = match &options.initial_guess {
            Some(g) if g.len() != n => {
                return Err(Error::Shape(format!("initial guess has {} entries, grid has {n}", g.len())));
            }
            Some(g) => g.iter().zip(&self.interior).map(|(&v, &i)| if i { v } else { 0.0 }).collect(),
            None => vec![0.0; n],
        };
        let b_norm = norm(&self.rhs);
        if b_norm > 0.0 {
            let cap = (10 * self.unknowns()).max(1000);
            let mut r = vec![0.0; n];
            self.apply(&u, &mut r);
            for p in 0..n {
                r[p] = self.rhs[p] - r[p];
            }
            let precondition = |r: &[f64], z: &mut [f64]| {
                for p in 0..n {
                    z[p] = if self.interior[p] { r[p] / self.diagonal[p] } else { 0.0 };
                }
            };
            let mut z = vec![0.0; n];
            precondition(&r, &mut z);
            let mut dir = z.clone();
            let mut rz = dot(&r, &z);
            let mut ap = vec![0.0; n];
            let mut converged = norm(&r) <= options.tolerance * b_norm;
            let mut iterations = 0;
            while !converged {
                if iterations >= cap {
                    return Err(Error::Solver(format!(
                        "conjugate gradients stalled at relative residual {:e} after {cap} iterations",
                        norm(&r) / b_norm
                    )));
                }
                self.apply(&dir, &mut ap);
                let curvature = dot(&dir, &ap);
                if !(curvature > 0.0) {
                    return Err(Error::Solver(format!("system is not positive definite (p'Ap = {curvature:e})")));
                }
                let alpha = rz / curvature;
                for p in 0..n {
                    u[p] += alpha * dir[p];
                    r[p] -= alpha * ap[p];
                }
                iterations += 1;
                converged = norm(&r) <= options.tolerance * b_norm;
                precondition(&r, &mut z);
                let rz_next = dot(&r, &z);
                let beta = rz_next / rz;
                rz = rz_next;
                for p in 0..n {
                    dir[p] = z[p] + beta * dir[p];
                }
            }
            log::debug!("conjugate gradients converged in {iterations} iterations");
        } else {
            u.iter_mut().for_each(|v| *v = 0.0);
        }
        for p in 0..n {
            if !self.interior[p] {
                u[p] = self.boundary_values[p];
            }
        }
        Ok(GridField {
            domain: self.domain.clone(),
            h: self.h,
            intervals: self.intervals.clone(),
            values: u,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Assembles and solves the discrete problem at mesh size `h`.
pub fn fdm_solve(problem: &Problem, h: f64, options: &FdmOptions) -> Result<GridField> {
    FdmSystem::assemble(problem, h, options)?.solve(options)
}

/// Observed convergence of the solver against a closed-form solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub h: Vec<f64>,
    /// Maximum nodal error per mesh size.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log(error)` against `log(h)`.
    pub order: f64,
    pub monotone: bool,
    /// False when errors are non-monotone or already at rounding level.
    pub reliable: bool,
}

/// Errors below this are indistinguishable from rounding.
const ROUNDING_FLOOR: f64 = 1e-11;

pub fn convergence_order(problem: &Problem, hs: &[f64], options: &FdmOptions) -> Result<ConvergenceReport> {
    if hs.len() < 3 {
        return Err(Error::config("h", format!("need at least 3 mesh sizes, got {}", hs.len())));
    }
    let ratio = hs[1] / hs[0];
    if hs.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9) || !(ratio > 0.0) || ratio == 1.0 {
        return Err(Error::config("h", "mesh sizes must form a geometric progression"));
    }
    if !problem.has_exact() {
        return Err(Error::config("problem", format!("`{}` has no closed-form solution", problem.name())));
    }
    let mut errors = Vec::with_capacity(hs.len());
    for &h in hs {
        let field = fdm_solve(problem, h, options)?;
        let mut worst: f64 = 0.0;
        for p in 0..field.len() {
            let x = field.node(p);
            let exact = problem.exact(&x)?.expect("checked above");
            worst = worst.max((field.values[p] - exact).abs());
        }
        errors.push(worst);
    }
    let monotone = errors.windows(2).all(|w| (w[1] < w[0]) == (ratio < 1.0));
    let at_rounding = errors.iter().any(|&e| e < ROUNDING_FLOOR);
    let order = if at_rounding {
        0.0
    } else {
        least_squares_slope(&hs.iter().map(|h| h.ln()).collect::<Vec<_>>(), &errors.iter().map(|e| e.ln()).collect::<Vec<_>>())
    };
    if !monotone {
        log::warn!("finite-difference errors are not monotone in h: {errors:?}");
    }
    Ok(ConvergenceReport {
        h: hs.to_vec(),
        errors,
        order,
        monotone,
        reliable: monotone && !at_rounding,
    })
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    for (a, b) in x.iter().zip(y) {
        sxy.add((a - mx) * (b - my));
        sxx.add((a - mx) * (a - mx));
    }
    sxy.value() / sxx.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{c, differentiate_forcing, x, Expr, Forcing, TestLayout};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn problem(domain: BoxDomain, a: Expr, f: Forcing, g: Expr, u: Option<Expr>) -> Problem {
        Problem::new("fd", domain, a, f, g, u, vec![], TestLayout::Random { n: 10 }).unwrap()
    }

    #[test]
    fn quadratic_is_reproduced_to_rounding() {
        let p = problem(
            BoxDomain::cube(1, 0.0, 1.0).unwrap(),
            c(1.0),
            Forcing::Given(c(2.0)),
            c(0.0),
            None,
        );
        let field = fdm_solve(&p, 1.0 / 128.0, &FdmOptions::default()).unwrap();
        let worst = (0..field.len())
            .map(|i| {
                let t = field.node(i)[0];
                (field.values()[i] - t * (1.0 - t)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{worst:e}");
    }

    #[test]
    fn operator_is_symmetric() {
        let a = c(2.0) + (x(0) * c(7.0)).sin() * (x(1) * c(3.0)).cos();
        let p = problem(BoxDomain::cube(2, 0.0, 1.0).unwrap(), a, Forcing::Given(c(1.0)), c(0.0), None);
        let sys = FdmSystem::assemble(&p, 1.0 / 16.0, &FdmOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = sys.nodes();
        let mask = |v: Vec<f64>| -> Vec<f64> { v.into_iter().enumerate().map(|(i, x)| if sys.is_unknown(i) { x } else { 0.0 }).collect() };
        let u = mask((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let v = mask((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (mut au, mut av) = (vec![0.0; n], vec![0.0; n]);
        sys.apply(&u, &mut au);
        sys.apply(&v, &mut av);
        let lhs = dot(&au, &v);
        let rhs = dot(&u, &av);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linears() {
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let field = GridField::from_fn(dom, 0.125, |x| Ok(3.0 * x[0] + 2.0 * x[1])).unwrap();
        for i in 0..field.len() {
            assert_eq!(field.interpolate(&field.node(i)).unwrap(), field.values()[i]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert!((field.interpolate(&p).unwrap() - 3.0 * p[0] - 2.0 * p[1]).abs() <= 1e-12);
        }
        assert!(field.interpolate(&[1.5, 0.0]).is_err());
    }

    #[test]
    fn midpoint_of_a_cell_is_the_average() {
        let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let field = GridField::new(dom, 0.5, vec![1.0, 4.0, 10.0]).unwrap();
        assert_eq!(field.interpolate(&[0.25]).unwrap(), 2.5);
        assert_eq!(field.interpolate(&[1.0]).unwrap(), 10.0);
    }

    #[test]
    fn maximum_principle_holds() {
        let a = c(1.5) + (x(0) * c(40.0)).sin() * (x(1) * c(30.0)).sin();
        let f = c(1.0) + x(0).square();
        let p = problem(BoxDomain::cube(2, -1.0, 1.0).unwrap(), a, Forcing::Given(f), c(0.0), None);
        let field = fdm_solve(&p, 1.0 / 32.0, &FdmOptions::default()).unwrap();
        assert!(field.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn solution_does_not_depend_on_initial_guess() {
        let a = c(2.0) + (x(0) * c(9.0)).cos();
        let u = (x(0) * c(std::f64::consts::PI)).sin() * (x(1) * c(2.0)).cos();
        let f = differentiate_forcing(&a, &u);
        let p = problem(BoxDomain::cube(2, 0.0, 1.0).unwrap(), a, f, u.clone(), Some(u));
        let h = 1.0 / 32.0;
        let cold = fdm_solve(&p, h, &FdmOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let guess: Vec<f64> = (0..cold.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let warm = fdm_solve(&p, h, &FdmOptions { initial_guess: Some(guess), ..FdmOptions::default() }).unwrap();
        let diff = norm(&cold.values().iter().zip(warm.values()).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(diff <= 1e-9 * norm(cold.values()));
    }

    #[test]
    fn smooth_problem_converges_at_second_order() {
        let pi = std::f64::consts::PI;
        let u = (x(0) * c(pi)).sin() * (x(1) * c(pi)).sin();
        let p = problem(BoxDomain::cube(2, 0.0, 1.0).unwrap(), c(1.0), differentiate_forcing(&c(1.0), &u), c(0.0), Some(u));
        let report = convergence_order(&p, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], &FdmOptions::default()).unwrap();
        assert!(report.reliable);
        assert!((1.9..=2.1).contains(&report.order), "{report:?}");
    }

    #[test]
    fn exact_quadratic_reports_unreliable_order() {
        let u = x(0) * (c(1.0) - x(0));
        let p = problem(BoxDomain::cube(1, 0.0, 1.0).unwrap(), c(1.0), Forcing::Given(c(2.0)), c(0.0), Some(u));
        let report = convergence_order(&p, &[0.25, 0.125, 0.0625], &FdmOptions::default()).unwrap();
        assert!(!report.reliable);
    }

    #[test]
    fn underresolved_mesh_needs_override() {
        let p = Problem::new(
            "scale",
            BoxDomain::cube(1, 0.0, 1.0).unwrap(),
            c(2.0) + (x(0) * c(60.0)).sin(),
            Forcing::Given(c(1.0)),
            c(0.0),
            None,
            vec![0.1],
            TestLayout::Random { n: 10 },
        )
        .unwrap();
        assert!(matches!(fdm_solve(&p, 0.05, &FdmOptions::default()), Err(Error::Config { .. })));
        let relaxed = FdmOptions { allow_underresolved: true, ..FdmOptions::default() };
        assert!(fdm_solve(&p, 0.05, &relaxed).is_ok());
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.grid");
        let field = GridField::from_fn(BoxDomain::cube(2, -1.0, 1.0).unwrap(), 0.5, |x| Ok(x[0] - x[1] * 0.1)).unwrap();
        field.save(&path).unwrap();
        assert_eq!(GridField::load(&path).unwrap(), field);
        field.write_csv(&dir.path().join("s.csv"), &[(0, 0.0)]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 5);
    }
}
