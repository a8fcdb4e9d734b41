//! Collocation batches and evaluation grids on box domains.

use std::path::Path;

use rand::distributions::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Independent random streams derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 0,
    Batches = 1,
    Test = 2,
    Probe = 3,
}

/// Deterministic generator for one stream of a seeded run.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::config(
                "domain",
                format!("bounds of lengths {} and {}", lo.len(), hi.len()),
            ));
        }
        if let Some(k) = (0..lo.len()).find(|&k| !(lo[k] < hi[k]) || !lo[k].is_finite() || !hi[k].is_finite()) {
            return Err(Error::config(
                "domain",
                format!("degenerate edge {k}: [{}, {}]", lo[k], hi[k]),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^d`
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    /// Lebesgue measure `|Omega|`.
    pub fn measure(&self) -> f64 {
        (0..self.dim()).map(|k| self.edge(k)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, &v)| self.lo[k] <= v && v <= self.hi[k])
    }

    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, &v)| self.lo[k] < v && v < self.hi[k])
    }

    /// Number of coordinates pinned to a face.
    pub fn pinned_coordinates(&self, x: &[f64]) -> usize {
        x.iter()
            .enumerate()
            .filter(|&(k, &v)| v == self.lo[k] || v == self.hi[k])
            .count()
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point: x.to_vec() })
        }
    }
}

/// One epoch's collocation points.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub interior: Matrix,
    pub boundary: Matrix,
    pub domain_measure: f64,
    /// Position of the generating stream after the batch was drawn.
    pub stream_position: u128,
}

impl SampleBatch {
    pub fn draw(domain: &BoxDomain, n_interior: usize, n_boundary: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let interior = sample_interior(n_interior, domain, rng)?;
        let boundary = sample_boundary(n_boundary, domain, rng)?;
        Ok(Self {
            interior,
            boundary,
            domain_measure: domain.measure(),
            stream_position: rng.get_word_pos(),
        })
    }

    /// Writes both point sets to CSV with a leading `kind` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.interior.cols();
        let mut header = vec!["kind".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (kind, m) in [("interior", &self.interior), ("boundary", &self.boundary)] {
            for row in m.iter_rows() {
                let mut rec = vec![kind.to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn require_points(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::config(what, "must be positive"));
    }
    Ok(())
}

/// `n` i.i.d. uniform points of the open box, one per row.
pub fn sample_interior<R: Rng>(n: usize, domain: &BoxDomain, rng: &mut R) -> Result<Matrix> {
    require_points(n, "n_interior")?;
    let d = domain.dim();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for k in 0..d {
            // Rounding can land on the closed edge for extreme draws.
            loop {
                let u: f64 = Open01.sample(rng);
                let v = domain.lo[k] + domain.edge(k) * u;
                if domain.lo[k] < v && v < domain.hi[k] {
                    data.push(v);
                    break;
                }
            }
        }
    }
    Matrix::from_vec(n, d, data)
}

/// `n` boundary points. In one dimension the two endpoints alternate;
/// otherwise a face is chosen uniformly and the free coordinates are uniform.
pub fn sample_boundary<R: Rng>(n: usize, domain: &BoxDomain, rng: &mut R) -> Result<Matrix> {
    require_points(n, "n_boundary")?;
    let d = domain.dim();
    let mut data = Vec::with_capacity(n * d);
    if d == 1 {
        for i in 0..n {
            data.push(if i % 2 == 0 { domain.lo[0] } else { domain.hi[0] });
        }
        return Matrix::from_vec(n, 1, data);
    }
    for _ in 0..n {
        let face = rng.gen_range(0..2 * d);
        let (axis, upper) = (face / 2, face % 2 == 1);
        for k in 0..d {
            if k == axis {
                data.push(if upper { domain.hi[k] } else { domain.lo[k] });
            } else {
                loop {
                    let u: f64 = Open01.sample(rng);
                    let v = domain.lo[k] + domain.edge(k) * u;
                    if domain.lo[k] < v && v < domain.hi[k] {
                        data.push(v);
                        break;
                    }
                }
            }
        }
    }
    Matrix::from_vec(n, d, data)
}

/// Number of grid intervals along each axis for mesh size `h`.
pub fn grid_intervals(domain: &BoxDomain, h: f64) -> Result<Vec<usize>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::config("h", format!("mesh size must be positive, got {h}")));
    }
    (0..domain.dim())
        .map(|k| {
            let len = domain.edge(k);
            let n = (len / h).round();
            if n < 1.0 || (n * h - len).abs() > 1e-12 * len.max(1.0) {
                return Err(Error::config(
                    "h",
                    format!("mesh size {h} does not divide edge {k} of length {len}"),
                ));
            }
            Ok(n as usize)
        })
        .collect()
}

/// Coordinate `i` of `n` equal intervals on `[lo, hi]`, exact at both ends.
#[inline]
pub(crate) fn grid_coordinate(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64 / n as f64)
    }
}

/// Tensor-product grid with spacing `h`, last coordinate varying fastest.
/// Each `(axis, value)` in `slice` pins that coordinate instead of gridding it.
pub fn eval_grid(domain: &BoxDomain, h: f64, slice: &[(usize, f64)]) -> Result<Matrix> {
    let d = domain.dim();
    let intervals = grid_intervals(domain, h)?;
    let mut pinned: Vec<Option<f64>> = vec![None; d];
    for &(axis, v) in slice {
        if axis >= d {
            return Err(Error::config("slice", format!("axis {axis} beyond dimension {d}")));
        }
        if !(domain.lo[axis] <= v && v <= domain.hi[axis]) {
            return Err(Error::config("slice", format!("value {v} outside axis {axis}")));
        }
        pinned[axis] = Some(v);
    }
    let counts: Vec<usize> = (0..d)
        .map(|k| if pinned[k].is_some() { 1 } else { intervals[k] + 1 })
        .collect();
    let total: usize = counts.iter().product();
    let mut data = Vec::with_capacity(total * d);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        for k in 0..d {
            data.push(match pinned[k] {
                Some(v) => v,
                None => grid_coordinate(domain.lo[k], domain.hi[k], idx[k], intervals[k]),
            });
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Matrix::from_vec(total, d, data)
}
