//! Optimization loop: per-epoch resampling, Adam updates, learning-rate and
//! boundary-penalty schedules, periodic evaluation and checkpointing.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fdm::{fdm_solve, FdmOptions};
use crate::loss::{gamma_schedule, BatchedLoss, GammaScheduleFn, LossBreakdown, Method};
use crate::matrix::Matrix;
use crate::network::{save_checkpoint, Network, NetworkConfig, Parameters};
use crate::problems::{Problem, TestLayout};
use crate::sampling::{eval_grid, sample_interior, stream_rng, SampleBatch, Stream};
use crate::summation::CompensatedSum;

/// Default collocation counts `(interior, boundary)` for a dimension.
pub fn default_point_counts(dim: usize) -> (usize, usize) {
    match dim {
        0 | 1 => (3000, 500),
        2 => (5000, 2000),
        3 => (7500, 1000),
        _ => (20000, 5000),
    }
}

fn default_epochs() -> u64 {
    50000
}
fn default_lr0() -> f64 {
    0.01
}
fn default_lr_decay() -> f64 {
    0.025
}
fn default_decay_interval() -> u64 {
    100
}
fn default_eval_every() -> u64 {
    1000
}
fn default_beta() -> f64 {
    10.0
}
fn default_gamma0() -> f64 {
    10.0
}
fn default_chunk() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    /// Fractional learning-rate decay applied once per `decay_interval` epochs.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_decay_interval")]
    pub decay_interval: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Interior points per epoch; `None` picks the per-dimension default.
    #[serde(default)]
    pub n_interior: Option<usize>,
    #[serde(default)]
    pub n_boundary: Option<usize>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
    /// Points per recorded tape; only affects speed and memory.
    #[serde(default = "default_chunk")]
    pub chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            lr0: default_lr0(),
            lr_decay: default_lr_decay(),
            decay_interval: default_decay_interval(),
            eval_every: default_eval_every(),
            n_interior: None,
            n_boundary: None,
            beta: default_beta(),
            gamma0: default_gamma0(),
            seed: 0,
            method: Method::Fmpinn,
            chunk: default_chunk(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("lr0", format!("must be positive, got {}", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::config("lr_decay", format!("must lie in (0, 1), got {}", self.lr_decay)));
        }
        if self.decay_interval == 0 {
            return Err(Error::config("decay_interval", "must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be positive"));
        }
        if self.n_interior == Some(0) {
            return Err(Error::config("n_interior", "must be positive"));
        }
        if self.n_boundary == Some(0) {
            return Err(Error::config("n_boundary", "must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", format!("must be non-negative, got {}", self.beta)));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(Error::config("gamma0", format!("must be positive, got {}", self.gamma0)));
        }
        if self.chunk == 0 {
            return Err(Error::config("chunk", "must be positive"));
        }
        Ok(())
    }

    pub fn point_counts(&self, dim: usize) -> (usize, usize) {
        let (n_in, n_bd) = default_point_counts(dim);
        (self.n_interior.unwrap_or(n_in), self.n_boundary.unwrap_or(n_bd))
    }
}

/// Exact decimal reading of `v` through its shortest round-trip string.
fn decimal_rational(v: f64) -> Result<BigRational> {
    let text = format!("{v}");
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let digits: BigInt = format!("{int}{frac}")
        .parse()
        .map_err(|_| Error::Numeric(format!("{v} has no decimal form")))?;
    Ok(BigRational::new(digits, num_traits::pow(BigInt::from(10), frac.len())))
}

/// Decays beyond this many steps continue in floating point from the last
/// exact value; the exact rationals grow without bound.
const EXACT_DECAY_STEPS: usize = 4096;

/// `lr0 * (1 - decay)^floor(epoch / interval)`, evaluated in exact decimal
/// arithmetic and rounded once, so tabulated values come out exactly.
#[derive(Clone, Debug)]
pub struct LrSchedule {
    lr0: f64,
    decay: f64,
    interval: u64,
    cache: Vec<f64>,
}

impl LrSchedule {
    pub fn new(lr0: f64, decay: f64, interval: u64) -> Result<Self> {
        if !(lr0 > 0.0 && lr0.is_finite()) || !(decay > 0.0 && decay < 1.0) || interval == 0 {
            return Err(Error::config("lr", format!("invalid schedule lr0={lr0}, decay={decay}, interval={interval}")));
        }
        Ok(Self {
            lr0,
            decay,
            interval,
            cache: Vec::new(),
        })
    }

    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        Self::new(config.lr0, config.lr_decay, config.decay_interval)
    }

    pub fn rate(&mut self, epoch: u64) -> f64 {
        let k = (epoch / self.interval) as usize;
        if k >= self.cache.len() {
            self.extend(k.min(EXACT_DECAY_STEPS - 1) + 1);
        }
        if k < self.cache.len() {
            return self.cache[k];
        }
        let last = self.cache.len() - 1;
        self.cache[last] * (1.0 - self.decay).powi((k - last) as i32)
    }

    fn extend(&mut self, len: usize) {
        let lr0 = decimal_rational(self.lr0).expect("finite");
        let factor = BigRational::one() - decimal_rational(self.decay).expect("finite");
        let mut value = lr0 * num_traits::pow(factor.clone(), self.cache.len());
        while self.cache.len() < len {
            self.cache.push(value.to_f64().unwrap_or(0.0));
            value *= &factor;
        }
    }
}

/// Standard schedule: `0.01 * 0.975^floor(epoch / 100)` with overridable constants.
pub fn lr_schedule(epoch: u64, lr0: f64, decay: f64) -> Result<f64> {
    Ok(LrSchedule::new(lr0, decay, 100)?.rate(epoch))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Parameters and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: u64,
    pub params: Parameters,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Applied updates.
    pub t: u64,
    pub lr: f64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(params: Parameters, lr: f64, seed: u64) -> Self {
        let n = params.len();
        Self {
            epoch: 0,
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            rng: stream_rng(seed, Stream::Batches),
        }
    }
}

/// One Adam update with the current `state.lr`.
pub fn adam_step(state: &mut TrainState, gradient: &[f64]) -> Result<()> {
    if gradient.len() != state.params.len() {
        return Err(Error::Shape(format!("gradient of {} for {} parameters", gradient.len(), state.params.len())));
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient entry {i} at epoch {}", state.epoch)));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let lr = state.lr;
    for (((p, m), v), &g) in state.params.as_mut_slice().iter_mut().zip(&mut state.m).zip(&mut state.v).zip(gradient) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// `sqrt(sum (pred - ref)^2 / sum ref^2)` with compensated sums.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Shape(format!("{} predictions for {} reference values", pred.len(), reference.len())));
    }
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (p, r) in pred.iter().zip(reference) {
        num.add((p - r) * (p - r));
        den.add(r * r);
    }
    if den.value() == 0.0 {
        return Err(Error::Numeric("reference field is identically zero".into()));
    }
    Ok((num.value() / den.value()).sqrt())
}

/// Where test reference values come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    ClosedForm,
    FiniteDifference { h: f64 },
}

/// Test points with aligned reference values.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub points: Matrix,
    pub reference: Vec<f64>,
    pub source: ReferenceSource,
}

impl TestSet {
    pub fn new(points: Matrix, reference: Vec<f64>, source: ReferenceSource) -> Result<Self> {
        if points.rows() != reference.len() {
            return Err(Error::Shape(format!("{} test points, {} reference values", points.rows(), reference.len())));
        }
        Ok(Self {
            points,
            reference,
            source,
        })
    }

    /// The problem's own test layout. Without a closed form, references come
    /// from a finite-difference solve on the test grid.
    pub fn for_problem(problem: &Problem, seed: u64) -> Result<Self> {
        let (points, grid_h) = match problem.test_layout() {
            TestLayout::Grid { h, slice } => (eval_grid(problem.domain(), *h, slice)?, Some(*h)),
            TestLayout::Random { n } => {
                let mut rng = stream_rng(seed, Stream::Test);
                (sample_interior(*n, problem.domain(), &mut rng)?, None)
            }
        };
        if problem.has_exact() {
            let reference = points
                .iter_rows()
                .map(|x| problem.exact(x).map(|u| u.expect("closed form present")))
                .collect::<Result<Vec<_>>>()?;
            return Self::new(points, reference, ReferenceSource::ClosedForm);
        }
        let h = grid_h.ok_or_else(|| {
            Error::config("test_layout", format!("`{}` has no closed form and no reference grid", problem.name()))
        })?;
        let options = FdmOptions {
            allow_underresolved: true,
            ..FdmOptions::default()
        };
        let field = fdm_solve(problem, h, &options)?;
        let reference = points
            .iter_rows()
            .map(|x| field.interpolate(x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, reference, ReferenceSource::FiniteDifference { h })
    }
}

/// REL and pointwise absolute error of a model on a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rel: f64,
    pub pointwise: Vec<f64>,
    pub prediction: Vec<f64>,
}

pub fn evaluate(network: &Network, params: &Parameters, test: &TestSet) -> Result<Evaluation> {
    let out = network.forward_batch(params.as_slice(), &test.points)?;
    let prediction: Vec<f64> = out.iter_rows().map(|r| r[0]).collect();
    let rel = relative_l2(&prediction, &test.reference)?;
    let pointwise = prediction.iter().zip(&test.reference).map(|(p, r)| (p - r).abs()).collect();
    Ok(Evaluation {
        rel,
        pointwise,
        prediction,
    })
}

/// One evaluation row: schedules and loss parts of the last epoch, plus REL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Completed epochs.
    pub epoch: u64,
    pub lr: f64,
    pub gamma: f64,
    pub beta: f64,
    pub pde: f64,
    pub flux: f64,
    pub boundary: f64,
    pub total: f64,
    pub rel: f64,
}

/// History of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub problem: String,
    pub method: Method,
    pub rows: Vec<EvalRow>,
    pub final_rel: Option<f64>,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "epoch,lr,gamma,beta,pde,flux,boundary,total,rel";

    /// `run.csv`; deterministic for a deterministic run (no timings).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.epoch, r.lr, r.gamma, r.beta, r.pde, r.flux, r.boundary, r.total, r.rel
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Hex SHA-256 over the network and training configuration and problem name.
pub fn run_hash(problem: &str, network: &NetworkConfig, train: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(problem.as_bytes());
    h.update(serde_json::to_vec(network).expect("config serializes"));
    h.update(serde_json::to_vec(train).expect("config serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hooks into the loop. Returning `Break` from `evaluation` stops training
/// after that evaluation.
pub trait Observer {
    fn epoch(&mut self, _epoch: u64, _loss: &LossBreakdown, _lr: f64) {}

    fn evaluation(&mut self, _row: &EvalRow, _params: &Parameters) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

/// Observer that does nothing.
pub struct Quiet;

impl Observer for Quiet {}

/// Result of a completed run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: Parameters,
    pub record: RunRecord,
    pub state: TrainState,
}

/// A run stopped by a numeric failure, with the last finite parameters.
#[derive(Debug, thiserror::Error)]
#[error("training aborted after {epoch} epochs: {source}")]
pub struct TrainAbort {
    pub epoch: u64,
    #[source]
    pub source: Error,
    pub params: Parameters,
    pub record: RunRecord,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error(transparent)]
    Aborted(Box<TrainAbort>),
}

/// Training driver.
pub struct Trainer<'a> {
    problem: &'a Problem,
    network: Network,
    config: TrainConfig,
    test: TestSet,
    gamma_fn: GammaScheduleFn,
    checkpoint: Option<PathBuf>,
    checkpoint_each_eval: bool,
    initial: Option<Parameters>,
}

impl<'a> Trainer<'a> {
    pub fn new(problem: &'a Problem, network: NetworkConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let network = Network::new(network)?;
        let d = problem.dim();
        if network.config().dim_in != d {
            return Err(Error::config("network.dim_in", format!("must equal the problem dimension {d}")));
        }
        if network.config().dim_out < config.method.outputs(d) {
            return Err(Error::config(
                "network.dim_out",
                format!("{} needs {} outputs", config.method.name(), config.method.outputs(d)),
            ));
        }
        let test = TestSet::for_problem(problem, config.seed)?;
        Ok(Self {
            problem,
            network,
            config,
            test,
            gamma_fn: gamma_schedule,
            checkpoint: None,
            checkpoint_each_eval: false,
            initial: None,
        })
    }

    /// Writes the final parameters to `path`, and optionally at every evaluation.
    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>, each_evaluation: bool) -> Self {
        self.checkpoint = Some(path.into());
        self.checkpoint_each_eval = each_evaluation;
        self
    }

    pub fn with_gamma_schedule(mut self, f: GammaScheduleFn) -> Self {
        self.gamma_fn = f;
        self
    }

    pub fn with_initial_parameters(mut self, params: Parameters) -> Result<Self> {
        self.network.check_params(params.as_slice())?;
        self.initial = Some(params);
        Ok(self)
    }

    pub fn with_test_set(mut self, test: TestSet) -> Self {
        self.test = test;
        self
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn test_set(&self) -> &TestSet {
        &self.test
    }

    pub fn run(&self, observer: &mut dyn Observer) -> std::result::Result<TrainOutcome, TrainError> {
        let start = Instant::now();
        let cfg = &self.config;
        let mut schedule = LrSchedule::from_config(cfg)?;
        let params = match &self.initial {
            Some(p) => p.clone(),
            None => self.network.init_parameters(cfg.seed),
        };
        let mut state = TrainState::new(params, schedule.rate(0), cfg.seed);
        let mut record = RunRecord {
            config_hash: run_hash(self.problem.name(), self.network.config(), cfg),
            seed: cfg.seed,
            problem: self.problem.name().to_string(),
            method: cfg.method,
            rows: Vec::new(),
            final_rel: None,
            wall_seconds: 0.0,
        };
        let (n_in, n_bd) = cfg.point_counts(self.problem.dim());
        let loss = BatchedLoss {
            network: &self.network,
            problem: self.problem,
            method: cfg.method,
            beta: cfg.beta,
            chunk: cfg.chunk,
        };
        let mut grad = vec![0.0; self.network.param_count()];

        while state.epoch < cfg.epochs {
            let epoch = state.epoch;
            let mut step = || -> Result<LossBreakdown> {
                let gamma = (self.gamma_fn)(epoch, cfg.epochs, cfg.gamma0)?;
                let batch = SampleBatch::draw(self.problem.domain(), n_in, n_bd, &mut state.rng)?;
                grad.iter_mut().for_each(|g| *g = 0.0);
                let parts = loss.evaluate(state.params.as_slice(), &batch, gamma, Some(&mut grad))?;
                if !parts.total.is_finite() {
                    return Err(Error::Numeric(format!("loss became {}", parts.total)));
                }
                Ok(parts)
            };
            let parts = match step() {
                Ok(p) => p,
                Err(e) => return Err(self.abort(e, state, record, start)),
            };
            state.lr = schedule.rate(epoch);
            if let Err(e) = adam_step(&mut state, &grad) {
                return Err(self.abort(e, state, record, start));
            }
            state.epoch += 1;
            observer.epoch(epoch, &parts, state.lr);

            let done = state.epoch == cfg.epochs;
            if state.epoch.is_multiple_of(cfg.eval_every) || done {
                let eval = match evaluate(&self.network, &state.params, &self.test) {
                    Ok(e) => e,
                    Err(e) => return Err(self.abort(e, state, record, start)),
                };
                let row = EvalRow {
                    epoch: state.epoch,
                    lr: state.lr,
                    gamma: parts.gamma,
                    beta: parts.beta,
                    pde: parts.interior_pde,
                    flux: parts.interior_flux,
                    boundary: parts.boundary,
                    total: parts.total,
                    rel: eval.rel,
                };
                log::info!(
                    "epoch {:>6}  lr {:.3e}  gamma {:>6}  loss {:.4e}  rel {:.4e}",
                    row.epoch,
                    row.lr,
                    row.gamma,
                    row.total,
                    row.rel
                );
                record.final_rel = Some(row.rel);
                record.rows.push(row);
                if self.checkpoint_each_eval {
                    if let Err(e) = self.save(&state.params) {
                        return Err(self.abort(e, state, record, start));
                    }
                }
                let last = record.rows.last().expect("just pushed");
                if observer.evaluation(last, &state.params).is_break() {
                    break;
                }
            }
        }
        if let Err(e) = self.save(&state.params) {
            return Err(self.abort(e, state, record, start));
        }
        record.wall_seconds = start.elapsed().as_secs_f64();
        Ok(TrainOutcome {
            params: state.params.clone(),
            record,
            state,
        })
    }

    fn save(&self, params: &Parameters) -> Result<()> {
        match &self.checkpoint {
            Some(path) => save_checkpoint(path, &self.network, params),
            None => Ok(()),
        }
    }

    fn abort(&self, error: Error, state: TrainState, mut record: RunRecord, start: Instant) -> TrainError {
        record.wall_seconds = start.elapsed().as_secs_f64();
        if let Err(e) = self.save(&state.params) {
            log::error!("could not write checkpoint after abort: {e}");
        }
        TrainError::Aborted(Box::new(TrainAbort {
            epoch: state.epoch,
            source: error,
            params: state.params,
            record,
        }))
    }
}

/// Convenience wrapper: builds a [`Trainer`] and runs it without hooks.
pub fn train(problem: &Problem, network: NetworkConfig, config: TrainConfig) -> std::result::Result<TrainOutcome, TrainError> {
    Trainer::new(problem, network, config)?.run(&mut Quiet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::example_1d_two_scale;

    #[test]
    fn learning_rate_table_is_exact() {
        let mut s = LrSchedule::new(0.01, 0.025, 100).unwrap();
        assert_eq!(s.rate(0), 0.01);
        assert_eq!(s.rate(99), 0.01);
        assert_eq!(s.rate(100), 0.00975);
        assert_eq!(s.rate(250), 0.00950625);
        assert_eq!(lr_schedule(250, 0.01, 0.025).unwrap(), 0.00950625);
    }

    #[test]
    fn learning_rate_is_monotone_far_out() {
        let mut s = LrSchedule::new(0.01, 0.025, 100).unwrap();
        let mut prev = f64::INFINITY;
        for e in (0..1_000_000).step_by(50_000) {
            let r = s.rate(e);
            assert!(r <= prev && r > 0.0);
            prev = r;
        }
        let exact = s.rate(100 * (EXACT_DECAY_STEPS as u64 - 1));
        let float = 0.01 * 0.975f64.powi(EXACT_DECAY_STEPS as i32 - 1);
        assert!((exact / float - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(LrSchedule::new(0.01, 1.0, 100).is_err());
        assert!(LrSchedule::new(0.0, 0.5, 100).is_err());
        let cfg = TrainConfig { lr_decay: 0.0, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "lr_decay"));
    }

    fn state(params: Vec<f64>) -> TrainState {
        TrainState::new(Parameters::from_vec(params), 0.01, 0)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = state(vec![1.0, -2.0]);
        adam_step(&mut s, &[0.0, 0.0]).unwrap();
        assert_eq!(s.params.as_slice(), &[1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut s = state(vec![0.0]);
        adam_step(&mut s, &[1.0]).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction
        let expected = -0.01 / (1.0 + 1e-8);
        assert!((s.params.as_slice()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn steps_are_bounded_by_the_learning_rate() {
        let mut s = state(vec![0.0]);
        let mut prev = 0.0;
        for _ in 0..5 {
            adam_step(&mut s, &[3.0]).unwrap();
            let p = s.params.as_slice()[0];
            assert!((p - prev).abs() <= 0.01 * (1.0 + 1e-12));
            prev = p;
        }
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut s = state(vec![0.0, 0.0]);
        assert!(matches!(adam_step(&mut s, &[1.0, f64::NAN]), Err(Error::Numeric(_))));
        assert_eq!(s.t, 0);
    }

    #[test]
    fn relative_error_algebra() {
        let u = [1.0, -2.0, 0.5];
        assert_eq!(relative_l2(&u, &u).unwrap(), 0.0);
        let doubled: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        assert!((relative_l2(&doubled, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_l2(&u, &[0.0; 3]).is_err());
    }

    fn tiny_net() -> NetworkConfig {
        let mut n = NetworkConfig::fmpinn(1);
        n.scales = vec![1.0, 2.0];
        n.hidden = vec![6, 6];
        n
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let p = example_1d_two_scale(0.1).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&p, tiny_net(), cfg).unwrap();
        assert_eq!(out.params, Network::new(tiny_net()).unwrap().init_parameters(0));
        assert!(out.record.rows.is_empty());
        assert_eq!(out.record.final_rel, None);
    }

    #[test]
    fn evaluation_epochs_and_gamma_hook() {
        struct Check(Vec<(u64, f64)>);
        impl Observer for Check {
            fn epoch(&mut self, epoch: u64, loss: &LossBreakdown, _lr: f64) {
                self.0.push((epoch, loss.gamma));
            }
        }
        let p = example_1d_two_scale(0.1).unwrap();
        let cfg = TrainConfig {
            epochs: 25,
            eval_every: 10,
            n_interior: Some(40),
            n_boundary: Some(4),
            ..TrainConfig::default()
        };
        let mut obs = Check(Vec::new());
        let out = Trainer::new(&p, tiny_net(), cfg).unwrap().run(&mut obs).unwrap();
        let epochs: Vec<u64> = out.record.rows.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![10, 20, 25]);
        assert_eq!(out.state.t, 25);
        assert_eq!(obs.0.len(), 25);
        for (e, g) in obs.0 {
            assert_eq!(g, gamma_schedule(e, 25, 10.0).unwrap());
        }
        assert_eq!(out.record.final_rel, Some(out.record.rows[2].rel));
    }

    #[test]
    fn observer_can_stop_early() {
        struct Stop;
        impl Observer for Stop {
            fn evaluation(&mut self, _row: &EvalRow, _p: &Parameters) -> ControlFlow<()> {
                ControlFlow::Break(())
            }
        }
        let p = example_1d_two_scale(0.1).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            eval_every: 5,
            n_interior: Some(20),
            n_boundary: Some(2),
            ..TrainConfig::default()
        };
        let out = Trainer::new(&p, tiny_net(), cfg).unwrap().run(&mut Stop).unwrap();
        assert_eq!(out.record.rows.len(), 1);
        assert_eq!(out.state.epoch, 5);
    }
}
