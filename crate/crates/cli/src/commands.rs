//! Implementations of the subcommands. Each reports an [`ExitCode`] that
//! the binary passes to the shell.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fmpinn::fdm::{fdm_solve, FdmOptions, GridField};
use fmpinn::loss::{LossBreakdown, Method};
use fmpinn::network::{load_checkpoint, sidecar_path, Network, NetworkConfig};
use fmpinn::problems::TestLayout;
use fmpinn::trainer::{evaluate, EvalRow, Observer, ReferenceSource, RunRecord, TestSet, TrainError, Trainer};
use fmpinn::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::checks::{run_validation, ValidationOptions};
use crate::config::{Resolved, RunConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FMPINN_OUT_DIR";

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 1,
    Numeric = 2,
    Validation = 3,
}

/// Maps a library error to the exit code it deserves.
pub fn exit_code_for(error: &Error) -> ExitCode {
    match error {
        Error::Config { .. } | Error::Parse(_) | Error::UnknownProblem(_) | Error::Json(_) => ExitCode::Usage,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => ExitCode::Usage,
        _ => ExitCode::Numeric,
    }
}

/// Resolves the output directory: explicit flag, then the environment, then
/// `runs/<default>`.
pub fn output_dir(explicit: Option<&Path>, default_name: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(default_name),
        None => PathBuf::from("runs").join(default_name),
    }
}

/// `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    pub config_hash: String,
    pub final_rel: Option<f64>,
    pub epochs_completed: u64,
    pub wall_seconds: f64,
    pub param_count: usize,
    pub reference: ReferenceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Loading this back as a config reproduces the run.
    pub config: RunConfig,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Per-epoch loss curve.
struct LossCurve {
    writer: csv::Writer<std::fs::File>,
    failed: Option<csv::Error>,
}

impl LossCurve {
    fn create(path: &Path) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["epoch", "lr", "gamma", "pde", "flux", "boundary", "total"])?;
        Ok(Self { writer, failed: None })
    }
}

impl Observer for LossCurve {
    fn epoch(&mut self, epoch: u64, loss: &LossBreakdown, lr: f64) {
        if self.failed.is_some() {
            return;
        }
        let rec = [
            epoch.to_string(),
            format!("{lr:e}"),
            format!("{:e}", loss.gamma),
            format!("{:e}", loss.interior_pde),
            format!("{:e}", loss.interior_flux),
            format!("{:e}", loss.boundary),
            format!("{:e}", loss.total),
        ];
        if let Err(e) = self.writer.write_record(&rec) {
            self.failed = Some(e);
        }
    }
}

/// Writes point coordinates with prediction, reference and absolute error.
pub fn write_pointwise(path: &Path, test: &TestSet, prediction: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = test.points.cols();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.extend(["prediction", "reference", "abs_error"].map(String::from));
    w.write_record(&header)?;
    for (i, x) in test.points.iter_rows().enumerate() {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(format!("{:e}", prediction[i]));
        rec.push(format!("{:e}", test.reference[i]));
        rec.push(format!("{:e}", (prediction[i] - test.reference[i]).abs()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Result of one training run on disk.
#[derive(Debug)]
pub struct TrainReport {
    pub summary: Summary,
    pub out_dir: PathBuf,
    pub exit: ExitCode,
}

/// Trains one configuration and writes all artifacts to `out_dir`.
pub fn train_to_dir(source: &RunConfig, out_dir: &Path) -> Result<TrainReport> {
    let resolved = source.resolve()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let trainer = Trainer::new(&resolved.problem, resolved.network.clone(), resolved.train.clone())?
        .with_checkpoint(out_dir.join("params.ckpt"), true);
    log::info!(
        "{}: {} parameters, method {}",
        resolved.problem.name(),
        trainer.network().param_count(),
        resolved.train.method.name()
    );
    let mut curve = LossCurve::create(&out_dir.join("loss.csv"))?;
    let result = trainer.run(&mut curve);
    curve.writer.flush()?;
    if let Some(e) = curve.failed {
        return Err(e.into());
    }
    let mut artifacts = vec!["loss.csv".to_string()];
    let (record, params, error) = match result {
        Ok(out) => (out.record, out.params, None),
        Err(TrainError::Setup(e)) => return Err(e),
        Err(TrainError::Aborted(abort)) => {
            let message = abort.to_string();
            log::error!("{message}");
            let abort = *abort;
            (abort.record, abort.params, Some(message))
        }
    };
    record.write_csv(&out_dir.join("run.csv"))?;
    artifacts.push("run.csv".into());
    artifacts.push("params.ckpt".into());
    artifacts.push("params.ckpt.json".into());
    if error.is_none() {
        let eval = evaluate(trainer.network(), &params, trainer.test_set())?;
        write_pointwise(&out_dir.join("pointwise.csv"), trainer.test_set(), &eval.prediction)?;
        artifacts.push("pointwise.csv".into());
    }
    artifacts.push("summary.json".into());
    let summary = Summary {
        status: if error.is_none() { "completed".into() } else { "aborted".into() },
        problem: resolved.problem.name().to_string(),
        method: resolved.train.method,
        seed: resolved.train.seed,
        config_hash: resolved.hash(),
        final_rel: record.final_rel,
        epochs_completed: record.rows.last().map_or(0, |r| r.epoch),
        wall_seconds: started.elapsed().as_secs_f64(),
        param_count: trainer.network().param_count(),
        reference: trainer.test_set().source,
        error,
        config: resolved.echo(source),
        artifacts,
    };
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let exit = if summary.error.is_some() { ExitCode::Numeric } else { ExitCode::Ok };
    Ok(TrainReport {
        summary,
        out_dir: out_dir.to_path_buf(),
        exit,
    })
}

/// Sweep axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    Beta,
    Method,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Beta => "beta",
            SweepAxis::Method => "method",
        }
    }

    /// The base config with one value of the axis applied.
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Epsilon => {
                let name = base
                    .problem
                    .as_deref()
                    .ok_or_else(|| Error::config("problem", "an epsilon sweep needs a catalog problem"))?;
                let family = name.split_once("_eps").map_or(name, |(f, _)| f);
                cfg.problem = Some(format!("{family}_eps{value}"));
            }
            SweepAxis::Beta => {
                cfg.train.beta = value
                    .parse()
                    .map_err(|_| Error::config("values", format!("`{value}` is not a number")))?;
            }
            SweepAxis::Method => {
                cfg.train.method = match value {
                    "fmpinn" => Method::Fmpinn,
                    "mpinn" => Method::Mpinn,
                    _ => return Err(Error::config("values", format!("unknown method `{value}`"))),
                };
            }
        }
        Ok(cfg)
    }
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub problem: String,
    pub method: String,
    pub beta: f64,
    pub seed: u64,
    pub final_rel: Option<f64>,
    pub wall_seconds: f64,
    pub status: String,
    pub error: String,
}

/// Runs one sub-experiment per value and writes `sweep.csv`. Failed runs are
/// recorded in their row and the sweep continues. With `jobs > 1`
/// independent runs execute concurrently; results do not depend on `jobs`.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[String], out_dir: &Path, jobs: usize) -> Result<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(Error::config("values", "a sweep needs at least two values"));
    }
    let configs = values
        .iter()
        .map(|v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    let run_one = |i: usize| -> SweepRow {
        let cfg = &configs[i];
        let value = &values[i];
        let dir = out_dir.join(format!("{}_{}", axis.name(), value));
        let started = Instant::now();
        let mut row = SweepRow {
            axis: axis.name().into(),
            value: value.clone(),
            problem: cfg.problem.clone().unwrap_or_default(),
            method: cfg.train.method.name().into(),
            beta: cfg.train.beta,
            seed: cfg.train.seed,
            final_rel: None,
            wall_seconds: 0.0,
            status: "failed".into(),
            error: String::new(),
        };
        match train_to_dir(cfg, &dir) {
            Ok(report) => {
                row.problem = report.summary.problem.clone();
                row.final_rel = report.summary.final_rel;
                row.status = report.summary.status.clone();
                row.error = report.summary.error.clone().unwrap_or_default();
            }
            Err(e) => row.error = e.to_string(),
        }
        row.wall_seconds = started.elapsed().as_secs_f64();
        row
    };
    let rows: Vec<SweepRow> = if jobs <= 1 {
        (0..configs.len()).map(run_one).collect()
    } else {
        let mut slots: Vec<Option<SweepRow>> = vec![None; configs.len()];
        let next = std::sync::atomic::AtomicUsize::new(0);
        let done = std::sync::Mutex::new(&mut slots);
        std::thread::scope(|s| {
            for _ in 0..jobs.min(configs.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= configs.len() {
                        break;
                    }
                    let row = run_one(i);
                    done.lock().expect("no panics while holding the lock")[i] = Some(row);
                });
            }
        });
        slots.into_iter().map(|r| r.expect("every run finished")).collect()
    };
    let mut w = csv::Writer::from_path(out_dir.join("sweep.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Runs the invariant suite, printing one line per check.
pub fn validate(opts: &ValidationOptions) -> (ExitCode, Vec<crate::checks::CheckResult>) {
    let results = run_validation(opts);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed", results.len(), failed);
    let code = if failed == 0 { ExitCode::Ok } else { ExitCode::Validation };
    (code, results)
}

/// Solves a problem on a grid and writes the binary field, an optional CSV
/// slice, and a REL line when a closed form exists.
pub fn fdm(config: &RunConfig, h: f64, allow_underresolved: bool, out: &Path, slice: &[(usize, f64)]) -> Result<GridField> {
    let problem = config.load_problem()?;
    let options = FdmOptions {
        allow_underresolved,
        ..FdmOptions::default()
    };
    let field = fdm_solve(&problem, h, &options)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    field.save(out)?;
    let csv_path = out.with_extension("csv");
    field.write_csv(&csv_path, slice)?;
    println!("wrote {} and {}", out.display(), csv_path.display());
    if problem.has_exact() {
        let rel = crate::checks::field_rel_against_exact(&problem, &field)?;
        println!("REL against closed form: {rel:.6e}");
    }
    Ok(field)
}

/// REL of a checkpoint on the problem's test set (or a saved reference grid).
pub fn eval(
    config: &RunConfig,
    checkpoint: &Path,
    reference: Option<&Path>,
    pointwise_out: Option<&Path>,
) -> Result<f64> {
    let problem = config.load_problem()?;
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(checkpoint))?)?;
    let net_cfg: NetworkConfig = serde_json::from_value(sidecar["config"].clone())?;
    let network = Network::new(net_cfg)?;
    let params = load_checkpoint(checkpoint, &network)?;
    let test = match reference {
        None => TestSet::for_problem(&problem, config.train.seed)?,
        Some(path) => {
            let field = GridField::load(path)?;
            let points = match problem.test_layout() {
                TestLayout::Grid { h, slice } => fmpinn::sampling::eval_grid(problem.domain(), *h, slice)?,
                TestLayout::Random { .. } => TestSet::for_problem(&problem, config.train.seed)?.points,
            };
            let reference = points
                .iter_rows()
                .map(|x| field.interpolate(x))
                .collect::<Result<Vec<_>>>()?;
            TestSet::new(points, reference, ReferenceSource::FiniteDifference { h: field.h() })?
        }
    };
    let result = evaluate(&network, &params, &test)?;
    if let Some(path) = pointwise_out {
        write_pointwise(path, &test, &result.prediction)?;
    }
    Ok(result.rel)
}

/// Resolves a config without running it; used for `--dry-run`.
pub fn describe(config: &RunConfig) -> Result<Resolved> {
    config.resolve()
}

/// Reads `run.csv` back.
pub fn read_run_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<EvalRow>, _>>()?;
    Ok(rows)
}

/// Header of `run.csv`.
pub fn run_csv_header() -> &'static str {
    RunRecord::CSV_HEADER
}
