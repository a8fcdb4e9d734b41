use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::{Args, Parser, Subcommand};
use fmpinn::loss::Method;
use fmpinn::Error;
use fmpinn_cli::checks::ValidationOptions;
use fmpinn_cli::commands::{self, exit_code_for, output_dir, ExitCode, SweepAxis};
use fmpinn_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "fmpinn", version, about = "Mixed-form PINN solver for multiscale elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its artifacts.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory (default: $FMPINN_OUT_DIR/<problem> or runs/<problem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Train one run per value of a single axis.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `0.1,0.01` or `fmpinn,mpinn`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the built-in invariant checks.
    Validate {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Solve a problem by finite differences.
    Fdm {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        allow_underresolved: bool,
        /// Binary output file; a CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Fix coordinates for the CSV, as `axis=value` (0-based axis).
        #[arg(long, value_parser = parse_slice)]
        slice: Vec<(usize, f64)>,
    },
    /// Evaluate a saved checkpoint.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference grid written by `fdm` instead of the default test set.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write per-point predictions and errors here.
        #[arg(long)]
        pointwise: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog problem name (overrides the config).
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    n_interior: Option<usize>,
    #[arg(long)]
    n_boundary: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "fmpinn" => Ok(Method::Fmpinn),
        "mpinn" => Ok(Method::Mpinn),
        _ => Err(format!("unknown method `{s}` (expected fmpinn or mpinn)")),
    }
}

fn parse_slice(s: &str) -> Result<(usize, f64), String> {
    let (axis, value) = s.split_once('=').ok_or("expected axis=value")?;
    let axis = axis.trim().parse().map_err(|_| format!("bad axis `{axis}`"))?;
    let value = value.trim().parse().map_err(|_| format!("bad value `{value}`"))?;
    Ok((axis, value))
}

impl RunArgs {
    fn load(&self) -> fmpinn::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem = Some(p.clone());
            cfg.problem_file = None;
        }
        let t = &mut cfg.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.beta {
            t.beta = v;
        }
        if let Some(v) = self.gamma0 {
            t.gamma0 = v;
        }
        if let Some(v) = self.lr0 {
            t.lr0 = v;
        }
        if let Some(v) = self.method {
            t.method = v;
        }
        if let Some(v) = self.eval_every {
            t.eval_every = v;
        }
        if self.n_interior.is_some() {
            t.n_interior = self.n_interior;
        }
        if self.n_boundary.is_some() {
            t.n_boundary = self.n_boundary;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Train { run, out, dry_run } => {
            let cfg = run.load()?;
            let resolved = commands::describe(&cfg)?;
            if dry_run {
                print!("{}", resolved.echo(&cfg).to_toml_string());
                println!("# config hash {}", resolved.hash());
                return Ok(ExitCode::Ok);
            }
            let dir = output_dir(out.as_deref(), resolved.problem.name());
            let report = commands::train_to_dir(&cfg, &dir)?;
            match report.summary.final_rel {
                Some(rel) => println!("final REL {rel:.6e}, artifacts in {}", dir.display()),
                None => println!("no evaluation recorded, artifacts in {}", dir.display()),
            }
            if let Some(e) = &report.summary.error {
                eprintln!("error: {e}");
            }
            Ok(report.exit)
        }
        Command::Sweep { run, axis, values, out, jobs } => {
            let cfg = run.load()?;
            let dir = output_dir(out.as_deref(), &format!("sweep_{}", axis.name()));
            let rows = commands::sweep(&cfg, axis, &values, &dir, jobs)?;
            let mut any_failed = false;
            for r in &rows {
                let rel = r.final_rel.map_or("-".to_string(), |v| format!("{v:.6e}"));
                println!("{}={:<10} {:<8} REL {rel} {}", r.axis, r.value, r.status, r.error);
                any_failed |= r.status != "completed";
            }
            println!("wrote {}", dir.join("sweep.csv").display());
            Ok(if any_failed { ExitCode::Numeric } else { ExitCode::Ok })
        }
        Command::Validate { seed } => {
            let opts = ValidationOptions { seed, ..ValidationOptions::default() };
            let (code, _) = commands::validate(&opts);
            Ok(code)
        }
        Command::Fdm { run, h, allow_underresolved, out, slice } => {
            let cfg = run.load()?;
            commands::fdm(&cfg, h, allow_underresolved, &out, &slice)?;
            Ok(ExitCode::Ok)
        }
        Command::Eval { run, checkpoint, reference, pointwise } => {
            let cfg = run.load()?;
            let rel = commands::eval(&cfg, &checkpoint, reference.as_deref(), pointwise.as_deref())?;
            println!("REL {rel:.6e}");
            Ok(ExitCode::Ok)
        }
    }
}

fn main() -> ProcessExit {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage as u8 } else { 0 };
            let _ = e.print();
            return ProcessExit::from(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    ProcessExit::from(code as u8)
}
