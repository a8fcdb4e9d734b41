//! End-to-end acceptance criteria. Everything runs inside one test so the
//! timed criteria do not compete for cores; each criterion prints one
//! PASS/FAIL line and the test fails if any gated criterion fails.
//!
//! `FMPINN_SWEEP_EPOCHS` sets the epoch count of the (ungated) method
//! comparison, default 1000.

use std::io::Write;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use fmpinn::fdm::{convergence_order, FdmOptions};
use fmpinn::loss::{gamma_schedule, Method};
use fmpinn::network::{NetworkConfig, Parameters};
use fmpinn::problems::{by_name, example_1d_two_scale};
use fmpinn::trainer::{EvalRow, Observer, TrainConfig, Trainer};
use fmpinn_cli::checks::{
    aggregation_equivalence, derivative_check, exact_plugin, fdm_rel_against_exact, fourier_range,
    gamma_table_mismatches, lr_table_mismatches, maximum_principle_minimum, permutation_invariance, smooth_problem,
};
use fmpinn_cli::commands::{sweep, train_to_dir, SweepAxis};
use fmpinn_cli::config::{NetworkSection, RunConfig};

struct Line {
    id: u8,
    gated: bool,
    passed: bool,
    detail: String,
}

impl Line {
    fn print(&self) {
        let verdict = match (self.gated, self.passed) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        // direct to stderr so the verdicts show even when output is captured
        let _ = writeln!(std::io::stderr().lock(), "[acceptance {}] {verdict}  {}", self.id, self.detail);
    }
}

fn gated(id: u8, passed: bool, detail: String) -> Line {
    Line {
        id,
        gated: true,
        passed,
        detail,
    }
}

fn failed(id: u8, what: &str, e: impl std::fmt::Display) -> Line {
    gated(id, false, format!("{what}: error {e}"))
}

const REDUCED_SCALES: [f64; 10] = [1., 2., 3., 4., 5., 10., 20., 30., 40., 50.];
const REDUCED_HIDDEN: [usize; 5] = [30, 40, 30, 30, 30];

/// Stops at the first evaluation meeting the target or once over budget.
struct Target {
    started: Instant,
    budget: Duration,
    rel: f64,
    hit: Option<(u64, f64, f64)>,
    last: Option<(u64, f64)>,
}

impl Observer for Target {
    fn evaluation(&mut self, row: &EvalRow, _params: &Parameters) -> ControlFlow<()> {
        let t = self.started.elapsed();
        self.last = Some((row.epoch, row.rel));
        if t > self.budget {
            return ControlFlow::Break(());
        }
        if row.rel <= self.rel {
            self.hit = Some((row.epoch, row.rel, t.as_secs_f64()));
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    }
}

fn training_target() -> Line {
    let what = "ex1 eps=0.1 reduced config reaches REL <= 5e-3 within 20 min";
    let problem = match example_1d_two_scale(0.1) {
        Ok(p) => p,
        Err(e) => return failed(1, what, e),
    };
    let mut net = NetworkConfig::fmpinn(1);
    net.scales = REDUCED_SCALES.to_vec();
    net.hidden = REDUCED_HIDDEN.to_vec();
    let cfg = TrainConfig {
        epochs: 10_000,
        eval_every: 250,
        n_interior: Some(3000),
        n_boundary: Some(500),
        beta: 10.0,
        seed: 1,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let mut target = Target {
        started,
        budget: Duration::from_secs(20 * 60),
        rel: 5e-3,
        hit: None,
        last: None,
    };
    let result = Trainer::new(&problem, net, cfg).map_err(|e| e.to_string()).and_then(|t| {
        t.run(&mut target).map_err(|e| match e {
            fmpinn::trainer::TrainError::Setup(e) => e.to_string(),
            fmpinn::trainer::TrainError::Aborted(a) => a.to_string(),
        })
    });
    if let Err(e) = result {
        return failed(1, what, e);
    }
    match target.hit {
        Some((epoch, rel, secs)) => gated(1, true, format!("{what}: REL {rel:.3e} at epoch {epoch} after {secs:.0} s")),
        None => {
            let (epoch, rel) = target.last.unwrap_or((0, f64::NAN));
            let secs = started.elapsed().as_secs_f64();
            gated(1, false, format!("{what}: last REL {rel:.3e} at epoch {epoch} after {secs:.0} s"))
        }
    }
}

fn autodiff() -> Line {
    let what = "gradients of 50 random networks vs central differences";
    let started = Instant::now();
    match derivative_check(50, 500, 7) {
        Ok(r) => {
            let secs = started.elapsed().as_secs_f64();
            let ok = r.networks == 50 && r.worst_param_rel <= 1e-5 && r.worst_input_rel <= 1e-6 && secs < 60.0;
            gated(
                2,
                ok,
                format!(
                    "{what}: param rel {:.1e} (<= 1e-5), input rel {:.1e} (<= 1e-6), {} params, {secs:.1} s (< 60 s)",
                    r.worst_param_rel, r.worst_input_rel, r.params_checked
                ),
            )
        }
        Err(e) => failed(2, what, e),
    }
}

fn exact_plugins() -> Line {
    let what = "closed-form plug-in on 1000-point batches";
    let mut worst_interior = 0.0_f64;
    let mut worst_boundary = 0.0_f64;
    for name in ["ex1_eps0.1", "ex1_eps0.01", "ex2", "ex6"] {
        let parts = by_name(name).and_then(|p| exact_plugin(&p, 1000, 11));
        match parts {
            Ok((pde, flux, bd)) => {
                worst_interior = worst_interior.max(pde).max(flux);
                worst_boundary = worst_boundary.max(bd);
            }
            Err(e) => return failed(3, what, format!("{name}: {e}")),
        }
    }
    let ok = worst_interior <= 1e-8 && worst_boundary <= 1e-12;
    gated(
        3,
        ok,
        format!("{what} (ex1 0.1/0.01, ex2, ex6): interior {worst_interior:.1e} (<= 1e-8), boundary {worst_boundary:.1e} (<= 1e-12)"),
    )
}

fn schedules() -> Line {
    let what = "penalty and learning-rate tables";
    match (gamma_table_mismatches(gamma_schedule), lr_table_mismatches()) {
        (Ok(g), Ok(l)) => gated(
            4,
            g.is_empty() && l.is_empty(),
            format!("{what}: {} penalty and {} rate mismatches", g.len(), l.len()),
        ),
        (Err(e), _) | (_, Err(e)) => failed(4, what, e),
    }
}

fn fdm() -> Line {
    let what = "finite-difference convergence and ex1 reference";
    let started = Instant::now();
    let order = smooth_problem(2).and_then(|p| convergence_order(&p, &[1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0], &FdmOptions::default()));
    let order = match order {
        Ok(r) => r,
        Err(e) => return failed(5, what, e),
    };
    let rel = match example_1d_two_scale(0.1).and_then(|p| fdm_rel_against_exact(&p, 1.0 / 4096.0)) {
        Ok(r) => r,
        Err(e) => return failed(5, what, e),
    };
    let secs = started.elapsed().as_secs_f64();
    let ok = order.reliable && (1.9..=2.1).contains(&order.order) && rel <= 1e-4 && secs < 120.0;
    gated(
        5,
        ok,
        format!("{what}: order {:.3} (in [1.9, 2.1]), REL {rel:.2e} at h = 1/4096 (<= 1e-4), {secs:.1} s (< 120 s)", order.order),
    )
}

fn tiny_run(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        problem: Some("ex1_eps0.1".into()),
        network: NetworkSection {
            scales: Some(vec![1.0, 4.0]),
            hidden: Some(vec![8, 8]),
            ..NetworkSection::default()
        },
        ..RunConfig::default()
    };
    cfg.train.epochs = 20;
    cfg.train.eval_every = 5;
    cfg.train.n_interior = Some(64);
    cfg.train.n_boundary = Some(8);
    cfg.train.seed = seed;
    cfg
}

struct Invariants {
    fourier_max: f64,
    aggregation: f64,
    permutation: f64,
    fdm_min: f64,
    identical_runs: bool,
}

fn measure_invariants() -> Result<Invariants, Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = tiny_run(5);
    train_to_dir(&cfg, &dir.path().join("a"))?;
    train_to_dir(&cfg, &dir.path().join("b"))?;
    let a = std::fs::read(dir.path().join("a/run.csv"))?;
    let b = std::fs::read(dir.path().join("b/run.csv"))?;
    Ok(Invariants {
        fourier_max: fourier_range(3)?,
        aggregation: aggregation_equivalence(3)?,
        permutation: permutation_invariance(3)?,
        fdm_min: maximum_principle_minimum()?,
        identical_runs: a == b && !a.is_empty(),
    })
}

fn invariants() -> Line {
    let what = "invariant suite";
    match measure_invariants() {
        Ok(m) => {
            let ok = m.fourier_max <= 1.0
                && m.aggregation <= 1e-14
                && m.permutation <= 1e-12
                && m.fdm_min >= -1e-12
                && m.identical_runs;
            gated(
                6,
                ok,
                format!(
                    "{what}: fourier max {:.6} (<= 1), aggregation {:.1e} (<= 1e-14), permutation {:.1e}, \
                     maximum principle min {:.1e}, run.csv identical {}",
                    m.fourier_max, m.aggregation, m.permutation, m.fdm_min, m.identical_runs
                ),
            )
        }
        Err(e) => failed(6, what, e),
    }
}

fn method_comparison() -> Line {
    let epochs: u64 = std::env::var("FMPINN_SWEEP_EPOCHS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
    let what = format!("method comparison on ex1 eps=0.01, {epochs} epochs");
    let mut base = RunConfig {
        problem: Some("ex1_eps0.01".into()),
        network: NetworkSection {
            scales: Some(REDUCED_SCALES.to_vec()),
            hidden: Some(REDUCED_HIDDEN.to_vec()),
            ..NetworkSection::default()
        },
        ..RunConfig::default()
    };
    base.train.epochs = epochs;
    base.train.eval_every = epochs;
    base.train.n_interior = Some(3000);
    base.train.n_boundary = Some(500);
    base.train.seed = 1;
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return failed(7, &what, e),
    };
    let values = [Method::Fmpinn.name().to_string(), Method::Mpinn.name().to_string()];
    let rows = match sweep(&base, SweepAxis::Method, &values, dir.path(), 1) {
        Ok(r) => r,
        Err(e) => return failed(7, &what, e),
    };
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |r| format!("{r:.3e}"));
    let detail = rows
        .iter()
        .map(|r| format!("{} REL {} ({}, {:.0} s)", r.value, fmt(r.final_rel), r.status, r.wall_seconds))
        .collect::<Vec<_>>()
        .join(", ");
    let ordering = match (rows[0].final_rel, rows[1].final_rel) {
        (Some(f), Some(m)) if f < m => "fmpinn lower",
        (Some(_), Some(_)) => "mpinn lower or equal",
        _ => "incomplete",
    };
    Line {
        id: 7,
        gated: false,
        passed: true,
        detail: format!("{what}: {detail}; {ordering}"),
    }
}

#[test]
fn acceptance_criteria() {
    let mut lines = Vec::new();
    // fast criteria first so their verdicts show even if training is slow
    for criterion in [autodiff, exact_plugins, schedules, fdm, invariants, training_target, method_comparison] {
        let line = criterion();
        line.print();
        lines.push(line);
    }
    lines.sort_by_key(|l| l.id);
    let _ = writeln!(std::io::stderr().lock(), "summary:");
    for l in &lines {
        l.print();
    }
    let failed: Vec<u8> = lines.iter().filter(|l| l.gated && !l.passed).map(|l| l.id).collect();
    assert!(failed.is_empty(), "acceptance criteria failed: {failed:?}");
}
