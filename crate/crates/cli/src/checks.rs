//! Fast invariant suite behind `fmpinn validate`, and the heavier numerical
//! checks it is built from.

use std::fmt;

use fmpinn::fdm::{convergence_order, fdm_solve, FdmOptions, GridField};
use fmpinn::loss::{
    boundary_loss, fmpinn_interior_loss, gamma_schedule, BatchedLoss, ExprStub, GammaScheduleFn, Method,
};
use fmpinn::network::{Aggregation, FieldModel, HiddenActivation, Network, NetworkConfig, Parameters};
use fmpinn::problems::{by_name, c, differentiate_forcing, x, Forcing, Problem, TestLayout};
use fmpinn::sampling::{stream_rng, BoxDomain, SampleBatch, Stream};
use fmpinn::trainer::{adam_step, relative_l2, LrSchedule, TrainState};
use fmpinn::{autodiff::Tape, Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<32} {}", self.name, self.detail)
    }
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// `(epoch, expected gamma)` for 50000 epochs and `gamma0 = 10`.
pub const GAMMA_TABLE: [(u64, f64); 12] = [
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

/// Mismatches of `schedule` against [`GAMMA_TABLE`].
pub fn gamma_table_mismatches(schedule: GammaScheduleFn) -> Result<Vec<(u64, f64, f64)>> {
    let mut bad = Vec::new();
    for &(epoch, want) in &GAMMA_TABLE {
        let got = schedule(epoch, 50000, 10.0)?;
        if got != want {
            bad.push((epoch, got, want));
        }
    }
    Ok(bad)
}

pub const LR_TABLE: [(u64, f64); 3] = [(0, 0.01), (100, 0.00975), (250, 0.00950625)];

pub fn lr_table_mismatches() -> Result<Vec<(u64, f64, f64)>> {
    let mut s = LrSchedule::new(0.01, 0.025, 100)?;
    Ok(LR_TABLE
        .iter()
        .filter_map(|&(e, want)| {
            let got = s.rate(e);
            (got != want).then_some((e, got, want))
        })
        .collect())
}

/// Small random network for derivative checks: at most `max_params`
/// parameters, random biases.
pub fn random_network(rng: &mut ChaCha8Rng, dim: usize, max_params: usize) -> (Network, Parameters) {
    loop {
        let mut cfg = NetworkConfig::fmpinn(dim);
        let q = rng.gen_range(1..=3);
        let mut scales: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 5.0].choose_multiple(rng, q).cloned().collect();
        scales.sort_by(f64::total_cmp);
        cfg.scales = scales;
        let depth = rng.gen_range(1..=3);
        let width = rng.gen_range(2..=6);
        cfg.hidden = (0..depth).map(|i| if i > 0 && rng.gen_bool(0.3) { width + 1 } else { width }).collect();
        cfg.hidden_activation = if rng.gen_bool(0.5) { HiddenActivation::Sincos } else { HiddenActivation::Tanh };
        cfg.aggregation = if rng.gen_bool(0.5) { Aggregation::InverseScaleMean } else { Aggregation::LinearHead };
        cfg.soften = rng.gen_range(0.5..=1.0);
        let net = Network::new(cfg).expect("valid config");
        if net.param_count() > max_params {
            continue;
        }
        let mut p = net.init_parameters(rng.gen());
        for v in p.as_mut_slice() {
            *v += rng.gen_range(-0.3..0.3);
        }
        return (net, p);
    }
}

/// Worst per-coordinate deviations found by [`derivative_check`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DerivativeReport {
    pub networks: usize,
    pub params_checked: usize,
    /// Reverse-mode parameter gradient against central differences.
    pub worst_param_rel: f64,
    /// Forward-mode input derivatives against central differences.
    pub worst_input_rel: f64,
    /// Batched tape jets against the scalar dual-number path.
    pub worst_tape_vs_dual: f64,
}

/// Relative error with the denominator floored at `1e-6 * max(1, scale)`,
/// so entries that vanish up to rounding are compared absolutely.
fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6 * scale.max(1.0))
}

/// Checks reverse-mode parameter gradients of the total loss and forward-mode
/// input derivatives on `networks` random networks.
pub fn derivative_check(networks: usize, max_params: usize, seed: u64) -> Result<DerivativeReport> {
    let mut rng = stream_rng(seed, Stream::Probe);
    let mut report = DerivativeReport::default();
    let problems = [by_name("ex1_eps0.1")?, by_name("ex3_eps0.25")?];
    for i in 0..networks {
        let problem = &problems[i % 2];
        let (net, params) = random_network(&mut rng, problem.dim(), max_params);
        let batch = SampleBatch::draw(problem.domain(), 6, 3, &mut rng)?;
        let loss = BatchedLoss {
            network: &net,
            problem,
            method: Method::Fmpinn,
            beta: 10.0,
            chunk: 4,
        };
        let gamma = 10.0;
        let mut grad = vec![0.0; net.param_count()];
        loss.evaluate(params.as_slice(), &batch, gamma, Some(&mut grad))?;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut p = params.as_slice().to_vec();
        let h = 1e-3;
        for j in 0..p.len() {
            let base = p[j];
            let mut at = |t: f64| -> Result<f64> {
                p[j] = base + t;
                Ok(loss.evaluate(&p, &batch, gamma, None)?.total)
            };
            let (f2, f1, b1, b2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
            p[j] = base;
            let fd = (-f2 + 8.0 * f1 - 8.0 * b1 + b2) / (12.0 * h);
            report.worst_param_rel = report.worst_param_rel.max(rel_err(grad[j], fd, scale));
        }
        report.params_checked += p.len();

        let model = net.bind(&params);
        for _ in 0..3 {
            let x0: Vec<f64> = (0..problem.dim())
                .map(|k| rng.gen_range(problem.domain().lo()[k]..problem.domain().hi()[k]))
                .collect();
            for k in 0..problem.dim() {
                let jet = model.jet(&x0, k, true)?;
                let hx = 1e-4;
                let shifted = |t: f64| -> Result<Vec<f64>> {
                    let mut y = x0.clone();
                    y[k] += t;
                    net.forward(&params, &y)
                };
                let (f2, f1, b1, b2) = (shifted(2.0 * hx)?, shifted(hx)?, shifted(-hx)?, shifted(-2.0 * hx)?);
                for o in 0..jet.d1.len() {
                    let fd = (-f2[o] + 8.0 * f1[o] - 8.0 * b1[o] + b2[o]) / (12.0 * hx);
                    report.worst_input_rel = report.worst_input_rel.max(rel_err(jet.d1[o], fd, 1.0));
                }
                let pts = fmpinn::Matrix::from_rows(std::slice::from_ref(&x0))?;
                let mut tape = Tape::new();
                let out = net.record(&mut tape, params.as_slice(), &pts, 2, false)?;
                let d2 = jet.d2.as_ref().expect("requested");
                for o in 0..jet.d1.len() {
                    let dv = (tape.value(out.d1[k]).get(0, o) - jet.d1[o]).abs();
                    let dd = (tape.value(out.d2[k]).get(0, o) - d2[o]).abs();
                    report.worst_tape_vs_dual = report.worst_tape_vs_dual.max(dv).max(dd);
                }
            }
        }
        report.networks += 1;
    }
    Ok(report)
}

/// Interior parts and boundary loss of the closed-form `(u, A grad u)` stub.
pub fn exact_plugin(problem: &Problem, n: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let stub = ExprStub::exact(problem)?;
    let mut rng = stream_rng(seed, Stream::Probe);
    let batch = SampleBatch::draw(problem.domain(), n, n, &mut rng)?;
    let (pde, flux) = fmpinn_interior_loss(&stub, &batch.interior, batch.domain_measure, problem)?;
    let bd = boundary_loss(&stub, &batch.boundary, problem)?;
    Ok((pde, flux, bd))
}

/// Largest Fourier-layer output magnitude over random networks and points,
/// including inputs far outside the domain.
pub fn fourier_range(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Probe);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dim = rng.gen_range(1..=3);
        let (net, params) = random_network(&mut rng, dim, 2000);
        for _ in 0..50 {
            let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0e3..1.0e3)).collect();
            let trace = net.subnet_trace(params.as_slice(), 0, &x0)?;
            worst = trace[0].iter().fold(worst, |m, v| m.max(v.abs()));
        }
    }
    Ok(worst)
}

/// Largest difference between inverse-scale-mean aggregation and an explicit
/// linear head with blocks `1 / (Q a_i)` and zero bias.
pub fn aggregation_equivalence(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Probe);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let dim = rng.gen_range(1..=3);
        let mut mean_cfg = NetworkConfig::fmpinn(dim);
        mean_cfg.scales = vec![1.0, 2.0, 5.0, 10.0];
        mean_cfg.hidden = vec![8, 8];
        mean_cfg.aggregation = Aggregation::InverseScaleMean;
        let mut head_cfg = mean_cfg.clone();
        head_cfg.aggregation = Aggregation::LinearHead;
        let mean_net = Network::new(mean_cfg)?;
        let head_net = Network::new(head_cfg)?;
        let mean_params = mean_net.init_parameters(rng.gen());
        let mut values = mean_params.as_slice().to_vec();
        let head = head_net.head().expect("linear head");
        values.resize(head_net.param_count(), 0.0);
        let out = head_net.config().dim_out;
        for i in 0..head_net.config().scales.len() {
            for o in 0..out {
                values[head.weight_offset + o * head.cols + i * out + o] = head_net.mean_weight(i);
            }
        }
        let head_params = Parameters::from_vec(values);
        for _ in 0..20 {
            let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = mean_net.forward(&mean_params, &x0)?;
            let b = head_net.forward(&head_params, &x0)?;
            worst = a.iter().zip(&b).fold(worst, |m, (p, q)| m.max((p - q).abs()));
        }
    }
    Ok(worst)
}

/// Relative change of the total loss when batch points are permuted.
pub fn permutation_invariance(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Probe);
    let problem = by_name("ex1_eps0.1")?;
    let (net, params) = random_network(&mut rng, 1, 500);
    let batch = SampleBatch::draw(problem.domain(), 64, 16, &mut rng)?;
    let mut shuffled = batch.clone();
    let mut perm: Vec<usize> = (0..batch.interior.rows()).collect();
    perm.shuffle(&mut rng);
    shuffled.interior = batch.interior.select_rows(&perm);
    let mut perm: Vec<usize> = (0..batch.boundary.rows()).collect();
    perm.shuffle(&mut rng);
    shuffled.boundary = batch.boundary.select_rows(&perm);
    let loss = BatchedLoss {
        network: &net,
        problem: &problem,
        method: Method::Fmpinn,
        beta: 10.0,
        chunk: 16,
    };
    let a = loss.evaluate(params.as_slice(), &batch, 10.0, None)?.total;
    let b = loss.evaluate(params.as_slice(), &shuffled, 10.0, None)?.total;
    Ok((a - b).abs() / a.abs())
}

/// `-u'' = 2pi^2 sin(pi x) sin(pi y)`-type smooth problem with constant coefficient.
pub fn smooth_problem(dim: usize) -> Result<Problem> {
    let pi = std::f64::consts::PI;
    let mut u = (x(0) * c(pi)).sin();
    for k in 1..dim {
        u = u * (x(k) * c(pi)).sin();
    }
    Problem::new(
        format!("smooth{dim}d"),
        BoxDomain::cube(dim, 0.0, 1.0)?,
        c(1.0),
        differentiate_forcing(&c(1.0), &u),
        c(0.0),
        Some(u),
        vec![],
        TestLayout::Random { n: 100 },
    )
}

/// REL of the finite-difference solution of a closed-form problem at its nodes.
pub fn fdm_rel_against_exact(problem: &Problem, h: f64) -> Result<f64> {
    field_rel_against_exact(problem, &fdm_solve(problem, h, &FdmOptions::default())?)
}

/// REL of a solved grid against the problem's closed form at its nodes.
pub fn field_rel_against_exact(problem: &Problem, field: &GridField) -> Result<f64> {
    let mut exact = Vec::with_capacity(field.len());
    for i in 0..field.len() {
        let x0 = field.node(i);
        exact.push(problem.exact(&x0)?.ok_or_else(|| Error::config("problem", "no closed form"))?);
    }
    relative_l2(field.values(), &exact)
}

/// Smallest nodal value of a solve with non-negative forcing and zero data.
pub fn maximum_principle_minimum() -> Result<f64> {
    let a = c(1.5) + (x(0) * c(40.0)).sin() * (x(1) * c(30.0)).sin();
    let problem = Problem::new(
        "max_principle",
        BoxDomain::cube(2, -1.0, 1.0)?,
        a,
        Forcing::Given(c(1.0) + x(0).square()),
        c(0.0),
        None,
        vec![],
        TestLayout::Random { n: 10 },
    )?;
    let field = fdm_solve(&problem, 1.0 / 32.0, &FdmOptions::default())?;
    Ok(field.values().iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Options for [`run_validation`]; the schedule is injectable so a broken
/// one can be shown to fail.
pub struct ValidationOptions {
    pub gamma: GammaScheduleFn,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            gamma: gamma_schedule,
            seed: 2024,
        }
    }
}

/// The fast invariant suite.
pub fn run_validation(opts: &ValidationOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(check(
        "gamma_schedule_table",
        gamma_table_mismatches(opts.gamma).map(|bad| (bad.is_empty(), format!("{} of {} entries differ {bad:?}", bad.len(), GAMMA_TABLE.len()))),
    ));
    out.push(check(
        "lr_schedule_table",
        lr_table_mismatches().map(|bad| (bad.is_empty(), format!("{} of {} entries differ {bad:?}", bad.len(), LR_TABLE.len()))),
    ));
    out.push(check(
        "adam_first_step",
        (|| {
            let mut s = TrainState::new(Parameters::from_vec(vec![0.0]), 0.01, 0);
            adam_step(&mut s, &[1.0])?;
            let got = s.params.as_slice()[0];
            let want = -0.01 / (1.0 + 1e-8);
            Ok(((got - want).abs() < 1e-18, format!("step {got:e}")))
        })(),
    ));
    out.push(check(
        "gradients_vs_differences",
        derivative_check(4, 300, opts.seed).map(|r| {
            (
                r.worst_param_rel <= 1e-5 && r.worst_input_rel <= 1e-6,
                format!("param rel {:.1e}, input rel {:.1e} over {} params", r.worst_param_rel, r.worst_input_rel, r.params_checked),
            )
        }),
    ));
    out.push(check(
        "tape_jets_vs_dual_numbers",
        derivative_check(2, 200, opts.seed + 1).map(|r| (r.worst_tape_vs_dual <= 1e-12, format!("max diff {:.1e}", r.worst_tape_vs_dual))),
    ));
    for (name, problem) in [
        ("exact_plugin_ex1_eps0.1", "ex1_eps0.1"),
        ("exact_plugin_ex1_eps0.01", "ex1_eps0.01"),
        ("exact_plugin_ex2", "ex2_eps0.1_0.01"),
        ("exact_plugin_ex6", "ex6"),
    ] {
        out.push(check(
            name,
            by_name(problem).and_then(|p| exact_plugin(&p, 200, opts.seed)).map(|(pde, flux, bd)| {
                (
                    pde <= 1e-8 && flux <= 1e-8 && bd <= 1e-12,
                    format!("pde {pde:.1e}, flux {flux:.1e}, boundary {bd:.1e}"),
                )
            }),
        ));
    }
    out.push(check(
        "fourier_layer_range",
        fourier_range(opts.seed).map(|m| (m <= 1.0, format!("max |output| {m}"))),
    ));
    out.push(check(
        "aggregation_equivalence",
        aggregation_equivalence(opts.seed).map(|d| (d <= 1e-14, format!("max diff {d:.1e}"))),
    ));
    out.push(check(
        "batch_permutation_invariance",
        permutation_invariance(opts.seed).map(|d| (d <= 1e-12, format!("relative change {d:.1e}"))),
    ));
    out.push(check(
        "fdm_quadratic_exact",
        (|| {
            let p = Problem::new(
                "quadratic",
                BoxDomain::cube(1, 0.0, 1.0)?,
                c(1.0),
                Forcing::Given(c(2.0)),
                c(0.0),
                Some(x(0) * (c(1.0) - x(0))),
                vec![],
                TestLayout::Random { n: 10 },
            )?;
            let field = fdm_solve(&p, 1.0 / 128.0, &FdmOptions::default())?;
            let mut worst: f64 = 0.0;
            for i in 0..field.len() {
                let t = field.node(i)[0];
                worst = worst.max((field.values()[i] - t * (1.0 - t)).abs());
            }
            Ok((worst <= 1e-12, format!("max error {worst:.1e}")))
        })(),
    ));
    out.push(check(
        "fdm_convergence_order",
        smooth_problem(2)
            .and_then(|p| convergence_order(&p, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], &FdmOptions::default()))
            .map(|r| (r.reliable && (1.9..=2.1).contains(&r.order), format!("order {:.3}", r.order))),
    ));
    out.push(check(
        "fdm_vs_closed_form_ex1",
        by_name("ex1_eps0.1").and_then(|p| fdm_rel_against_exact(&p, 1.0 / 512.0)).map(|rel| (rel <= 1e-3, format!("REL {rel:.2e} at h = 1/512"))),
    ));
    out.push(check(
        "fdm_maximum_principle",
        maximum_principle_minimum().map(|m| (m >= -1e-12, format!("min value {m:.2e}"))),
    ));
    out.push(check(
        "relative_error_algebra",
        (|| {
            let u = [1.0, -2.0, 0.5];
            let twice: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
            let a = relative_l2(&u, &u)?;
            let b = relative_l2(&twice, &u)?;
            let zero_ref = relative_l2(&u, &[0.0; 3]).is_err();
            Ok((a == 0.0 && (b - 1.0).abs() < 1e-15 && zero_ref, format!("rel(u,u) = {a}, rel(2u,u) = {b}")))
        })(),
    ));
    out
}
