//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::Rng;
use seqdesign::criteria::{self, Criterion};
use seqdesign::harness::{
    self, baseline_random_phase, run_trial, sweep, DesignOptions, ExperimentPlan, Method, Mode, ScenarioSpec,
    SweepResult,
};
use seqdesign::linalg::{CMatrix, CVector};
use seqdesign::mm::{self, MMState, SolveOptions, MONOTONE_SLACK};
use seqdesign::model::{Scenario, SequenceConfig};
use seqdesign::par::{self, ParSpec};
use seqdesign::{Direction, Termination};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn algebraic_identities() -> Check {
    let mut rng = rng(101);
    let (mut worst_cov, mut worst_cmi) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let sc = random_scenario(&mut rng);
        let (r0, w) = (&sc.prior.cov, sc.noise.cov());
        let s = sc.lift(&baseline_random_phase(&sc.config, &mut rng));
        let r = criteria::error_covariance(&s, &sc.prior, &sc.noise).unwrap().r;
        let info = information_form(&s, r0, w);
        worst_cov = worst_cov.max((&r - &info).norm() / info.norm());
        worst_cov = worst_cov.max(rel(criteria::mmse_objective(&s, &sc.prior, &sc.noise).unwrap(), trace_re(&info)));
    }
    for _ in 0..50 {
        let sc = random_scenario(&mut rng);
        let s = sc.lift(&baseline_random_phase(&sc.config, &mut rng));
        let cmi = criteria::cmi_objective(&s, &sc.prior, &sc.noise).unwrap();
        worst_cmi = worst_cmi.max(rel(cmi, dense_cmi(&s, &sc.prior.cov, sc.noise.cov())));
    }
    ensure(
        worst_cov <= 1e-8 && worst_cmi <= 1e-8,
        format!("error-covariance worst {worst_cov:.2e}, cmi worst {worst_cmi:.2e} (tol 1e-8, 50 instances each)"),
    )
}

/// Second point of a majorization pair: either an unrelated feasible point
/// or a small feasible perturbation of the current one.
fn partner(sc: &Scenario, at: &seqdesign::Sequence, rng: &mut rand_chacha::ChaCha8Rng, near: bool) -> seqdesign::Sequence {
    if !near {
        return baseline_random_phase(&sc.config, rng);
    }
    let eps = 10f64.powf(-rng.random_range(1.0..4.0));
    let bumped = at.matrix() + random_matrix(rng, sc.config.n, sc.config.nt).scale(eps);
    mm::project_unimodular(&bumped, sc.config.unimodular_magnitude()).unwrap()
}

fn majorization() -> Check {
    let mut rng = rng(202);
    let (mut tangency, mut domination) = (0.0f64, 0.0f64);
    for criterion in [Criterion::Mmse, Criterion::Cmi] {
        for pair in 0..100 {
            let sc = random_scenario(&mut rng);
            let (r0, w) = (&sc.prior.cov, sc.noise.cov());
            let at = baseline_random_phase(&sc.config, &mut rng);
            let other = partner(&sc, &at, &mut rng, pair % 2 == 1);
            let st = MMState::new(&sc, criterion, &at).unwrap();
            let (s_now, s) = (sc.lift(&at), sc.lift(&other));
            let dense_f = |s: &CMatrix| match criterion {
                Criterion::Mmse => dense_mmse(s, r0, w),
                Criterion::Cmi => dense_cmi(s, r0, w),
            };
            let f_now = dense_f(&s_now);
            let scale = f_now.abs().max(1.0);
            let q_now = st.quadratic_surrogate(&s_now, r0);
            let q_scale = q_now.abs().max(1.0);
            tangency = tangency.max((st.first_surrogate(&s_now, r0) - f_now).abs() / scale);
            tangency = tangency.max((st.linear_surrogate(&s_now, r0) - q_now).abs() / q_scale);

            let (f, g) = (dense_f(&s), st.first_surrogate(&s, r0));
            let gap = match criterion.direction() {
                Direction::Minimize => f - g,
                Direction::Maximize => g - f,
            };
            domination = domination.max(gap / scale);
            let (q, lin) = (st.quadratic_surrogate(&s, r0), st.linear_surrogate(&s, r0));
            domination = domination.max((q - lin) / q_scale);
        }
    }
    ensure(
        tangency <= 1e-9 && domination <= 1e-9,
        format!("tangency worst {tangency:.2e}, domination worst {:.2e} (tol 1e-9, 100 pairs per criterion)", domination),
    )
}

fn lambda_bound() -> Check {
    let mut rng = rng(303);
    let (mut cases, mut violations, mut tightest) = (0, 0, f64::INFINITY);
    while cases < 50 {
        let sc = random_scenario(&mut rng);
        if sc.prior.dim() * sc.config.received_dim() > 64 {
            continue;
        }
        let criterion = if cases % 2 == 0 { Criterion::Mmse } else { Criterion::Cmi };
        let st = MMState::new(&sc, criterion, &baseline_random_phase(&sc.config, &mut rng)).unwrap();
        let top = dense_lambda_max(&dense_kron(&sc.prior.cov.transpose(), &st.curvature));
        if st.lambda < top {
            violations += 1;
        }
        tightest = tightest.min(st.lambda / top);
        cases += 1;
    }
    ensure(
        violations == 0,
        format!("{violations} violations in {cases} instances; smallest lambda / lambda_max = {tightest:.3}"),
    )
}

fn siso_at(snr_db: f64) -> Scenario {
    ScenarioSpec { snr_db: Some(snr_db), ..ScenarioSpec::siso_reference() }.build().unwrap()
}

fn monotone_convergence() -> Check {
    let mut rng = rng(404);
    let (mut worst, mut solves) = (0.0f64, 0);
    for _ in 0..6 {
        let base = random_scenario(&mut rng);
        let c = base.config.clone();
        let props: Vec<f64> = (0..c.nt).map(|_| 0.5 + rng.random::<f64>()).collect();
        let limits: Vec<f64> = (0..c.nt).map(|_| 1.0 + rng.random::<f64>() * (c.n as f64 - 1.0)).collect();
        let par_cfg = SequenceConfig::with_par(c.n, c.nt, c.nr, c.k, c.alpha, &props, &limits).unwrap();
        for mode in [Mode::Unimodular, Mode::Par] {
            let mut sc = base.clone();
            if mode == Mode::Par {
                sc.config = par_cfg.clone();
            }
            let init = baseline_random_phase(&sc.config, &mut rng);
            for criterion in [Criterion::Mmse, Criterion::Cmi] {
                for accelerate in [false, true] {
                    let opts = DesignOptions {
                        tol: 1e-9,
                        max_iters: 500,
                        max_accel_iters: 250,
                        record_trace: true,
                        ..Default::default()
                    };
                    let (_, t) = harness::design(&sc, criterion, mode, accelerate, &init, &opts).unwrap();
                    worst = worst.max(t.worst_violation());
                    solves += 1;
                }
            }
        }
    }
    let sc = siso_at(-5.0);
    let init = baseline_random_phase(&sc.config, &mut rng);
    let mut reference = Vec::new();
    for criterion in [Criterion::Mmse, Criterion::Cmi] {
        for accelerate in [false, true] {
            let opts = DesignOptions { record_trace: true, ..Default::default() };
            let (_, t) = harness::design(&sc, criterion, Mode::Unimodular, accelerate, &init, &opts).unwrap();
            worst = worst.max(t.worst_violation());
            solves += 1;
            let label = format!("{}{}", criterion.name(), if accelerate { "-accel" } else { "" });
            reference.push((label, t.converged(), t.iterations));
        }
    }
    let all_converged = reference.iter().all(|r| r.1);
    let summary: Vec<String> = reference
        .iter()
        .map(|(l, ok, it)| format!("{l} {} in {it}", if *ok { "converged" } else { "capped" }))
        .collect();
    ensure(
        worst <= MONOTONE_SLACK && all_converged,
        format!(
            "{solves} solves, worst relative violation {worst:.2e} (tol 1e-10); SISO -5 dB at tol 1e-6: {}",
            summary.join(", ")
        ),
    )
}

fn stationarity() -> Check {
    let mut rng = rng(505);
    let tol = 1e-8;
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for (label, sc) in [("siso", siso_at(-5.0)), ("mimo 2x2", mimo_at(2, 2, -5.0, false))] {
        for criterion in [Criterion::Mmse, Criterion::Cmi] {
            let init = baseline_random_phase(&sc.config, &mut rng);
            let opts = DesignOptions { tol, ..Default::default() };
            let (u, t) = harness::design(&sc, criterion, Mode::Unimodular, true, &init, &opts).unwrap();
            if !t.converged() {
                return Err(format!("{label} {} did not reach tol {tol:e}", criterion.name()));
            }
            let next = mm::mm_update(&u, &sc, criterion).unwrap();
            let moved = (next.matrix() - u.matrix()).norm();
            worst = worst.max(moved);
            notes.push(format!("{label}/{} {moved:.1e}", criterion.name()));
        }
    }
    ensure(worst <= 10.0 * tol, format!("extra-update move {} (limit {:.0e})", notes.join(", "), 10.0 * tol))
}

/// Closest point to `c` on the real sphere `||u||² = alpha` inside the box
/// `|u_i| <= peak`, by brute force over angles.
fn grid_distance(c: &[f64], alpha: f64, peak: f64) -> f64 {
    let r = alpha.sqrt();
    let mut best = f64::INFINITY;
    let mut consider = |u: &[f64]| {
        if u.iter().all(|x| x.abs() <= peak) {
            let d: f64 = u.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d);
        }
    };
    let tau = std::f64::consts::TAU;
    match c.len() {
        2 => {
            let steps = 200_000;
            for i in 0..steps {
                let t = tau * i as f64 / steps as f64;
                consider(&[r * t.cos(), r * t.sin()]);
            }
        }
        3 => {
            let (nt, np) = (3000, 6000);
            for i in 0..=nt {
                let theta = std::f64::consts::PI * i as f64 / nt as f64;
                let (st, ct) = theta.sin_cos();
                for j in 0..np {
                    let phi = tau * j as f64 / np as f64;
                    consider(&[r * st * phi.cos(), r * st * phi.sin(), r * ct]);
                }
            }
        }
        _ => unreachable!(),
    }
    best.sqrt()
}

fn par_projection_oracle() -> Check {
    let mut rng = rng(606);
    let (mut gap, mut energy, mut excess) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for case in 0..20 {
        let n = 2 + case % 2;
        let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let alpha = 0.5 + rng.random::<f64>() * 2.5;
        let xi = 1.0 + rng.random::<f64>() * (n as f64 - 1.0);
        let spec = ParSpec::new(alpha, xi, n).unwrap();
        let cv = CVector::from_iterator(n, c.iter().map(|&x| x.into()));
        let u = par::project_par(&cv, &spec).unwrap();
        let d = (&u - &cv).norm();
        gap = gap.max(d - grid_distance(&c, alpha, spec.peak()));
        energy = energy.max(rel(u.norm_squared(), alpha));
        excess = excess.max(u.iter().map(|z| z.norm() - spec.peak()).fold(f64::NEG_INFINITY, f64::max) / spec.peak());
    }
    let mut bitwise = true;
    for _ in 0..50 {
        let n = rng.random_range(1..12);
        let alpha = 0.1 + rng.random::<f64>() * 5.0;
        let c = random_matrix(&mut rng, n, 1);
        let spec = ParSpec::new(alpha, 1.0, n).unwrap();
        let a = par::project_par(&c.column(0).into_owned(), &spec).unwrap();
        let b = mm::project_unimodular(&c, (alpha / n as f64).sqrt()).unwrap();
        bitwise &= a.as_slice() == b.matrix().as_slice();
    }
    ensure(
        gap <= 1e-3 && energy <= 1e-9 && excess <= 1e-12 && bitwise,
        format!(
            "grid gap worst {gap:.2e} (tol 1e-3), energy {energy:.1e} (tol 1e-9), peak excess {excess:.1e} \
             (tol 1e-12), unit-PAR bitwise {bitwise}"
        ),
    )
}

fn estimator_consistency() -> Check {
    let truth = ScenarioSpec::siso_reference().truth.unwrap();
    let spec = ScenarioSpec { prior: truth, truth: None, snr_db: Some(-5.0), ..ScenarioSpec::siso_reference() };
    let sc = spec.build().unwrap();
    let mut rng = rng(707);
    let u = baseline_random_phase(&sc.config, &mut rng);
    let expected = criteria::mmse_objective(&sc.lift(&u), &sc.prior, &sc.noise).unwrap();
    let trials = 10_000;
    let mean = (0..trials).map(|_| run_trial(&sc, &u, &mut rng).unwrap().mse).sum::<f64>() / trials as f64;
    let dev = rel(mean, expected);
    ensure(dev <= 0.05, format!("empirical {mean:.4} vs Tr(R) {expected:.4} over {trials} trials, deviation {:.2}%", dev * 100.0))
}

fn mimo_at(nt: usize, nr: usize, snr_db: f64, par: bool) -> Scenario {
    let base = if par { ScenarioSpec::mimo_par_reference(nr) } else { ScenarioSpec::mimo_reference(nt, nr) };
    ScenarioSpec { snr_db: Some(snr_db), ..base }.build().unwrap()
}

const SNRS: [f64; 3] = [-10.0, -5.0, 0.0];

fn reference_sweep(scenario: ScenarioSpec, trials: usize) -> SweepResult {
    let plan = ExperimentPlan {
        scenario,
        methods: vec![Method::RandomPhase, Method::MmseOptimalAccel, Method::CmiOptimalAccel],
        snr_db: SNRS.to_vec(),
        trials,
        seed: 2024,
        mode: Mode::Unimodular,
        tol: 1e-6,
        max_iters: None,
    };
    let res = sweep(&plan).unwrap();
    assert_eq!(res.failures().count(), 0, "sweep had failing trials");
    res
}

struct Sweeps {
    siso: SweepResult,
    mimo: SweepResult,
}

fn mse_ordering(sweeps: &Sweeps) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, res) in [("siso", &sweeps.siso), ("mimo 3x3", &sweeps.mimo)] {
        let gaps: Vec<f64> = SNRS
            .iter()
            .map(|&snr| {
                let designed = res.mean(Method::MmseOptimalAccel, snr, |r| r.mse).unwrap();
                let random = res.mean(Method::RandomPhase, snr, |r| r.mse).unwrap();
                random - designed
            })
            .collect();
        ok &= gaps.iter().all(|&g| g > 0.0) && gaps[0] >= gaps[1] && gaps[0] >= gaps[2];
        parts.push(format!("{label} gaps {:.3}/{:.3}/{:.3}", gaps[0], gaps[1], gaps[2]));
    }
    ensure(ok, format!("mean MSE(random) - MSE(mmse-accel) at -10/-5/0 dB: {}", parts.join("; ")))
}

fn cmi_ordering(sweeps: &Sweeps) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, res) in [("siso", &sweeps.siso), ("mimo 3x3", &sweeps.mimo)] {
        let gains: Vec<f64> = SNRS
            .iter()
            .map(|&snr| {
                res.mean(Method::CmiOptimalAccel, snr, |r| r.cmi).unwrap()
                    - res.mean(Method::RandomPhase, snr, |r| r.cmi).unwrap()
            })
            .collect();
        ok &= gains.iter().all(|&g| g >= 0.0);
        parts.push(format!("{label} gains {:.3}/{:.3}/{:.3}", gains[0], gains[1], gains[2]));
    }
    ensure(ok, format!("mean CMI(cmi-accel) - CMI(random) at -10/-5/0 dB: {}", parts.join("; ")))
}

/// Accelerated run to tol 1e-6, then plain MM capped at the accelerated run's
/// MM updates plus its extra objective evaluations. Plain MM still short of
/// the tolerance at that budget means it needs strictly more evaluations.
fn acceleration_pays_off() -> Check {
    let cases = [
        ("siso", siso_at(-5.0), Mode::Unimodular),
        ("mimo 3x4", mimo_at(3, 4, -5.0, false), Mode::Unimodular),
        ("mimo 3x4 par", mimo_at(3, 4, -5.0, true), Mode::Par),
    ];
    let mut rng = rng(808);
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, sc, mode) in &cases {
        let init = baseline_random_phase(&sc.config, &mut rng);
        for criterion in [Criterion::Mmse, Criterion::Cmi] {
            let opts = DesignOptions::default();
            let (_, fast) = harness::design(sc, criterion, *mode, true, &init, &opts).unwrap();
            if fast.termination != Termination::Tolerance {
                ok = false;
                parts.push(format!(
                    "{label}/{}: accelerated capped after {} evals",
                    criterion.name(),
                    fast.update_evals
                ));
                continue;
            }
            let cost = fast.update_evals + fast.objective_evals;
            let budget = SolveOptions { tol: 1e-6, max_iters: cost, record_trace: false };
            let set = mode.feasible_set(&sc.config).unwrap();
            let (_, plain) = mm::solve_on(sc, criterion, set.as_ref(), &init, &budget).unwrap();
            let faster = !plain.converged();
            ok &= faster;
            parts.push(format!(
                "{label}/{}: accel {}+{} evals, plain {} at that budget",
                criterion.name(),
                fast.update_evals,
                fast.objective_evals,
                if faster { "not converged" } else { "converged" }
            ));
        }
    }
    ensure(ok, parts.join("; "))
}

fn determinism() -> Check {
    let plan = ExperimentPlan {
        scenario: ScenarioSpec::siso_reference(),
        methods: Method::ALL.to_vec(),
        snr_db: vec![-10.0, -5.0],
        trials: 2,
        seed: 99,
        mode: Mode::Unimodular,
        tol: 1e-6,
        max_iters: None,
    };
    let render = || {
        let mut out = Vec::new();
        sweep(&plan).unwrap().write_csv(&mut out, false).unwrap();
        out
    };
    let (a, b) = (render(), render());
    ensure(a == b, format!("{} rows, {} bytes, identical: {}", a.iter().filter(|&&c| c == b'\n').count() - 1, a.len(), a == b))
}

fn run(name: &str, failures: &mut usize, f: impl FnOnce() -> Check) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => {
            *failures += 1;
            ("FAIL", d)
        }
    };
    println!("{tag}  {name:<24} [{secs:6.1}s] {detail}");
}

fn main() -> ExitCode {
    let mut failures = 0;
    run("algebraic-identities", &mut failures, algebraic_identities);
    run("majorization", &mut failures, majorization);
    run("lambda-bound", &mut failures, lambda_bound);
    run("monotone-convergence", &mut failures, monotone_convergence);
    run("stationarity", &mut failures, stationarity);
    run("par-projection-oracle", &mut failures, par_projection_oracle);
    run("estimator-consistency", &mut failures, estimator_consistency);

    let start = Instant::now();
    let sweeps = catch_unwind(|| Sweeps {
        siso: reference_sweep(ScenarioSpec::siso_reference(), 50),
        mimo: reference_sweep(ScenarioSpec::mimo_reference(3, 3), 20),
    });
    println!("      reference sweeps done in {:.1}s", start.elapsed().as_secs_f64());
    match &sweeps {
        Ok(s) => {
            run("mse-ordering", &mut failures, || mse_ordering(s));
            run("cmi-ordering", &mut failures, || cmi_ordering(s));
        }
        Err(_) => {
            run("mse-ordering", &mut failures, || Err("reference sweep failed".into()));
            run("cmi-ordering", &mut failures, || Err("reference sweep failed".into()));
        }
    }
    run("acceleration", &mut failures, acceleration_pays_off);
    run("determinism", &mut failures, determinism);

    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
