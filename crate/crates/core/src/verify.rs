//! Invariant suites behind the `verify` subcommand.
//!
//! Each suite draws small random instances from a seeded generator and checks
//! one family of identities or inequalities. A suite passes when its worst
//! observed violation stays within the stated tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::criteria::{self, Criterion};
use crate::harness::experiment::baseline_random_phase;
use crate::linalg::{self, CMatrix, HermitianFactor, C64};
use crate::mm::{self, FeasibleSet, MMState, SolveOptions, UnimodularSet, MONOTONE_SLACK};
use crate::model::{ChannelPrior, NoiseModel, Scenario, SequenceConfig};
use crate::par::{self, ParSet, ParSpec};
use crate::squarem::{self, AccelOptions};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    /// Worst violation observed, relative where the check is relative.
    pub worst: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<5} {:<24} cases={:<4} worst={:.3e} tol={:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.tolerance
        )
    }
}

fn report(name: &'static str, cases: usize, worst: f64, tolerance: f64) -> SuiteReport {
    SuiteReport { name, passed: worst <= tolerance, worst, tolerance, cases }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let g = random_matrix(rng, n, n);
    linalg::hermitian_part(&linalg::mul_adj_right(&g, &g)) + CMatrix::identity(n, n).scale(0.1)
}

/// Small random scenario with unimodular limits.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.random_range(3..=6);
    let nt = rng.random_range(1..=2);
    let nr = rng.random_range(1..=2);
    let k = rng.random_range(1..=3);
    let cfg = SequenceConfig::unimodular(n, nt, nr, k, (n * nt) as f64).expect("valid dimensions");
    let prior = ChannelPrior::zero_mean(random_pd(rng, cfg.channel_dim())).expect("PD prior");
    let noise = NoiseModel::new(random_pd(rng, cfg.received_dim())).expect("PD noise");
    Scenario::new(cfg, prior, noise, None).expect("consistent dimensions")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn covariance_forms(rng: &mut ChaCha8Rng) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let sc = random_scenario(rng);
        let s = sc.lift(&baseline_random_phase(&sc.config, rng));
        let r = criteria::error_covariance(&s, &sc.prior, &sc.noise)?.r;
        let info = HermitianFactor::new(&sc.prior.cov).expect("PD prior").inverse()
            + linalg::mul_adj_left(&s, &sc.noise.factor().solve(&s));
        let alt = HermitianFactor::new(&linalg::hermitian_part(&info)).expect("PD information").inverse();
        worst = worst.max((&r - &alt).norm() / alt.norm());
    }
    Ok(report("covariance-forms", 50, worst, 1e-8))
}

fn cmi_forms(rng: &mut ChaCha8Rng) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let sc = random_scenario(rng);
        let s = sc.lift(&baseline_random_phase(&sc.config, rng));
        let cmi = criteria::cmi_objective(&s, &sc.prior, &sc.noise)?;
        let d = sc.prior.dim();
        let m = CMatrix::identity(d, d)
            + linalg::mul(&sc.prior.cov, &linalg::mul_adj_left(&s, &sc.noise.factor().solve(&s)));
        let alt = 0.5 * m.determinant().re.ln();
        worst = worst.max(rel(cmi, alt));
    }
    Ok(report("cmi-forms", 50, worst, 1e-8))
}

fn majorization(rng: &mut ChaCha8Rng) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for criterion in [Criterion::Mmse, Criterion::Cmi] {
        for _ in 0..25 {
            let sc = random_scenario(rng);
            let r0 = &sc.prior.cov;
            let st = baseline_random_phase(&sc.config, rng);
            let state = MMState::new(&sc, criterion, &st)?;
            let s_now = sc.lift(&st);
            let s_other = sc.lift(&baseline_random_phase(&sc.config, rng));
            let f_other = criteria::objective(criterion, &s_other, &sc.prior, &sc.noise)?;
            let scale = state.objective.abs().max(1.0);
            // tangency of both layers
            worst = worst.max((state.first_surrogate(&s_now, r0) - state.objective).abs() / scale);
            let q_now = state.quadratic_surrogate(&s_now, r0);
            worst = worst.max((state.linear_surrogate(&s_now, r0) - q_now).abs() / q_now.abs().max(1.0));
            // domination of both layers
            let g = state.first_surrogate(&s_other, r0);
            let gap = match criterion.direction() {
                crate::Direction::Minimize => f_other - g,
                crate::Direction::Maximize => g - f_other,
            };
            worst = worst.max(gap.max(0.0) / scale);
            let q = state.quadratic_surrogate(&s_other, r0);
            let lin = state.linear_surrogate(&s_other, r0);
            worst = worst.max((q - lin).max(0.0) / q.abs().max(1.0));
            cases += 1;
        }
    }
    Ok(report("majorization", cases, worst, 1e-9))
}

fn lambda_bound(rng: &mut ChaCha8Rng) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 50 {
        let sc = random_scenario(rng);
        let (m, d) = (sc.config.received_dim(), sc.prior.dim());
        if m * d > 64 {
            continue;
        }
        let criterion = if cases % 2 == 0 { Criterion::Mmse } else { Criterion::Cmi };
        let state = MMState::new(&sc, criterion, &baseline_random_phase(&sc.config, rng))?;
        let big = linalg::kron(&sc.prior.cov.transpose(), &state.curvature);
        let top = *linalg::hermitian_eigenvalues(&big).last().unwrap_or(&0.0);
        worst = worst.max((top - state.lambda).max(0.0) / state.lambda);
        cases += 1;
    }
    Ok(report("lambda-bound", cases, worst, 0.0))
}

/// Violations are divided by their own tolerances, so the suite tolerance is 1.
fn projections(rng: &mut ChaCha8Rng) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let c = random_matrix(rng, n, 1);
        let u = mm::project_unimodular(&c, 1.0)?;
        let best = (u.matrix() - &c).norm();
        let cfg = SequenceConfig::unimodular(n, 1, 1, 0, n as f64)?;
        for _ in 0..10 {
            let rival = baseline_random_phase(&cfg, rng);
            worst = worst.max((best - (rival.matrix() - &c).norm()).max(0.0) / 1e-12);
        }
        let xi = 1.0 + rng.random::<f64>() * (n as f64 - 1.0);
        let spec = ParSpec::new(1.0 + rng.random::<f64>(), xi, n)?;
        let p = par::project_par(&c.column(0).into_owned(), &spec)?;
        worst = worst.max(rel(p.norm_squared(), spec.alpha_m) / 1e-9);
        let over = p.iter().map(|z| z.norm()).fold(0.0, f64::max) / spec.peak() - 1.0;
        worst = worst.max(over.max(0.0) / 1e-12);
    }
    Ok(report("projections", 50, worst, 1.0))
}

fn monotone_solves(rng: &mut ChaCha8Rng) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for criterion in [Criterion::Mmse, Criterion::Cmi] {
        for par_mode in [false, true] {
            let mut sc = random_scenario(rng);
            if par_mode {
                let nt = sc.config.nt;
                let props: Vec<f64> = (1..=nt).map(|m| m as f64).collect();
                let limits: Vec<f64> = (0..nt).map(|_| 1.0 + rng.random::<f64>() * 1.5).collect();
                sc.config = SequenceConfig::with_par(
                    sc.config.n, nt, sc.config.nr, sc.config.k, sc.config.alpha, &props, &limits,
                )?;
            }
            let set: Box<dyn FeasibleSet> = if par_mode {
                Box::new(ParSet::for_config(&sc.config)?)
            } else {
                Box::new(UnimodularSet::for_config(&sc.config))
            };
            let init = baseline_random_phase(&sc.config, rng);
            let plain = SolveOptions { tol: 1e-9, max_iters: 200, record_trace: true };
            let (_, t) = mm::solve_on(&sc, criterion, set.as_ref(), &init, &plain)?;
            worst = worst.max(t.worst_violation());
            let accel = AccelOptions { tol: 1e-9, max_iters: 100, ..Default::default() };
            let (_, t) = squarem::accelerate_on(&sc, criterion, set.as_ref(), &init, &accel)?;
            worst = worst.max(t.worst_violation());
            cases += 2;
        }
    }
    Ok(report("monotone-solves", cases, worst, MONOTONE_SLACK))
}

fn squarem_fallback(rng: &mut ChaCha8Rng) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let sc = random_scenario(rng);
        let init = baseline_random_phase(&sc.config, rng);
        let opts = AccelOptions { tol: 1e-300, max_iters: 5, max_backtracks: 0, record_trace: true };
        let (u, _) = squarem::solve_accelerated(&sc, Criterion::Mmse, &init, &opts)?;
        let mut v = init;
        for _ in 0..10 {
            v = mm::mm_update(&v, &sc, Criterion::Mmse)?;
        }
        worst = worst.max((u.matrix() - v.matrix()).norm());
    }
    Ok(report("squarem-fallback", 5, worst, 0.0))
}

type Suite = fn(&mut ChaCha8Rng) -> Result<SuiteReport>;

pub const SUITES: [(&str, Suite); 7] = [
    ("covariance-forms", covariance_forms),
    ("cmi-forms", cmi_forms),
    ("majorization", majorization),
    ("lambda-bound", lambda_bound),
    ("projections", projections),
    ("monotone-solves", monotone_solves),
    ("squarem-fallback", squarem_fallback),
];

/// Runs every suite; a suite that errors counts as failed.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    SUITES
        .iter()
        .enumerate()
        .map(|(i, (name, suite))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            suite(&mut rng).unwrap_or(SuiteReport {
                name,
                passed: false,
                worst: f64::INFINITY,
                tolerance: 0.0,
                cases: 0,
            })
        })
        .collect()
}
