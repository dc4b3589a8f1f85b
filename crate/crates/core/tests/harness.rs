mod common;

use common::*;
use seqdesign::criteria::{self, Criterion};
use seqdesign::harness::{
    self, baseline_random_phase, run_trial, sweep, DesignOptions, ExperimentPlan, Method, Mode, ScenarioSpec,
};
use seqdesign::linalg::CMatrix;
use seqdesign::mm::{self, FeasibleSet, MMState, SolveOptions, UnimodularSet};
use seqdesign::model::{ChannelTruth, SequenceConfig};
use seqdesign::par::{self, ParSet};
use seqdesign::squarem::{self, AccelOptions, StepRecord};
use seqdesign::{Error, Termination};

fn small_siso() -> ScenarioSpec {
    ScenarioSpec { n: 6, k: 3, ..ScenarioSpec::siso_reference() }
}

fn plan(methods: Vec<Method>, trials: usize) -> ExperimentPlan {
    ExperimentPlan {
        scenario: small_siso(),
        methods,
        snr_db: vec![-5.0, 5.0],
        trials,
        seed: 42,
        mode: Mode::Unimodular,
        tol: 1e-6,
        max_iters: Some(2000),
    }
}

#[test]
fn sweep_emits_one_row_per_cell_in_order() {
    let p = plan(Method::ALL.to_vec(), 3);
    let res = sweep(&p).unwrap();
    assert_eq!(res.rows.len(), Method::ALL.len() * 2 * 3);
    assert_eq!(res.failures().count(), 0);
    let mut expected = Vec::new();
    for m in Method::ALL {
        for snr in [-5.0, 5.0] {
            for t in 0..3 {
                expected.push((m, snr, t));
            }
        }
    }
    let got: Vec<_> = res.rows.iter().map(|r| (r.method, r.snr_db, r.trial)).collect();
    assert_eq!(got, expected);
    for r in &res.rows {
        assert!(r.mse.is_finite() && r.mse >= 0.0 && r.cmi.is_finite());
        if r.method == Method::RandomPhase {
            assert_eq!((r.iterations, r.update_evals), (0, 0));
        } else {
            assert!(r.update_evals >= r.iterations && r.iterations > 0);
        }
    }
}

#[test]
fn designs_beat_random_phase_on_average() {
    let res = sweep(&plan(vec![Method::RandomPhase, Method::MmseOptimalAccel], 8)).unwrap();
    let mean = |m| res.mean(m, -5.0, |r| r.mse).unwrap();
    assert!(mean(Method::MmseOptimalAccel) < mean(Method::RandomPhase));
    let cmi = |m| res.mean(m, -5.0, |r| r.cmi).unwrap();
    assert!(cmi(Method::MmseOptimalAccel) > cmi(Method::RandomPhase));
}

#[test]
fn csv_without_wall_time_is_reproducible() {
    let p = plan(vec![Method::RandomPhase, Method::CmiOptimal, Method::MmseOptimalAccel], 2);
    let mut a = Vec::new();
    let mut b = Vec::new();
    sweep(&p).unwrap().write_csv(&mut a, false).unwrap();
    sweep(&p).unwrap().write_csv(&mut b, false).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), harness::CSV_HEADER.join(","));
    assert!(lines.all(|l| l.ends_with(',')));
}

#[test]
fn different_seeds_give_different_draws() {
    let mut p = plan(vec![Method::RandomPhase], 2);
    let a = sweep(&p).unwrap();
    p.seed += 1;
    let b = sweep(&p).unwrap();
    assert_ne!(a.rows[0].mse, b.rows[0].mse);
}

#[test]
fn invalid_plans_are_rejected() {
    let mut p = plan(vec![Method::RandomPhase], 0);
    assert!(matches!(sweep(&p), Err(Error::InvalidArgument(_))));
    p.trials = 1;
    p.snr_db = vec![f64::NAN];
    assert!(matches!(sweep(&p), Err(Error::InvalidArgument(_))));
    p.snr_db = vec![0.0];
    p.methods.clear();
    assert!(matches!(sweep(&p), Err(Error::InvalidArgument(_))));
}

#[test]
fn plan_json_round_trips() {
    let p = plan(vec![Method::CmiOptimalAccel, Method::RandomPhase], 4);
    let text = serde_json::to_string(&p).unwrap();
    assert!(text.contains("\"cmi-optimal-accel\""));
    let back: ExperimentPlan = serde_json::from_str(&text).unwrap();
    assert_eq!(back, p);
}

#[test]
fn zero_truth_covariance_carries_no_information() {
    let mut sc = small_siso().build().unwrap();
    let d = sc.prior.dim();
    sc.truth = Some(ChannelTruth::new(sc.prior.mean.clone(), CMatrix::zeros(d, d)).unwrap());
    let u = baseline_random_phase(&sc.config, &mut rng(1));
    let out = run_trial(&sc, &u, &mut rng(2)).unwrap();
    assert_eq!(out.cmi, 0.0);
    assert!(out.mse.is_finite());
}

#[test]
fn par_reference_stays_feasible_and_monotone() {
    let spec = ScenarioSpec { snr_db: Some(-5.0), ..ScenarioSpec::mimo_par_reference(4) };
    let sc = spec.build().unwrap();
    assert_eq!(sc.config.antenna_energies.len(), 3);
    let set = ParSet::for_config(&sc.config).unwrap();
    let init = baseline_random_phase(&sc.config, &mut rng(3));
    for criterion in [Criterion::Mmse, Criterion::Cmi] {
        let opts = SolveOptions { tol: 1e-12, max_iters: 10, record_trace: true };
        let (u, trace) = par::solve_par(&sc, criterion, &init, &opts).unwrap();
        assert!(set.contains(&u));
        assert!(u.satisfies_par(&sc.config, 1e-9));
        assert_eq!(trace.objectives.len(), 11);
        assert!(trace.is_monotone(1e-10), "violation {}", trace.worst_violation());
    }
}

#[test]
fn unit_par_limits_reduce_to_unimodular_design() {
    let base = ScenarioSpec { snr_db: Some(0.0), ..ScenarioSpec::mimo_reference(2, 2) };
    let mut sc = base.build().unwrap();
    let uni = sc.clone();
    let c = &sc.config;
    sc.config = SequenceConfig::with_par(c.n, c.nt, c.nr, c.k, c.alpha, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
    let init = baseline_random_phase(&sc.config, &mut rng(4));
    let opts = SolveOptions { tol: 1e-300, max_iters: 40, record_trace: false };
    let (a, _) = par::solve_par(&sc, Criterion::Mmse, &init, &opts).unwrap();
    let (b, _) = mm::solve(&uni, Criterion::Mmse, &init, &opts).unwrap();
    assert!((a.matrix() - b.matrix()).norm() <= 1e-9);
}

#[test]
fn squarem_step_lengths_are_nonpositive() {
    let sc = ScenarioSpec { snr_db: Some(-5.0), ..ScenarioSpec::siso_reference() }.build().unwrap();
    let set = UnimodularSet::for_config(&sc.config);
    let init = baseline_random_phase(&sc.config, &mut rng(5));
    let mut steps: Vec<StepRecord> = Vec::new();
    let update = |u: &_| MMState::new(&sc, Criterion::Mmse, u)?.next(&sc.config, &set);
    let objective = |u: &_| criteria::mmse_objective(&sc.lift(u), &sc.prior, &sc.noise);
    let opts = AccelOptions::default();
    let (_, trace) = squarem::accelerate(
        update,
        objective,
        Criterion::Mmse.direction(),
        |c: &CMatrix| set.project(c),
        &init,
        &opts,
        Some(&mut steps),
    )
    .unwrap();
    assert_eq!(trace.termination, Termination::Tolerance);
    assert_eq!(steps.len(), trace.iterations);
    for s in &steps {
        assert!(s.first_l.unwrap_or(0.0) <= 0.0 && s.last_l.unwrap_or(0.0) <= 0.0, "{s:?}");
        assert!(s.candidates <= opts.max_backtracks);
    }
    assert!(steps.iter().any(|s| !s.fell_back));
    assert_eq!(trace.update_evals, 2 * trace.iterations);
}

#[test]
fn accelerated_and_plain_designs_agree_on_the_objective() {
    let sc = small_siso().build().unwrap();
    let init = baseline_random_phase(&sc.config, &mut rng(6));
    let opts = DesignOptions { tol: 1e-9, max_iters: 200_000, ..Default::default() };
    for criterion in [Criterion::Mmse, Criterion::Cmi] {
        let (_, plain) = harness::design(&sc, criterion, Mode::Unimodular, false, &init, &opts).unwrap();
        let (_, fast) = harness::design(&sc, criterion, Mode::Unimodular, true, &init, &opts).unwrap();
        assert!(plain.converged() && fast.converged());
        assert!(fast.update_evals < plain.update_evals);
        assert!(rel(fast.final_objective, plain.final_objective) <= 1e-4);
    }
}

#[test]
fn infeasible_start_is_rejected() {
    let sc = small_siso().build().unwrap();
    let u = seqdesign::Sequence::new(CMatrix::from_element(sc.config.n, 1, 2.0.into())).unwrap();
    assert!(matches!(
        harness::design(&sc, Criterion::Mmse, Mode::Unimodular, true, &u, &DesignOptions::default()),
        Err(Error::InvalidArgument(_))
    ));
}
