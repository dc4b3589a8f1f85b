//! Monte Carlo trials and SNR sweeps.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSpec;
use crate::criteria::{self, Criterion, MmseEstimator};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::mm::{self, FeasibleSet, SolveOptions, SolveTrace, UnimodularSet};
use crate::model::{scale_noise_for_snr, GaussianSampler, Scenario, Sequence, SequenceConfig};
use crate::par::ParSet;
use crate::squarem::{self, AccelOptions};

pub const CSV_HEADER: [&str; 8] =
    ["method", "snr_db", "trial", "mse", "cmi", "iterations", "update_evals", "wall_time_ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Unimodular,
    Par,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Unimodular => "unimodular",
            Mode::Par => "par",
        }
    }

    pub fn feasible_set(self, config: &SequenceConfig) -> Result<Box<dyn FeasibleSet>> {
        Ok(match self {
            Mode::Unimodular => Box::new(UnimodularSet::for_config(config)),
            Mode::Par => Box::new(ParSet::for_config(config)?),
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unimodular" => Ok(Mode::Unimodular),
            "par" => Ok(Mode::Par),
            other => Err(Error::invalid(format!("unknown mode '{other}' (expected unimodular or par)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mmse-optimal")]
    MmseOptimal,
    #[serde(rename = "mmse-optimal-accel")]
    MmseOptimalAccel,
    #[serde(rename = "cmi-optimal")]
    CmiOptimal,
    #[serde(rename = "cmi-optimal-accel")]
    CmiOptimalAccel,
    #[serde(rename = "random-phase")]
    RandomPhase,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::MmseOptimal,
        Method::MmseOptimalAccel,
        Method::CmiOptimal,
        Method::CmiOptimalAccel,
        Method::RandomPhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MmseOptimal => "mmse-optimal",
            Method::MmseOptimalAccel => "mmse-optimal-accel",
            Method::CmiOptimal => "cmi-optimal",
            Method::CmiOptimalAccel => "cmi-optimal-accel",
            Method::RandomPhase => "random-phase",
        }
    }

    /// Criterion and acceleration flag, or `None` for the baseline.
    pub fn design(self) -> Option<(Criterion, bool)> {
        match self {
            Method::MmseOptimal => Some((Criterion::Mmse, false)),
            Method::MmseOptimalAccel => Some((Criterion::Mmse, true)),
            Method::CmiOptimal => Some((Criterion::Cmi, false)),
            Method::CmiOptimalAccel => Some((Criterion::Cmi, true)),
            Method::RandomPhase => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Solver settings shared by every design in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub tol: f64,
    /// Cap on plain MM iterations.
    pub max_iters: usize,
    /// Cap on accelerated outer iterations.
    pub max_accel_iters: usize,
    pub max_backtracks: usize,
    pub record_trace: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        let plain = SolveOptions::default();
        let accel = AccelOptions::default();
        Self {
            tol: plain.tol,
            max_iters: plain.max_iters,
            max_accel_iters: accel.max_iters,
            max_backtracks: accel.max_backtracks,
            record_trace: false,
        }
    }
}

/// Designs a sequence from `init` by plain or accelerated MM.
pub fn design(
    scenario: &Scenario,
    criterion: Criterion,
    mode: Mode,
    accelerate: bool,
    init: &Sequence,
    opts: &DesignOptions,
) -> Result<(Sequence, SolveTrace)> {
    let set = mode.feasible_set(&scenario.config)?;
    if accelerate {
        let o = AccelOptions {
            tol: opts.tol,
            max_iters: opts.max_accel_iters,
            max_backtracks: opts.max_backtracks,
            record_trace: opts.record_trace,
        };
        squarem::accelerate_on(scenario, criterion, set.as_ref(), init, &o)
    } else {
        let o = SolveOptions { tol: opts.tol, max_iters: opts.max_iters, record_trace: opts.record_trace };
        mm::solve_on(scenario, criterion, set.as_ref(), init, &o)
    }
}

/// Entries with i.i.d. uniform phases on `[0, 2π)`.
///
/// Each antenna's magnitude is `sqrt(alpha_m / N)`, which is the unimodular
/// magnitude under an equal split and has PAR 1 in any case.
pub fn baseline_random_phase<R: Rng + ?Sized>(config: &SequenceConfig, rng: &mut R) -> Sequence {
    let mags: Vec<f64> = config.antenna_energies.iter().map(|a| (a / config.n as f64).sqrt()).collect();
    let mut u = CMatrix::zeros(config.n, config.nt);
    for i in 0..config.n {
        for (m, mag) in mags.iter().enumerate() {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            u[(i, m)] = C64::from_polar(*mag, phase);
        }
    }
    Sequence::from_matrix_unchecked(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// `||h_hat - h_true||²`
    pub mse: f64,
    /// Mutual information under the true channel covariance.
    pub cmi: f64,
}

/// Draws a channel from the truth and noise from `W`, estimates the channel
/// with the MMSE estimator under the design prior, and scores the estimate.
pub fn run_trial<R: Rng + ?Sized>(scenario: &Scenario, sequence: &Sequence, rng: &mut R) -> Result<TrialOutcome> {
    let s_tilde = scenario.lift(sequence);
    let channel = GaussianSampler::new(scenario.truth_mean().clone(), scenario.truth_cov())?;
    let h = channel.sample(rng);
    let noise = GaussianSampler::new(linalg::CVector::zeros(scenario.noise.dim()), scenario.noise.cov())?;
    let y = linalg::mul_vec(&s_tilde, &h) + noise.sample(rng);
    let estimate = MmseEstimator::new(&s_tilde, &scenario.prior, &scenario.noise)?.estimate(&y)?;
    let mse = (estimate - &h).norm_squared();
    let cmi = criteria::cmi_eval_true(&s_tilde, scenario.truth_cov(), &scenario.noise)?;
    Ok(TrialOutcome { mse, cmi })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream seed for one (SNR, trial) cell. Every method in the cell sees the
/// same channel, noise and initial phases.
pub fn derive_seed(base: u64, snr_db: f64, trial: usize, stream: u64) -> u64 {
    [snr_db.to_bits(), trial as u64, stream]
        .iter()
        .fold(splitmix64(base), |acc, part| splitmix64(acc ^ splitmix64(*part)))
}

const INIT_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;

/// A sweep over methods, SNRs and trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioSpec,
    pub methods: Vec<Method>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

fn default_mode() -> Mode {
    Mode::Unimodular
}

fn default_tol() -> f64 {
    1e-6
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("snr_db must be a nonempty list of finite values"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    pub fn design_options(&self) -> DesignOptions {
        let mut o = DesignOptions { tol: self.tol, ..Default::default() };
        if let Some(cap) = self.max_iters {
            o.max_iters = cap;
            o.max_accel_iters = cap;
        }
        o
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub snr_db: f64,
    pub trial: usize,
    pub mse: f64,
    pub cmi: f64,
    pub iterations: usize,
    pub update_evals: usize,
    pub wall_time_ms: f64,
    /// Set when the trial failed; `mse` and `cmi` are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    /// Mean of `f` over successful rows of one (method, SNR) cell.
    pub fn mean(&self, method: Method, snr_db: f64, f: impl Fn(&SweepRow) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.snr_db == snr_db && r.error.is_none())
            .map(f)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Writes the results table; with `include_wall_time = false` the last
    /// column is left empty so that repeated runs compare byte for byte.
    pub fn write_csv<W: Write>(&self, out: W, include_wall_time: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                r.snr_db.to_string(),
                r.trial.to_string(),
                r.mse.to_string(),
                r.cmi.to_string(),
                r.iterations.to_string(),
                r.update_evals.to_string(),
                if include_wall_time { r.wall_time_ms.to_string() } else { String::new() },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_cell(
    scenario: &Scenario,
    plan: &ExperimentPlan,
    opts: &DesignOptions,
    method: Method,
    snr_db: f64,
    trial: usize,
) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        method,
        snr_db,
        trial,
        mse: f64::NAN,
        cmi: f64::NAN,
        iterations: 0,
        update_evals: 0,
        wall_time_ms: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<TrialOutcome> {
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, snr_db, trial, INIT_STREAM));
        let init = baseline_random_phase(&scenario.config, &mut init_rng);
        let sequence = match method.design() {
            None => init,
            Some((criterion, accelerate)) => {
                let (u, trace) = design(scenario, criterion, plan.mode, accelerate, &init, opts)?;
                row.iterations = trace.iterations;
                row.update_evals = trace.update_evals;
                u
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, snr_db, trial, CHANNEL_STREAM));
        run_trial(scenario, &sequence, &mut rng)
    })();
    match outcome {
        Ok(o) => {
            row.mse = o.mse;
            row.cmi = o.cmi;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Runs every (method, SNR, trial) cell of `plan`. A failing cell becomes an
/// error row; only an invalid plan or scenario aborts the sweep.
pub fn sweep(plan: &ExperimentPlan) -> Result<SweepResult> {
    plan.validate()?;
    let base = plan.scenario.base_scenario()?;
    if plan.mode == Mode::Par {
        ParSet::for_config(&base.config)?;
    }
    let scenarios: Vec<Scenario> = plan
        .snr_db
        .iter()
        .map(|&snr| base.with_noise(scale_noise_for_snr(&base.config, &base.noise, snr)?))
        .collect::<Result<_>>()?;
    let opts = plan.design_options();

    let jobs: Vec<(usize, usize, usize)> = (0..plan.methods.len())
        .flat_map(|m| (0..plan.snr_db.len()).flat_map(move |s| (0..plan.trials).map(move |t| (m, s, t))))
        .collect();
    let mut keyed: Vec<((usize, usize, usize), SweepRow)> = jobs
        .par_iter()
        .map(|&(m, s, t)| {
            let row = run_cell(&scenarios[s], plan, &opts, plan.methods[m], plan.snr_db[s], t);
            ((m, s, t), row)
        })
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    Ok(SweepResult { rows: keyed.into_iter().map(|(_, r)| r).collect() })
}
