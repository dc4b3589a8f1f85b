use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use seqdesign::harness::{
    self, baseline_random_phase, DesignOptions, DesignSummary, ExperimentPlan, Method, Mode, ScenarioSpec,
    SequenceDocument,
};
use seqdesign::model::correlation_lag;
use seqdesign::{criteria, verify, Criterion, Error, Result};

#[derive(Parser)]
#[command(name = "seqdesign", version, about = "Training sequence design for MIMO channel estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design one sequence for a scenario.
    Design(DesignArgs),
    /// Monte Carlo sweep over methods, SNRs and trials.
    Sweep(SweepArgs),
    /// Run the invariant suites on seeded random instances.
    Verify(VerifyArgs),
    /// Correlation lags and weighted sidelobe level of a sequence.
    Correlation(CorrelationArgs),
}

#[derive(Args)]
struct DesignArgs {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Sequence JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration trace CSV to write.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "mmse")]
    criterion: Criterion,
    #[arg(long, default_value = "unimodular")]
    mode: Mode,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    accelerate: bool,
    /// Seed for the random-phase starting point.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Overrides the scenario's SNR.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Plan JSON, or a scenario JSON to sweep with the flags below.
    #[arg(long)]
    config: PathBuf,
    /// Results CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated SNR list in dB, e.g. "-10,-5,0".
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Leave the wall_time_ms column empty.
    #[arg(long)]
    omit_wall_time: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelationArgs {
    /// Sequence JSON.
    #[arg(long)]
    sequence: PathBuf,
    /// Largest lag; defaults to N - 1.
    #[arg(long)]
    k: Option<usize>,
    /// Target energy; defaults to the sequence's own energy.
    #[arg(long)]
    alpha: Option<f64>,
    /// JSON report to write.
    #[arg(long)]
    out: PathBuf,
}

const DEFAULT_SNRS: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];
const DEFAULT_TRIALS: usize = 10;

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::InvalidArgument(format!("bad {what} '{s}'"))))
        .collect()
}

fn run_design(args: &DesignArgs) -> Result<()> {
    let mut spec = ScenarioSpec::load(&args.config)?;
    if args.snr.is_some() {
        spec.snr_db = args.snr;
    }
    let scenario = spec.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let init = baseline_random_phase(&scenario.config, &mut rng);
    let mut opts = DesignOptions { tol: args.tol, record_trace: true, ..Default::default() };
    if let Some(cap) = args.max_iters {
        opts.max_iters = cap;
        opts.max_accel_iters = cap;
    }
    let (u, trace) = harness::design(&scenario, args.criterion, args.mode, args.accelerate, &init, &opts)?;
    let mut doc = SequenceDocument::from_sequence(&u);
    doc.design = Some(DesignSummary {
        criterion: args.criterion.name().into(),
        mode: args.mode.name().into(),
        accelerated: args.accelerate,
        seed: args.seed,
        tol: args.tol,
        objective: trace.final_objective,
        initial_objective: trace.objectives.first().copied().unwrap_or(f64::NAN),
        termination: trace.termination.name().into(),
        iterations: trace.iterations,
        update_evals: trace.update_evals,
        objective_evals: trace.objective_evals,
    });
    doc.write(&args.out)?;
    if let Some(path) = &args.trace {
        harness::write_trace_csv(&trace, BufWriter::new(File::create(path)?))?;
    }
    eprintln!(
        "{} {} objective {:.6e} after {} iterations ({}, {} update evaluations)",
        args.criterion.name(),
        args.mode.name(),
        trace.final_objective,
        trace.iterations,
        trace.termination.name(),
        trace.update_evals
    );
    Ok(())
}

fn load_plan(args: &SweepArgs) -> Result<ExperimentPlan> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    let mut plan = if value.get("scenario").is_some() {
        serde_json::from_value::<ExperimentPlan>(value)?
    } else {
        let scenario: ScenarioSpec = serde_json::from_value(value)?;
        ExperimentPlan {
            snr_db: scenario.snr_db.map(|s| vec![s]).unwrap_or_else(|| DEFAULT_SNRS.to_vec()),
            scenario,
            methods: Method::ALL.to_vec(),
            trials: DEFAULT_TRIALS,
            seed: 0,
            mode: Mode::Unimodular,
            tol: 1e-6,
            max_iters: None,
        }
    };
    if let Some(s) = &args.snr {
        plan.snr_db = parse_list(s, "SNR")?;
    }
    if let Some(m) = &args.methods {
        plan.methods = parse_list(m, "method")?;
    }
    plan.trials = args.trials.unwrap_or(plan.trials);
    plan.seed = args.seed.unwrap_or(plan.seed);
    plan.mode = args.mode.unwrap_or(plan.mode);
    plan.tol = args.tol.unwrap_or(plan.tol);
    plan.max_iters = args.max_iters.or(plan.max_iters);
    Ok(plan)
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let plan = load_plan(args)?;
    let result = harness::sweep(&plan)?;
    result.write_csv(BufWriter::new(File::create(&args.out)?), !args.omit_wall_time)?;
    for row in result.failures() {
        eprintln!(
            "trial failed: method={} snr_db={} trial={}: {}",
            row.method.name(),
            row.snr_db,
            row.trial,
            row.error.as_deref().unwrap_or("")
        );
    }
    eprintln!("wrote {} rows to {}", result.rows.len(), args.out.display());
    Ok(())
}

/// Returns whether every suite passed.
fn run_verify(args: &VerifyArgs) -> Result<bool> {
    let reports = verify::run_all(args.seed);
    for r in &reports {
        eprintln!("{r}");
    }
    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["suite", "passed", "cases", "worst", "tolerance"])?;
        for r in &reports {
            w.write_record([
                r.name.to_string(),
                r.passed.to_string(),
                r.cases.to_string(),
                r.worst.to_string(),
                r.tolerance.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(reports.iter().all(|r| r.passed))
}

#[derive(Serialize)]
struct LagEntry {
    lag: usize,
    /// Row-major `[re, im]` pairs of the Nt x Nt correlation matrix.
    matrix: Vec<[f64; 2]>,
    frobenius_norm: f64,
}

#[derive(Serialize)]
struct CorrelationReport {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "Nt")]
    nt: usize,
    #[serde(rename = "K")]
    k: usize,
    alpha: f64,
    weighted_isl: f64,
    lags: Vec<LagEntry>,
}

fn run_correlation(args: &CorrelationArgs) -> Result<()> {
    let u = SequenceDocument::load(&args.sequence)?.sequence()?;
    let k = args.k.unwrap_or(u.len().saturating_sub(1));
    let alpha = args.alpha.unwrap_or_else(|| u.energy());
    let lags = (0..=k)
        .map(|lag| {
            let c = correlation_lag(u.matrix(), lag as isize);
            let matrix = (0..c.nrows())
                .flat_map(|i| (0..c.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| [c[(i, j)].re, c[(i, j)].im])
                .collect();
            LagEntry { lag, matrix, frobenius_norm: c.norm() }
        })
        .collect();
    let report = CorrelationReport {
        n: u.len(),
        nt: u.antennas(),
        k,
        alpha,
        weighted_isl: criteria::weighted_corr_objective(u.matrix(), alpha, k),
        lags,
    };
    write_json(&args.out, &report)?;
    eprintln!("weighted ISL {:.6e} over lags 0..={k}", report.weighted_isl);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_numeric() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Design(a) => run_design(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Correlation(a) => run_correlation(a),
        Command::Verify(a) => match run_verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: invariant suites failed");
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}
