//! Scenario ingestion, Monte Carlo trials, SNR sweeps and file formats.

pub mod experiment;
pub mod io;
pub mod scenario;

pub use experiment::{
    baseline_random_phase, derive_seed, design, run_trial, sweep, DesignOptions, ExperimentPlan, Method, Mode,
    SweepResult, SweepRow, TrialOutcome, CSV_HEADER,
};
pub use io::{write_trace_csv, DesignSummary, SequenceDocument};
pub use scenario::{load_scenario, CovarianceSpec, NoiseSpec, ScenarioSpec};
