//! Squared extrapolation around a monotone MM update.
//!
//! Each outer iteration takes two plain updates `U1 = F(U)`, `U2 = F(U1)`,
//! forms `L1 = U1 - U` and `L2 = U2 - U1 - L1`, and tries the extrapolated
//! point `U - 2l L1 + l² L2` with `l = -||L1|| / ||L2||`, projected back onto
//! the feasible set. While the candidate is worse than `U`, `l` moves halfway
//! towards -1, where the candidate coincides with `U2`. Once the attempts run
//! out (or `l` is within 1e-12 of -1) the iteration settles for `U2`, which two
//! monotone updates never make worse.

use crate::criteria::{self, Criterion, Direction};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::mm::{FeasibleSet, MMState, SolveTrace, Termination, UnimodularSet, MONOTONE_SLACK};
use crate::model::{Scenario, Sequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelOptions {
    /// Stop once `||U^(t+1) - U^(t)||_F <= tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Extrapolated candidates tried per outer iteration before falling
    /// back to `U2`. Zero disables extrapolation altogether.
    pub max_backtracks: usize,
    pub record_trace: bool,
}

impl Default for AccelOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 10_000, max_backtracks: 30, record_trace: true }
    }
}

impl AccelOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Per-iteration record of the extrapolation, for diagnostics and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// First and last step lengths tried; `None` when no extrapolation happened.
    pub first_l: Option<f64>,
    pub last_l: Option<f64>,
    pub candidates: usize,
    pub fell_back: bool,
}

/// SQUAREM driver over arbitrary update, objective and projection maps.
///
/// `steps`, when given, receives one [`StepRecord`] per outer iteration.
pub fn accelerate<F, G, P>(
    mut update: F,
    mut objective: G,
    direction: Direction,
    project: P,
    init: &Sequence,
    opts: &AccelOptions,
    mut steps: Option<&mut Vec<StepRecord>>,
) -> Result<(Sequence, SolveTrace)>
where
    F: FnMut(&Sequence) -> Result<Sequence>,
    G: FnMut(&Sequence) -> Result<f64>,
    P: Fn(&CMatrix) -> Result<Sequence>,
{
    opts.validate()?;
    let record = opts.record_trace;
    let mut u = init.clone();
    let mut f_u = objective(&u)?;
    let mut trace = SolveTrace::start(direction, f_u, record);

    for _ in 0..opts.max_iters {
        let u1 = update(&u)?;
        trace.update_evals += 1;
        let l1 = u1.matrix() - u.matrix();
        let n1 = l1.norm();
        if n1 == 0.0 {
            trace.push(f_u, 0.0, record);
            trace.termination = Termination::FixedPoint;
            return Ok((u, trace));
        }
        let u2 = update(&u1)?;
        trace.update_evals += 1;
        let l2 = u2.matrix() - u1.matrix() - &l1;
        let n2 = l2.norm();

        let mut rec = StepRecord { first_l: None, last_l: None, candidates: 0, fell_back: true };
        let mut accepted = None;
        if n2 > 0.0 && opts.max_backtracks > 0 {
            let mut l = -n1 / n2;
            rec.first_l = Some(l);
            while rec.candidates < opts.max_backtracks && (l + 1.0).abs() > 1e-12 {
                rec.last_l = Some(l);
                rec.candidates += 1;
                let point = u.matrix() - l1.scale(2.0 * l) + l2.scale(l * l);
                let cand = project(&point)?;
                let f = objective(&cand)?;
                trace.objective_evals += 1;
                if !direction.is_worse(f, f_u, MONOTONE_SLACK) {
                    accepted = Some((cand, f));
                    rec.fell_back = false;
                    break;
                }
                l = (l - 1.0) / 2.0;
            }
        }
        let (next, f_next) = match accepted {
            Some(pair) => pair,
            None => {
                let f = objective(&u2)?;
                trace.objective_evals += 1;
                (u2, f)
            }
        };
        if let Some(s) = steps.as_deref_mut() {
            s.push(rec);
        }

        let step = (next.matrix() - u.matrix()).norm();
        u = next;
        f_u = f_next;
        trace.push(f_u, step, record);
        if step <= opts.tol {
            trace.termination = Termination::Tolerance;
            return Ok((u, trace));
        }
    }
    trace.termination = Termination::IterationCap;
    Ok((u, trace))
}

/// SQUAREM around the MM update of `criterion` over `set`.
pub fn accelerate_on(
    scenario: &Scenario,
    criterion: Criterion,
    set: &dyn FeasibleSet,
    init: &Sequence,
    opts: &AccelOptions,
) -> Result<(Sequence, SolveTrace)> {
    if !set.contains(init) {
        return Err(Error::invalid("initial sequence is not feasible"));
    }
    let update = |u: &Sequence| MMState::new(scenario, criterion, u)?.next(&scenario.config, set);
    let objective = |u: &Sequence| criteria::objective_at(criterion, scenario, u);
    accelerate(update, objective, criterion.direction(), |c| set.project(c), init, opts, None)
}

/// SQUAREM for unimodular sequences.
pub fn solve_accelerated(
    scenario: &Scenario,
    criterion: Criterion,
    init: &Sequence,
    opts: &AccelOptions,
) -> Result<(Sequence, SolveTrace)> {
    accelerate_on(scenario, criterion, &UnimodularSet::for_config(&scenario.config), init, opts)
}
