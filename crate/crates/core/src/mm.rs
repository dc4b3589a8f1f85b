//! Majorization-minimization for training sequence design.
//!
//! One MM update at the iterate `U` (lifted to `S~ = I ⊗ T(U)`):
//!
//! 1. `A = P^{-1} S~ R0` with `P = S~ R0 S~^H + W`;
//! 2. the weight `V` (`I` for MMSE, `R^{-1}` for CMI);
//! 3. a curvature bound `λ ≥ λ_max(R0^T ⊗ A V A^H)`;
//! 4. `B = λ S~ - A V A^H S~ R0 + A V R0`;
//! 5. the next iterate is the feasible point nearest to the adjoint sum of `B`.
//!
//! The first two steps build a surrogate tangent to the criterion (an upper
//! bound for MMSE, a lower bound for CMI); the curvature bound turns its
//! quadratic part into a linear one, so step 5 is a projection.
//!
//! For CMI, `A V = W^{-1} S~` and `A V A^H = W^{-1} - P^{-1}` hold exactly
//! whenever `R` is invertible. [`MMState`] uses these forms, which avoid
//! factoring the `(K+1)NtNr`-sized error covariance on every iteration.
//! [`compute_v`] and [`compute_b`] give the textbook route. The tests check
//! both routes against each other.

use crate::criteria::{Criterion, Direction, Innovation};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianFactor, C64};
use crate::model::{adjoint_sum, ChannelPrior, NoiseModel, Scenario, Sequence, SequenceConfig};

/// Smallest curvature used when `A V A^H` vanishes.
pub const LAMBDA_FLOOR: f64 = 1e-300;

/// Relative slack allowed when checking that an objective did not get worse.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// A constraint set with an exact nearest-point map.
pub trait FeasibleSet {
    /// Feasible point nearest to `target` in Frobenius norm.
    fn project(&self, target: &CMatrix) -> Result<Sequence>;

    fn contains(&self, u: &Sequence) -> bool;
}

/// Entries of constant modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnimodularSet {
    pub magnitude: f64,
}

impl UnimodularSet {
    pub fn for_config(config: &SequenceConfig) -> Self {
        Self { magnitude: config.unimodular_magnitude() }
    }
}

impl FeasibleSet for UnimodularSet {
    fn project(&self, target: &CMatrix) -> Result<Sequence> {
        project_unimodular(target, self.magnitude)
    }

    fn contains(&self, u: &Sequence) -> bool {
        u.is_unimodular(self.magnitude, 1e-9)
    }
}

/// `magnitude * exp(j arg c)` entrywise, with `arg 0 := 0`.
pub fn project_unimodular(c: &CMatrix, magnitude: f64) -> Result<Sequence> {
    if !(magnitude > 0.0) || !magnitude.is_finite() {
        return Err(Error::invalid(format!("magnitude must be positive, got {magnitude}")));
    }
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numeric("projection target has non-finite entries"));
    }
    Ok(Sequence::from_matrix_unchecked(c.map(|z| unit_phase(z) * magnitude)))
}

/// `exp(j arg z)`, taking the phase of zero to be 0.
pub(crate) fn unit_phase(z: C64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// `A = (S~ R0 S~^H + W)^{-1} S~ R0`
pub fn compute_a(s_tilde: &CMatrix, prior: &ChannelPrior, noise: &NoiseModel) -> Result<CMatrix> {
    Ok(Innovation::new(s_tilde, &prior.cov, noise)?.gain())
}

/// `I` for MMSE; the inverse error covariance `R^{-1}` for CMI.
pub fn compute_v(
    criterion: Criterion,
    s_tilde: &CMatrix,
    prior: &ChannelPrior,
    noise: &NoiseModel,
) -> Result<CMatrix> {
    let dim = prior.dim();
    match criterion {
        Criterion::Mmse => Ok(CMatrix::identity(dim, dim)),
        Criterion::Cmi => {
            let r = Innovation::new(s_tilde, &prior.cov, noise)?.error_covariance(&prior.cov);
            let factor = HermitianFactor::new(&r).ok_or_else(|| {
                Error::numeric(
                    "error covariance is numerically singular; add jitter to R0 or use the MMSE criterion",
                )
            })?;
            Ok(factor.inverse())
        }
    }
}

/// `||R0||_1 ||A V A^H||_1` with the maximum-column-sum norm.
pub fn lambda_bound(r0: &CMatrix, a: &CMatrix, v: &CMatrix) -> f64 {
    let z = linalg::mul_adj_right(&linalg::mul(a, v), a);
    curvature_bound(r0, &z)
}

/// `||R0||_1 ||Z||_1` floored at [`LAMBDA_FLOOR`].
pub fn curvature_bound(r0: &CMatrix, z: &CMatrix) -> f64 {
    (linalg::max_col_sum(r0) * linalg::max_col_sum(z)).max(LAMBDA_FLOOR)
}

/// `B = λ S~ - A V A^H S~ R0 + A V R0`
pub fn compute_b(lambda: f64, s_tilde: &CMatrix, a: &CMatrix, v: &CMatrix, r0: &CMatrix) -> CMatrix {
    let av = linalg::mul(a, v);
    let z = linalg::mul_adj_right(&av, a);
    let x = linalg::mul(s_tilde, r0);
    s_tilde.scale(lambda) - linalg::mul(&z, &x) + linalg::mul(&av, r0)
}

/// Everything one MM update needs at the current iterate.
#[derive(Debug, Clone)]
pub struct MMState {
    pub criterion: Criterion,
    pub u: Sequence,
    pub s_tilde: CMatrix,
    /// `A V` with `A = P^{-1} S~ R0`
    pub av: CMatrix,
    /// `A V A^H`
    pub curvature: CMatrix,
    /// `A V R0` on the receive-diagonal blocks, zero elsewhere.
    pub avr0: CMatrix,
    pub lambda: f64,
    /// `B` on the receive-diagonal blocks, zero elsewhere. The adjoint sum
    /// and every inner product with a lifted sequence read only those blocks.
    pub b: CMatrix,
    /// Criterion value at `u`.
    pub objective: f64,
    innovation: Innovation,
}

impl MMState {
    pub fn new(scenario: &Scenario, criterion: Criterion, u: &Sequence) -> Result<Self> {
        let r0 = &scenario.prior.cov;
        let s_tilde = scenario.lift(u);
        let nr = scenario.config.nr;
        let inn = Innovation::with_blocks(&s_tilde, nr, r0, &scenario.noise)?;
        let (av, curvature, objective) = match criterion {
            Criterion::Mmse => {
                let a = inn.gain();
                let z = linalg::mul_adj_right(&a, &a);
                (a, z, inn.mmse(r0))
            }
            Criterion::Cmi => {
                let w_inv = scenario.noise.inverse();
                let av = linalg::mul_block_diag(w_inv, &s_tilde, nr);
                let z = linalg::hermitian_part(&(w_inv - inn.p_factor.inverse()));
                (av, z, inn.cmi(&scenario.noise))
            }
        };
        let avr0 = linalg::diag_blocks_of_product(&av, r0, nr);
        let lambda = curvature_bound(r0, &curvature);
        let zx = linalg::diag_blocks_of_product(&curvature, &inn.x, nr);
        let b = s_tilde.scale(lambda) - zx + &avr0;
        if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numeric("surrogate matrix B has non-finite entries"));
        }
        Ok(Self {
            criterion,
            u: u.clone(),
            s_tilde,
            av,
            curvature,
            avr0,
            lambda,
            b,
            objective,
            innovation: inn,
        })
    }

    /// `A = P^{-1} S~ R0`
    pub fn gain(&self) -> CMatrix {
        self.innovation.gain()
    }

    /// `Σ_{i,j} B[i,j]`, the point the next iterate is projected from.
    pub fn target(&self, config: &SequenceConfig) -> Result<CMatrix> {
        adjoint_sum(&self.b, config)
    }

    pub fn next(&self, config: &SequenceConfig, set: &dyn FeasibleSet) -> Result<Sequence> {
        set.project(&self.target(config)?)
    }

    /// `Tr(A V A^H S~ R0 S~^H) - 2 Re Tr(R0 V A^H S~)` at another lifted
    /// sequence; the part of the first surrogate that depends on `S~`.
    pub fn quadratic_surrogate(&self, s_tilde: &CMatrix, r0: &CMatrix) -> f64 {
        let y = linalg::mul(s_tilde, r0);
        let quad = linalg::inner_re(s_tilde, &linalg::mul(&self.curvature, &y));
        quad - 2.0 * linalg::inner_re(&self.avr0, s_tilde)
    }

    /// Tangent surrogate of the criterion: an upper bound on MMSE,
    /// a lower bound on CMI, equal to the criterion at the current iterate.
    pub fn first_surrogate(&self, s_tilde: &CMatrix, r0: &CMatrix) -> f64 {
        let delta = self.quadratic_surrogate(s_tilde, r0) - self.quadratic_surrogate(&self.s_tilde, r0);
        match self.criterion {
            Criterion::Mmse => self.objective + delta,
            Criterion::Cmi => self.objective - 0.5 * delta,
        }
    }

    /// `λ ||S~||² - 2 Re Tr(B^H S~) + c`, which majorizes
    /// [`quadratic_surrogate`](Self::quadratic_surrogate) and touches it at
    /// the current iterate.
    pub fn linear_surrogate(&self, s_tilde: &CMatrix, r0: &CMatrix) -> f64 {
        let current = &self.s_tilde;
        let quad_now = linalg::inner_re(current, &linalg::mul(&self.curvature, &linalg::mul(current, r0)));
        let constant = self.lambda * linalg::frob_norm_sq(current) - quad_now;
        self.lambda * linalg::frob_norm_sq(s_tilde) - 2.0 * linalg::inner_re(&self.b, s_tilde) + constant
    }
}

/// One MM update over the unimodular set.
pub fn mm_update(u: &Sequence, scenario: &Scenario, criterion: Criterion) -> Result<Sequence> {
    MMState::new(scenario, criterion, u)?.next(&scenario.config, &UnimodularSet::for_config(&scenario.config))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once `||U^(t+1) - U^(t)||_F <= tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Keep per-iteration objectives and step norms.
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 100_000, record_trace: true }
    }
}

impl SolveOptions {
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    IterationCap,
    /// The update returned its input exactly.
    FixedPoint,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::IterationCap => "iteration-cap",
            Termination::FixedPoint => "fixed-point",
        }
    }
}

/// Objective history of one solve.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub direction: Direction,
    /// Objective at the initial point followed by one entry per accepted iterate.
    pub objectives: Vec<f64>,
    /// `||U^(t+1) - U^(t)||_F` per iteration.
    pub step_norms: Vec<f64>,
    /// Cumulative MM-update evaluations after each iteration.
    pub update_counts: Vec<usize>,
    pub termination: Termination,
    pub iterations: usize,
    pub update_evals: usize,
    pub objective_evals: usize,
    pub final_objective: f64,
}

impl SolveTrace {
    pub(crate) fn start(direction: Direction, initial: f64, record: bool) -> Self {
        Self {
            direction,
            objectives: if record { vec![initial] } else { Vec::new() },
            step_norms: Vec::new(),
            update_counts: Vec::new(),
            termination: Termination::IterationCap,
            iterations: 0,
            update_evals: 0,
            objective_evals: 1,
            final_objective: initial,
        }
    }

    pub(crate) fn push(&mut self, objective: f64, step: f64, record: bool) {
        self.iterations += 1;
        self.final_objective = objective;
        if record {
            self.objectives.push(objective);
            self.step_norms.push(step);
            self.update_counts.push(self.update_evals);
        }
    }

    /// Largest relative move against the criterion's direction between
    /// consecutive recorded objectives (0 for a monotone trace).
    pub fn worst_violation(&self) -> f64 {
        self.objectives
            .windows(2)
            .map(|w| {
                let delta = match self.direction {
                    Direction::Minimize => w[1] - w[0],
                    Direction::Maximize => w[0] - w[1],
                };
                (delta / w[0].abs().max(f64::MIN_POSITIVE)).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn is_monotone(&self, rel_slack: f64) -> bool {
        self.worst_violation() <= rel_slack
    }

    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Tolerance | Termination::FixedPoint)
    }
}

/// Plain MM over an arbitrary feasible set.
pub fn solve_on(
    scenario: &Scenario,
    criterion: Criterion,
    set: &dyn FeasibleSet,
    init: &Sequence,
    opts: &SolveOptions,
) -> Result<(Sequence, SolveTrace)> {
    opts.validate()?;
    if !set.contains(init) {
        return Err(Error::invalid("initial sequence is not feasible"));
    }
    let config = &scenario.config;
    let mut state = MMState::new(scenario, criterion, init)?;
    let mut trace = SolveTrace::start(criterion.direction(), state.objective, opts.record_trace);
    for _ in 0..opts.max_iters {
        let next = state.next(config, set)?;
        trace.update_evals += 1;
        let step = (next.matrix() - state.u.matrix()).norm();
        if step == 0.0 {
            trace.push(state.objective, step, opts.record_trace);
            trace.termination = Termination::FixedPoint;
            return Ok((next, trace));
        }
        state = MMState::new(scenario, criterion, &next)?;
        trace.objective_evals += 1;
        trace.push(state.objective, step, opts.record_trace);
        if step <= opts.tol {
            trace.termination = Termination::Tolerance;
            return Ok((next, trace));
        }
    }
    trace.termination = Termination::IterationCap;
    Ok((state.u, trace))
}

/// Plain MM for unimodular sequences.
pub fn solve(
    scenario: &Scenario,
    criterion: Criterion,
    init: &Sequence,
    opts: &SolveOptions,
) -> Result<(Sequence, SolveTrace)> {
    solve_on(scenario, criterion, &UnimodularSet::for_config(&scenario.config), init, opts)
}
