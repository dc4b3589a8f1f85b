//! Estimation criteria and estimators for the linear Gaussian model
//! `y = S~ h + v`, `h ~ CN(h0, R0)`, `v ~ CN(0, W)`.
//!
//! Every inverse is a Hermitian solve against `P = S~ R0 S~^H + W`, which is
//! positive definite whenever `W` is. `R0` is never inverted and may be
//! singular.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, HermitianFactor};
use crate::model::{correlation_lag, ChannelPrior, NoiseModel, Scenario, Sequence};

/// Design criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Minimize `Tr(R)`, the Bayesian mean square error.
    Mmse,
    /// Maximize the conditional mutual information between channel and observation.
    Cmi,
}

impl Criterion {
    pub fn direction(self) -> Direction {
        match self {
            Criterion::Mmse => Direction::Minimize,
            Criterion::Cmi => Direction::Maximize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Mmse => "mmse",
            Criterion::Cmi => "cmi",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmse" => Ok(Criterion::Mmse),
            "cmi" => Ok(Criterion::Cmi),
            other => Err(Error::invalid(format!("unknown criterion '{other}' (expected mmse or cmi)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// True if `candidate` is worse than `reference` by more than
    /// `rel_slack * |reference|`.
    pub fn is_worse(self, candidate: f64, reference: f64, rel_slack: f64) -> bool {
        if !candidate.is_finite() {
            return true;
        }
        let slack = rel_slack * reference.abs();
        match self {
            Direction::Minimize => candidate > reference + slack,
            Direction::Maximize => candidate < reference - slack,
        }
    }
}

/// Quantities shared by every criterion at one lifted sequence:
/// `X = S~ R0`, the factor of `P = X S~^H + W`, and `L^{-1} X`.
#[derive(Debug, Clone)]
pub struct Innovation {
    pub x: CMatrix,
    pub p_factor: HermitianFactor,
    /// `L^{-1} X`, built on first use; CMI needs only the factor.
    whitened: OnceLock<CMatrix>,
}

impl Innovation {
    pub fn new(s_tilde: &CMatrix, r0: &CMatrix, noise: &NoiseModel) -> Result<Self> {
        Self::with_blocks(s_tilde, 1, r0, noise)
    }

    /// Same as [`new`](Self::new) for `S~ = I_blocks ⊗ S`, skipping the zero
    /// blocks in both products.
    pub fn with_blocks(s_tilde: &CMatrix, blocks: usize, r0: &CMatrix, noise: &NoiseModel) -> Result<Self> {
        if blocks == 0 || s_tilde.nrows() % blocks != 0 || s_tilde.ncols() % blocks != 0 {
            return Err(Error::invalid(format!(
                "a {}x{} lifted sequence does not split into {blocks} diagonal blocks",
                s_tilde.nrows(),
                s_tilde.ncols()
            )));
        }
        if s_tilde.ncols() != r0.nrows() || s_tilde.nrows() != noise.dim() {
            return Err(Error::invalid(format!(
                "lifted sequence is {}x{}, expected {}x{}",
                s_tilde.nrows(),
                s_tilde.ncols(),
                noise.dim(),
                r0.nrows()
            )));
        }
        let x = linalg::block_diag_mul(s_tilde, blocks, r0);
        let p = linalg::hermitian_part(&(linalg::mul_block_diag_adj(&x, s_tilde, blocks) + noise.cov()));
        let p_factor = HermitianFactor::new(&p)
            .ok_or_else(|| Error::numeric("S~ R0 S~^H + W is not numerically positive definite"))?;
        Ok(Self { x, p_factor, whitened: OnceLock::new() })
    }

    fn whitened(&self) -> &CMatrix {
        self.whitened.get_or_init(|| self.p_factor.whiten(&self.x))
    }

    /// `A = P^{-1} S~ R0`
    pub fn gain(&self) -> CMatrix {
        self.p_factor.solve_whitened(self.whitened())
    }

    /// `Tr(R0 S~^H P^{-1} S~ R0)`, the variance explained by the observation.
    pub fn explained_variance(&self) -> f64 {
        linalg::frob_norm_sq(self.whitened())
    }

    /// `R0 - R0 S~^H P^{-1} S~ R0`, symmetrized.
    pub fn error_covariance(&self, r0: &CMatrix) -> CMatrix {
        let explained = linalg::mul_adj_left(self.whitened(), self.whitened());
        linalg::hermitian_part(&(r0 - explained))
    }

    /// `MMSE = Tr(R0) - Tr(R0 S~^H P^{-1} S~ R0)`
    pub fn mmse(&self, r0: &CMatrix) -> f64 {
        linalg::trace(r0).re - self.explained_variance()
    }

    /// `½ log det(I + R0 S~^H W^{-1} S~) = ½ (log det P - log det W)`.
    pub fn cmi(&self, noise: &NoiseModel) -> f64 {
        0.5 * (self.p_factor.logdet() - noise.logdet())
    }
}

/// Posterior error covariance of the MMSE estimator.
#[derive(Debug, Clone)]
pub struct ErrorCovariance {
    pub r: CMatrix,
}

impl ErrorCovariance {
    pub fn trace(&self) -> f64 {
        linalg::trace(&self.r).re
    }
}

pub fn error_covariance(
    s_tilde: &CMatrix,
    prior: &ChannelPrior,
    noise: &NoiseModel,
) -> Result<ErrorCovariance> {
    let inn = Innovation::new(s_tilde, &prior.cov, noise)?;
    Ok(ErrorCovariance { r: inn.error_covariance(&prior.cov) })
}

/// `Tr(R)`
pub fn mmse_objective(s_tilde: &CMatrix, prior: &ChannelPrior, noise: &NoiseModel) -> Result<f64> {
    Ok(Innovation::new(s_tilde, &prior.cov, noise)?.mmse(&prior.cov))
}

/// `½ log det(I + R0 S~^H W^{-1} S~)`, equal to `½ log det(R0 R^{-1})` when
/// `R0` is invertible and still finite when it is not.
pub fn cmi_objective(s_tilde: &CMatrix, prior: &ChannelPrior, noise: &NoiseModel) -> Result<f64> {
    cmi_eval_true(s_tilde, &prior.cov, noise)
}

/// CMI against the true channel covariance; the metric the harness reports.
pub fn cmi_eval_true(s_tilde: &CMatrix, r_true: &CMatrix, noise: &NoiseModel) -> Result<f64> {
    Ok(Innovation::new(s_tilde, r_true, noise)?.cmi(noise))
}

/// Objective value for either criterion.
pub fn objective(
    criterion: Criterion,
    s_tilde: &CMatrix,
    prior: &ChannelPrior,
    noise: &NoiseModel,
) -> Result<f64> {
    let inn = Innovation::new(s_tilde, &prior.cov, noise)?;
    Ok(match criterion {
        Criterion::Mmse => inn.mmse(&prior.cov),
        Criterion::Cmi => inn.cmi(noise),
    })
}

/// [`objective`] at the lift of `u`, using the block structure of the lift.
pub fn objective_at(criterion: Criterion, scenario: &Scenario, u: &Sequence) -> Result<f64> {
    let (prior, noise) = (&scenario.prior, &scenario.noise);
    let inn = Innovation::with_blocks(&scenario.lift(u), scenario.config.nr, &prior.cov, noise)?;
    Ok(match criterion {
        Criterion::Mmse => inn.mmse(&prior.cov),
        Criterion::Cmi => inn.cmi(noise),
    })
}

/// `h0 + R0 S~^H P^{-1} (y - S~ h0)`
pub fn mmse_estimate(
    y: &CVector,
    s_tilde: &CMatrix,
    prior: &ChannelPrior,
    noise: &NoiseModel,
) -> Result<CVector> {
    MmseEstimator::new(s_tilde, prior, noise)?.estimate(y)
}

/// MMSE estimator with the gain `R0 S~^H P^{-1}` precomputed, for repeated use
/// with one training sequence.
#[derive(Debug, Clone)]
pub struct MmseEstimator {
    s_tilde: CMatrix,
    mean: CVector,
    /// `A^H = R0 S~^H P^{-1}`
    gain: CMatrix,
}

impl MmseEstimator {
    pub fn new(s_tilde: &CMatrix, prior: &ChannelPrior, noise: &NoiseModel) -> Result<Self> {
        let inn = Innovation::new(s_tilde, &prior.cov, noise)?;
        Ok(Self {
            s_tilde: s_tilde.clone(),
            mean: prior.mean.clone(),
            gain: inn.gain().adjoint(),
        })
    }

    pub fn estimate(&self, y: &CVector) -> Result<CVector> {
        if y.len() != self.s_tilde.nrows() {
            return Err(Error::invalid(format!(
                "received vector has length {}, expected {}",
                y.len(),
                self.s_tilde.nrows()
            )));
        }
        let innovation = y - linalg::mul_vec(&self.s_tilde, &self.mean);
        Ok(&self.mean + linalg::mul_vec(&self.gain, &innovation))
    }
}

fn gram_factor(s: &CMatrix) -> Result<HermitianFactor> {
    let (rows, cols) = s.shape();
    if rows < cols {
        return Err(Error::SingularModel {
            rows,
            cols,
            reason: "fewer observations than unknowns per receive antenna".into(),
        });
    }
    let gram = linalg::hermitian_part(&linalg::mul_adj_left(s, s));
    let rank_deficient = || Error::SingularModel {
        rows,
        cols,
        reason: "S^H S is rank deficient".into(),
    };
    let factor = HermitianFactor::new(&gram).ok_or_else(rank_deficient)?;
    // Pivots below this are rounding noise from a singular Gram matrix.
    let scale = gram.diagonal().iter().map(|d| d.re).fold(0.0, f64::max);
    let floor = (cols as f64) * f64::EPSILON * scale;
    if factor.l().diagonal().iter().any(|d| d.re * d.re <= floor) {
        return Err(rank_deficient());
    }
    Ok(factor)
}

/// Least-squares estimate `(S~^H S~)^{-1} S~^H y`, solved per receive antenna.
pub fn ml_estimate(y: &CVector, s: &CMatrix, nr: usize) -> Result<CVector> {
    let (rows, cols) = s.shape();
    if y.len() != rows * nr {
        return Err(Error::invalid(format!(
            "received vector has length {}, expected {}",
            y.len(),
            rows * nr
        )));
    }
    let factor = gram_factor(s)?;
    // Column r of Y is receive antenna r's observation.
    let ymat = CMatrix::from_column_slice(rows, nr, y.as_slice());
    let h = factor.solve(&linalg::mul_adj_left(s, &ymat));
    debug_assert_eq!(h.shape(), (cols, nr));
    Ok(CVector::from_column_slice(h.as_slice()))
}

/// `Nr Tr((S^H S)^{-1})`
pub fn ml_error(s: &CMatrix, nr: usize) -> Result<f64> {
    let factor = gram_factor(s)?;
    Ok(nr as f64 * linalg::trace(&factor.inverse()).re)
}

/// Weighted correlation criterion over lags `0..=k`:
/// `(K+1) ||Σ_0 - (α/Nt) I||² + 2 Σ_{k=1}^{K} (K+1-k) ||Σ_k||²`.
pub fn weighted_corr_objective(u: &CMatrix, alpha: f64, k: usize) -> f64 {
    let nt = u.ncols();
    let target = CMatrix::identity(nt, nt).scale(alpha / nt as f64);
    let zero_lag = (k + 1) as f64 * linalg::frob_norm_sq(&(correlation_lag(u, 0) - target));
    let sidelobes: f64 = (1..=k)
        .map(|lag| (k + 1 - lag) as f64 * linalg::frob_norm_sq(&correlation_lag(u, lag as isize)))
        .sum();
    zero_lag + 2.0 * sidelobes
}
