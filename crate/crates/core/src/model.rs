//! Channel model: problem dimensions, training sequences, priors and the
//! lifts that turn a sequence into the convolution matrix of the received
//! signal `y = (I_Nr ⊗ S) h + v`.
//!
//! All indices are 0-based. Where a formula is usually written 1-based the
//! doc comment on the function gives the translation.
//!
//! The channel vector is `h = vec(H)` with `H = [H_0 ... H_K]^T` of size
//! `(K+1)Nt x Nr`. A flat index therefore decomposes as
//! `r * (K+1) * Nt + k * Nt + t` for receive antenna `r`, delay tap `k` and
//! transmit antenna `t`: receive outermost, transmit innermost. Covariances
//! built as `R_r ⊗ R_d ⊗ R_t` follow the same order.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, HermitianFactor, C64, ZERO};

/// Relative tolerance used when checking that per-antenna energies add up.
const ENERGY_SUM_TOL: f64 = 1e-12;

/// Problem dimensions, energy budget and per-antenna PAR limits.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceConfig {
    /// Training length in samples.
    pub n: usize,
    /// Transmit antennas.
    pub nt: usize,
    /// Receive antennas.
    pub nr: usize,
    /// Channel order; the impulse response has `k + 1` taps.
    pub k: usize,
    /// Total training energy `Tr(U^H U)`.
    pub alpha: f64,
    /// Energy of each transmit antenna's column; sums to `alpha`.
    pub antenna_energies: Vec<f64>,
    /// PAR bound of each antenna, each in `[1, n]`.
    pub par_limits: Vec<f64>,
}

impl SequenceConfig {
    /// Equal energy split and unit PAR limits.
    pub fn unimodular(n: usize, nt: usize, nr: usize, k: usize, alpha: f64) -> Result<Self> {
        let cfg = Self {
            n,
            nt,
            nr,
            k,
            alpha,
            antenna_energies: vec![alpha / nt.max(1) as f64; nt],
            par_limits: vec![1.0; nt],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Per-antenna energies from `proportions` (normalized to sum to `alpha`)
    /// and explicit PAR limits.
    pub fn with_par(
        n: usize,
        nt: usize,
        nr: usize,
        k: usize,
        alpha: f64,
        proportions: &[f64],
        par_limits: &[f64],
    ) -> Result<Self> {
        if proportions.len() != nt || par_limits.len() != nt {
            return Err(Error::invalid(format!(
                "expected {nt} energy proportions and PAR limits, got {} and {}",
                proportions.len(),
                par_limits.len()
            )));
        }
        if proportions.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("energy proportions must be positive and finite"));
        }
        let total: f64 = proportions.iter().sum();
        let cfg = Self {
            n,
            nt,
            nr,
            k,
            alpha,
            antenna_energies: proportions.iter().map(|p| alpha * p / total).collect(),
            par_limits: par_limits.to_vec(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.nt == 0 || self.nr == 0 {
            return Err(Error::invalid(format!(
                "dimensions must be positive (N = {}, Nt = {}, Nr = {})",
                self.n, self.nt, self.nr
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.antenna_energies.len() != self.nt || self.par_limits.len() != self.nt {
            return Err(Error::invalid("antenna_energies and par_limits need one entry per transmit antenna"));
        }
        if self.antenna_energies.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::invalid("antenna energies must be positive"));
        }
        let sum: f64 = self.antenna_energies.iter().sum();
        if (sum - self.alpha).abs() > ENERGY_SUM_TOL * self.alpha {
            return Err(Error::invalid(format!(
                "antenna energies sum to {sum}, expected alpha = {}",
                self.alpha
            )));
        }
        let n = self.n as f64;
        if let Some(xi) = self.par_limits.iter().find(|xi| !(**xi >= 1.0 && **xi <= n)) {
            return Err(Error::invalid(format!("PAR limit {xi} outside [1, N = {n}]")));
        }
        Ok(())
    }

    /// Common entry magnitude of a unimodular sequence, `sqrt(alpha / (N Nt))`.
    ///
    /// Computed as `sqrt((alpha / Nt) / N)` so that it agrees bit-for-bit with
    /// the PAR peak amplitude of an equal-split antenna at PAR 1.
    pub fn unimodular_magnitude(&self) -> f64 {
        (self.alpha / self.nt as f64 / self.n as f64).sqrt()
    }

    /// Rows of `S`, `N + K`.
    pub fn lift_rows(&self) -> usize {
        self.n + self.k
    }

    /// Columns of `S`, `(K+1) Nt`.
    pub fn lift_cols(&self) -> usize {
        (self.k + 1) * self.nt
    }

    /// Length of the received vector, `(N+K) Nr`.
    pub fn received_dim(&self) -> usize {
        self.lift_rows() * self.nr
    }

    /// Length of the channel vector, `(K+1) Nt Nr`.
    pub fn channel_dim(&self) -> usize {
        self.lift_cols() * self.nr
    }

    /// Flat position of channel coefficient (receive, tap, transmit) in `h`.
    pub fn channel_index(&self, rx: usize, tap: usize, tx: usize) -> usize {
        rx * self.lift_cols() + tap * self.nt + tx
    }
}

/// An `N x Nt` training matrix `U`; column `m` is what antenna `m` transmits.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    u: CMatrix,
}

impl Sequence {
    pub fn new(u: CMatrix) -> Result<Self> {
        if u.nrows() == 0 || u.ncols() == 0 {
            return Err(Error::invalid("sequence must have at least one row and column"));
        }
        if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numeric("sequence has non-finite entries"));
        }
        Ok(Self { u })
    }

    pub(crate) fn from_matrix_unchecked(u: CMatrix) -> Self {
        Self { u }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.u
    }

    pub fn into_matrix(self) -> CMatrix {
        self.u
    }

    pub fn len(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn antennas(&self) -> usize {
        self.u.ncols()
    }

    /// `Tr(U^H U)`
    pub fn energy(&self) -> f64 {
        linalg::frob_norm_sq(&self.u)
    }

    pub fn column_energy(&self, m: usize) -> f64 {
        self.u.column(m).iter().map(|z| z.norm_sqr()).sum()
    }

    /// `max_n |u_{n,m}|^2 / (||U_{:,m}||^2 / N)`
    pub fn column_par(&self, m: usize) -> f64 {
        let peak = self.u.column(m).iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        peak * self.len() as f64 / self.column_energy(m)
    }

    /// Every entry has magnitude `magnitude` within relative tolerance `rel_tol`.
    pub fn is_unimodular(&self, magnitude: f64, rel_tol: f64) -> bool {
        self.u.iter().all(|z| (z.norm() - magnitude).abs() <= rel_tol * magnitude)
    }

    /// Feasibility under per-antenna energy and PAR limits.
    pub fn satisfies_par(&self, config: &SequenceConfig, rel_tol: f64) -> bool {
        if self.len() != config.n || self.antennas() != config.nt {
            return false;
        }
        (0..config.nt).all(|m| {
            let alpha_m = config.antenna_energies[m];
            let peak_sq = alpha_m * config.par_limits[m] / config.n as f64;
            let energy_ok = (self.column_energy(m) - alpha_m).abs() <= rel_tol * alpha_m;
            let peak_ok = self
                .u
                .column(m)
                .iter()
                .all(|z| z.norm_sqr() <= peak_sq * (1.0 + rel_tol));
            energy_ok && peak_ok
        })
    }
}

/// Gaussian channel prior `h ~ CN(h0, R0)`.
#[derive(Debug, Clone)]
pub struct ChannelPrior {
    pub mean: CVector,
    pub cov: CMatrix,
}

impl ChannelPrior {
    pub fn new(mean: CVector, cov: CMatrix) -> Result<Self> {
        check_covariance(&cov, "channel covariance")?;
        if mean.len() != cov.nrows() {
            return Err(Error::invalid(format!(
                "prior mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn zero_mean(cov: CMatrix) -> Result<Self> {
        let n = cov.nrows();
        Self::new(CVector::zeros(n), cov)
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }
}

/// Hermitian within `1e-12` (scaled by the largest entry) and
/// eigenvalues no smaller than `-1e-10 * trace / dim`.
fn check_covariance(cov: &CMatrix, what: &str) -> Result<()> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(Error::invalid(format!("{what} must be square and non-empty")));
    }
    let scale = linalg::max_abs(cov).max(f64::MIN_POSITIVE);
    if linalg::hermitian_defect(cov) > 1e-12 * scale.max(1.0) {
        return Err(Error::invalid(format!("{what} is not Hermitian")));
    }
    let dim = cov.nrows() as f64;
    let floor = -1e-10 * linalg::trace(cov).re.abs() / dim;
    let min_ev = linalg::hermitian_eigenvalues(cov)[0];
    if min_ev < floor {
        return Err(Error::invalid(format!(
            "{what} is not positive semidefinite (smallest eigenvalue {min_ev:e})"
        )));
    }
    Ok(())
}

/// Noise covariance `W` together with its Cholesky factor and inverse.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    w: CMatrix,
    factor: HermitianFactor,
    w_inv: CMatrix,
}

impl NoiseModel {
    pub fn new(w: CMatrix) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::invalid("noise covariance must be square and non-empty"));
        }
        let scale = linalg::max_abs(&w).max(1.0);
        if linalg::hermitian_defect(&w) > 1e-12 * scale {
            return Err(Error::invalid("noise covariance is not Hermitian"));
        }
        let factor = HermitianFactor::new(&w)
            .ok_or_else(|| Error::invalid("noise covariance is not positive definite"))?;
        let w_inv = factor.inverse();
        Ok(Self { w, factor, w_inv })
    }

    pub fn cov(&self) -> &CMatrix {
        &self.w
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.w_inv
    }

    pub fn factor(&self) -> &HermitianFactor {
        &self.factor
    }

    pub fn logdet(&self) -> f64 {
        self.factor.logdet()
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.w).re
    }

    /// `c W` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid(format!("noise scale must be positive, got {c}")));
        }
        Self::new(self.w.scale(c))
    }
}

/// Distribution the Monte Carlo harness draws true channels from.
#[derive(Debug, Clone)]
pub struct ChannelTruth {
    pub mean: CVector,
    pub cov: CMatrix,
}

impl ChannelTruth {
    pub fn new(mean: CVector, cov: CMatrix) -> Result<Self> {
        let p = ChannelPrior::new(mean, cov)?;
        Ok(Self { mean: p.mean, cov: p.cov })
    }
}

/// A complete design and evaluation problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SequenceConfig,
    pub prior: ChannelPrior,
    pub noise: NoiseModel,
    pub truth: Option<ChannelTruth>,
}

impl Scenario {
    pub fn new(
        config: SequenceConfig,
        prior: ChannelPrior,
        noise: NoiseModel,
        truth: Option<ChannelTruth>,
    ) -> Result<Self> {
        config.validate()?;
        let hd = config.channel_dim();
        if prior.dim() != hd {
            return Err(Error::invalid(format!(
                "prior covariance is {0}x{0}, expected (K+1)NtNr = {hd}",
                prior.dim()
            )));
        }
        if noise.dim() != config.received_dim() {
            return Err(Error::invalid(format!(
                "noise covariance is {0}x{0}, expected (N+K)Nr = {1}",
                noise.dim(),
                config.received_dim()
            )));
        }
        if let Some(t) = &truth {
            if t.cov.nrows() != hd || t.mean.len() != hd {
                return Err(Error::invalid(format!(
                    "truth covariance/mean must have dimension {hd}"
                )));
            }
        }
        Ok(Self { config, prior, noise, truth })
    }

    /// Distribution of the true channel; the prior when no truth is given.
    pub fn truth_mean(&self) -> &CVector {
        self.truth.as_ref().map_or(&self.prior.mean, |t| &t.mean)
    }

    pub fn truth_cov(&self) -> &CMatrix {
        self.truth.as_ref().map_or(&self.prior.cov, |t| &t.cov)
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(self.config.clone(), self.prior.clone(), noise, self.truth.clone())
    }

    /// `S~ = I_Nr ⊗ T(U)`
    pub fn lift(&self, u: &Sequence) -> CMatrix {
        kron_lift(&toeplitz_lift(u.matrix(), self.config.k), self.config.nr)
    }
}

/// Block-Toeplitz convolution matrix `S = T(U)` of size `(N+K) x (K+1)Nt`.
///
/// Block `j` (columns `j*Nt .. (j+1)*Nt`) holds `U` in rows `j .. j+N`.
pub fn toeplitz_lift(u: &CMatrix, k: usize) -> CMatrix {
    let (n, nt) = u.shape();
    let mut s = CMatrix::zeros(n + k, (k + 1) * nt);
    for j in 0..=k {
        s.view_mut((j, j * nt), (n, nt)).copy_from(u);
    }
    s
}

/// Block-diagonal `I_Nr ⊗ S`.
pub fn kron_lift(s: &CMatrix, nr: usize) -> CMatrix {
    let (r, c) = s.shape();
    let mut out = CMatrix::zeros(r * nr, c * nr);
    for i in 0..nr {
        out.view_mut((i * r, i * c), (r, c)).copy_from(s);
    }
    out
}

/// Sum of the `N x Nt` submatrices of `B` that `kron_lift ∘ toeplitz_lift`
/// writes `U` into; this is the adjoint of that lift.
///
/// For receive antenna `i` and tap `j` the block starts at row
/// `(N+K) i + j` and column `(K+1) Nt i + Nt j` (1-based: rows
/// `(N+K)(i-1)+j ..`, columns `Nt(K+1)(i-1)+Nt(j-1)+1 ..`).
pub fn adjoint_sum(b: &CMatrix, config: &SequenceConfig) -> Result<CMatrix> {
    let rows = config.received_dim();
    let cols = config.channel_dim();
    if b.shape() != (rows, cols) {
        return Err(Error::invalid(format!(
            "adjoint_sum expects a {rows}x{cols} matrix, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let (n, nt, k) = (config.n, config.nt, config.k);
    let mut acc = CMatrix::zeros(n, nt);
    for i in 0..config.nr {
        for j in 0..=k {
            let r0 = (n + k) * i + j;
            let c0 = nt * (k + 1) * i + nt * j;
            acc += b.view((r0, c0), (n, nt));
        }
    }
    Ok(acc)
}

/// Lag-`k` correlation matrix `Σ_k` with entries
/// `sum_{n=k}^{N-1} u[n, m1] conj(u[n-k, m2])`
/// (1-based: `sum_{n=k+1}^{N} u_{n,m1} u*_{n-k,m2}`).
///
/// Negative lags return `Σ_{-k}^H`; `|k| >= N` gives the zero matrix.
pub fn correlation_lag(u: &CMatrix, k: isize) -> CMatrix {
    let (n, nt) = u.shape();
    if k < 0 {
        return correlation_lag(u, -k).adjoint();
    }
    let k = k as usize;
    let mut sigma = CMatrix::zeros(nt, nt);
    if k >= n {
        return sigma;
    }
    for m1 in 0..nt {
        for m2 in 0..nt {
            sigma[(m1, m2)] = (k..n).map(|i| u[(i, m1)] * u[(i - k, m2)].conj()).sum();
        }
    }
    sigma
}

/// `S^H S` assembled from lag correlations: block `(a, b)` is `Σ_{a-b}^T`.
///
/// For a single antenna the transpose is immaterial and this is the familiar
/// Toeplitz matrix of autocorrelations.
pub fn correlation_block_matrix(u: &CMatrix, k: usize) -> CMatrix {
    let nt = u.ncols();
    let mut out = CMatrix::zeros((k + 1) * nt, (k + 1) * nt);
    for a in 0..=k {
        for b in 0..=k {
            let block = correlation_lag(u, a as isize - b as isize).transpose();
            out.view_mut((a * nt, b * nt), (nt, nt)).copy_from(&block);
        }
    }
    out
}

/// Exponentially decaying profile, entry `(i, j)` equal to
/// `rho^|i-j| * decay^(i/2) * decay^(j/2)` (1-based exponents `(i-1)/2`).
pub fn siso_exp_covariance(len: usize, rho: f64, decay: f64) -> Result<CMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::invalid(format!("decay must lie in (0, 1], got {decay}")));
    }
    Ok(CMatrix::from_fn(len, len, |i, j| {
        let lag = i.abs_diff(j) as i32;
        C64::new(
            rho.powi(lag) * decay.powf(i as f64 / 2.0) * decay.powf(j as f64 / 2.0),
            0.0,
        )
    }))
}

/// Kac–Murdock–Szegő matrix with entries `rho^|i-j|`; positive definite for `|rho| < 1`.
pub fn toeplitz_covariance(len: usize, rho: f64) -> Result<CMatrix> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("need |rho| < 1, got {rho}")));
    }
    Ok(CMatrix::from_fn(len, len, |i, j| C64::new(rho.powi(i.abs_diff(j) as i32), 0.0)))
}

/// `R_r ⊗ R_d ⊗ R_t` (receive, delay, transmit).
pub fn kron3_covariance(rr: &CMatrix, rd: &CMatrix, rt: &CMatrix) -> CMatrix {
    linalg::kron(&linalg::kron(rr, rd), rt)
}

/// Draws from `CN(mean, cov)` with a factor computed once.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: CVector,
    factor: Option<CMatrix>,
}

impl GaussianSampler {
    pub fn new(mean: CVector, cov: &CMatrix) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::invalid(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        // A zero covariance is a point mass at the mean.
        let factor = if cov.iter().all(|z| *z == ZERO) {
            None
        } else {
            Some(linalg::cholesky_with_jitter(cov)?)
        };
        Ok(Self { mean, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + L z` with `z` standard circular complex Gaussian
    /// (real and imaginary parts each of variance 1/2).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        let d = self.mean.len();
        let z = CVector::from_fn(d, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        match &self.factor {
            None => self.mean.clone(),
            Some(l) => &self.mean + linalg::mul_vec(l, &z),
        }
    }
}

pub fn sample_complex_gaussian<R: Rng + ?Sized>(
    mean: &CVector,
    cov: &CMatrix,
    rng: &mut R,
) -> Result<CVector> {
    Ok(GaussianSampler::new(mean.clone(), cov)?.sample(rng))
}

/// Evaluates the SNR in dB for sequence energy `energy` against noise `w`:
/// `10 log10( (energy / (N Nt)) / (Tr W / ((N+K) Nr)) )`.
pub fn snr_db(config: &SequenceConfig, energy: f64, noise: &NoiseModel) -> f64 {
    let signal = energy / (config.n * config.nt) as f64;
    let noise_power = noise.trace() / config.received_dim() as f64;
    10.0 * (signal / noise_power).log10()
}

/// Scale factor `c` such that `c W_base` gives the requested SNR with the
/// sequence energy fixed at `alpha`.
pub fn noise_scale_for_snr(config: &SequenceConfig, w_base: &NoiseModel, snr_db: f64) -> f64 {
    let signal = config.alpha / (config.n * config.nt) as f64;
    let base_noise = w_base.trace() / config.received_dim() as f64;
    signal / base_noise * 10f64.powf(-snr_db / 10.0)
}

/// Noise model `c W_base` at the requested SNR; the sequence energy is never rescaled.
pub fn scale_noise_for_snr(
    config: &SequenceConfig,
    w_base: &NoiseModel,
    snr_db: f64,
) -> Result<NoiseModel> {
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("SNR must be finite, got {snr_db}")));
    }
    w_base.scaled(noise_scale_for_snr(config, w_base, snr_db))
}
