//! Sequences under per-antenna energy and peak-to-average power limits.
//!
//! Column `m` must have energy `alpha_m` and every entry must satisfy
//! `|u_n|^2 <= xi_m alpha_m / N`. The nearest such vector to `c` keeps the
//! phases of `c` and uses magnitudes `min(β |c_n|, peak)` for the unique `β`
//! that meets the energy target. [`project_par`] finds `β` by scanning the
//! points where successive entries of `|c|` reach the peak, which is exact
//! within each segment.

use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::mm::{self, unit_phase, FeasibleSet, MMState, SolveOptions, SolveTrace};
use crate::model::{Scenario, Sequence, SequenceConfig};

/// Relative tolerance for the energy and peak checks in [`ParSet::contains`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Limits for one antenna's sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParSpec {
    pub alpha_m: f64,
    pub xi_m: f64,
    pub n: usize,
}

impl ParSpec {
    pub fn new(alpha_m: f64, xi_m: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("sequence length must be positive"));
        }
        if !(alpha_m > 0.0) || !alpha_m.is_finite() {
            return Err(Error::invalid(format!("antenna energy must be positive, got {alpha_m}")));
        }
        if !(xi_m >= 1.0 && xi_m <= n as f64) {
            return Err(Error::invalid(format!("PAR limit {xi_m} outside [1, {n}]")));
        }
        Ok(Self { alpha_m, xi_m, n })
    }

    /// Amplitude ceiling `sqrt(alpha_m xi_m / N)`.
    pub fn peak(&self) -> f64 {
        (self.alpha_m * self.xi_m / self.n as f64).sqrt()
    }

    /// One spec per transmit antenna of `config`.
    pub fn for_config(config: &SequenceConfig) -> Result<Vec<Self>> {
        config
            .antenna_energies
            .iter()
            .zip(&config.par_limits)
            .map(|(&a, &xi)| Self::new(a, xi, config.n))
            .collect()
    }
}

/// Result of [`project_par_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParProjection {
    pub u: CVector,
    /// Scaling of the unclipped entries; infinite when every nonzero entry
    /// of the input sits at the peak.
    pub beta: f64,
}

/// Nearest vector to `c` with energy `alpha_m` and no entry above the peak.
pub fn project_par(c: &CVector, spec: &ParSpec) -> Result<CVector> {
    Ok(project_par_detailed(c, spec)?.u)
}

pub fn project_par_detailed(c: &CVector, spec: &ParSpec) -> Result<ParProjection> {
    let spec = ParSpec::new(spec.alpha_m, spec.xi_m, spec.n)?;
    let n = spec.n;
    if c.len() != n {
        return Err(Error::invalid(format!("vector has length {}, spec expects {n}", c.len())));
    }
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numeric("projection target has non-finite entries"));
    }
    let energy = spec.alpha_m;
    if spec.xi_m == 1.0 {
        // Unit PAR pins every magnitude; this is the unimodular projection.
        let mag = (energy / n as f64).sqrt();
        return Ok(ParProjection { u: c.map(|z| unit_phase(z) * mag), beta: f64::INFINITY });
    }
    let peak = spec.peak();
    let peak_sq = peak * peak;

    let mut order: Vec<usize> = (0..n).filter(|&i| c[i].norm() > 0.0).collect();
    if order.is_empty() {
        let flat = (energy / n as f64).sqrt();
        return Ok(ParProjection { u: CVector::from_element(n, C64::new(flat, 0.0)), beta: 0.0 });
    }
    order.sort_by(|&a, &b| c[b].norm().total_cmp(&c[a].norm()).then(a.cmp(&b)));
    let mags: Vec<f64> = order.iter().map(|&i| c[i].norm()).collect();
    // tail[j] = sum of squared magnitudes from rank j on, accumulated from the smallest.
    let mut tail = vec![0.0; mags.len() + 1];
    for j in (0..mags.len()).rev() {
        tail[j] = tail[j + 1] + mags[j] * mags[j];
    }

    // Entries ranked below `clipped` sit at the peak; the rest scale by β.
    let (mut clipped, mut beta) = (mags.len(), f64::INFINITY);
    for j in 0..mags.len() {
        let rest = energy - j as f64 * peak_sq;
        if rest <= 0.0 {
            (clipped, beta) = (j, 0.0);
            break;
        }
        let b = (rest / tail[j]).sqrt();
        if b * mags[j] <= peak {
            (clipped, beta) = (j, b);
            break;
        }
    }

    let mut u = CVector::zeros(n);
    for (rank, &i) in order.iter().enumerate() {
        let mag = if rank < clipped { peak } else { (beta * mags[rank]).min(peak) };
        u[i] = unit_phase(c[i]) * mag;
    }
    if clipped == mags.len() && order.len() < n {
        let zeros = n - order.len();
        let rest = (energy - order.len() as f64 * peak_sq).max(0.0);
        let fill = (rest / zeros as f64).sqrt().min(peak);
        for i in 0..n {
            if c[i].norm() == 0.0 {
                u[i] = C64::new(fill, 0.0);
            }
        }
    }
    Ok(ParProjection { u, beta })
}

/// Column-wise PAR constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParSet {
    pub specs: Vec<ParSpec>,
}

impl ParSet {
    pub fn for_config(config: &SequenceConfig) -> Result<Self> {
        Ok(Self { specs: ParSpec::for_config(config)? })
    }
}

impl FeasibleSet for ParSet {
    fn project(&self, target: &CMatrix) -> Result<Sequence> {
        if target.ncols() != self.specs.len() {
            return Err(Error::invalid(format!(
                "target has {} columns, expected {}",
                target.ncols(),
                self.specs.len()
            )));
        }
        let mut out = CMatrix::zeros(target.nrows(), target.ncols());
        for (m, spec) in self.specs.iter().enumerate() {
            let col = project_par(&target.column(m).into_owned(), spec)?;
            out.set_column(m, &col);
        }
        Ok(Sequence::from_matrix_unchecked(out))
    }

    fn contains(&self, u: &Sequence) -> bool {
        if u.antennas() != self.specs.len() {
            return false;
        }
        self.specs.iter().enumerate().all(|(m, spec)| {
            let peak_sq = spec.peak() * spec.peak();
            u.len() == spec.n
                && (u.column_energy(m) - spec.alpha_m).abs() <= FEASIBILITY_TOL * spec.alpha_m
                && u.matrix().column(m).iter().all(|z| z.norm_sqr() <= peak_sq * (1.0 + FEASIBILITY_TOL))
        })
    }
}

/// One MM update followed by the column-wise PAR projection.
pub fn mm_update_par(u: &Sequence, scenario: &Scenario, criterion: Criterion) -> Result<Sequence> {
    let set = ParSet::for_config(&scenario.config)?;
    MMState::new(scenario, criterion, u)?.next(&scenario.config, &set)
}

/// Plain MM under the PAR constraints of `scenario.config`.
pub fn solve_par(
    scenario: &Scenario,
    criterion: Criterion,
    init: &Sequence,
    opts: &SolveOptions,
) -> Result<(Sequence, SolveTrace)> {
    let set = ParSet::for_config(&scenario.config)?;
    mm::solve_on(scenario, criterion, &set, init, opts)
}
