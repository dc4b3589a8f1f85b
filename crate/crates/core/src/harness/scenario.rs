//! Scenario documents.
//!
//! ```json
//! {
//!   "N": 10, "Nt": 1, "Nr": 1, "K": 19,
//!   "alpha": 10,
//!   "antenna_energy_proportions": [1],
//!   "par_limits": [1],
//!   "prior": {"type": "siso_exp", "rho": 0.8, "decay": 0.8},
//!   "truth": {"type": "siso_exp", "rho": 0.9, "decay": 0.9},
//!   "noise": {"type": "toeplitz", "rho": 0.2},
//!   "snr_db": -5
//! }
//! ```
//!
//! `alpha` defaults to `N Nt`, the proportions to an equal split and the PAR
//! limits to 1. A `kron3` covariance is `Rr ⊗ Rd ⊗ Rt` with Toeplitz factors
//! `rho^|i-j|` (`rho_r`, `rho_d`, `rho_t`). Explicit matrices and means are
//! row-major lists of `[re, im]` pairs. When `snr_db` is present the noise
//! covariance is rescaled to that SNR.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::model::{
    kron3_covariance, scale_noise_for_snr, siso_exp_covariance, toeplitz_covariance, ChannelPrior,
    ChannelTruth, NoiseModel, Scenario, SequenceConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "Nr")]
    pub nr: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna_energy_proportions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub par_limits: Option<Vec<f64>>,
    pub prior: CovarianceSpec,
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<CovarianceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    SisoExp {
        rho: f64,
        decay: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<[f64; 2]>>,
    },
    Kron3 {
        rho_r: f64,
        rho_d: f64,
        rho_t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<[f64; 2]>>,
    },
    Explicit {
        cov: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<[f64; 2]>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Toeplitz { rho: f64 },
    Explicit { cov: Vec<[f64; 2]> },
}

pub(crate) fn complex_entries(pairs: &[[f64; 2]]) -> Vec<C64> {
    pairs.iter().map(|[re, im]| C64::new(*re, *im)).collect()
}

pub(crate) fn square_from_pairs(pairs: &[[f64; 2]], dim: usize, what: &str) -> Result<CMatrix> {
    if pairs.len() != dim * dim {
        return Err(Error::invalid(format!(
            "{what} has {} entries, expected {dim}x{dim} = {}",
            pairs.len(),
            dim * dim
        )));
    }
    Ok(CMatrix::from_row_slice(dim, dim, &complex_entries(pairs)))
}

impl CovarianceSpec {
    fn build(&self, config: &SequenceConfig, what: &str) -> Result<(CVector, CMatrix)> {
        let dim = config.channel_dim();
        let (cov, mean) = match self {
            CovarianceSpec::SisoExp { rho, decay, mean } => {
                if !(*decay > 0.0 && *decay <= 1.0) {
                    return Err(Error::invalid(format!("{what}: decay must lie in (0, 1], got {decay}")));
                }
                (siso_exp_covariance(dim, *rho, *decay)?, mean)
            }
            CovarianceSpec::Kron3 { rho_r, rho_d, rho_t, mean } => {
                let rr = toeplitz_covariance(config.nr, *rho_r)?;
                let rd = toeplitz_covariance(config.k + 1, *rho_d)?;
                let rt = toeplitz_covariance(config.nt, *rho_t)?;
                (kron3_covariance(&rr, &rd, &rt), mean)
            }
            CovarianceSpec::Explicit { cov, mean } => (square_from_pairs(cov, dim, what)?, mean),
        };
        let mean = match mean {
            None => CVector::zeros(dim),
            Some(m) if m.len() == dim => CVector::from_vec(complex_entries(m)),
            Some(m) => {
                return Err(Error::invalid(format!("{what} mean has {} entries, expected {dim}", m.len())))
            }
        };
        Ok((mean, cov))
    }
}

impl NoiseSpec {
    fn build(&self, dim: usize) -> Result<NoiseModel> {
        let w = match self {
            NoiseSpec::Toeplitz { rho } => toeplitz_covariance(dim, *rho)?,
            NoiseSpec::Explicit { cov } => square_from_pairs(cov, dim, "noise covariance")?,
        };
        NoiseModel::new(w)
    }
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn config(&self) -> Result<SequenceConfig> {
        let alpha = self.alpha.unwrap_or((self.n * self.nt) as f64);
        let proportions = self.antenna_energy_proportions.clone().unwrap_or_else(|| vec![1.0; self.nt]);
        let limits = self.par_limits.clone().unwrap_or_else(|| vec![1.0; self.nt]);
        if self.antenna_energy_proportions.is_none() && self.par_limits.is_none() {
            return SequenceConfig::unimodular(self.n, self.nt, self.nr, self.k, alpha);
        }
        SequenceConfig::with_par(self.n, self.nt, self.nr, self.k, alpha, &proportions, &limits)
    }

    /// Scenario with the noise at its base level (ignores `snr_db`).
    pub fn base_scenario(&self) -> Result<Scenario> {
        let config = self.config()?;
        let (mean, cov) = self.prior.build(&config, "prior")?;
        let prior = ChannelPrior::new(mean, cov)?;
        let truth = match &self.truth {
            None => None,
            Some(spec) => {
                let (mean, cov) = spec.build(&config, "truth")?;
                Some(ChannelTruth::new(mean, cov)?)
            }
        };
        let noise = self.noise.build(config.received_dim())?;
        Scenario::new(config, prior, noise, truth)
    }

    /// Scenario with the noise rescaled to `snr_db` when one is given.
    pub fn build(&self) -> Result<Scenario> {
        let base = self.base_scenario()?;
        match self.snr_db {
            None => Ok(base),
            Some(snr) => {
                let noise = scale_noise_for_snr(&base.config, &base.noise, snr)?;
                base.with_noise(noise)
            }
        }
    }

    /// Single-antenna setup with `K + 1 = 20` taps, `N = 10`, design prior
    /// `siso_exp(0.8, 0.8)`, truth `siso_exp(0.9, 0.9)` and Toeplitz noise 0.2.
    pub fn siso_reference() -> Self {
        Self {
            n: 10,
            nt: 1,
            nr: 1,
            k: 19,
            alpha: None,
            antenna_energy_proportions: None,
            par_limits: None,
            prior: CovarianceSpec::SisoExp { rho: 0.8, decay: 0.8, mean: None },
            noise: NoiseSpec::Toeplitz { rho: 0.2 },
            truth: Some(CovarianceSpec::SisoExp { rho: 0.9, decay: 0.9, mean: None }),
            snr_db: None,
        }
    }

    /// Multi-antenna setup with `K + 1 = 20` taps, `N = 10`, design prior
    /// `kron3(0.8, 0.6, 0.8)`, truth `kron3(0.9, 0.7, 0.9)` and Toeplitz noise 0.2.
    pub fn mimo_reference(nt: usize, nr: usize) -> Self {
        Self {
            n: 10,
            nt,
            nr,
            k: 19,
            alpha: None,
            antenna_energy_proportions: None,
            par_limits: None,
            prior: CovarianceSpec::Kron3 { rho_r: 0.8, rho_d: 0.6, rho_t: 0.8, mean: None },
            noise: NoiseSpec::Toeplitz { rho: 0.2 },
            truth: Some(CovarianceSpec::Kron3 { rho_r: 0.9, rho_d: 0.7, rho_t: 0.9, mean: None }),
            snr_db: None,
        }
    }

    /// [`mimo_reference`](Self::mimo_reference) with three transmit antennas
    /// at PAR limits 1, 2, 3 and energy proportions 1:2:3.
    pub fn mimo_par_reference(nr: usize) -> Self {
        Self {
            antenna_energy_proportions: Some(vec![1.0, 2.0, 3.0]),
            par_limits: Some(vec![1.0, 2.0, 3.0]),
            ..Self::mimo_reference(3, nr)
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    ScenarioSpec::load(path)?.build()
}
