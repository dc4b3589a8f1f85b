//! Dense reference computations for the integration tests. Everything here
//! goes through explicit inverses, determinants and index formulas rather
//! than the library's factored routes.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqdesign::linalg::{CMatrix, C64};
use seqdesign::model::{ChannelPrior, NoiseModel, Scenario, SequenceConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
}

/// `G G^H + shift I`, Hermitian to the last bit.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> CMatrix {
    let g = random_matrix(rng, n, n);
    let m = &g * g.adjoint() + CMatrix::identity(n, n).scale(shift);
    (&m + m.adjoint()).scale(0.5)
}

pub fn random_config(rng: &mut ChaCha8Rng) -> SequenceConfig {
    let n = rng.random_range(2..=6);
    let nt = rng.random_range(1..=2);
    let nr = rng.random_range(1..=2);
    let k = rng.random_range(0..=3);
    let alpha = (n * nt) as f64 * (0.5 + rng.random::<f64>());
    SequenceConfig::unimodular(n, nt, nr, k, alpha).unwrap()
}

pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let cfg = random_config(rng);
    let prior = ChannelPrior::zero_mean(random_pd(rng, cfg.channel_dim(), 0.2)).unwrap();
    let noise = NoiseModel::new(random_pd(rng, cfg.received_dim(), 0.2)).unwrap();
    Scenario::new(cfg, prior, noise, None).unwrap()
}

/// `I_Nr ⊗ T(U)` filled entry by entry: row `r (N+K) + i`, column
/// `r (K+1) Nt + k Nt + t` holds `u[i - k, t]`.
pub fn dense_lift(u: &CMatrix, k: usize, nr: usize) -> CMatrix {
    let (n, nt) = u.shape();
    let (rows, cols) = (n + k, (k + 1) * nt);
    CMatrix::from_fn(rows * nr, cols * nr, |row, col| {
        let (rr, i) = (row / rows, row % rows);
        let (rc, rest) = (col / cols, col % cols);
        let (tap, t) = (rest / nt, rest % nt);
        if rr == rc && i >= tap && i - tap < n {
            u[(i - tap, t)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn inv(m: &CMatrix) -> CMatrix {
    m.clone().try_inverse().expect("invertible")
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// `R0 - R0 S^H (S R0 S^H + W)^{-1} S R0`
pub fn dense_error_cov(s: &CMatrix, r0: &CMatrix, w: &CMatrix) -> CMatrix {
    let p = s * r0 * s.adjoint() + w;
    r0 - r0 * s.adjoint() * inv(&p) * s * r0
}

/// `(R0^{-1} + S^H W^{-1} S)^{-1}`, valid for invertible `R0`.
pub fn information_form(s: &CMatrix, r0: &CMatrix, w: &CMatrix) -> CMatrix {
    inv(&(inv(r0) + s.adjoint() * inv(w) * s))
}

pub fn dense_mmse(s: &CMatrix, r0: &CMatrix, w: &CMatrix) -> f64 {
    trace_re(&dense_error_cov(s, r0, w))
}

/// `½ log det(I + R0 S^H W^{-1} S)` through an LU determinant.
pub fn dense_cmi(s: &CMatrix, r0: &CMatrix, w: &CMatrix) -> f64 {
    let d = r0.nrows();
    let m = CMatrix::identity(d, d) + r0 * s.adjoint() * inv(w) * s;
    0.5 * m.determinant().norm().ln()
}

/// Largest eigenvalue of a Hermitian matrix from nalgebra's complex eigensolver.
pub fn dense_lambda_max(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn dense_kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
