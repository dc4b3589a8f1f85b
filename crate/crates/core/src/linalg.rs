//! Dense complex linear algebra on top of nalgebra.
//!
//! Matrix products go through `matrixmultiply`'s packed complex kernel, which is
//! several times faster than nalgebra's generic path for `Complex<f64>`.
//! Factorizations (Cholesky, Hermitian eigendecomposition) use nalgebra.

use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, PartialEq, Eq)]
enum Op {
    Plain,
    Adjoint,
}

fn gemm(a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op) -> CMatrix {
    let (m, k) = match op_a {
        Op::Plain => a.shape(),
        Op::Adjoint => (a.ncols(), a.nrows()),
    };
    let (kb, n) = match op_b {
        Op::Plain => b.shape(),
        Op::Adjoint => (b.ncols(), b.nrows()),
    };
    assert_eq!(k, kb, "inner dimensions differ: {k} vs {kb}");
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // Column-major storage: a plain operand has strides (1, nrows). The
    // kernel has no conjugation flag, so an adjoint operand is a conjugated
    // copy read with transposed strides.
    let conj_a = (op_a == Op::Adjoint).then(|| a.map(|z| z.conj()));
    let conj_b = (op_b == Op::Adjoint).then(|| b.map(|z| z.conj()));
    let a_buf = conj_a.as_ref().unwrap_or(a);
    let b_buf = conj_b.as_ref().unwrap_or(b);
    let strides = |x: &CMatrix, op: Op| match op {
        Op::Plain => (1isize, x.nrows() as isize),
        Op::Adjoint => (x.nrows() as isize, 1isize),
    };
    let (rsa, csa) = strides(a, op_a);
    let (rsb, csb) = strides(b, op_b);
    // SAFETY: `Complex<f64>` is `#[repr(C)]` with fields (re, im), identical in
    // layout to `[f64; 2]`. The strides describe views that stay inside the
    // operand buffers, and `c` is a freshly allocated m x n column-major buffer.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a_buf.as_ptr() as *const [f64; 2],
            rsa,
            csa,
            b_buf.as_ptr() as *const [f64; 2],
            rsb,
            csb,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// `A B`
pub fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, Op::Plain, b, Op::Plain)
}

/// `A^H B`
pub fn mul_adj_left(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, Op::Adjoint, b, Op::Plain)
}

/// `A B^H`
pub fn mul_adj_right(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, Op::Plain, b, Op::Adjoint)
}

/// Shape of one diagonal block of `I_blocks ⊗ S`.
fn block_shape(s_tilde: &CMatrix, blocks: usize) -> (usize, usize) {
    assert!(blocks > 0 && s_tilde.nrows() % blocks == 0 && s_tilde.ncols() % blocks == 0);
    (s_tilde.nrows() / blocks, s_tilde.ncols() / blocks)
}

/// `S~ M` for block-diagonal `S~ = I_blocks ⊗ S`. Only the first diagonal
/// block of `s_tilde` is read.
pub fn block_diag_mul(s_tilde: &CMatrix, blocks: usize, m: &CMatrix) -> CMatrix {
    let (r, c) = block_shape(s_tilde, blocks);
    let s = s_tilde.view((0, 0), (r, c)).into_owned();
    let mut out = CMatrix::zeros(s_tilde.nrows(), m.ncols());
    for i in 0..blocks {
        out.rows_mut(i * r, r).copy_from(&mul(&s, &m.rows(i * c, c).into_owned()));
    }
    out
}

/// `M S~^H` for block-diagonal `S~ = I_blocks ⊗ S`.
pub fn mul_block_diag_adj(m: &CMatrix, s_tilde: &CMatrix, blocks: usize) -> CMatrix {
    let (r, c) = block_shape(s_tilde, blocks);
    let s = s_tilde.view((0, 0), (r, c)).into_owned();
    let mut out = CMatrix::zeros(m.nrows(), s_tilde.nrows());
    for i in 0..blocks {
        out.columns_mut(i * r, r).copy_from(&mul_adj_right(&m.columns(i * c, c).into_owned(), &s));
    }
    out
}

/// `M S~` for block-diagonal `S~ = I_blocks ⊗ S`.
pub fn mul_block_diag(m: &CMatrix, s_tilde: &CMatrix, blocks: usize) -> CMatrix {
    let (r, c) = block_shape(s_tilde, blocks);
    let s = s_tilde.view((0, 0), (r, c)).into_owned();
    let mut out = CMatrix::zeros(m.nrows(), s_tilde.ncols());
    for i in 0..blocks {
        out.columns_mut(i * c, c).copy_from(&mul(&m.columns(i * r, r).into_owned(), &s));
    }
    out
}

/// The `blocks` diagonal blocks of `A B`, with every other entry zero.
pub fn diag_blocks_of_product(a: &CMatrix, b: &CMatrix, blocks: usize) -> CMatrix {
    assert!(blocks > 0 && a.nrows() % blocks == 0 && b.ncols() % blocks == 0);
    let (r, c) = (a.nrows() / blocks, b.ncols() / blocks);
    let mut out = CMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..blocks {
        let prod = mul(&a.rows(i * r, r).into_owned(), &b.columns(i * c, c).into_owned());
        out.view_mut((i * r, i * c), (r, c)).copy_from(&prod);
    }
    out
}

pub fn mul_vec(a: &CMatrix, x: &CVector) -> CVector {
    let xm = CMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let y = mul(a, &xm);
    CVector::from_column_slice(y.as_slice())
}

pub fn mul_adj_vec(a: &CMatrix, x: &CVector) -> CVector {
    let xm = CMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let y = mul_adj_left(a, &xm);
    CVector::from_column_slice(y.as_slice())
}

/// `Re Tr(A^H B)`, the real inner product on complex matrices.
pub fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn frob_norm_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// Maximum column sum of absolute values (the induced 1-norm).
pub fn max_col_sum(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm_sqr().sqrt()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(A + A^H) / 2`
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in j..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn from_real(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| C64::new(x, 0.0))
}

/// Inverse of a nonsingular lower-triangular matrix by 2x2 block recursion,
/// so that most of the work is matrix products.
fn lower_inverse(l: &CMatrix) -> CMatrix {
    let n = l.nrows();
    if n <= 16 {
        let mut x = CMatrix::zeros(n, n);
        for j in 0..n {
            x[(j, j)] = ONE / l[(j, j)];
            for i in j + 1..n {
                let acc: C64 = (j..i).map(|k| l[(i, k)] * x[(k, j)]).sum();
                x[(i, j)] = -acc / l[(i, i)];
            }
        }
        return x;
    }
    let h = n / 2;
    let i11 = lower_inverse(&l.view((0, 0), (h, h)).into_owned());
    let i22 = lower_inverse(&l.view((h, h), (n - h, n - h)).into_owned());
    let i21 = -mul(&i22, &mul(&l.view((h, 0), (n - h, h)).into_owned(), &i11));
    let mut x = CMatrix::zeros(n, n);
    x.view_mut((0, 0), (h, h)).copy_from(&i11);
    x.view_mut((h, 0), (n - h, h)).copy_from(&i21);
    x.view_mut((h, h), (n - h, n - h)).copy_from(&i22);
    x
}

/// Cholesky factor `L` (lower, `L L^H = A`) with its triangular inverse.
///
/// Solves are applied as `A^{-1} B = L^{-H} (L^{-1} B)` so that both
/// triangular sweeps run through the packed product kernel.
#[derive(Debug, Clone)]
pub struct HermitianFactor {
    l: CMatrix,
    /// Built on first use; the log-determinant needs only `l`.
    l_inv: OnceLock<CMatrix>,
}

impl HermitianFactor {
    /// Returns `None` when `a` is not numerically positive definite.
    pub fn new(a: &CMatrix) -> Option<Self> {
        if !a.is_square() {
            return None;
        }
        let n = a.nrows();
        if n == 0 {
            return Some(Self {
                l: CMatrix::zeros(0, 0),
                l_inv: OnceLock::from(CMatrix::zeros(0, 0)),
            });
        }
        let chol = nalgebra::Cholesky::new(a.clone())?;
        let l = chol.l();
        if l.diagonal().iter().any(|d| !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-8 * d.re) {
            return None;
        }
        Some(Self { l, l_inv: OnceLock::new() })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &CMatrix {
        &self.l
    }

    fn l_inv(&self) -> &CMatrix {
        self.l_inv.get_or_init(|| lower_inverse(&self.l))
    }

    /// `L^{-1} B`
    pub fn whiten(&self, b: &CMatrix) -> CMatrix {
        mul(self.l_inv(), b)
    }

    /// `A^{-1} B`
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.solve_whitened(&self.whiten(b))
    }

    /// `L^{-H} C`, which is `A^{-1} B` when `C = L^{-1} B`.
    pub fn solve_whitened(&self, c: &CMatrix) -> CMatrix {
        mul_adj_left(self.l_inv(), c)
    }

    pub fn solve_vec(&self, b: &CVector) -> CVector {
        let bm = CMatrix::from_column_slice(b.len(), 1, b.as_slice());
        CVector::from_column_slice(self.solve(&bm).as_slice())
    }

    /// `A^{-1}`, Hermitian by construction.
    pub fn inverse(&self) -> CMatrix {
        mul_adj_left(self.l_inv(), self.l_inv())
    }

    /// `log det A = 2 sum log L_ii`
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
    }
}

/// Cholesky factor of a PSD matrix with one jitter retry.
///
/// If the plain factorization fails, `1e-12 * trace / dim` is added to the
/// diagonal once before giving up.
pub fn cholesky_with_jitter(a: &CMatrix) -> Result<CMatrix> {
    if let Some(f) = HermitianFactor::new(a) {
        return Ok(f.l);
    }
    let n = a.nrows();
    let jitter = 1e-12 * trace(a).re.max(0.0) / n.max(1) as f64;
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] += C64::new(jitter, 0.0);
    }
    HermitianFactor::new(&shifted)
        .map(|f| f.l)
        .ok_or_else(|| Error::numeric(format!("{n}x{n} covariance is not positive definite even after jitter {jitter:e}")))
}
