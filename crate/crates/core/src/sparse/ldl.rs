//! Block LDLᵀ factorization of symmetric block-tridiagonal matrices.
//!
//! For a block-tridiagonal `Y` the unit lower factor `L` is block
//! lower-bidiagonal: the fill rule for `L` only admits an entry `(i, j)`
//! when some `(i, k)` and `(j, k)` with `k < j` are already nonzero, and a
//! tridiagonal pattern never satisfies that outside the band. The partial
//! inverse therefore only needs the diagonal and first sub-diagonal blocks
//! of `Y⁻¹`, which are exactly the blocks `L` touches.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::matrix::BlockTridiagonal;
use crate::error::{Error, Result};

/// `Y = L D Lᵀ` with `L` unit block lower-bidiagonal and `D` block diagonal.
#[derive(Clone, Debug)]
pub struct LdlFactorization {
    block_dim: usize,
    /// `L_{i+1,i}`; diagonal blocks of `L` are identities.
    lower: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
    d_chol: Vec<Cholesky<f64, Dyn>>,
}

/// Blocks of `Y⁻¹` on the block-tridiagonal pattern of `Y`.
#[derive(Clone, Debug)]
pub struct PartialCovariance {
    inner: BlockTridiagonal,
}

impl PartialCovariance {
    pub fn diag(&self, i: usize) -> &DMatrix<f64> {
        self.inner.diag(i)
    }

    /// Block `(i + 1, i)` of the inverse.
    pub fn lower(&self, i: usize) -> &DMatrix<f64> {
        self.inner.lower(i)
    }

    pub fn n_blocks(&self) -> usize {
        self.inner.n_blocks()
    }

    pub fn block_dim(&self) -> usize {
        self.inner.block_dim()
    }

    /// The pattern blocks as a banded matrix (the entries outside the band
    /// are *not* zero in the true inverse; they are just not computed).
    pub fn as_banded(&self) -> &BlockTridiagonal {
        &self.inner
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn ldl_decompose(y: &BlockTridiagonal) -> Result<LdlFactorization> {
    let n = y.n_blocks();
    let b = y.block_dim();
    let mut lower = Vec::with_capacity(n - 1);
    let mut d = Vec::with_capacity(n);
    let mut d_chol = Vec::with_capacity(n);

    let mut pivot = y.diag(0).clone();
    for i in 0..n {
        symmetrize(&mut pivot);
        let chol = Cholesky::new(pivot.clone()).ok_or(Error::Factorization { block: i })?;
        if i + 1 < n {
            // L_{i+1,i} = Y_{i+1,i} D_i⁻¹, i.e. D_i L_{i+1,i}ᵀ = Y_{i+1,i}ᵀ.
            let lt = chol.solve(&y.lower(i).transpose());
            let l = lt.transpose();
            let next = y.diag(i + 1) - &l * y.lower(i).transpose();
            lower.push(l);
            d.push(pivot);
            pivot = next;
        } else {
            d.push(pivot.clone());
        }
        d_chol.push(chol);
    }
    debug_assert_eq!(d.len(), n);
    Ok(LdlFactorization {
        block_dim: b,
        lower,
        d,
        d_chol,
    })
}

impl LdlFactorization {
    pub fn n_blocks(&self) -> usize {
        self.d.len()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn dim(&self) -> usize {
        self.d.len() * self.block_dim
    }

    /// `L_{i+1,i}`.
    pub fn l_block(&self, i: usize) -> &DMatrix<f64> {
        &self.lower[i]
    }

    pub fn d_block(&self, i: usize) -> &DMatrix<f64> {
        &self.d[i]
    }

    /// Dense `L` (for tests and small diagnostics).
    pub fn l_dense(&self) -> DMatrix<f64> {
        let b = self.block_dim;
        let mut l = DMatrix::identity(self.dim(), self.dim());
        for (i, blk) in self.lower.iter().enumerate() {
            l.view_mut(((i + 1) * b, i * b), (b, b)).copy_from(blk);
        }
        l
    }

    pub fn d_dense(&self) -> DMatrix<f64> {
        let b = self.block_dim;
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for (i, blk) in self.d.iter().enumerate() {
            d.view_mut((i * b, i * b), (b, b)).copy_from(blk);
        }
        d
    }

    /// Backward recursion for the pattern blocks of `Y⁻¹`:
    ///
    /// ```text
    /// S_NN       = D_N⁻¹
    /// S_{i+1,i}  = -S_{i+1,i+1} L_{i+1,i}
    /// S_ii       = D_i⁻¹ - L_{i+1,i}ᵀ S_{i+1,i}
    /// ```
    pub fn partial_inverse(&self) -> PartialCovariance {
        let n = self.n_blocks();
        let b = self.block_dim;
        let mut cov = BlockTridiagonal::zeros(n, b);
        let eye = DMatrix::<f64>::identity(b, b);
        *cov.diag_mut(n - 1) = self.d_chol[n - 1].solve(&eye);
        for i in (0..n - 1).rev() {
            let s_next = cov.diag(i + 1).clone();
            let s_lower = -(&s_next * &self.lower[i]);
            let mut s_ii = self.d_chol[i].solve(&eye) - self.lower[i].tr_mul(&s_lower);
            symmetrize(&mut s_ii);
            *cov.lower_mut(i) = s_lower;
            *cov.diag_mut(i) = s_ii;
        }
        PartialCovariance { inner: cov }
    }

    /// Solves `Y x = rhs` by forward, block-diagonal and backward substitution.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let b = self.block_dim;
        let n = self.n_blocks();
        assert_eq!(rhs.len(), self.dim(), "rhs dimension");
        let mut x = rhs.clone();
        for i in 1..n {
            let prev = x.rows((i - 1) * b, b).into_owned();
            let upd = &self.lower[i - 1] * prev;
            let mut cur = x.rows_mut(i * b, b);
            cur -= upd;
        }
        for i in 0..n {
            let zi = x.rows(i * b, b).into_owned();
            x.rows_mut(i * b, b).copy_from(&self.d_chol[i].solve(&zi));
        }
        for i in (0..n - 1).rev() {
            let next = x.rows((i + 1) * b, b).into_owned();
            let upd = self.lower[i].tr_mul(&next);
            let mut cur = x.rows_mut(i * b, b);
            cur -= upd;
        }
        x
    }

    /// `log det Y = Σ log det D_i`.
    pub fn log_det(&self) -> f64 {
        self.d_chol
            .iter()
            .map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
            .sum()
    }

    /// Maps standard-normal draws `z` to a draw from `N(0, Y⁻¹)`.
    ///
    /// With `D_i = C_i C_iᵀ`, `Y = (L C)(L C)ᵀ`, so `x = L⁻ᵀ C⁻ᵀ z` has
    /// covariance `Y⁻¹`.
    pub fn sample_centered(&self, z: &DVector<f64>) -> DVector<f64> {
        let b = self.block_dim;
        let n = self.n_blocks();
        assert_eq!(z.len(), self.dim(), "noise dimension");
        let mut x = z.clone();
        for i in 0..n {
            let zi = x.rows(i * b, b).into_owned();
            let ct = self.d_chol[i].l().transpose();
            let yi = ct
                .solve_upper_triangular(&zi)
                .expect("Cholesky factor has a positive diagonal");
            x.rows_mut(i * b, b).copy_from(&yi);
        }
        for i in (0..n - 1).rev() {
            let next = x.rows((i + 1) * b, b).into_owned();
            let upd = self.lower[i].tr_mul(&next);
            let mut cur = x.rows_mut(i * b, b);
            cur -= upd;
        }
        x
    }
}

/// Convenience wrapper matching [`LdlFactorization::partial_inverse`].
pub fn partial_inverse(f: &LdlFactorization) -> PartialCovariance {
    f.partial_inverse()
}
