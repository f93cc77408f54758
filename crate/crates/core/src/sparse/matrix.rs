use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric block-tridiagonal matrix with square dense blocks.
///
/// Only the diagonal blocks `D_i` and the sub-diagonal blocks `L_{i+1,i}`
/// are stored; the super-diagonal is implied by symmetry. Blocks outside
/// the band have no storage, so arithmetic on this type can never
/// introduce fill.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTridiagonal {
    block_dim: usize,
    diag: Vec<DMatrix<f64>>,
    lower: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn zeros(n_blocks: usize, block_dim: usize) -> Self {
        assert!(n_blocks >= 1, "need at least one block");
        Self {
            block_dim,
            diag: vec![DMatrix::zeros(block_dim, block_dim); n_blocks],
            lower: vec![DMatrix::zeros(block_dim, block_dim); n_blocks - 1],
        }
    }

    pub fn scaled_identity(n_blocks: usize, block_dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n_blocks, block_dim);
        for d in &mut m.diag {
            *d = DMatrix::identity(block_dim, block_dim) * scale;
        }
        m
    }

    /// Builds from explicit blocks. `lower[i]` is the block at row `i + 1`,
    /// column `i`. Diagonal blocks must be symmetric.
    pub fn from_blocks(diag: Vec<DMatrix<f64>>, lower: Vec<DMatrix<f64>>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Structural("no diagonal blocks".into()));
        }
        if lower.len() + 1 != diag.len() {
            return Err(Error::Shape {
                context: "sub-diagonal block count",
                expected: diag.len() - 1,
                got: lower.len(),
            });
        }
        let block_dim = diag[0].nrows();
        for b in diag.iter().chain(lower.iter()) {
            if b.nrows() != block_dim || b.ncols() != block_dim {
                return Err(Error::Shape {
                    context: "block size",
                    expected: block_dim,
                    got: b.nrows().max(b.ncols()),
                });
            }
        }
        for (i, d) in diag.iter().enumerate() {
            let asym = (d - d.transpose()).amax();
            if asym > 1e-9 * d.amax().max(1.0) {
                return Err(Error::Structural(format!(
                    "diagonal block {i} is not symmetric"
                )));
            }
        }
        Ok(Self {
            block_dim,
            diag,
            lower,
        })
    }

    /// Extracts the band of a dense symmetric matrix. Fails if any entry
    /// outside the block-tridiagonal band is nonzero.
    pub fn from_dense(dense: &DMatrix<f64>, block_dim: usize) -> Result<Self> {
        let n = dense.nrows();
        if dense.ncols() != n || block_dim == 0 || !n.is_multiple_of(block_dim) {
            return Err(Error::Shape {
                context: "dense matrix for block extraction",
                expected: block_dim,
                got: n,
            });
        }
        let nb = n / block_dim;
        for bi in 0..nb {
            for bj in 0..nb {
                if bi.abs_diff(bj) > 1
                    && dense
                        .view((bi * block_dim, bj * block_dim), (block_dim, block_dim))
                        .iter()
                        .any(|v| *v != 0.0)
                {
                    return Err(Error::Structural(format!(
                        "entry outside the band at block ({bi}, {bj})"
                    )));
                }
            }
        }
        let blk = |i: usize, j: usize| {
            dense
                .view((i * block_dim, j * block_dim), (block_dim, block_dim))
                .into_owned()
        };
        let diag = (0..nb).map(|i| blk(i, i)).collect();
        let lower = (0..nb.saturating_sub(1)).map(|i| blk(i + 1, i)).collect();
        Self::from_blocks(diag, lower)
    }

    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn dim(&self) -> usize {
        self.diag.len() * self.block_dim
    }

    pub fn diag(&self, i: usize) -> &DMatrix<f64> {
        &self.diag[i]
    }

    pub fn diag_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.diag[i]
    }

    /// Block at row `i + 1`, column `i`.
    pub fn lower(&self, i: usize) -> &DMatrix<f64> {
        &self.lower[i]
    }

    pub fn lower_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.lower[i]
    }

    pub fn diag_blocks(&self) -> &[DMatrix<f64>] {
        &self.diag
    }

    pub fn lower_blocks(&self) -> &[DMatrix<f64>] {
        &self.lower
    }

    /// Block `(i, j)` for `|i - j| <= 1`, `None` outside the band.
    pub fn block(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        match i as isize - j as isize {
            0 => Some(self.diag[i].clone()),
            1 => Some(self.lower[j].clone()),
            -1 => Some(self.lower[i].transpose()),
            _ => None,
        }
    }

    /// Adds a symmetric `2b x 2b` matrix acting on blocks `(i, i + 1)`.
    pub fn add_pair(&mut self, i: usize, m: &DMatrix<f64>) {
        let b = self.block_dim;
        debug_assert_eq!(m.nrows(), 2 * b);
        self.diag[i] += m.view((0, 0), (b, b));
        self.diag[i + 1] += m.view((b, b), (b, b));
        self.lower[i] += m.view((b, 0), (b, b));
    }

    pub fn scale_mut(&mut self, s: f64) {
        for b in self.diag.iter_mut().chain(self.lower.iter_mut()) {
            *b *= s;
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!(self.n_blocks(), other.n_blocks());
        assert_eq!(self.block_dim, other.block_dim);
        let diag = self
            .diag
            .iter()
            .zip(&other.diag)
            .map(|(a, b)| a + b * s)
            .collect();
        let lower = self
            .lower
            .iter()
            .zip(&other.lower)
            .map(|(a, b)| a + b * s)
            .collect();
        Self {
            block_dim: self.block_dim,
            diag,
            lower,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, -1.0)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let b = self.block_dim;
        assert_eq!(x.len(), self.dim());
        let mut y = DVector::zeros(x.len());
        for i in 0..self.n_blocks() {
            let xi = x.rows(i * b, b);
            let mut yi = &self.diag[i] * xi;
            if i > 0 {
                yi += &self.lower[i - 1] * x.rows((i - 1) * b, b);
            }
            if i + 1 < self.n_blocks() {
                yi += self.lower[i].tr_mul(&x.rows((i + 1) * b, b));
            }
            y.rows_mut(i * b, b).copy_from(&yi);
        }
        y
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let b = self.block_dim;
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, d) in self.diag.iter().enumerate() {
            m.view_mut((i * b, i * b), (b, b)).copy_from(d);
        }
        for (i, l) in self.lower.iter().enumerate() {
            m.view_mut(((i + 1) * b, i * b), (b, b)).copy_from(l);
            m.view_mut((i * b, (i + 1) * b), (b, b))
                .copy_from(&l.transpose());
        }
        m
    }

    /// Largest absolute entry over the stored band.
    pub fn amax(&self) -> f64 {
        self.diag
            .iter()
            .chain(self.lower.iter())
            .map(|b| b.amax())
            .fold(0.0, f64::max)
    }
}
