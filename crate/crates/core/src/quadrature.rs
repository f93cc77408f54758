//! Gauss-Hermite rules for expectations under Gaussian densities.
//!
//! Uses the probabilists' convention: the weight function is the standard
//! normal density, so weights sum to one and `E[g(z)] ≈ Σ W_i g(ξ_i)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 20;

/// Upper bound on the number of tensor-product sigma points.
pub const POINT_BUDGET: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct HermiteRule {
    roots: Vec<f64>,
    weights: Vec<f64>,
}

/// `He_0..He_{n-1}` at `x` via `He_{k+1} = x He_k − k He_{k−1}`.
fn hermite_values(x: f64, n: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(n);
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        h.push(cur);
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    h
}

/// Degree-`p` rule. Roots are eigenvalues of the Jacobi matrix of the
/// three-term recurrence; weights solve the moment system
/// `Σ_i W_i He_k(ξ_i) = δ_k0` for `k < p`, i.e. exactness on every
/// polynomial of degree below `p` written in the Hermite basis.
pub fn hermite_rule(p: usize) -> Result<HermiteRule> {
    if p == 0 || p > MAX_DEGREE {
        return Err(Error::Domain(format!(
            "Hermite degree must be in 1..={MAX_DEGREE}, got {p}"
        )));
    }
    let mut jacobi = DMatrix::zeros(p, p);
    for k in 1..p {
        let b = (k as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let mut roots: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    roots.sort_by(f64::total_cmp);
    // enforce exact symmetry about zero
    for i in 0..p / 2 {
        let r = 0.5 * (roots[p - 1 - i] - roots[i]);
        roots[i] = -r;
        roots[p - 1 - i] = r;
    }
    if p % 2 == 1 {
        roots[p / 2] = 0.0;
    }

    let mut system = DMatrix::zeros(p, p);
    for (i, r) in roots.iter().enumerate() {
        for (k, v) in hermite_values(*r, p).into_iter().enumerate() {
            system[(k, i)] = v;
        }
    }
    let mut rhs = DVector::zeros(p);
    rhs[0] = 1.0;
    let w = system.lu().solve(&rhs).ok_or(Error::Numerical {
        what: "Hermite moment system",
        index: p,
    })?;
    let mut weights: Vec<f64> = w.iter().copied().collect();
    for i in 0..p / 2 {
        let m = 0.5 * (weights[i] + weights[p - 1 - i]);
        weights[i] = m;
        weights[p - 1 - i] = m;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(HermiteRule { roots, weights })
}

impl HermiteRule {
    pub fn degree(&self) -> usize {
        self.roots.len()
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn point_count(&self, n: usize) -> Result<usize> {
        let count = (self.degree() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if count > POINT_BUDGET {
            return Err(Error::Resource {
                points: count,
                budget: POINT_BUDGET,
            });
        }
        Ok(count as usize)
    }

    /// Visits every tensor-product sigma point in standard coordinates:
    /// `f(weight, ξ)` with `ξ ∈ ℝⁿ`.
    pub fn for_each_standard_point(&self, n: usize, mut f: impl FnMut(f64, &DVector<f64>)) -> Result<()> {
        let count = self.point_count(n)?;
        let p = self.degree();
        let mut idx = vec![0usize; n];
        let mut xi = DVector::from_element(n, self.roots[0]);
        for _ in 0..count {
            let w: f64 = idx.iter().map(|&i| self.weights[i]).product();
            f(w, &xi);
            // odometer increment
            for d in 0..n {
                idx[d] += 1;
                if idx[d] < p {
                    xi[d] = self.roots[idx[d]];
                    break;
                }
                idx[d] = 0;
                xi[d] = self.roots[0];
            }
        }
        Ok(())
    }
}

/// Lower Cholesky factor of `cov`, or a numerical error.
pub fn cholesky_factor(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(cov.clone()).ok_or(Error::Numerical {
        what: "Cholesky of covariance",
        index: 0,
    })
}

/// `E[g(x)]` for `x ~ N(mean, cov)` with a degree-`p` tensor rule.
pub fn gh_expectation(
    g: impl Fn(&DVector<f64>) -> f64,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    p: usize,
) -> Result<f64> {
    let rule = hermite_rule(p)?;
    expectation_with(&rule, g, mean, cov)
}

/// As [`gh_expectation`] with a precomputed rule.
pub fn expectation_with(
    rule: &HermiteRule,
    g: impl Fn(&DVector<f64>) -> f64,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<f64> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::Shape {
            context: "covariance",
            expected: n,
            got: cov.nrows(),
        });
    }
    let chol = cholesky_factor(cov)?;
    let l = chol.l();
    let mut acc = 0.0;
    rule.for_each_standard_point(n, |w, xi| {
        let x = &l * xi + mean;
        acc += w * g(&x);
    })?;
    Ok(acc)
}
