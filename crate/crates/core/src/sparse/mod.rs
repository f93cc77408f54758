//! Sparse Gaussian machinery on the block-tridiagonal pattern.

mod ldl;
mod matrix;

pub use ldl::{ldl_decompose, partial_inverse, LdlFactorization, PartialCovariance};
pub use matrix::BlockTridiagonal;
