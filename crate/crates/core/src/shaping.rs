//! Closed-form per-hop precoder under a pure covariance shaping constraint.
//!
//! The solution depends only on the shaping matrix and the stream count,
//! never on the channel: take the ordered eigensystem of `R_s`, keep the top
//! N eigenvalues, and transmit their square roots along the corresponding
//! eigenvectors. When `rank(R_s) ≤ N` this saturates the constraint exactly
//! (`F F^H = R_s`); otherwise the covariance saturates the top-N eigenvalues
//! of `R_s` and zeros the rest. The arbitrary right unitary is fixed to the
//! identity — the downstream rotations supply any rotation the objective
//! needs.

use crate::linalg::{hermitian_evd, hermitian_part};
use crate::{CMat, Result, Scalar};
use nalgebra::Complex;
use num_traits::Float;

/// Result of the pure-shaping subproblem for one hop.
#[derive(Debug, Clone)]
pub struct ShapingSolution<T: Scalar> {
    /// Square precoder (`n × n`, nonzero only in its first
    /// `min(N, rank)` columns).
    pub f: CMat<T>,
    /// `F F^H`.
    pub achieved_covariance: CMat<T>,
    /// Numerical rank of the achieved covariance.
    pub active_rank: usize,
}

/// Relative eigenvalue threshold below which a mode counts as inactive.
pub const RANK_TOL: f64 = 1e-9;

/// Optimal precoder under `F F^H ⪯ R_s`, `rank(F F^H) ≤ N`.
pub fn solve_pure_shaping<T: Scalar>(r_s: &CMat<T>, n_streams: usize) -> Result<ShapingSolution<T>> {
    let evd = hermitian_evd(r_s)?;
    let n = r_s.nrows();
    let keep = n_streams.min(n);
    let spectral = if n > 0 { evd.eigenvalues[0] } else { T::zero() };
    let floor = spectral * T::from_f64_lit(RANK_TOL);

    let mut sqrt_diag = crate::CVec::<T>::zeros(n);
    let mut kept_diag = crate::CVec::<T>::zeros(n);
    let mut active_rank = 0usize;
    for j in 0..keep {
        let lambda = evd.eigenvalues[j];
        if lambda > floor {
            active_rank += 1;
        }
        sqrt_diag[j] = Complex::new(Float::sqrt(lambda), T::zero());
        kept_diag[j] = Complex::new(lambda, T::zero());
    }
    let f = &evd.eigenvectors * CMat::<T>::from_diagonal(&sqrt_diag);
    let achieved = hermitian_part(
        &(&evd.eigenvectors * CMat::<T>::from_diagonal(&kept_diag) * evd.eigenvectors.adjoint()),
    );
    Ok(ShapingSolution { f, achieved_covariance: achieved, active_rank })
}
