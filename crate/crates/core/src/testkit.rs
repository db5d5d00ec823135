//! Deterministic random-matrix generators backing the test suites and the
//! acceptance harness. Everything is driven by [`SeededRng`] so fixtures are
//! reproducible bit for bit.

use crate::linalg::svd_ordered;
use crate::rng::SeededRng;
use crate::{CMat, Scalar};
use nalgebra::Complex;

/// Matrix with i.i.d. circularly symmetric complex Gaussian entries.
pub fn rand_complex<T: Scalar>(rng: &mut SeededRng, rows: usize, cols: usize) -> CMat<T> {
    CMat::<T>::from_fn(rows, cols, |_, _| rng.complex_gaussian())
}

/// Haar-ish random unitary: left singular basis of a random Gaussian matrix.
pub fn rand_unitary<T: Scalar>(rng: &mut SeededRng, n: usize) -> CMat<T> {
    svd_ordered(&rand_complex::<T>(rng, n, n)).left
}

/// Random Hermitian PSD matrix `A A^H / n` (full rank almost surely).
pub fn rand_hermitian_psd<T: Scalar>(rng: &mut SeededRng, n: usize) -> CMat<T> {
    let a = rand_complex::<T>(rng, n, n);
    let scale = Complex::new(T::one() / T::from_f64_lit(n as f64), T::zero());
    crate::linalg::hermitian_part(&(&a * a.adjoint() * scale))
}

/// Random Hermitian PSD matrix of the given rank.
pub fn rand_psd_with_rank<T: Scalar>(rng: &mut SeededRng, n: usize, rank: usize) -> CMat<T> {
    let a = rand_complex::<T>(rng, n, rank.min(n));
    let scale = Complex::new(T::one() / T::from_f64_lit(n as f64), T::zero());
    crate::linalg::hermitian_part(&(&a * a.adjoint() * scale))
}
