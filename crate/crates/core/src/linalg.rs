//! Deterministic matrix factorization conventions.
//!
//! Everything downstream (rotation selection, precoder lifting, feedback
//! computation) assumes eigen/singular systems that are sorted, sign/phase
//! canonicalized and bit-stable across repeated calls. nalgebra provides the
//! raw decompositions; this module owns the ordering, the phase convention,
//! the PSD repair policy and the full (non-thin) unitary completion.
//!
//! Phase convention: in every left basis column, the first component of
//! largest magnitude is made real nonnegative. Right singular columns paired
//! with a singular value inherit the conjugate phase so the reconstruction
//! is untouched; unpaired (completed) columns are canonicalized on their own.

use crate::{CMat, CVec, Error, RVec, Result, Scalar};
use nalgebra::Complex;
use num_traits::Float;

/// Relative Hermitian-deviation tolerance for inputs declared Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues above `PSD_REPAIR_REL * spectral_norm` (a negative number)
/// are clipped to zero; anything below is rejected as indefinite.
pub const PSD_REPAIR_REL: f64 = -1e-9;
/// Relative diagonal spread accepted by [`equal_diagonal_rotation`].
pub const EQUAL_DIAG_TOL: f64 = 1e-8;
const EQUAL_DIAG_MAX_SWEEPS: usize = 500;

/// Frobenius norm.
pub fn frob<T: Scalar>(m: &CMat<T>) -> T {
    m.norm()
}

/// `‖a - b‖_F / ‖b‖_F`, with the denominator floored to 1 when `b` is zero.
pub fn rel_frob_err<T: Scalar>(a: &CMat<T>, b: &CMat<T>) -> T {
    let denom = frob(b);
    let denom = if denom > T::zero() { denom } else { T::one() };
    frob(&(a - b)) / denom
}

/// `(M + M^H) / 2`.
pub fn hermitian_part<T: Scalar>(m: &CMat<T>) -> CMat<T> {
    let half = Complex::new(T::from_f64_lit(0.5), T::zero());
    (m + m.adjoint()) * half
}

/// Relative deviation of `M` from its Hermitian part.
pub fn hermitian_deviation<T: Scalar>(m: &CMat<T>) -> T {
    let scale = frob(m);
    if scale == T::zero() {
        return T::zero();
    }
    frob(&(m - m.adjoint())) / scale
}

fn ensure_square_hermitian<T: Scalar>(m: &CMat<T>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dims(format!("{what}: matrix must be square")));
    }
    let dev = hermitian_deviation(m);
    if dev > T::from_f64_lit(HERMITIAN_TOL) {
        return Err(Error::contract(format!(
            "{what}: input deviates from Hermitian by relative {dev:e}"
        )));
    }
    Ok(())
}

/// Complex identity.
pub fn identity<T: Scalar>(n: usize) -> CMat<T> {
    CMat::<T>::identity(n, n)
}

/// Multiply a complex matrix by a real scalar.
pub fn scale<T: Scalar>(m: &CMat<T>, s: T) -> CMat<T> {
    m * Complex::new(s, T::zero())
}

/// Phase factor that makes the column's first largest-magnitude component
/// real nonnegative. Returns the factor the column was multiplied by.
fn canonical_phase<T: Scalar>(col: &CVec<T>) -> Complex<T> {
    let mut best = T::zero();
    let mut pivot = Complex::new(T::one(), T::zero());
    for z in col.iter() {
        let mag = z.norm();
        if mag > best {
            best = mag;
            pivot = *z;
        }
    }
    if best == T::zero() {
        Complex::new(T::one(), T::zero())
    } else {
        pivot.conj() / Complex::new(best, T::zero())
    }
}

fn apply_phase<T: Scalar>(m: &mut CMat<T>, j: usize, alpha: Complex<T>) {
    for i in 0..m.nrows() {
        m[(i, j)] *= alpha;
    }
}

/// Descending lexicographic comparison of two canonicalized columns,
/// component by component, real part before imaginary part.
fn lex_cmp_desc<T: Scalar>(a: &CVec<T>, b: &CVec<T>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match y.re.partial_cmp(&x.re) {
            Some(std::cmp::Ordering::Equal) | None => {}
            Some(ord) => return ord,
        }
        match y.im.partial_cmp(&x.im) {
            Some(std::cmp::Ordering::Equal) | None => {}
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

/// Ordered, canonicalized Hermitian eigendecomposition `M = U diag(λ) U^H`.
#[derive(Debug, Clone)]
pub struct OrderedEvd<T: Scalar> {
    /// Unitary matrix of eigenvector columns.
    pub eigenvectors: CMat<T>,
    /// Eigenvalues, nonincreasing.
    pub eigenvalues: RVec<T>,
}

impl<T: Scalar> OrderedEvd<T> {
    pub fn reconstruct(&self) -> CMat<T> {
        let d = CMat::<T>::from_diagonal(
            &self.eigenvalues.map(|v| Complex::new(v, T::zero())),
        );
        &self.eigenvectors * d * self.eigenvectors.adjoint()
    }
}

/// Eigenvalues of a Hermitian matrix, sorted nonincreasing, no PSD policy.
///
/// Audit helper for possibly indefinite differences (feasibility checks,
/// dominance tests); [`hermitian_evd`] is the PSD-repairing entry point.
pub fn hermitian_eigenvalues<T: Scalar>(m: &CMat<T>) -> Result<RVec<T>> {
    ensure_square_hermitian(m, "hermitian_eigenvalues")?;
    let mut vals: Vec<T> = hermitian_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(RVec::from_vec(vals))
}

/// Ordered EVD of a Hermitian PSD matrix.
///
/// Eigenvalues within `PSD_REPAIR_REL * spectral_norm` of zero are clipped
/// to zero; more negative ones reject the input as indefinite. Repeated
/// eigenvalues are ordered by descending lexicographic comparison of their
/// canonicalized eigenvectors so ties resolve deterministically.
pub fn hermitian_evd<T: Scalar>(m: &CMat<T>) -> Result<OrderedEvd<T>> {
    ensure_square_hermitian(m, "hermitian_evd")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(OrderedEvd { eigenvectors: identity(0), eigenvalues: RVec::zeros(0) });
    }
    let se = hermitian_part(m).symmetric_eigen();
    let spectral = se
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, v| Float::max(acc, Float::abs(*v)));
    let floor = T::from_f64_lit(PSD_REPAIR_REL) * spectral;
    let mut vectors = se.eigenvectors;
    let mut values = Vec::with_capacity(n);
    for (j, &lambda) in se.eigenvalues.iter().enumerate() {
        if lambda < floor {
            return Err(Error::contract(format!(
                "hermitian_evd: eigenvalue {lambda:e} below PSD repair threshold {floor:e}"
            )));
        }
        values.push(if lambda < T::zero() { T::zero() } else { lambda });
        let alpha = canonical_phase(&vectors.column(j).clone_owned());
        apply_phase(&mut vectors, j, alpha);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap()
            .then_with(|| {
                lex_cmp_desc(
                    &vectors.column(i).clone_owned(),
                    &vectors.column(j).clone_owned(),
                )
            })
    });
    let eigenvectors = CMat::<T>::from_columns(
        &order.iter().map(|&j| vectors.column(j).clone_owned()).collect::<Vec<_>>(),
    );
    let eigenvalues = RVec::from_vec(order.iter().map(|&j| values[j]).collect());
    Ok(OrderedEvd { eigenvectors, eigenvalues })
}

/// Ordered, canonicalized full SVD `M = U Σ V^H` with square `U` and `V`.
#[derive(Debug, Clone)]
pub struct OrderedSvd<T: Scalar> {
    /// Full left unitary, `nrows × nrows`.
    pub left: CMat<T>,
    /// Singular values, nonincreasing, length `min(nrows, ncols)`.
    pub singulars: RVec<T>,
    /// Full right unitary, `ncols × ncols`.
    pub right: CMat<T>,
}

impl<T: Scalar> OrderedSvd<T> {
    pub fn reconstruct(&self) -> CMat<T> {
        let (m, n) = (self.left.nrows(), self.right.nrows());
        let mut sigma = CMat::<T>::zeros(m, n);
        for (i, s) in self.singulars.iter().enumerate() {
            sigma[(i, i)] = Complex::new(*s, T::zero());
        }
        &self.left * sigma * self.right.adjoint()
    }
}

/// Extend `k` orthonormal columns to a full orthonormal basis of dimension
/// `dim` by Gram-Schmidt over the canonical basis (two passes).
fn complete_basis<T: Scalar>(cols: &mut Vec<CVec<T>>, dim: usize) {
    let accept = T::from_f64_lit(1e-6);
    let mut e = 0usize;
    while cols.len() < dim {
        assert!(e < dim, "basis completion ran out of candidates");
        let mut w = CVec::<T>::zeros(dim);
        w[e] = Complex::new(T::one(), T::zero());
        for _ in 0..2 {
            for q in cols.iter() {
                let proj = q.dotc(&w);
                w -= q * proj;
            }
        }
        let norm = w.norm();
        if norm > accept {
            cols.push(w / Complex::new(norm, T::zero()));
        }
        e += 1;
    }
}

/// Full SVD with nonincreasing singular values and canonicalized phases.
pub fn svd_ordered<T: Scalar>(m: &CMat<T>) -> OrderedSvd<T> {
    let (rows, ncols) = m.shape();
    let r = rows.min(ncols);
    let svd = m.clone().svd(true, true);
    let u_thin = svd.u.expect("svd: u requested");
    let v_thin = svd.v_t.expect("svd: v_t requested").adjoint();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());

    let mut u_cols: Vec<CVec<T>> =
        order.iter().map(|&j| u_thin.column(j).clone_owned()).collect();
    let mut v_cols: Vec<CVec<T>> =
        order.iter().map(|&j| v_thin.column(j).clone_owned()).collect();
    let singulars = RVec::from_vec(order.iter().map(|&j| svd.singular_values[j]).collect());

    // Paired phase: canonicalize u_j, carry the same factor onto v_j.
    for j in 0..r {
        let alpha = canonical_phase(&u_cols[j]);
        u_cols[j] *= alpha;
        v_cols[j] *= alpha;
    }
    complete_basis(&mut u_cols, rows);
    complete_basis(&mut v_cols, ncols);
    for col in u_cols.iter_mut().skip(r) {
        let alpha = canonical_phase(col);
        *col *= alpha;
    }
    for col in v_cols.iter_mut().skip(r) {
        let alpha = canonical_phase(col);
        *col *= alpha;
    }

    OrderedSvd {
        left: CMat::<T>::from_columns(&u_cols),
        singulars,
        right: CMat::<T>::from_columns(&v_cols),
    }
}

/// Lower-triangular Cholesky factor with real positive diagonal.
#[derive(Debug, Clone)]
pub struct CholeskyLower<T: Scalar> {
    pub l: CMat<T>,
}

impl<T: Scalar> CholeskyLower<T> {
    pub fn reconstruct(&self) -> CMat<T> {
        &self.l * self.l.adjoint()
    }

    /// Real diagonal of the factor.
    pub fn diag(&self) -> RVec<T> {
        RVec::from_vec((0..self.l.nrows()).map(|i| self.l[(i, i)].re).collect())
    }
}

/// Cholesky factorization of a Hermitian positive definite matrix.
pub fn cholesky_lower<T: Scalar>(m: &CMat<T>) -> Result<CholeskyLower<T>> {
    ensure_square_hermitian(m, "cholesky_lower")?;
    let chol = hermitian_part(m)
        .cholesky()
        .ok_or_else(|| Error::singular("cholesky_lower: matrix is not positive definite"))?;
    Ok(CholeskyLower { l: chol.l() })
}

/// Solve `A X = B` for Hermitian positive definite `A` without forming an
/// explicit inverse.
pub fn hermitian_solve<T: Scalar>(a: &CMat<T>, b: &CMat<T>) -> Result<CMat<T>> {
    ensure_square_hermitian(a, "hermitian_solve")?;
    if a.nrows() != b.nrows() {
        return Err(Error::dims("hermitian_solve: row counts differ"));
    }
    let chol = hermitian_part(a)
        .cholesky()
        .ok_or_else(|| Error::singular("hermitian_solve: matrix is not positive definite"))?;
    Ok(chol.solve(b))
}

/// Hermitian square root of a PSD matrix: `R R = M`, `R` Hermitian PSD.
pub fn hermitian_sqrt<T: Scalar>(m: &CMat<T>) -> Result<CMat<T>> {
    let evd = hermitian_evd(m).map_err(|e| match e {
        Error::ContractViolation(msg) => Error::contract(format!("hermitian_sqrt: {msg}")),
        other => other,
    })?;
    let d = CMat::<T>::from_diagonal(
        &evd.eigenvalues.map(|v| Complex::new(Float::sqrt(v), T::zero())),
    );
    let r = &evd.eigenvectors * d * evd.eigenvectors.adjoint();
    Ok(hermitian_part(&r))
}

/// `M^{-1/2}` for Hermitian positive definite `M`.
pub fn hermitian_inv_sqrt<T: Scalar>(m: &CMat<T>) -> Result<CMat<T>> {
    let evd = hermitian_evd(m)?;
    let spectral = if evd.eigenvalues.len() > 0 { evd.eigenvalues[0] } else { T::zero() };
    let floor = spectral * T::from_f64_lit(1e-14);
    for &v in evd.eigenvalues.iter() {
        if v <= floor {
            return Err(Error::singular(
                "hermitian_inv_sqrt: matrix is singular at working precision",
            ));
        }
    }
    let d = CMat::<T>::from_diagonal(
        &evd.eigenvalues
            .map(|v| Complex::new(T::one() / Float::sqrt(v), T::zero())),
    );
    let r = &evd.eigenvectors * d * evd.eigenvectors.adjoint();
    Ok(hermitian_part(&r))
}

/// Unitary DFT matrix, entries `exp(-2πi jk / n) / √n`.
pub fn dft_matrix<T: Scalar>(n: usize) -> CMat<T> {
    assert!(n >= 1, "dft_matrix: n must be positive");
    let scale = T::one() / Float::sqrt(T::from_f64_lit(n as f64));
    CMat::<T>::from_fn(n, n, |j, k| {
        let angle = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
        Complex::new(
            T::from_f64_lit(angle.cos()) * scale,
            T::from_f64_lit(angle.sin()) * scale,
        )
    })
}

/// Eigenvector (unit) of a 2x2 Hermitian matrix for the given eigenvalue.
fn eigvec2<T: Scalar>(s: &CMat<T>, lambda: T) -> CVec<T> {
    let b = s[(0, 1)];
    let tol = T::from_f64_lit(1e-300);
    let mut v = if b.norm() > tol {
        CVec::from_vec(vec![b, Complex::new(lambda - s[(0, 0)].re, T::zero())])
    } else if Float::abs(s[(0, 0)].re - lambda) <= Float::abs(s[(1, 1)].re - lambda) {
        CVec::from_vec(vec![
            Complex::new(T::one(), T::zero()),
            Complex::new(T::zero(), T::zero()),
        ])
    } else {
        CVec::from_vec(vec![
            Complex::new(T::zero(), T::zero()),
            Complex::new(T::one(), T::zero()),
        ])
    };
    let norm = v.norm();
    if norm > T::zero() {
        v /= Complex::new(norm, T::zero());
    }
    v
}

/// Unitary `Q` such that the Cholesky factor of `Q^H M Q` has identical
/// diagonal entries (the geometric mean `det(M)^{1/(2n)}`), for Hermitian
/// positive definite `M`.
///
/// Implemented as geometric-mean-decomposition style sweeps: each adjacent
/// pair is rotated so the leading diagonal entry of the local 2x2 Schur
/// complement hits the target, clipped to the achievable interval, until
/// the relative spread falls below [`EQUAL_DIAG_TOL`].
pub fn equal_diagonal_rotation<T: Scalar>(m: &CMat<T>) -> Result<CMat<T>> {
    ensure_square_hermitian(m, "equal_diagonal_rotation")?;
    let n = m.nrows();
    let msym = hermitian_part(m);
    let chol = msym
        .clone()
        .cholesky()
        .ok_or_else(|| Error::singular("equal_diagonal_rotation: matrix is not positive definite"))?;
    if n <= 1 {
        return Ok(identity(n));
    }
    // Geometric mean of the Cholesky diagonal, via log-determinant.
    let mut logdet = T::zero();
    for i in 0..n {
        logdet += Float::ln(chol.l()[(i, i)].re);
    }
    let target = Float::exp(logdet / T::from_f64_lit(n as f64));
    let target_sq = target * target;
    let tol = T::from_f64_lit(EQUAL_DIAG_TOL);

    let mut q = identity::<T>(n);
    for _sweep in 0..EQUAL_DIAG_MAX_SWEEPS {
        let rotated = q.adjoint() * &msym * &q;
        let l = match rotated.cholesky() {
            Some(c) => c.l(),
            None => return Err(Error::singular(
                "equal_diagonal_rotation: lost positive definiteness during sweeps",
            )),
        };
        let mut dmin = T::infinity();
        let mut dmax = T::zero();
        for i in 0..n {
            let d = l[(i, i)].re;
            dmin = Float::min(dmin, d);
            dmax = Float::max(dmax, d);
        }
        if (dmax - dmin) / target <= tol {
            return Ok(polar_unitary(&q));
        }
        for i in 0..n - 1 {
            let rotated = q.adjoint() * &msym * &q;
            let l = match rotated.cholesky() {
                Some(c) => c.l(),
                None => continue,
            };
            // 2x2 Schur complement of the leading block at rows (i, i+1).
            let b00 = l[(i, i)];
            let b10 = l[(i + 1, i)];
            let b11 = l[(i + 1, i + 1)];
            let s00 = b00.norm_sqr();
            let s01 = b00 * b10.conj();
            let s11 = b10.norm_sqr() + b11.norm_sqr();
            let s = CMat::<T>::from_row_slice(2, 2, &[
                Complex::new(s00, T::zero()),
                s01,
                s01.conj(),
                Complex::new(s11, T::zero()),
            ]);
            let tr = s00 + s11;
            let det = s00 * s11 - s01.norm_sqr();
            let disc = Float::max(tr * tr - T::from_f64_lit(4.0) * det, T::zero());
            let root = Float::sqrt(disc);
            let half = T::from_f64_lit(0.5);
            let lam_hi = (tr + root) * half;
            let lam_lo = (tr - root) * half;
            if lam_hi - lam_lo <= lam_hi * T::from_f64_lit(1e-15) {
                continue;
            }
            let goal = Float::min(Float::max(target_sq, lam_lo), lam_hi);
            let x = Float::sqrt((goal - lam_lo) / (lam_hi - lam_lo));
            let y = Float::sqrt(Float::max(T::one() - x * x, T::zero()));
            let w_hi = eigvec2(&s, lam_hi);
            let mut w_lo = eigvec2(&s, lam_lo);
            // The accumulated Q must stay unitary to working precision.
            let proj = w_hi.dotc(&w_lo);
            w_lo -= &w_hi * proj;
            let norm = w_lo.norm();
            if norm <= T::from_f64_lit(1e-300) {
                continue;
            }
            w_lo /= Complex::new(norm, T::zero());
            let cx = Complex::new(x, T::zero());
            let cy = Complex::new(y, T::zero());
            let v0 = &w_hi * cx + &w_lo * cy;
            let v1 = &w_hi * -cy + &w_lo * cx;
            // Right-multiply columns (i, i+1) of Q by the 2x2 unitary [v0 v1].
            for row in 0..n {
                let qa = q[(row, i)];
                let qb = q[(row, i + 1)];
                q[(row, i)] = qa * v0[0] + qb * v0[1];
                q[(row, i + 1)] = qa * v1[0] + qb * v1[1];
            }
        }
    }
    Ok(polar_unitary(&q))
}

/// Closest unitary to an (already nearly unitary, invertible) matrix: the
/// polar factor `U V^H` of its SVD.
fn polar_unitary<T: Scalar>(q: &CMat<T>) -> CMat<T> {
    let svd = svd_ordered(q);
    &svd.left * svd.right.adjoint()
}
