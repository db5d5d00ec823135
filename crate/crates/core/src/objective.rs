//! The six objective families and everything that turns per-hop inner
//! precoders into a complete transceiver: the optimal inter-hop rotations,
//! the objective-specific source rotation, the optimal triangular feedback,
//! and full design assembly.

use crate::linalg::{
    cholesky_lower, dft_matrix, equal_diagonal_rotation, hermitian_evd, identity,
};
use crate::mse::{
    hop_states, lift_precoders, lmmse_equalizer, mse_unified, phi_lmmse_compact, Design,
};
use crate::network::NetworkSpec;
use crate::waterfill::WaterfillKind;
use crate::{CMat, Error, Result, Scalar};
use nalgebra::Complex;
use num_traits::Float;

/// Objective family. The Schur families are represented by their canonical
/// members: max per-stream MSE, sum MSE, sum of log squared Cholesky
/// diagonals, and product of squared Cholesky diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    WeightedMse,
    Capacity,
    ASchurConvex,
    ASchurConcave,
    MSchurConvex,
    MSchurConcave,
}

impl ObjectiveKind {
    pub fn label(&self) -> &'static str {
        match self {
            ObjectiveKind::WeightedMse => "weighted_mse",
            ObjectiveKind::Capacity => "capacity",
            ObjectiveKind::ASchurConvex => "aschur_convex",
            ObjectiveKind::ASchurConcave => "aschur_concave",
            ObjectiveKind::MSchurConvex => "mschur_convex",
            ObjectiveKind::MSchurConcave => "mschur_concave",
        }
    }
}

/// An objective family plus its parameters.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec<T: Scalar> {
    pub kind: ObjectiveKind,
    /// PSD weight matrix, used by the weighted-MSE family only.
    pub weight: Option<CMat<T>>,
}

impl<T: Scalar> ObjectiveSpec<T> {
    pub fn weighted_mse(weight: CMat<T>) -> Self {
        ObjectiveSpec { kind: ObjectiveKind::WeightedMse, weight: Some(weight) }
    }

    pub fn of_kind(kind: ObjectiveKind) -> Self {
        ObjectiveSpec { kind, weight: None }
    }

    pub fn capacity() -> Self {
        Self::of_kind(ObjectiveKind::Capacity)
    }

    pub fn a_schur_convex() -> Self {
        Self::of_kind(ObjectiveKind::ASchurConvex)
    }

    pub fn a_schur_concave() -> Self {
        Self::of_kind(ObjectiveKind::ASchurConcave)
    }

    pub fn m_schur_convex() -> Self {
        Self::of_kind(ObjectiveKind::MSchurConvex)
    }

    pub fn m_schur_concave() -> Self {
        Self::of_kind(ObjectiveKind::MSchurConcave)
    }

    /// Nonlinear transceivers (THP/DFE) carry a non-identity feedback.
    pub fn is_nonlinear(&self) -> bool {
        matches!(self.kind, ObjectiveKind::MSchurConvex | ObjectiveKind::MSchurConcave)
    }

    /// Which per-hop KKT family allocates power under joint constraints:
    /// the MSE-like objectives reduce to the A-Schur scalar problem, the
    /// determinant-like ones to the M-Schur (log) problem.
    pub fn waterfill_kind(&self) -> WaterfillKind {
        match self.kind {
            ObjectiveKind::WeightedMse
            | ObjectiveKind::ASchurConvex
            | ObjectiveKind::ASchurConcave => WaterfillKind::ASchurConvex,
            ObjectiveKind::Capacity
            | ObjectiveKind::MSchurConvex
            | ObjectiveKind::MSchurConcave => WaterfillKind::MSchurConvex,
        }
    }

    pub fn validate(&self, n_streams: usize) -> Result<()> {
        match self.kind {
            ObjectiveKind::WeightedMse => {
                let w = self
                    .weight
                    .as_ref()
                    .ok_or_else(|| Error::invalid("weighted MSE objective needs a weight matrix"))?;
                if w.shape() != (n_streams, n_streams) {
                    return Err(Error::dims("weight matrix must be N x N"));
                }
                let eigs = crate::linalg::hermitian_eigenvalues(w)?;
                if eigs[eigs.len() - 1] < eigs[0] * T::from_f64_lit(-1e-9) {
                    return Err(Error::contract("weight matrix must be PSD"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Which branch produced the source rotation's right factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UOmegaSource {
    /// Eigenbasis of the weight matrix (weighted MSE).
    WeightEigenbasis,
    /// Arbitrary unitary, pinned to the identity for reproducibility
    /// (capacity).
    Arbitrary,
    /// DFT matrix (additively Schur-convex).
    Dft,
    /// Identity (additively/multiplicatively Schur-concave).
    Identity,
    /// Rotation equalizing the Cholesky diagonal (multiplicatively
    /// Schur-convex).
    EqualDiagonal,
}

/// The chosen `U_Ω` and where it came from.
#[derive(Debug, Clone)]
pub struct RotationChoice<T: Scalar> {
    pub u_omega: CMat<T>,
    pub provenance: UOmegaSource,
}

/// Optimal inter-hop rotations `Q_k = V_{A_k} U_{A_{k-1}}^H` for hops
/// 2..K, aligning each hop's singular bases so the cascade's singular
/// values multiply.
pub fn optimal_qk_chain<T: Scalar>(
    net: &NetworkSpec<T>,
    f: &[CMat<T>],
) -> Result<Vec<CMat<T>>> {
    let states = hop_states(net, f)?;
    let mut out = Vec::with_capacity(states.len().saturating_sub(1));
    for k in 1..states.len() {
        let right = crate::linalg::svd_ordered(&states[k].a).right;
        let left = crate::linalg::svd_ordered(&states[k - 1].a).left;
        out.push(&right * left.adjoint());
    }
    Ok(out)
}

/// Gram matrix `Θ` of the cascade with the inter-hop rotations in place
/// and `Q_1 = I`.
fn composed_gram<T: Scalar>(
    net: &NetworkSpec<T>,
    f: &[CMat<T>],
    qchain: &[CMat<T>],
) -> Result<CMat<T>> {
    let states = hop_states(net, f)?;
    if qchain.len() + 1 != states.len() {
        return Err(Error::dims("composed_gram: need K-1 inter-hop rotations"));
    }
    let mut acc = states[0].a.clone();
    for k in 1..states.len() {
        acc = &states[k].a * &qchain[k - 1] * acc;
    }
    Ok(crate::linalg::hermitian_part(&(acc.adjoint() * acc)))
}

/// Objective-specific right rotation `U_Ω`; `theta_eigs` are the ordered
/// eigenvalues of the composed Gram matrix (needed by the equal-diagonal
/// branch).
fn u_omega<T: Scalar>(
    objective: &ObjectiveSpec<T>,
    n: usize,
    theta_eigs: &crate::RVec<T>,
) -> Result<RotationChoice<T>> {
    let choice = match objective.kind {
        ObjectiveKind::WeightedMse => {
            let w = objective
                .weight
                .as_ref()
                .ok_or_else(|| Error::invalid("weighted MSE objective needs a weight matrix"))?;
            RotationChoice {
                u_omega: hermitian_evd(w)?.eigenvectors,
                provenance: UOmegaSource::WeightEigenbasis,
            }
        }
        ObjectiveKind::Capacity => RotationChoice {
            u_omega: identity(n),
            provenance: UOmegaSource::Arbitrary,
        },
        ObjectiveKind::ASchurConvex => RotationChoice {
            u_omega: dft_matrix(n),
            provenance: UOmegaSource::Dft,
        },
        ObjectiveKind::ASchurConcave | ObjectiveKind::MSchurConcave => RotationChoice {
            u_omega: identity(n),
            provenance: UOmegaSource::Identity,
        },
        ObjectiveKind::MSchurConvex => {
            // Want unitary X with the Cholesky factor of X (I − Λ_Θ) X^H
            // equal-diagonal; equal_diagonal_rotation supplies Q for the
            // congruence Q^H D Q, so X is its adjoint.
            let d = CMat::<T>::from_diagonal(&crate::CVec::<T>::from_fn(n, |i, _| {
                Complex::new(T::one() - theta_eigs[i], T::zero())
            }));
            let q = equal_diagonal_rotation(&d)?;
            RotationChoice { u_omega: q.adjoint(), provenance: UOmegaSource::EqualDiagonal }
        }
    };
    Ok(choice)
}

/// Optimal source rotation `Q_1 = U_Θ U_Ω^H`.
pub fn optimal_q1<T: Scalar>(
    net: &NetworkSpec<T>,
    f: &[CMat<T>],
    qchain: &[CMat<T>],
    objective: &ObjectiveSpec<T>,
) -> Result<(CMat<T>, RotationChoice<T>)> {
    let theta = composed_gram(net, f, qchain)?;
    let evd = hermitian_evd(&theta)?;
    let choice = u_omega(objective, net.stream_count, &evd.eigenvalues)?;
    Ok((&evd.eigenvectors * choice.u_omega.adjoint(), choice))
}

/// Optimal feedback `C = diag(L_{11}, …, L_{NN}) L^{-1}` for
/// `Φ_LMMSE = L L^H`; the resulting `C Φ C^H` is `diag(L_ii²)`.
pub fn optimal_c<T: Scalar>(phi: &CMat<T>) -> Result<CMat<T>> {
    let l = cholesky_lower(phi)?.l;
    let n = l.nrows();
    let inv = l
        .clone()
        .solve_lower_triangular(&identity::<T>(n))
        .ok_or_else(|| Error::singular("optimal_c: Cholesky factor not invertible"))?;
    let d = CMat::<T>::from_diagonal(&crate::CVec::<T>::from_fn(n, |i, _| l[(i, i)]));
    Ok(&d * inv)
}

/// Scalar objective value achieved by a complete design.
pub fn evaluate_objective<T: Scalar>(
    objective: &ObjectiveSpec<T>,
    design: &Design<T>,
    net: &NetworkSpec<T>,
) -> Result<T> {
    objective.validate(net.stream_count)?;
    let g = design
        .g
        .as_ref()
        .ok_or_else(|| Error::invalid("evaluate_objective: design carries no equalizer"))?;
    match objective.kind {
        ObjectiveKind::WeightedMse => {
            let phi = mse_unified(net, &design.p, g, &design.c)?;
            let w = objective.weight.as_ref().unwrap();
            Ok((w * phi).diagonal().iter().map(|z| z.re).fold(T::zero(), |a, b| a + b))
        }
        ObjectiveKind::Capacity => {
            let phi = mse_unified(net, &design.p, g, &design.c)?;
            log_det(&phi)
        }
        ObjectiveKind::ASchurConvex => {
            let phi = mse_unified(net, &design.p, g, &design.c)?;
            Ok(phi
                .diagonal()
                .iter()
                .map(|z| z.re)
                .fold(T::neg_infinity(), |a, b| Float::max(a, b)))
        }
        ObjectiveKind::ASchurConcave => {
            let phi = mse_unified(net, &design.p, g, &design.c)?;
            Ok(phi.diagonal().iter().map(|z| z.re).fold(T::zero(), |a, b| a + b))
        }
        ObjectiveKind::MSchurConvex => {
            let phi = crate::mse::phi_lmmse(net, &design.p)?;
            let l = cholesky_lower(&phi)?;
            let two = T::from_f64_lit(2.0);
            Ok(l.diag().iter().map(|d| two * Float::ln(*d)).fold(T::zero(), |a, b| a + b))
        }
        ObjectiveKind::MSchurConcave => {
            let phi = crate::mse::phi_lmmse(net, &design.p)?;
            let l = cholesky_lower(&phi)?;
            Ok(l.diag().iter().map(|d| *d * *d).fold(T::one(), |a, b| a * b))
        }
    }
}

/// `ln det` of a Hermitian PD matrix through its Cholesky factor.
fn log_det<T: Scalar>(phi: &CMat<T>) -> Result<T> {
    let l = cholesky_lower(phi)?;
    let two = T::from_f64_lit(2.0);
    Ok(l.diag().iter().map(|d| two * Float::ln(*d)).fold(T::zero(), |a, b| a + b))
}

/// Resize a per-hop precoder to the width the chain expects. Padding adds
/// zero columns; shrinking is only legal when the dropped columns are zero.
fn adapt_columns<T: Scalar>(m: &CMat<T>, width: usize) -> Result<CMat<T>> {
    let (rows, cols) = m.shape();
    if cols == width {
        return Ok(m.clone());
    }
    if width > cols {
        let mut out = CMat::<T>::zeros(rows, width);
        out.view_mut((0, 0), (rows, cols)).copy_from(m);
        return Ok(out);
    }
    let dropped = m.view((0, width), (rows, cols - width));
    let scale = Float::max(m.norm(), T::one());
    if dropped.norm() > T::from_f64_lit(1e-9) * scale {
        return Err(Error::dims(
            "adapt_columns: cannot drop nonzero precoder columns",
        ));
    }
    Ok(m.view((0, 0), (rows, width)).into_owned())
}

/// Compose a complete design from per-hop inner precoder solutions:
/// inter-hop rotations, objective-specific source rotation, lifted
/// precoders, LMMSE equalizer, and feedback (identity for the linear
/// families, the Cholesky-based optimum for the nonlinear ones).
pub fn assemble_design<T: Scalar>(
    net: &NetworkSpec<T>,
    objective: &ObjectiveSpec<T>,
    f_solutions: &[CMat<T>],
) -> Result<Design<T>> {
    objective.validate(net.stream_count)?;
    if f_solutions.len() != net.hop_count() {
        return Err(Error::dims("assemble_design: one F per hop required"));
    }
    let f: Vec<CMat<T>> = f_solutions
        .iter()
        .enumerate()
        .map(|(k, m)| {
            if m.nrows() != net.hops[k].tx() {
                return Err(Error::dims(format!(
                    "assemble_design: F_{} must have {} rows",
                    k + 1,
                    net.hops[k].tx()
                )));
            }
            adapt_columns(m, net.precoder_cols(k))
        })
        .collect::<Result<_>>()?;

    let qchain = optimal_qk_chain(net, &f)?;
    let (q1, _choice) = optimal_q1(net, &f, &qchain, objective)?;
    let mut q = Vec::with_capacity(net.hop_count());
    q.push(q1);
    q.extend(qchain);

    let p = lift_precoders(net, &f, &q)?;
    let g_lmmse = lmmse_equalizer(net, &p)?;
    // Minimizing the unified MSE over G for a fixed feedback C gives
    // G = σ² C T^H R^{-1} = C G_LMMSE, so nonlinear designs fold the
    // feedback into the feedforward filter.
    let (g, c) = if objective.is_nonlinear() {
        let phi = phi_lmmse_compact(net, &f, &q)?;
        let c = optimal_c(&phi)?;
        (&c * g_lmmse, c)
    } else {
        (g_lmmse, identity(net.stream_count))
    };

    let design = Design { f, q, p, g: Some(g), c };
    design.validate(net)?;
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_frob_err, scale, svd_ordered};
    use crate::mse::{phi_lmmse_compact, rx_covariance_chain, transmit_covariance};
    use crate::network::{Constraint, HopSpec, NetworkSpec};
    use crate::rng::SeededRng;
    use crate::shaping::solve_pure_shaping;
    use crate::testkit::{rand_complex, rand_hermitian_psd, rand_unitary};
    use nalgebra::Complex;

    type M = crate::Mat;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn joint_net(rng: &mut SeededRng, k: usize, n: usize) -> NetworkSpec<f64> {
        NetworkSpec {
            hops: (0..k)
                .map(|_| HopSpec {
                    channel: rand_complex::<f64>(rng, n, n),
                    noise_variance: rng.uniform(0.2, 1.0),
                    power_budget: 4.0,
                    constraint: Constraint::Joint { tau_max: 1.4 },
                })
                .collect(),
            stream_count: n,
            signal_variance: 1.0,
        }
    }

    fn rand_f(rng: &mut SeededRng, net: &NetworkSpec<f64>) -> Vec<M> {
        (0..net.hop_count())
            .map(|k| rand_complex::<f64>(rng, net.hops[k].tx(), net.precoder_cols(k)) * c(0.7, 0.0))
            .collect()
    }

    #[test]
    fn qk_chain_empty_for_single_hop() {
        let mut rng = SeededRng::new(301);
        let net = joint_net(&mut rng, 1, 3);
        let f = rand_f(&mut rng, &net);
        assert!(optimal_qk_chain(&net, &f).unwrap().is_empty());
    }

    #[test]
    fn qk_chain_identity_for_aligned_diagonal_states() {
        // Diagonal channels with descending gains and F = I make every A_k
        // diagonal nonincreasing, so the canonicalized rotations are I.
        let n = 3;
        let mk = |gains: [f64; 3]| {
            M::from_diagonal(&crate::Vec64::from_vec(gains.iter().map(|&g| c(g, 0.0)).collect()))
        };
        let net = NetworkSpec {
            hops: vec![
                HopSpec {
                    channel: mk([3.0, 2.0, 1.0]),
                    noise_variance: 1.0,
                    power_budget: 1.0,
                    constraint: Constraint::Joint { tau_max: 1.0 },
                },
                HopSpec {
                    channel: mk([2.5, 1.5, 0.5]),
                    noise_variance: 1.0,
                    power_budget: 1.0,
                    constraint: Constraint::Joint { tau_max: 1.0 },
                },
            ],
            stream_count: n,
            signal_variance: 1.0,
        };
        let f = vec![crate::linalg::identity(n), crate::linalg::identity(n)];
        let qchain = optimal_qk_chain(&net, &f).unwrap();
        assert_eq!(qchain.len(), 1);
        assert!(rel_frob_err(&qchain[0], &crate::linalg::identity(n)) < 1e-12);
    }

    #[test]
    fn qk_chain_multiplies_singular_values() {
        let mut rng = SeededRng::new(307);
        let net = joint_net(&mut rng, 3, 3);
        let f = rand_f(&mut rng, &net);
        let states = hop_states(&net, &f).unwrap();
        let qchain = optimal_qk_chain(&net, &f).unwrap();
        let mut acc = states[0].a.clone();
        for k in 1..3 {
            acc = &states[k].a * &qchain[k - 1] * acc;
        }
        let got = svd_ordered(&acc).singulars;
        for j in 0..3 {
            let want: f64 = (0..3).map(|k| svd_ordered(&states[k].a).singulars[j]).product();
            assert!((got[j] - want).abs() < 1e-8, "singular {j}: {} vs {want}", got[j]);
        }
    }

    #[test]
    fn q1_identity_rotation_for_a_schur_concave() {
        let mut rng = SeededRng::new(311);
        let net = joint_net(&mut rng, 2, 3);
        let f = rand_f(&mut rng, &net);
        let qchain = optimal_qk_chain(&net, &f).unwrap();
        let (q1, choice) = optimal_q1(&net, &f, &qchain, &ObjectiveSpec::a_schur_concave()).unwrap();
        assert_eq!(choice.provenance, UOmegaSource::Identity);
        let theta = composed_gram(&net, &f, &qchain).unwrap();
        let u_theta = hermitian_evd(&theta).unwrap().eigenvectors;
        assert!(rel_frob_err(&q1, &u_theta) < 1e-12);
    }

    #[test]
    fn q1_dft_rotation_equalizes_mse_diagonal() {
        let mut rng = SeededRng::new(313);
        let net = joint_net(&mut rng, 2, 2);
        let f = rand_f(&mut rng, &net);
        let qchain = optimal_qk_chain(&net, &f).unwrap();
        let (q1, choice) = optimal_q1(&net, &f, &qchain, &ObjectiveSpec::a_schur_convex()).unwrap();
        assert_eq!(choice.provenance, UOmegaSource::Dft);
        let theta = composed_gram(&net, &f, &qchain).unwrap();
        let u_theta = hermitian_evd(&theta).unwrap().eigenvectors;
        assert!(rel_frob_err(&q1, &(&u_theta * dft_matrix::<f64>(2).adjoint())) < 1e-12);

        let mut q = vec![q1];
        q.extend(qchain);
        let phi = phi_lmmse_compact(&net, &f, &q).unwrap();
        assert!((phi[(0, 0)].re - phi[(1, 1)].re).abs() < 1e-8);

        // Same property at N = 4 (the DFT equalizes the diagonal exactly
        // whatever the eigenvalues).
        let net = joint_net(&mut rng, 2, 4);
        let f = rand_f(&mut rng, &net);
        let design = assemble_design(&net, &ObjectiveSpec::a_schur_convex(), &f).unwrap();
        let phi = phi_lmmse_compact(&net, &design.f, &design.q).unwrap();
        let mean: f64 = (0..4).map(|i| phi[(i, i)].re).sum::<f64>() / 4.0;
        for i in 0..4 {
            assert!((phi[(i, i)].re - mean).abs() < 1e-8, "stream {i}");
        }
    }

    #[test]
    fn q1_equal_diagonal_rotation_for_m_schur_convex() {
        let mut rng = SeededRng::new(317);
        let net = joint_net(&mut rng, 2, 4);
        let f = rand_f(&mut rng, &net);
        let qchain = optimal_qk_chain(&net, &f).unwrap();
        let (q1, choice) = optimal_q1(&net, &f, &qchain, &ObjectiveSpec::m_schur_convex()).unwrap();
        assert_eq!(choice.provenance, UOmegaSource::EqualDiagonal);
        let mut q = vec![q1];
        q.extend(qchain);
        let phi = phi_lmmse_compact(&net, &f, &q).unwrap();
        let l = cholesky_lower(&phi).unwrap();
        let d = l.diag();
        let mean = d.iter().sum::<f64>() / 4.0;
        for i in 0..4 {
            assert!((d[i] - mean).abs() / mean < 1e-7, "diag {i}: {}", d[i]);
        }
    }

    #[test]
    fn q1_beats_random_rotations_for_weighted_mse() {
        // Trace alignment: U_Θ U_W^H maximizes Tr[W Q^H Θ Q], so no random
        // source rotation may achieve a smaller weighted MSE.
        let mut rng = SeededRng::new(409);
        let net = joint_net(&mut rng, 2, 3);
        let f = rand_f(&mut rng, &net);
        let w = rand_hermitian_psd::<f64>(&mut rng, 3);
        let objective = ObjectiveSpec::weighted_mse(w);
        let design = assemble_design(&net, &objective, &f).unwrap();
        let best = evaluate_objective(&objective, &design, &net).unwrap();
        for _ in 0..50 {
            let mut q = design.q.clone();
            q[0] = rand_unitary::<f64>(&mut rng, 3);
            let p = lift_precoders(&net, &design.f, &q).unwrap();
            let g = lmmse_equalizer(&net, &p).unwrap();
            let candidate = Design { f: design.f.clone(), q, p, g: Some(g), c: identity(3) };
            let value = evaluate_objective(&objective, &candidate, &net).unwrap();
            assert!(best <= value + 1e-9, "rotation beat the optimum: {value} < {best}");
        }
    }

    #[test]
    fn q1_dft_minimizes_worst_stream_mse() {
        let mut rng = SeededRng::new(419);
        let net = joint_net(&mut rng, 3, 3);
        let f = rand_f(&mut rng, &net);
        let objective = ObjectiveSpec::a_schur_convex();
        let design = assemble_design(&net, &objective, &f).unwrap();
        let best = evaluate_objective(&objective, &design, &net).unwrap();
        for _ in 0..50 {
            let mut q = design.q.clone();
            q[0] = rand_unitary::<f64>(&mut rng, 3);
            let p = lift_precoders(&net, &design.f, &q).unwrap();
            let g = lmmse_equalizer(&net, &p).unwrap();
            let candidate = Design { f: design.f.clone(), q, p, g: Some(g), c: identity(3) };
            let value = evaluate_objective(&objective, &candidate, &net).unwrap();
            assert!(best <= value + 1e-9, "rotation beat the max-MSE optimum");
        }
    }

    #[test]
    fn q1_uses_weight_eigenbasis_for_weighted_mse() {
        let mut rng = SeededRng::new(413);
        let net = joint_net(&mut rng, 2, 3);
        let f = rand_f(&mut rng, &net);
        let w = rand_hermitian_psd::<f64>(&mut rng, 3);
        let qchain = optimal_qk_chain(&net, &f).unwrap();
        let (q1, choice) =
            optimal_q1(&net, &f, &qchain, &ObjectiveSpec::weighted_mse(w.clone())).unwrap();
        assert_eq!(choice.provenance, UOmegaSource::WeightEigenbasis);
        let theta = composed_gram(&net, &f, &qchain).unwrap();
        let u_theta = hermitian_evd(&theta).unwrap().eigenvectors;
        let u_w = hermitian_evd(&w).unwrap().eigenvectors;
        assert!(rel_frob_err(&q1, &(&u_theta * u_w.adjoint())) < 1e-12);
    }

    #[test]
    fn optimal_c_identity_cases() {
        assert!(rel_frob_err(&optimal_c(&crate::linalg::identity::<f64>(3)).unwrap(), &identity(3)) < 1e-12);
        let d = M::from_diagonal(&crate::Vec64::from_vec(vec![c(2.0, 0.0), c(0.5, 0.0), c(1.5, 0.0)]));
        assert!(rel_frob_err(&optimal_c(&d).unwrap(), &identity(3)) < 1e-12);
    }

    #[test]
    fn optimal_c_diagonalizes_phi() {
        let mut rng = SeededRng::new(331);
        for _ in 0..10 {
            let phi = rand_hermitian_psd::<f64>(&mut rng, 4) + scale(&identity::<f64>(4), 0.1);
            let copt = optimal_c(&phi).unwrap();
            let l = cholesky_lower(&phi).unwrap();
            let rotated = &copt * &phi * copt.adjoint();
            for i in 0..4 {
                assert!((copt[(i, i)] - c(1.0, 0.0)).norm() < 1e-10);
                let lii = l.l[(i, i)].re;
                assert!((rotated[(i, i)].re - lii * lii).abs() < 1e-9);
                for j in 0..4 {
                    if i != j {
                        assert!(rotated[(i, j)].norm() <= 1e-9, "off-diagonal ({i},{j})");
                    }
                }
            }
            // Hadamard: the feedback never hurts the product objective.
            let with_c: f64 = (0..4).map(|i| rotated[(i, i)].re).product();
            let with_i: f64 = (0..4).map(|i| phi[(i, i)].re).product();
            assert!(with_c <= with_i + 1e-12);
        }
    }

    fn identity_net(k: usize, n: usize, noise: f64) -> NetworkSpec<f64> {
        NetworkSpec {
            hops: (0..k)
                .map(|_| HopSpec {
                    channel: crate::linalg::identity(n),
                    noise_variance: noise,
                    power_budget: n as f64,
                    constraint: Constraint::Joint { tau_max: 1.0 },
                })
                .collect(),
            stream_count: n,
            signal_variance: 1.0,
        }
    }

    #[test]
    fn evaluate_capacity_on_half_identity_phi() {
        // Identity channel and precoder at unit SNR: Φ = I/2.
        let net = identity_net(1, 4, 1.0);
        let design = Design {
            f: vec![identity(4)],
            q: vec![identity(4)],
            p: vec![identity(4)],
            g: Some(crate::mse::lmmse_equalizer(&net, &[identity(4)]).unwrap()),
            c: identity(4),
        };
        let v = evaluate_objective(&ObjectiveSpec::capacity(), &design, &net).unwrap();
        assert!((v - 4.0 * 0.5f64.ln()).abs() < 1e-10);

        let w_eye = ObjectiveSpec::weighted_mse(identity(4));
        let tr = evaluate_objective(&w_eye, &design, &net).unwrap();
        assert!((tr - 2.0).abs() < 1e-10);

        let sum = evaluate_objective(&ObjectiveSpec::a_schur_concave(), &design, &net).unwrap();
        assert!((sum - 2.0).abs() < 1e-10);
        let worst = evaluate_objective(&ObjectiveSpec::a_schur_convex(), &design, &net).unwrap();
        assert!((worst - 0.5).abs() < 1e-10);
    }

    #[test]
    fn capacity_value_matches_mutual_information_identity() {
        // log|Φ_LMMSE| must equal −log det(I + σ² T^H R̃^{-1} T) with R̃ the
        // noise-only covariance at the destination.
        let mut rng = SeededRng::new(337);
        let net = joint_net(&mut rng, 3, 3);
        let f = rand_f(&mut rng, &net);
        let design = assemble_design(&net, &ObjectiveSpec::capacity(), &f).unwrap();
        let v = evaluate_objective(&ObjectiveSpec::capacity(), &design, &net).unwrap();

        let t = crate::mse::chain_product(&net, &design.p);
        let r_all = rx_covariance_chain(&net, &design.p).unwrap().pop().unwrap();
        let r_noise = &r_all - scale(&(&t * t.adjoint()), net.signal_variance);
        let x = crate::linalg::hermitian_solve(&r_noise, &t).unwrap();
        let snr_term = scale(&(t.adjoint() * x), net.signal_variance);
        let mi = log_det(&(identity::<f64>(3) + snr_term)).unwrap();
        let sigma_term = 3.0 * net.signal_variance.ln();
        assert!((v - (sigma_term - mi)).abs() < 1e-8, "v = {v}, mi = {mi}");
    }

    #[test]
    fn capacity_invariant_under_arbitrary_right_rotation() {
        let mut rng = SeededRng::new(347);
        let net = joint_net(&mut rng, 2, 3);
        let f = rand_f(&mut rng, &net);
        let design = assemble_design(&net, &ObjectiveSpec::capacity(), &f).unwrap();
        let base = evaluate_objective(&ObjectiveSpec::capacity(), &design, &net).unwrap();
        for _ in 0..5 {
            let u = rand_unitary::<f64>(&mut rng, 3);
            let mut q = design.q.clone();
            q[0] = &q[0] * &u;
            let p = lift_precoders(&net, &design.f, &q).unwrap();
            let g = lmmse_equalizer(&net, &p).unwrap();
            let rotated = Design { f: design.f.clone(), q, p, g: Some(g), c: identity(3) };
            let v = evaluate_objective(&ObjectiveSpec::capacity(), &rotated, &net).unwrap();
            assert!((v - base).abs() < 1e-10, "rotation changed capacity: {v} vs {base}");
        }
    }

    #[test]
    fn assemble_linear_design_has_identity_feedback() {
        let mut rng = SeededRng::new(349);
        let net = joint_net(&mut rng, 2, 3);
        let f = rand_f(&mut rng, &net);
        for objective in [
            ObjectiveSpec::capacity(),
            ObjectiveSpec::a_schur_convex(),
            ObjectiveSpec::a_schur_concave(),
            ObjectiveSpec::weighted_mse(rand_hermitian_psd::<f64>(&mut rng, 3)),
        ] {
            let design = assemble_design(&net, &objective, &f).unwrap();
            assert!(rel_frob_err(&design.c, &identity(3)) < 1e-12);
        }
    }

    #[test]
    fn assemble_nonlinear_design_has_unit_diagonal_feedback() {
        let mut rng = SeededRng::new(353);
        let net = joint_net(&mut rng, 2, 3);
        let f = rand_f(&mut rng, &net);
        for objective in [ObjectiveSpec::m_schur_convex(), ObjectiveSpec::m_schur_concave()] {
            let design = assemble_design(&net, &objective, &f).unwrap();
            design.validate(&net).unwrap();
            assert!(design.g.is_some());
        }
    }

    #[test]
    fn assemble_pure_shaping_identity_channel_recovers_truncation() {
        let mut rng = SeededRng::new(359);
        let n = 3;
        let r_s = rand_hermitian_psd::<f64>(&mut rng, n);
        let net = NetworkSpec {
            hops: vec![HopSpec {
                channel: crate::linalg::identity(n),
                noise_variance: 0.5,
                power_budget: 10.0,
                constraint: Constraint::PureShaping { r_s: r_s.clone() },
            }],
            stream_count: n,
            signal_variance: 1.0,
        };
        let sol = solve_pure_shaping(&r_s, n).unwrap();
        let design = assemble_design(&net, &ObjectiveSpec::capacity(), &[sol.f.clone()]).unwrap();
        let tc = transmit_covariance(&net, &design.p, 0).unwrap();
        assert!(rel_frob_err(&tc, &sol.achieved_covariance) < 1e-9);
    }

    #[test]
    fn all_objectives_assemble_on_asymmetric_chains() {
        // rx/tx counts differ per hop and from the stream count; every
        // objective must still produce a valid, finite design.
        let mut rng = SeededRng::new(431);
        let net = NetworkSpec {
            hops: vec![
                HopSpec {
                    channel: rand_complex::<f64>(&mut rng, 4, 3),
                    noise_variance: 0.4,
                    power_budget: 3.0,
                    constraint: Constraint::Joint { tau_max: 1.1 },
                },
                HopSpec {
                    channel: rand_complex::<f64>(&mut rng, 3, 5),
                    noise_variance: 0.8,
                    power_budget: 2.0,
                    constraint: Constraint::Joint { tau_max: 0.9 },
                },
            ],
            stream_count: 2,
            signal_variance: 1.0,
        };
        let alloc =
            crate::waterfill::multihop_allocate(&net, crate::waterfill::WaterfillKind::MSchurConvex, 1e-8, 200)
                .unwrap();
        let f: Vec<M> = net
            .hops
            .iter()
            .zip(&alloc.per_hop)
            .map(|(hop, sol)| crate::waterfill::assemble_joint_f(hop, &sol.powers))
            .collect();
        for objective in [
            ObjectiveSpec::capacity(),
            ObjectiveSpec::a_schur_convex(),
            ObjectiveSpec::a_schur_concave(),
            ObjectiveSpec::m_schur_convex(),
            ObjectiveSpec::m_schur_concave(),
            ObjectiveSpec::weighted_mse(rand_hermitian_psd::<f64>(&mut rng, 2)),
        ] {
            let design = assemble_design(&net, &objective, &f).unwrap();
            design.validate(&net).unwrap();
            let value = evaluate_objective(&objective, &design, &net).unwrap();
            assert!(value.is_finite(), "{:?}", objective.kind);
        }
    }

    #[test]
    fn robust_substitution_gives_identical_design() {
        let mut rng = SeededRng::new(367);
        let net = joint_net(&mut rng, 2, 3);
        let substituted = net.robust_substitute(&[0.02, 0.05]).unwrap();
        let f = rand_f(&mut rng, &net);
        let a = assemble_design(&substituted, &ObjectiveSpec::capacity(), &f).unwrap();
        let b = assemble_design(&substituted, &ObjectiveSpec::capacity(), &f).unwrap();
        for k in 0..2 {
            assert_eq!(a.p[k], b.p[k]);
        }
    }

    #[test]
    fn m_schur_objectives_never_worse_with_optimal_feedback() {
        let mut rng = SeededRng::new(373);
        let net = joint_net(&mut rng, 2, 3);
        let f = rand_f(&mut rng, &net);
        let design = assemble_design(&net, &ObjectiveSpec::m_schur_concave(), &f).unwrap();
        // Product of d²[L] versus product of the raw LMMSE diagonal (C = I).
        let phi = crate::mse::phi_lmmse(&net, &design.p).unwrap();
        let with_c = evaluate_objective(&ObjectiveSpec::m_schur_concave(), &design, &net).unwrap();
        let with_i: f64 = (0..3).map(|i| phi[(i, i)].re).product();
        assert!(with_c <= with_i + 1e-12);
    }
}
