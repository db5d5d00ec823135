//! MSE matrices for linear, DFE and THP transceivers, the LMMSE equalizer,
//! the inner-precoder change of variables with its inverse lifting, and the
//! matrix-weighting backward recursion used to cross-check the compact
//! product formula.
//!
//! Index conventions (0-based, hop `k` of `K`):
//! - `P_k` and `F_k` are `tx_k × w_k` where `w_0 = N` and `w_k = rx_{k-1}`.
//! - `Q_k` is `w_k × w_k` unitary.
//! - `A_k = Π_k^{-1/2} H_k F_k / σ_{n_k}` with
//!   `Π_k = H_k F_k F_k^H H_k^H / σ²_{n_k} + I`.
//! - The equalizer `G` is `N × rx_{K-1}`; the feedback `C` is `N × N`,
//!   unit-diagonal lower-triangular (identity for linear transceivers).

use crate::linalg::{self, hermitian_inv_sqrt, hermitian_part, hermitian_solve, identity};
use crate::network::NetworkSpec;
use crate::{CMat, Error, Result, Scalar};
use nalgebra::Complex;
use num_traits::Float;

/// Complete transceiver: inner precoders, rotations, lifted forwarding
/// matrices, equalizer and feedback.
#[derive(Debug, Clone)]
pub struct Design<T: Scalar> {
    /// Inner precoders `F_k`.
    pub f: Vec<CMat<T>>,
    /// Rotations `Q_k`; `q[0]` is the source rotation `Q_1`.
    pub q: Vec<CMat<T>>,
    /// Lifted precoders `P_k` actually applied in the chain.
    pub p: Vec<CMat<T>>,
    /// Destination equalizer, when one has been computed. For nonlinear
    /// designs this is the MSE-optimal filter given the feedback,
    /// `C G_LMMSE`.
    pub g: Option<CMat<T>>,
    /// Feedback matrix `C = I + B`, unit-diagonal lower-triangular.
    pub c: CMat<T>,
}

impl<T: Scalar> Design<T> {
    /// Structural invariants: rotation unitarity within 1e-10, feedback
    /// shape, and dimension consistency with the network.
    pub fn validate(&self, net: &NetworkSpec<T>) -> Result<()> {
        let k = net.hop_count();
        if self.f.len() != k || self.q.len() != k || self.p.len() != k {
            return Err(Error::dims("design: expected one F, Q, P per hop"));
        }
        // 1e-10 at f64; scales with the scalar's precision (f32 cannot
        // represent unitarity tighter than ~1e-5).
        let tol = Float::max(T::from_f64_lit(1e-10), <T as Float>::epsilon() * T::from_f64_lit(100.0));
        for (i, hop) in net.hops.iter().enumerate() {
            let w = net.precoder_cols(i);
            if self.f[i].shape() != (hop.tx(), w) {
                return Err(Error::dims(format!("design: F_{} must be {}x{}", i + 1, hop.tx(), w)));
            }
            if self.p[i].shape() != (hop.tx(), w) {
                return Err(Error::dims(format!("design: P_{} must be {}x{}", i + 1, hop.tx(), w)));
            }
            if self.q[i].shape() != (w, w) {
                return Err(Error::dims(format!("design: Q_{} must be {w}x{w}", i + 1)));
            }
            let dev = linalg::rel_frob_err(&(self.q[i].adjoint() * &self.q[i]), &identity(w));
            if dev > tol {
                return Err(Error::contract(format!(
                    "design: Q_{} deviates from unitary by {dev:e}",
                    i + 1
                )));
            }
        }
        let n = net.stream_count;
        if self.c.shape() != (n, n) {
            return Err(Error::dims("design: C must be N x N"));
        }
        for i in 0..n {
            if (self.c[(i, i)] - Complex::new(T::one(), T::zero())).norm() > tol {
                return Err(Error::contract("design: C diagonal must be 1"));
            }
            for j in i + 1..n {
                if self.c[(i, j)].norm() > tol {
                    return Err(Error::contract("design: C must be lower triangular"));
                }
            }
        }
        if let Some(g) = &self.g {
            let rx_last = net.hops[k - 1].rx();
            if g.shape() != (n, rx_last) {
                return Err(Error::dims("design: G must be N x rx_K"));
            }
        }
        Ok(())
    }
}

/// Per-hop state of the change of variables.
#[derive(Debug, Clone)]
pub struct HopState<T: Scalar> {
    /// `Π_k = H_k F_k F_k^H H_k^H / σ²_{n_k} + I`, Hermitian, at least I.
    pub pi: CMat<T>,
    /// `A_k = Π_k^{-1/2} H_k F_k / σ_{n_k}`; all singular values lie in [0, 1).
    pub a: CMat<T>,
}

/// Build `(Π_k, A_k)` for every hop from the inner precoders.
pub fn hop_states<T: Scalar>(net: &NetworkSpec<T>, f: &[CMat<T>]) -> Result<Vec<HopState<T>>> {
    if f.len() != net.hop_count() {
        return Err(Error::dims("hop_states: one F per hop required"));
    }
    let mut out = Vec::with_capacity(f.len());
    for (k, hop) in net.hops.iter().enumerate() {
        let x = hop.whitened_channel() * &f[k];
        let pi = hermitian_part(&(&x * x.adjoint())) + identity(hop.rx());
        let a = hermitian_inv_sqrt(&pi)? * &x;
        out.push(HopState { pi, a });
    }
    Ok(out)
}

/// Receive covariance recursion `R_{x_k} = H_k P_k R_{x_{k-1}} P_k^H H_k^H
/// + σ²_{n_k} I`, seeded with `R_{x_0} = σ²_a I`.
pub fn rx_covariance_chain<T: Scalar>(
    net: &NetworkSpec<T>,
    p: &[CMat<T>],
) -> Result<Vec<CMat<T>>> {
    if p.len() != net.hop_count() {
        return Err(Error::dims("rx_covariance_chain: one P per hop required"));
    }
    let mut r = linalg::scale(&identity(net.stream_count), net.signal_variance);
    let mut out = Vec::with_capacity(p.len());
    for (k, hop) in net.hops.iter().enumerate() {
        let tx_cov = &p[k] * &r * p[k].adjoint();
        r = hermitian_part(&(&hop.channel * tx_cov * hop.channel.adjoint()))
            + linalg::scale(&identity(hop.rx()), hop.noise_variance);
        out.push(r.clone());
    }
    Ok(out)
}

/// Transmit covariance at hop `k` (0-based): `P_k R_{x_{k-1}} P_k^H`.
pub fn transmit_covariance<T: Scalar>(
    net: &NetworkSpec<T>,
    p: &[CMat<T>],
    k: usize,
) -> Result<CMat<T>> {
    let r_prev = if k == 0 {
        linalg::scale(&identity(net.stream_count), net.signal_variance)
    } else {
        rx_covariance_chain(net, p)?[k - 1].clone()
    };
    Ok(hermitian_part(&(&p[k] * r_prev * p[k].adjoint())))
}

/// Full cascade `T = H_K P_K ⋯ H_1 P_1` (dimensions `rx_K × N`).
pub fn chain_product<T: Scalar>(net: &NetworkSpec<T>, p: &[CMat<T>]) -> CMat<T> {
    let mut acc = identity(net.stream_count);
    for (k, hop) in net.hops.iter().enumerate() {
        acc = &hop.channel * &p[k] * acc;
    }
    acc
}

/// Partial cascades `T_{>k} = H_K P_K ⋯ H_{k+1} P_{k+1}` for k = 1..K
/// (0-based entry `k` multiplies the noise injected at hop `k+1`); the last
/// entry is the identity at the destination.
fn downstream_products<T: Scalar>(net: &NetworkSpec<T>, p: &[CMat<T>]) -> Vec<CMat<T>> {
    let k = net.hop_count();
    let mut out = vec![identity(net.hops[k - 1].rx()); k];
    for i in (0..k - 1).rev() {
        let next = &out[i + 1] * &net.hops[i + 1].channel * &p[i + 1];
        out[i] = next;
    }
    out
}

/// Linear-receiver MSE matrix `E{(G r − a)(G r − a)^H}` expanded over the
/// independent data and per-hop noise terms.
pub fn mse_linear<T: Scalar>(
    net: &NetworkSpec<T>,
    p: &[CMat<T>],
    g: &CMat<T>,
) -> Result<CMat<T>> {
    if p.len() != net.hop_count() {
        return Err(Error::dims("mse_linear: one P per hop required"));
    }
    let n = net.stream_count;
    let signal = &chain_product(net, p);
    let gt = g * signal;
    let err = &gt - identity::<T>(n);
    let mut phi = linalg::scale(&hermitian_part(&(&err * err.adjoint())), net.signal_variance);
    let down = downstream_products(net, p);
    for (k, hop) in net.hops.iter().enumerate() {
        let path = g * &down[k];
        phi += linalg::scale(&hermitian_part(&(&path * path.adjoint())), hop.noise_variance);
    }
    Ok(hermitian_part(&phi))
}

/// Unified MSE matrix for linear (`C = I`), DFE and THP transceivers:
/// `G R_{x_K} G^H + σ²_a C C^H − σ²_a C T^H G^H − σ²_a G T C^H`.
pub fn mse_unified<T: Scalar>(
    net: &NetworkSpec<T>,
    p: &[CMat<T>],
    g: &CMat<T>,
    c: &CMat<T>,
) -> Result<CMat<T>> {
    let r_last = rx_covariance_chain(net, p)?
        .pop()
        .expect("at least one hop");
    let t = chain_product(net, p);
    let sig = Complex::new(net.signal_variance, T::zero());
    let phi = g * r_last * g.adjoint() + (c * c.adjoint()) * sig
        - (c * t.adjoint() * g.adjoint()) * sig
        - (g * t * c.adjoint()) * sig;
    Ok(hermitian_part(&phi))
}

/// LMMSE equalizer `G = σ²_a T^H R_{x_K}^{-1}`, computed via a Hermitian
/// solve rather than an explicit inverse.
pub fn lmmse_equalizer<T: Scalar>(net: &NetworkSpec<T>, p: &[CMat<T>]) -> Result<CMat<T>> {
    let r_last = rx_covariance_chain(net, p)?
        .pop()
        .expect("at least one hop");
    let t = chain_product(net, p);
    let x = hermitian_solve(&r_last, &t)?;
    Ok(linalg::scale(&x.adjoint(), net.signal_variance))
}

/// MSE matrix achieved by the LMMSE equalizer (`C = I`):
/// `σ²_a I − σ⁴_a T^H R_{x_K}^{-1} T`.
pub fn phi_lmmse<T: Scalar>(net: &NetworkSpec<T>, p: &[CMat<T>]) -> Result<CMat<T>> {
    let r_last = rx_covariance_chain(net, p)?
        .pop()
        .expect("at least one hop");
    let t = chain_product(net, p);
    let x = hermitian_solve(&r_last, &t)?;
    let sig2 = net.signal_variance * net.signal_variance;
    let phi = linalg::scale(&identity(net.stream_count), net.signal_variance)
        - linalg::scale(&(t.adjoint() * x), sig2);
    Ok(hermitian_part(&phi))
}

/// Compact LMMSE MSE in the `(F, Q)` variables:
/// `σ²_a (I − (A_K Q_K ⋯ A_1 Q_1)^H (A_K Q_K ⋯ A_1 Q_1))`.
pub fn phi_lmmse_compact<T: Scalar>(
    net: &NetworkSpec<T>,
    f: &[CMat<T>],
    q: &[CMat<T>],
) -> Result<CMat<T>> {
    let states = hop_states(net, f)?;
    if q.len() != states.len() {
        return Err(Error::dims("phi_lmmse_compact: one Q per hop required"));
    }
    let mut acc = identity(net.stream_count);
    for (k, state) in states.iter().enumerate() {
        acc = &state.a * &q[k] * acc;
    }
    let phi = identity::<T>(net.stream_count) - acc.adjoint() * acc;
    Ok(linalg::scale(&hermitian_part(&phi), net.signal_variance))
}

/// Invert the change of variables: `P_1 = F_1 Q_1 / σ_a` and
/// `P_k = F_k Q_k Π_{k-1}^{-1/2} / σ_{n_{k-1}}` for the later hops.
pub fn lift_precoders<T: Scalar>(
    net: &NetworkSpec<T>,
    f: &[CMat<T>],
    q: &[CMat<T>],
) -> Result<Vec<CMat<T>>> {
    let states = hop_states(net, f)?;
    if q.len() != states.len() {
        return Err(Error::dims("lift_precoders: one Q per hop required"));
    }
    let mut out = Vec::with_capacity(f.len());
    for k in 0..f.len() {
        let p = if k == 0 {
            linalg::scale(&(&f[0] * &q[0]), T::one() / Float::sqrt(net.signal_variance))
        } else {
            let pi_inv_sqrt = hermitian_inv_sqrt(&states[k - 1].pi)?;
            linalg::scale(
                &(&f[k] * &q[k] * pi_inv_sqrt),
                T::one() / Float::sqrt(net.hops[k - 1].noise_variance),
            )
        };
        out.push(p);
    }
    Ok(out)
}

/// Backward matrix-weighting recursion for the LMMSE MSE: every hop acts on
/// the downstream error as `E ← W^H E W + Π` with slope `W = A_k Q_k` and
/// intercept `Π = I − Q_k^H A_k^H A_k Q_k`. Agrees with
/// [`phi_lmmse_compact`] algebraically.
pub fn weighting_recursion<T: Scalar>(
    net: &NetworkSpec<T>,
    f: &[CMat<T>],
    q: &[CMat<T>],
) -> Result<CMat<T>> {
    let states = hop_states(net, f)?;
    if q.len() != states.len() {
        return Err(Error::dims("weighting_recursion: one Q per hop required"));
    }
    let k = states.len();
    let last = &states[k - 1];
    let aq = &last.a * &q[k - 1];
    let mut e = identity::<T>(aq.ncols()) - aq.adjoint() * aq;
    for i in (0..k - 1).rev() {
        let w = &states[i].a * &q[i];
        let intercept = identity::<T>(w.ncols()) - w.adjoint() * &w;
        e = w.adjoint() * e * &w + intercept;
    }
    Ok(linalg::scale(&hermitian_part(&e), net.signal_variance))
}
