//! K-hop relay network descriptions, seeded channel ensembles, and the two
//! shaping-matrix construction schemes used by the experiments.
//!
//! A network is a chain of hops. Hop `k` (0-based here, 1-based in the docs)
//! carries its channel matrix (`rx_k × tx_k`), a white-noise variance, a sum
//! power budget and a per-hop constraint: either a pure covariance shaping
//! matrix `R_s` or a joint sum+peak constraint with eigenvalue cap `τ`.

use crate::linalg::{self, hermitian_part, svd_ordered};
use crate::rng::SeededRng;
use crate::{CMat, Error, Result, Scalar};
use nalgebra::{Complex, DMatrix, DVector};
use num_traits::Float;

/// Per-hop power constraint.
#[derive(Debug, Clone)]
pub enum Constraint<T: Scalar> {
    /// Transmit covariance dominated by `r_s` in the PSD order.
    PureShaping { r_s: CMat<T> },
    /// Sum power budget plus eigenvalue cap `tau_max` on the covariance.
    Joint { tau_max: T },
}

/// One hop of the relay chain.
#[derive(Debug, Clone)]
pub struct HopSpec<T: Scalar> {
    /// Channel matrix, `rx × tx`.
    pub channel: CMat<T>,
    /// White noise variance at the hop's receiver.
    pub noise_variance: T,
    /// Sum power budget for the transmitter feeding this hop.
    pub power_budget: T,
    pub constraint: Constraint<T>,
}

impl<T: Scalar> HopSpec<T> {
    pub fn rx(&self) -> usize {
        self.channel.nrows()
    }

    pub fn tx(&self) -> usize {
        self.channel.ncols()
    }

    /// Whitened channel `R_n^{-1/2} H = H / σ_n`.
    pub fn whitened_channel(&self) -> CMat<T> {
        linalg::scale(&self.channel, T::one() / Float::sqrt(self.noise_variance))
    }
}

/// Complete K-hop network description.
#[derive(Debug, Clone)]
pub struct NetworkSpec<T: Scalar> {
    pub hops: Vec<HopSpec<T>>,
    /// Number of data streams N.
    pub stream_count: usize,
    /// Source symbol variance σ²_a.
    pub signal_variance: T,
}

impl<T: Scalar> NetworkSpec<T> {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    /// Column count of the precoder feeding hop `k` (0-based): the stream
    /// count at the source, the previous hop's receive dimension after that.
    pub fn precoder_cols(&self, k: usize) -> usize {
        if k == 0 {
            self.stream_count
        } else {
            self.hops[k - 1].rx()
        }
    }

    /// Hard structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.hops.is_empty() {
            return Err(Error::invalid("network must have at least one hop"));
        }
        if self.stream_count == 0 {
            return Err(Error::invalid("stream count must be positive"));
        }
        if !(self.signal_variance > T::zero()) {
            return Err(Error::invalid("signal variance must be positive"));
        }
        for (k, hop) in self.hops.iter().enumerate() {
            if hop.rx() < self.stream_count || hop.tx() < self.stream_count {
                return Err(Error::dims(format!(
                    "hop {}: antenna counts {}x{} below stream count {}",
                    k + 1,
                    hop.rx(),
                    hop.tx(),
                    self.stream_count
                )));
            }
            if !(hop.noise_variance > T::zero()) {
                return Err(Error::invalid(format!(
                    "hop {}: noise variance must be positive",
                    k + 1
                )));
            }
            if !(hop.power_budget > T::zero()) {
                return Err(Error::invalid(format!(
                    "hop {}: power budget must be positive",
                    k + 1
                )));
            }
            match &hop.constraint {
                Constraint::PureShaping { r_s } => {
                    if r_s.nrows() != hop.tx() || r_s.ncols() != hop.tx() {
                        return Err(Error::dims(format!(
                            "hop {}: shaping matrix must be {}x{}",
                            k + 1,
                            hop.tx(),
                            hop.tx()
                        )));
                    }
                    let eigs = linalg::hermitian_eigenvalues(r_s)?;
                    let floor = eigs[0] * T::from_f64_lit(-1e-9);
                    if eigs[eigs.len() - 1] < floor {
                        return Err(Error::contract(format!(
                            "hop {}: shaping matrix is not PSD",
                            k + 1
                        )));
                    }
                }
                Constraint::Joint { tau_max } => {
                    if !(*tau_max > T::zero()) {
                        return Err(Error::invalid(format!(
                            "hop {}: tau_max must be positive",
                            k + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Soft diagnostics: pure-shaping hops where the shaping constraint is
    /// not stricter than the sum power budget (`Tr(R_s) > P_k`), so dropping
    /// the sum constraint changes the feasible set.
    pub fn warnings(&self) -> Vec<String> {
        let tol = T::from_f64_lit(1e-9);
        let mut out = Vec::new();
        for (k, hop) in self.hops.iter().enumerate() {
            if let Constraint::PureShaping { r_s } = &hop.constraint {
                let trace = r_s.diagonal().iter().map(|z| z.re).fold(T::zero(), |a, b| a + b);
                if trace > hop.power_budget + tol {
                    out.push(format!(
                        "hop {}: Tr(R_s) = {:e} exceeds power budget {:e}; \
                         shaping is not stricter than the sum power constraint",
                        k + 1,
                        trace,
                        hop.power_budget
                    ));
                }
            }
        }
        out
    }

    /// Robust-CSI substitution: treat the stored channels as estimates and
    /// inflate each hop's noise variance by `P_k σ²_{e_k}`.
    pub fn robust_substitute(&self, error_variances: &[T]) -> Result<NetworkSpec<T>> {
        if error_variances.len() != self.hops.len() {
            return Err(Error::dims(
                "robust_substitute: one error variance per hop required",
            ));
        }
        let mut out = self.clone();
        for (hop, &sigma_e) in out.hops.iter_mut().zip(error_variances) {
            hop.noise_variance += hop.power_budget * sigma_e;
        }
        Ok(out)
    }
}

/// Seeded i.i.d. circularly symmetric complex Gaussian channel ensemble.
#[derive(Debug, Clone, Copy)]
pub struct ChannelEnsemble {
    pub seed: u64,
}

/// Constraint descriptor before channels exist: shaping matrices that
/// depend on the realized channel are built per draw.
#[derive(Debug, Clone)]
pub enum ConstraintScheme<T: Scalar> {
    Shaping(ShapingScheme<T>),
    Joint { tau_max: T },
}

/// How to construct a pure-shaping matrix for a hop.
#[derive(Debug, Clone)]
pub enum ShapingScheme<T: Scalar> {
    /// Use the matrix as given.
    Explicit { r_s: CMat<T> },
    /// Exponentially correlated structure with prescribed diagonal.
    Exponential { thresholds: Vec<T>, rho: T },
    /// Eigenvectors matched to the hop's channel, diagonal fitted to the
    /// thresholds, negative eigenvalues replaced by `eta`.
    ChannelMatched { thresholds: Vec<T>, eta: T, weighting: Weighting },
}

/// Post-repair weighting that restores the diagonal threshold constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Matrix,
    Scalar,
}

/// Network description without realized channels.
#[derive(Debug, Clone)]
pub struct HopTemplate<T: Scalar> {
    pub rx: usize,
    pub tx: usize,
    pub noise_variance: T,
    pub power_budget: T,
    pub constraint: ConstraintScheme<T>,
}

#[derive(Debug, Clone)]
pub struct NetworkTemplate<T: Scalar> {
    pub hops: Vec<HopTemplate<T>>,
    pub stream_count: usize,
    pub signal_variance: T,
}

/// Draw the `trial_index`-th network realization of the template:
/// channels are filled from the seeded stream and channel-dependent shaping
/// matrices are realized. Deterministic in `(seed, trial_index)`.
pub fn draw_network<T: Scalar>(
    template: &NetworkTemplate<T>,
    ensemble: &ChannelEnsemble,
    trial_index: u64,
) -> Result<NetworkSpec<T>> {
    let mut hops = Vec::with_capacity(template.hops.len());
    for (k, hop) in template.hops.iter().enumerate() {
        let mut rng = SeededRng::derive(ensemble.seed, &[trial_index, k as u64]);
        let mut channel = CMat::<T>::zeros(hop.rx, hop.tx);
        for i in 0..hop.rx {
            for j in 0..hop.tx {
                channel[(i, j)] = rng.complex_gaussian();
            }
        }
        let constraint = match &hop.constraint {
            ConstraintScheme::Joint { tau_max } => Constraint::Joint { tau_max: *tau_max },
            ConstraintScheme::Shaping(scheme) => Constraint::PureShaping {
                r_s: realize_shaping(scheme, &channel)?,
            },
        };
        hops.push(HopSpec {
            channel,
            noise_variance: hop.noise_variance,
            power_budget: hop.power_budget,
            constraint,
        });
    }
    let net = NetworkSpec {
        hops,
        stream_count: template.stream_count,
        signal_variance: template.signal_variance,
    };
    net.validate()?;
    Ok(net)
}

/// Realize a shaping scheme against a drawn channel.
pub fn realize_shaping<T: Scalar>(scheme: &ShapingScheme<T>, channel: &CMat<T>) -> Result<CMat<T>> {
    match scheme {
        ShapingScheme::Explicit { r_s } => Ok(r_s.clone()),
        ShapingScheme::Exponential { thresholds, rho } => shaping_exponential(thresholds, *rho),
        ShapingScheme::ChannelMatched { thresholds, eta, weighting } => {
            shaping_channel_matched(channel, thresholds, *eta, *weighting)
        }
    }
}

/// `R_s = D T D` with `D = diag(√p_j)` and `T_{jl} = ρ^{|j-l|}`.
///
/// The diagonal equals the thresholds exactly and the result is PSD for
/// `0 ≤ ρ < 1`.
pub fn shaping_exponential<T: Scalar>(thresholds: &[T], rho: T) -> Result<CMat<T>> {
    if thresholds.is_empty() {
        return Err(Error::invalid("shaping_exponential: empty threshold vector"));
    }
    if thresholds.iter().any(|p| !(*p > T::zero())) {
        return Err(Error::invalid("shaping_exponential: thresholds must be positive"));
    }
    if !(rho >= T::zero()) || rho >= T::one() {
        return Err(Error::invalid("shaping_exponential: rho must lie in [0, 1)"));
    }
    let n = thresholds.len();
    let m = CMat::<T>::from_fn(n, n, |j, l| {
        let dist = if j >= l { j - l } else { l - j };
        let corr = Float::powi(rho, dist as i32);
        let amp = Float::sqrt(thresholds[j]) * Float::sqrt(thresholds[l]);
        Complex::new(amp * corr, T::zero())
    });
    Ok(m)
}

/// Channel-matched shaping matrix `V Λ V^H` with `V` the right singular
/// basis of the hop channel and `Λ` fitted so the diagonal hits the
/// per-antenna thresholds; negative entries of `Λ` are replaced by `eta`
/// and the chosen weighting restores the threshold constraints.
pub fn shaping_channel_matched<T: Scalar>(
    channel: &CMat<T>,
    thresholds: &[T],
    eta: T,
    weighting: Weighting,
) -> Result<CMat<T>> {
    let n = channel.ncols();
    if thresholds.len() != n {
        return Err(Error::dims(
            "shaping_channel_matched: one threshold per transmit antenna required",
        ));
    }
    if !(eta >= T::zero()) {
        return Err(Error::invalid("shaping_channel_matched: eta must be nonnegative"));
    }
    let v = svd_ordered(channel).right;

    // diag(V Λ V^H)_i = Σ_j |V_ij|² λ_j  =>  solve A λ = t.
    let a = DMatrix::<T>::from_fn(n, n, |i, j| v[(i, j)].norm_sqr());
    let t = DVector::<T>::from_vec(thresholds.to_vec());
    let lambda = a
        .clone()
        .lu()
        .solve(&t)
        .ok_or_else(|| Error::DegenerateChannel("eigenvector magnitude system is singular".into()))?;
    let residual = (&a * &lambda - &t).norm();
    if residual > T::from_f64_lit(1e-8) * t.norm() {
        return Err(Error::DegenerateChannel(
            "eigenvector magnitude system is too ill-conditioned to fit the thresholds".into(),
        ));
    }

    let repaired = lambda.map(|x| if x < T::zero() { eta } else { x });
    let d = CMat::<T>::from_diagonal(&repaired.map(|x| Complex::new(x, T::zero())));
    let m = hermitian_part(&(&v * d * v.adjoint()));

    let tiny = T::from_f64_lit(1e-300);
    let out = match weighting {
        Weighting::Matrix => {
            // Per-antenna scaling, never above 1 so repairs cannot relax
            // the constraints.
            let beta = DVector::<T>::from_fn(n, |i, _| {
                let di = m[(i, i)].re;
                if di > tiny {
                    Float::min(T::one(), thresholds[i] / di)
                } else {
                    T::one()
                }
            });
            let w = CMat::<T>::from_diagonal(&beta.map(|b| Complex::new(Float::sqrt(b), T::zero())));
            hermitian_part(&(&w * m * &w))
        }
        Weighting::Scalar => {
            // Largest single scale keeping every diagonal entry at or
            // below its threshold; tight at the binding antenna.
            let mut beta = T::infinity();
            for i in 0..n {
                let di = m[(i, i)].re;
                if di > tiny {
                    beta = Float::min(beta, thresholds[i] / di);
                }
            }
            if !Float::is_finite(beta) {
                m
            } else {
                linalg::scale(&m, beta)
            }
        }
    };
    Ok(out)
}
