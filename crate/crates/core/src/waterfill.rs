//! Per-hop power allocation under joint sum+peak constraints: the two KKT
//! closed forms, the cave (capped) water-filling loop, and the multi-hop
//! alternating driver.
//!
//! After the optimal rotations, the remaining per-hop problem is a separable
//! convex program over the eigenchannel powers `f²_i`:
//!
//! - M-Schur-convex family: minimize `Σ_i log(1 − a_i t_i)`,
//! - A-Schur-convex family: minimize `Σ_i (1 − a_i t_i)`,
//!
//! with `t_i = f²_i h²_i / (f²_i h²_i + 1)` and `a_i` the product of the
//! other hops' `t` factors, subject to `Σ f² ≤ P` and `f² ≤ τ`. Each
//! marginal is strictly decreasing in `f²`, so water-filling with a ceiling
//! (cap violators, re-fill the residual) solves the subproblem exactly.

use crate::linalg::svd_ordered;
use crate::network::{Constraint, HopSpec, NetworkSpec};
use crate::{CMat, Error, Result, Scalar};
use nalgebra::Complex;
use num_traits::Float;

/// Which KKT closed form drives the allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaterfillKind {
    /// Sum of per-stream MSEs (additively Schur-convex representative).
    ASchurConvex,
    /// Sum of per-stream log-MSEs (multiplicatively Schur-convex
    /// representative; also the capacity objective).
    MSchurConvex,
}

/// One hop's allocation problem over its top-N eigenchannels.
#[derive(Debug, Clone)]
pub struct WaterfillProblem<T: Scalar> {
    /// Squared whitened channel singular values `h²_i`, nonincreasing.
    pub gains: Vec<T>,
    /// Auxiliary cross-hop factors `a_i ∈ [0, 1]`; `a_i = 0` marks a stream
    /// dead at some other hop — it receives no power.
    pub aux: Vec<T>,
    /// Sum power budget.
    pub budget: T,
    /// Per-eigenchannel power cap `τ` (may be infinite).
    pub cap: T,
    pub kind: WaterfillKind,
}

impl<T: Scalar> WaterfillProblem<T> {
    pub fn validate(&self) -> Result<()> {
        if self.gains.len() != self.aux.len() {
            return Err(Error::dims("waterfill: gains and aux lengths differ"));
        }
        if self.gains.is_empty() {
            return Err(Error::invalid("waterfill: no eigenchannels"));
        }
        if !(self.budget > T::zero()) {
            return Err(Error::invalid("waterfill: budget must be positive"));
        }
        if !(self.cap > T::zero()) {
            return Err(Error::invalid("waterfill: cap must be positive"));
        }
        for w in self.gains.windows(2) {
            if w[1] > w[0] {
                return Err(Error::contract("waterfill: gains must be nonincreasing"));
            }
        }
        if self.gains.iter().any(|g| !(*g > T::zero())) {
            return Err(Error::contract("waterfill: gains must be positive"));
        }
        if self.aux.iter().any(|a| !(*a >= T::zero()) || *a > T::one()) {
            return Err(Error::contract("waterfill: aux factors must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Solved allocation for one hop.
#[derive(Debug, Clone)]
pub struct WaterfillSolution<T: Scalar> {
    /// Allocated powers `f²_i`.
    pub powers: Vec<T>,
    /// Water-level multiplier `μ` (0 when the sum constraint is inactive).
    pub multiplier: T,
    /// Streams pinned at the cap.
    pub capped: Vec<bool>,
    /// Set when every stream is capped and budget is left unspent.
    pub sum_inactive: bool,
}

impl<T: Scalar> WaterfillSolution<T> {
    pub fn total(&self) -> T {
        self.powers.iter().fold(T::zero(), |acc, p| acc + *p)
    }
}

/// Marginal `Ĥ(f²) = a h² / [(1−a)(f²h²+1)² + a(f²h²+1)]` of the
/// M-Schur-convex objective.
pub fn marginal_mschur<T: Scalar>(gain: T, aux: T, power: T) -> T {
    if !Float::is_finite(power) {
        return T::zero();
    }
    let u = power * gain + T::one();
    aux * gain / ((T::one() - aux) * u * u + aux * u)
}

/// Marginal `H̃(f²) = a h² / (f²h²+1)²` of the A-Schur-convex objective.
pub fn marginal_aschur<T: Scalar>(gain: T, aux: T, power: T) -> T {
    if !Float::is_finite(power) {
        return T::zero();
    }
    let u = power * gain + T::one();
    aux * gain / (u * u)
}

/// KKT power for the M-Schur-convex form: the positive-part quadratic root
/// when the water level `μ` is at or above the cap's marginal, else the cap.
///
/// The root is evaluated in the rationalized form
/// `u = 2 a h² / (μ (a + √(a² + 4(1−a) a h²/μ)))`, which is continuous at
/// the `a → 1` single-hop limit (`u = h²/μ`, classic water-filling).
pub fn kkt_power_mschur<T: Scalar>(gain: T, aux: T, mu: T, cap: T) -> T {
    if aux <= T::zero() {
        return T::zero();
    }
    if mu < marginal_mschur(gain, aux, cap) {
        return cap;
    }
    let four = T::from_f64_lit(4.0);
    let disc = aux * aux + four * (T::one() - aux) * aux * gain / mu;
    let u = T::from_f64_lit(2.0) * aux * gain / (mu * (aux + Float::sqrt(disc)));
    Float::max((u - T::one()) / gain, T::zero())
}

/// KKT power for the A-Schur-convex form: `(√(a/(μh²)) − 1/h²)⁺` below the
/// cap branch.
pub fn kkt_power_aschur<T: Scalar>(gain: T, aux: T, mu: T, cap: T) -> T {
    if aux <= T::zero() {
        return T::zero();
    }
    if mu < marginal_aschur(gain, aux, cap) {
        return cap;
    }
    Float::max(Float::sqrt(aux / (mu * gain)) - T::one() / gain, T::zero())
}

fn kkt_power<T: Scalar>(kind: WaterfillKind, gain: T, aux: T, mu: T, cap: T) -> T {
    match kind {
        WaterfillKind::ASchurConvex => kkt_power_aschur(gain, aux, mu, cap),
        WaterfillKind::MSchurConvex => kkt_power_mschur(gain, aux, mu, cap),
    }
}

fn marginal<T: Scalar>(kind: WaterfillKind, gain: T, aux: T, power: T) -> T {
    match kind {
        WaterfillKind::ASchurConvex => marginal_aschur(gain, aux, power),
        WaterfillKind::MSchurConvex => marginal_mschur(gain, aux, power),
    }
}

/// Bisect the multiplier so the uncapped closed form spends `residual`
/// over the given streams. The bracket is `[1e-15, max_i a_i h²_i]`
/// (the upper end zeroes every stream).
fn bisect_multiplier<T: Scalar>(
    problem: &WaterfillProblem<T>,
    active: &[usize],
    residual: T,
) -> (T, Vec<T>) {
    let infinite_cap = T::infinity();
    let mut hi = T::zero();
    for &i in active {
        hi = Float::max(hi, problem.aux[i] * problem.gains[i]);
    }
    if !(residual > T::zero()) || hi == T::zero() {
        return (hi, vec![T::zero(); active.len()]);
    }
    let mut lo = T::from_f64_lit(1e-15);
    let tol = T::from_f64_lit(1e-12) * Float::max(residual, T::one());
    let mut mid = hi;
    #[allow(unused_assignments)]
    let mut powers = vec![T::zero(); active.len()];
    for _ in 0..300 {
        mid = (lo + hi) * T::from_f64_lit(0.5);
        let mut sum = T::zero();
        for (slot, &i) in powers.iter_mut().zip(active) {
            *slot = kkt_power(problem.kind, problem.gains[i], problem.aux[i], mid, infinite_cap);
            sum += *slot;
        }
        if Float::abs(sum - residual) <= tol {
            break;
        }
        if sum > residual {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (mid, powers)
}

/// Cave water-filling: water-fill ignoring the cap, pin violators at the
/// cap, re-fill the residual budget over the remainder, repeat. Each pass
/// permanently caps at least one stream, so the loop terminates.
pub fn cave_waterfill<T: Scalar>(problem: &WaterfillProblem<T>) -> Result<WaterfillSolution<T>> {
    problem.validate()?;
    let n = problem.gains.len();
    let mut powers = vec![T::zero(); n];
    let mut capped = vec![false; n];
    let mut active: Vec<usize> =
        (0..n).filter(|&i| problem.aux[i] > T::zero()).collect();
    let mut residual = problem.budget;
    let mut mu = T::zero();

    loop {
        if active.is_empty() {
            break;
        }
        let (level, fill) = bisect_multiplier(problem, &active, residual);
        mu = level;
        for (&i, &p) in active.iter().zip(&fill) {
            powers[i] = p;
        }
        let violators: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| powers[i] > problem.cap)
            .collect();
        if violators.is_empty() {
            break;
        }
        for &i in &violators {
            powers[i] = problem.cap;
            capped[i] = true;
            residual -= problem.cap;
        }
        if residual < T::zero() {
            residual = T::zero();
        }
        active.retain(|i| !capped[*i]);
    }

    let spent = powers.iter().fold(T::zero(), |acc, p| acc + *p);
    let unspent = problem.budget - spent;
    let sum_inactive = unspent > T::from_f64_lit(1e-9) * Float::max(problem.budget, T::one());
    if sum_inactive {
        mu = T::zero();
    }
    Ok(WaterfillSolution { powers, multiplier: mu, capped, sum_inactive })
}

/// KKT residuals per stream: `|marginal(f²) − μ|` where the allocation is
/// interior, `(μ − marginal(τ))⁺` for capped streams, `(marginal(0) − μ)⁺`
/// for zeroed streams.
pub fn kkt_residuals<T: Scalar>(
    problem: &WaterfillProblem<T>,
    solution: &WaterfillSolution<T>,
) -> Vec<T> {
    let mu = solution.multiplier;
    (0..problem.gains.len())
        .map(|i| {
            let m = marginal(problem.kind, problem.gains[i], problem.aux[i], solution.powers[i]);
            if solution.capped[i] {
                Float::max(mu - m, T::zero())
            } else if solution.powers[i] > T::zero() {
                Float::abs(m - mu)
            } else {
                Float::max(m - mu, T::zero())
            }
        })
        .collect()
}

/// Scalarized objective value of an allocation across hops:
/// `Σ_i log(1 − Π_k t_{k,i})` for the M-Schur form,
/// `Σ_i (1 − Π_k t_{k,i})` for the A-Schur form, with the products
/// accumulated in the log domain.
pub fn joint_objective<T: Scalar>(kind: WaterfillKind, gains: &[Vec<T>], powers: &[Vec<T>]) -> T {
    let hops = gains.len();
    assert!(hops > 0 && powers.len() == hops);
    let n = gains[0].len();
    let mut value = T::zero();
    for i in 0..n {
        let mut log_prod = T::zero();
        for k in 0..hops {
            let x = powers[k][i] * gains[k][i];
            let t = x / (x + T::one());
            if t <= T::zero() {
                log_prod = T::neg_infinity();
                break;
            }
            log_prod += Float::ln(t);
        }
        // 1 − e^s computed stably; a dead stream contributes MSE 1.
        let mse = if log_prod == T::neg_infinity() {
            T::one()
        } else {
            -Float::exp_m1(log_prod)
        };
        value += match kind {
            WaterfillKind::ASchurConvex => mse,
            WaterfillKind::MSchurConvex => Float::ln(mse),
        };
    }
    value
}

/// Top-N squared singular values of the whitened channel `H/σ_n`,
/// nonincreasing.
pub fn whitened_gains<T: Scalar>(hop: &HopSpec<T>, n_streams: usize) -> Vec<T> {
    let svd = svd_ordered(&hop.whitened_channel());
    (0..n_streams.min(svd.singulars.len()))
        .map(|i| svd.singulars[i] * svd.singulars[i])
        .collect()
}

/// Result of the alternating multi-hop allocation.
#[derive(Debug, Clone)]
pub struct MultihopAllocation<T: Scalar> {
    pub per_hop: Vec<WaterfillSolution<T>>,
    /// Whether the sweep loop met the tolerance before `max_iters`.
    pub converged: bool,
    pub sweeps: usize,
    /// Joint objective after every sweep.
    pub objective_trace: Vec<T>,
}

/// Alternating per-hop cave water-filling: each sweep recomputes the
/// cross-hop factors `a_{k,i}` from the current iterate and re-solves every
/// hop in order. The joint objective is nonincreasing because each hop's
/// subproblem is solved exactly.
pub fn multihop_allocate<T: Scalar>(
    net: &NetworkSpec<T>,
    kind: WaterfillKind,
    tol: T,
    max_iters: usize,
) -> Result<MultihopAllocation<T>> {
    net.validate()?;
    let hops = net.hop_count();
    let n = net.stream_count;
    let mut gains = Vec::with_capacity(hops);
    let mut budgets = Vec::with_capacity(hops);
    let mut caps = Vec::with_capacity(hops);
    for (k, hop) in net.hops.iter().enumerate() {
        let tau = match hop.constraint {
            Constraint::Joint { tau_max } => tau_max,
            Constraint::PureShaping { .. } => {
                return Err(Error::invalid(format!(
                    "multihop_allocate: hop {} carries a shaping constraint, not a joint one",
                    k + 1
                )));
            }
        };
        let g = whitened_gains(hop, n);
        if g.len() != n || g.iter().any(|x| !(*x > T::zero())) {
            return Err(Error::DegenerateChannel(format!(
                "hop {}: channel is rank deficient over the stream count",
                k + 1
            )));
        }
        gains.push(g);
        budgets.push(hop.power_budget);
        caps.push(tau);
    }

    let mut powers: Vec<Vec<T>> = (0..hops)
        .map(|k| vec![Float::min(budgets[k] / T::from_f64_lit(n as f64), caps[k]); n])
        .collect();
    let mut per_hop: Vec<Option<WaterfillSolution<T>>> = vec![None; hops];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0usize;

    for sweep in 0..max_iters {
        sweeps = sweep + 1;
        let mut max_delta = T::zero();
        for k in 0..hops {
            let aux: Vec<T> = (0..n)
                .map(|i| {
                    let mut prod = T::one();
                    for l in 0..hops {
                        if l != k {
                            let x = powers[l][i] * gains[l][i];
                            prod *= x / (x + T::one());
                        }
                    }
                    prod
                })
                .collect();
            let problem = WaterfillProblem {
                gains: gains[k].clone(),
                aux,
                budget: budgets[k],
                cap: caps[k],
                kind,
            };
            let sol = cave_waterfill(&problem)?;
            for i in 0..n {
                max_delta = Float::max(max_delta, Float::abs(sol.powers[i] - powers[k][i]));
                powers[k][i] = sol.powers[i];
            }
            per_hop[k] = Some(sol);
        }
        trace.push(joint_objective(kind, &gains, &powers));
        if max_delta <= tol {
            converged = true;
            break;
        }
    }

    Ok(MultihopAllocation {
        per_hop: per_hop.into_iter().map(|s| s.expect("at least one sweep")).collect(),
        converged,
        sweeps,
        objective_trace: trace,
    })
}

/// Build the hop precoder from allocated eigenchannel powers:
/// `F = V_H diag(√f²)` (square, zero columns beyond the streams), where
/// `V_H` is the right singular basis of the whitened channel.
pub fn assemble_joint_f<T: Scalar>(hop: &HopSpec<T>, powers: &[T]) -> CMat<T> {
    let tx = hop.tx();
    let v = svd_ordered(&hop.whitened_channel()).right;
    let mut diag = crate::CVec::<T>::zeros(tx);
    for (i, &p) in powers.iter().enumerate().take(tx) {
        diag[i] = Complex::new(Float::sqrt(Float::max(p, T::zero())), T::zero());
    }
    &v * CMat::<T>::from_diagonal(&diag)
}
