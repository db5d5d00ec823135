//! Seeded Monte Carlo link evaluation: BER with linear, DFE and THP
//! transceivers, ergodic capacity, and normalized sum MSE.
//!
//! Determinism: channels are a pure function of `(seed, snr_index, trial,
//! hop)` and the data/noise stream of `(seed, snr_index, trial)`, so a
//! report is bit-identical across runs and across worker counts — trials
//! are merged in trial order and error counts add associatively.

pub mod modulation;

pub use modulation::{thp_modulo, ModKind, ModulationScheme};

use crate::linalg::cholesky_lower;
use crate::mse::{phi_lmmse_compact, Design};
use crate::network::{draw_network, ChannelEnsemble, Constraint, NetworkSpec, NetworkTemplate};
use crate::objective::{assemble_design, ObjectiveSpec};
use crate::rng::SeededRng;
use crate::shaping::solve_pure_shaping;
use crate::waterfill::{assemble_joint_f, multihop_allocate};
use crate::{CVec, Error, Result, Scalar};
use nalgebra::Complex;
use num_traits::Float;

/// What a simulation measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ber,
    Capacity,
    SumMse,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::Ber => "ber",
            Metric::Capacity => "capacity",
            Metric::SumMse => "sum_mse",
        }
    }
}

/// Receiver/transmitter structure simulated for BER.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransceiverKind {
    Linear,
    Dfe,
    Thp,
}

impl TransceiverKind {
    pub fn label(&self) -> &'static str {
        match self {
            TransceiverKind::Linear => "linear",
            TransceiverKind::Dfe => "dfe",
            TransceiverKind::Thp => "thp",
        }
    }
}

/// One experiment: a network template swept over an SNR grid.
#[derive(Debug, Clone)]
pub struct SimConfig<T: Scalar> {
    pub template: NetworkTemplate<T>,
    pub objective: ObjectiveSpec<T>,
    pub transceiver: TransceiverKind,
    pub modulation: ModulationScheme,
    /// Per-hop SNR points in dB; noise variances are set to `P_k / SNR`.
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub symbols_per_trial: usize,
    pub seed: u64,
    /// Worker threads (≤ 1 runs sequentially); the result does not depend
    /// on this.
    pub threads: usize,
}

impl<T: Scalar> SimConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::invalid("simulation needs a non-empty SNR grid"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("simulation needs at least one trial"));
        }
        if self.symbols_per_trial == 0 {
            return Err(Error::invalid("simulation needs at least one symbol per trial"));
        }
        Ok(())
    }

    fn design_kind(&self, metric: Metric) -> String {
        match metric {
            Metric::Ber => format!("{}_{}", self.objective.kind.label(), self.transceiver.label()),
            _ => self.objective.kind.label().to_string(),
        }
    }
}

/// Seeded Monte Carlo outcome for one metric over an SNR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub snr_db: Vec<f64>,
    pub metric: Metric,
    pub values: Vec<f64>,
    /// Standard error per SNR point (binomial for BER, sample s.e. for the
    /// averaged metrics).
    pub stderrs: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub design_kind: String,
    /// Set when the THP covariance approximation σ²_s ≈ σ²_a is in play.
    pub sigma_s_approximation: bool,
}

/// Solve the per-hop precoders dictated by the network's constraints and
/// assemble the complete design for the objective.
pub fn design_for_network<T: Scalar>(
    net: &NetworkSpec<T>,
    objective: &ObjectiveSpec<T>,
) -> Result<Design<T>> {
    let pure = net
        .hops
        .iter()
        .all(|h| matches!(h.constraint, Constraint::PureShaping { .. }));
    let joint = net
        .hops
        .iter()
        .all(|h| matches!(h.constraint, Constraint::Joint { .. }));
    let f = if pure {
        net.hops
            .iter()
            .map(|hop| match &hop.constraint {
                Constraint::PureShaping { r_s } => {
                    Ok(solve_pure_shaping(r_s, net.stream_count)?.f)
                }
                Constraint::Joint { .. } => unreachable!(),
            })
            .collect::<Result<Vec<_>>>()?
    } else if joint {
        let alloc = multihop_allocate(
            net,
            objective.waterfill_kind(),
            T::from_f64_lit(1e-8),
            200,
        )?;
        net.hops
            .iter()
            .zip(&alloc.per_hop)
            .map(|(hop, sol)| assemble_joint_f(hop, &sol.powers))
            .collect()
    } else {
        return Err(Error::invalid(
            "mixed shaping/joint constraint chains are not supported",
        ));
    };
    assemble_design(net, objective, &f)
}

/// Bit-level outcome of one BER trial.
#[derive(Debug, Clone, Copy, Default)]
pub struct BerCounts {
    pub bit_errors: u64,
    pub bits: u64,
    pub symbol_errors: u64,
    pub single_bit_symbol_errors: u64,
    pub symbols: u64,
}

impl BerCounts {
    pub fn merge(&mut self, other: &BerCounts) {
        self.bit_errors += other.bit_errors;
        self.bits += other.bits;
        self.symbol_errors += other.symbol_errors;
        self.single_bit_symbol_errors += other.single_bit_symbol_errors;
        self.symbols += other.symbols;
    }

    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }
}

/// Push one symbol block through the chain with fresh noise and detect.
pub fn simulate_ber_trial<T: Scalar>(
    net: &NetworkSpec<T>,
    design: &Design<T>,
    scheme: &ModulationScheme,
    transceiver: TransceiverKind,
    symbols: usize,
    rng: &mut SeededRng,
) -> Result<BerCounts> {
    let n = net.stream_count;
    let g = design
        .g
        .as_ref()
        .ok_or_else(|| Error::invalid("simulate_ber_trial: design carries no equalizer"))?;
    let sigma_a = Float::sqrt(net.signal_variance);
    let base = scheme.modulo_base::<T>() * sigma_a;
    let bits_per_symbol = scheme.bits_per_symbol() as u32;
    let mask = ((1u16 << bits_per_symbol) - 1) as u8;
    let amp = Complex::new(sigma_a, T::zero());
    // With identity feedback the THP pre-canceller cancels nothing and the
    // modulo pair must be a no-op so the path reduces exactly to linear
    // detection.
    let feedback_active = crate::linalg::rel_frob_err(&design.c, &crate::linalg::identity(n))
        > T::from_f64_lit(1e-12);

    let mut counts = BerCounts::default();
    let mut labels = vec![0u8; n];
    for _ in 0..symbols {
        let mut a = CVec::<T>::zeros(n);
        for i in 0..n {
            let (bits, point) = scheme.random_symbol::<T>(rng);
            labels[i] = bits;
            a[i] = point * amp;
        }

        // Transmit-side processing.
        let x0 = match transceiver {
            TransceiverKind::Thp if feedback_active => {
                // v_i = MOD(a_i − Σ_{j<i} B_ij v_j) with B = C − I.
                let mut v = CVec::<T>::zeros(n);
                for i in 0..n {
                    let mut acc = a[i];
                    for j in 0..i {
                        acc -= design.c[(i, j)] * v[j];
                    }
                    let wrapped = thp_modulo(&CVec::<T>::from_vec(vec![acc]), base);
                    v[i] = wrapped[0];
                }
                v
            }
            _ => a.clone(),
        };

        // Propagate through the chain with per-hop noise.
        let mut x = x0;
        for (k, hop) in net.hops.iter().enumerate() {
            let mut next = &hop.channel * (&design.p[k] * x);
            let noise_sd = Complex::new(Float::sqrt(hop.noise_variance), T::zero());
            for v in next.iter_mut() {
                *v += rng.complex_gaussian::<T>() * noise_sd;
            }
            x = next;
        }
        let y = g * x;

        // Detection: stream order follows the lower-triangular feedback.
        let mut decided_bits = vec![0u8; n];
        let mut decided_points = CVec::<T>::zeros(n);
        for i in 0..n {
            let bits = match transceiver {
                TransceiverKind::Linear => scheme.slice_bits(y[i] / amp),
                TransceiverKind::Dfe => {
                    // y_i − Σ_{j<i} B_ij â_j with â_j the decided symbols.
                    let mut acc = y[i];
                    for j in 0..i {
                        acc -= (design.c[(i, j)]) * decided_points[j];
                    }
                    scheme.slice_bits(acc / amp)
                }
                TransceiverKind::Thp if feedback_active => {
                    let wrapped = thp_modulo(&CVec::<T>::from_vec(vec![y[i]]), base);
                    scheme.slice_bits(wrapped[0] / amp)
                }
                TransceiverKind::Thp => scheme.slice_bits(y[i] / amp),
            };
            decided_bits[i] = bits;
            decided_points[i] = scheme.map_bits::<T>(bits) * amp;
        }

        for i in 0..n {
            let diff = (decided_bits[i] ^ labels[i]) & mask;
            let bit_errs = diff.count_ones() as u64;
            counts.bit_errors += bit_errs;
            counts.bits += bits_per_symbol as u64;
            counts.symbols += 1;
            if bit_errs > 0 {
                counts.symbol_errors += 1;
                if bit_errs == 1 {
                    counts.single_bit_symbol_errors += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Template with noise variances set for the given per-hop SNR (dB):
/// `σ²_{n_k} = P_k / 10^(snr/10)`.
fn template_at_snr<T: Scalar>(template: &NetworkTemplate<T>, snr_db: f64) -> NetworkTemplate<T> {
    let snr = 10.0f64.powf(snr_db / 10.0);
    let mut out = template.clone();
    for hop in &mut out.hops {
        hop.noise_variance = hop.power_budget / T::from_f64_lit(snr);
    }
    out
}

/// Run trials `0..trials`, fanned out over `threads` workers in contiguous
/// chunks and re-assembled in trial order, so the outcome is independent
/// of the worker count.
fn run_trials<R, F>(trials: u64, threads: usize, job: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    if threads <= 1 || trials <= 1 {
        return (0..trials).map(&job).collect();
    }
    let workers = threads.min(trials as usize);
    let chunk = trials.div_ceil(workers as u64);
    let mut slots: Vec<Result<Vec<R>>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let lo = w as u64 * chunk;
            let hi = ((w as u64 + 1) * chunk).min(trials);
            let job = &job;
            handles.push(scope.spawn(move || (lo..hi).map(job).collect::<Result<Vec<R>>>()));
        }
        for h in handles {
            slots.push(h.join().expect("trial worker panicked"));
        }
    });
    let mut out = Vec::with_capacity(trials as usize);
    for slot in slots {
        out.extend(slot?);
    }
    Ok(out)
}

const DATA_STREAM_TAG: u64 = 0x6461_7461;

/// BER sweep: per SNR point, draw fresh channels per trial, build the
/// constrained design, and push Gray-mapped symbol blocks through the
/// chain.
pub fn run_ber<T: Scalar>(cfg: &SimConfig<T>) -> Result<SimReport> {
    cfg.validate()?;
    let ensemble = ChannelEnsemble { seed: cfg.seed };
    let mut values = Vec::with_capacity(cfg.snr_db.len());
    let mut stderrs = Vec::with_capacity(cfg.snr_db.len());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let tpl = template_at_snr(&cfg.template, snr);
        let per_trial = run_trials(cfg.trials, cfg.threads, |t| {
            let gid = si as u64 * cfg.trials + t;
            let net = draw_network(&tpl, &ensemble, gid)?;
            let design = design_for_network(&net, &cfg.objective)?;
            let mut rng = SeededRng::derive(cfg.seed, &[gid, DATA_STREAM_TAG]);
            simulate_ber_trial(
                &net,
                &design,
                &cfg.modulation,
                cfg.transceiver,
                cfg.symbols_per_trial,
                &mut rng,
            )
        })?;
        let mut total = BerCounts::default();
        for c in &per_trial {
            total.merge(c);
        }
        let p = total.ber();
        values.push(p);
        stderrs.push((p * (1.0 - p) / total.bits.max(1) as f64).sqrt());
    }
    Ok(SimReport {
        snr_db: cfg.snr_db.clone(),
        metric: Metric::Ber,
        values,
        stderrs,
        trials: cfg.trials,
        seed: cfg.seed,
        design_kind: cfg.design_kind(Metric::Ber),
        sigma_s_approximation: cfg.transceiver == TransceiverKind::Thp,
    })
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-trial ergodic capacity in bits: `−log2 |Φ_LMMSE / σ²_a|`.
fn capacity_bits<T: Scalar>(net: &NetworkSpec<T>, design: &Design<T>) -> Result<f64> {
    let phi = phi_lmmse_compact(net, &design.f, &design.q)?;
    let l = cholesky_lower(&phi)?;
    let mut log_det = 0.0f64;
    for d in l.diag().iter() {
        log_det += 2.0 * d.to_f64().unwrap().ln();
    }
    let n = net.stream_count as f64;
    let sigma2 = net.signal_variance.to_f64().unwrap();
    Ok(-(log_det - n * sigma2.ln()) / std::f64::consts::LN_2)
}

/// Capacity sweep over the SNR grid (uses the LMMSE MSE determinant;
/// no symbol simulation involved).
pub fn run_capacity<T: Scalar>(cfg: &SimConfig<T>) -> Result<SimReport> {
    run_phi_metric(cfg, Metric::Capacity, |net, design| capacity_bits(net, design))
}

/// Normalized sum-MSE sweep: `Tr(Φ_LMMSE) / (N σ²_a)` averaged over trials.
pub fn run_mse<T: Scalar>(cfg: &SimConfig<T>) -> Result<SimReport> {
    run_phi_metric(cfg, Metric::SumMse, |net, design| {
        let phi = phi_lmmse_compact(net, &design.f, &design.q)?;
        let trace = phi.diagonal().iter().map(|z| z.re.to_f64().unwrap()).sum::<f64>();
        Ok(trace / (net.stream_count as f64 * net.signal_variance.to_f64().unwrap()))
    })
}

fn run_phi_metric<T: Scalar, F>(cfg: &SimConfig<T>, metric: Metric, eval: F) -> Result<SimReport>
where
    F: Fn(&NetworkSpec<T>, &Design<T>) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let ensemble = ChannelEnsemble { seed: cfg.seed };
    let mut values = Vec::with_capacity(cfg.snr_db.len());
    let mut stderrs = Vec::with_capacity(cfg.snr_db.len());
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let tpl = template_at_snr(&cfg.template, snr);
        let per_trial = run_trials(cfg.trials, cfg.threads, |t| {
            let gid = si as u64 * cfg.trials + t;
            let net = draw_network(&tpl, &ensemble, gid)?;
            let design = design_for_network(&net, &cfg.objective)?;
            eval(&net, &design)
        })?;
        let (mean, se) = mean_and_stderr(&per_trial);
        values.push(mean);
        stderrs.push(se);
    }
    Ok(SimReport {
        snr_db: cfg.snr_db.clone(),
        metric,
        values,
        stderrs,
        trials: cfg.trials,
        seed: cfg.seed,
        design_kind: cfg.design_kind(metric),
        sigma_s_approximation: false,
    })
}
