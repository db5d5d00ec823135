//! relay-shaper: batch experiment runner and solver front-end.
//!
//! Subcommands:
//! - `design`: compute one transceiver design and dump its matrices plus a
//!   per-hop constraint audit.
//! - `simulate`: sweep SNR (and the constraint grid) and emit one CSV row
//!   per point.
//! - `waterfill`: run the capped water-filling solver on explicit gains.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, ExperimentConfig, RawConfig};
use relay_shaper_core::linalg::hermitian_eigenvalues;
use relay_shaper_core::mse::transmit_covariance;
use relay_shaper_core::network::{
    draw_network, realize_shaping, ChannelEnsemble, Constraint, ConstraintScheme, HopSpec,
    NetworkSpec,
};
use relay_shaper_core::sim::{
    design_for_network, run_ber, run_capacity, run_mse, Metric, SimConfig, SimReport,
};
use relay_shaper_core::waterfill::{
    cave_waterfill, kkt_residuals, WaterfillKind, WaterfillProblem,
};
use relay_shaper_core::Mat;

#[derive(Parser)]
#[command(name = "relay-shaper", version, about = "Transceiver designs and link simulation for multi-hop AF MIMO relay chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (falls back to RELAY_SHAPER_THREADS, then config).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct WaterfillArgs {
    /// Eigenchannel gains h², comma separated, nonincreasing.
    #[arg(long, value_delimiter = ',')]
    gains: Vec<f64>,
    /// Cross-hop factors a in (0, 1]; defaults to all ones.
    #[arg(long, value_delimiter = ',')]
    aux: Option<Vec<f64>>,
    /// Sum power budget.
    #[arg(long)]
    budget: f64,
    /// Per-eigenchannel cap (omit for unbounded).
    #[arg(long)]
    cap: Option<f64>,
    /// Objective family: aschur_convex | mschur_convex.
    #[arg(long, default_value = "aschur_convex")]
    kind: String,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one design and write a matrix/audit dump.
    Design(CommonArgs),
    /// Run a Monte Carlo sweep and write CSV rows.
    Simulate(CommonArgs),
    /// Solve one cave water-filling instance and print the allocation.
    Waterfill(WaterfillArgs),
}

enum CliError {
    Config(String),
    Io(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<relay_shaper_core::Error> for CliError {
    fn from(e: relay_shaper_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(args) => cmd_design(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Waterfill(args) => cmd_waterfill(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("I/O error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let raw = RawConfig::parse(&text)?;
    let mut cfg = ExperimentConfig::from_raw(&raw)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.threads = args
        .threads
        .or_else(|| {
            std::env::var("RELAY_SHAPER_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(cfg.threads)
        .max(1);
    Ok(cfg)
}

fn write_output(path: Option<&PathBuf>, body: &str) -> Result<(), CliError> {
    match path {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{body}");
            std::io::stdout()
                .flush()
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn format_matrix(m: &Mat) -> String {
    let mut rows = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| {
                let z = m[(i, j)];
                format!("{:+.9e}{:+.9e}i", z.re, z.im)
            })
            .collect();
        rows.push(row.join(" "));
    }
    format!("[{}]", rows.join("; "))
}

// -------------------------------------------------------------------------
// design
// -------------------------------------------------------------------------

fn cmd_design(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args)?;
    cfg.validate_for_simulate().or_else(|e| {
        // The design command tolerates an empty SNR grid: it uses unit
        // noise unless an SNR point is given.
        if cfg.snr_db.is_empty() && e.0.contains("snr_db") {
            Ok(())
        } else {
            Err(e)
        }
    })?;
    if cfg.sweep.len() != 1 {
        return Err(CliError::Config(
            "`design` needs exactly one constraint point (no sweep lists)".into(),
        ));
    }
    if cfg.objectives.len() != 1 {
        return Err(CliError::Config("`design` needs exactly one objective".into()));
    }
    let point = &cfg.sweep[0];
    let objective = &cfg.objectives[0];

    // Realize the network: explicit channels when given, a seeded draw
    // otherwise; noise from the first SNR point when present.
    let noise: Vec<f64> = match cfg.snr_db.first() {
        Some(&snr) => cfg.powers.iter().map(|p| p / 10f64.powf(snr / 10.0)).collect(),
        None => vec![1.0; cfg.hops],
    };
    let net: NetworkSpec<f64> = match &cfg.channels {
        Some(channels) => {
            let mut hops = Vec::new();
            for (k, channel) in channels.iter().enumerate() {
                let constraint = match &point.constraint {
                    ConstraintScheme::Joint { tau_max } => Constraint::Joint { tau_max: *tau_max },
                    ConstraintScheme::Shaping(scheme) => Constraint::PureShaping {
                        r_s: realize_shaping(scheme, channel)?,
                    },
                };
                hops.push(HopSpec {
                    channel: channel.clone(),
                    noise_variance: noise[k],
                    power_budget: cfg.powers[k],
                    constraint,
                });
            }
            let net = NetworkSpec {
                hops,
                stream_count: cfg.streams,
                signal_variance: cfg.signal_variance,
            };
            net.validate()?;
            net
        }
        None => {
            let mut template = cfg.template(point);
            for (k, hop) in template.hops.iter_mut().enumerate() {
                hop.noise_variance = noise[k];
            }
            draw_network(&template, &ChannelEnsemble { seed: cfg.seed }, cfg.trial)?
        }
    };

    let design = design_for_network(&net, objective)?;

    let mut out = String::new();
    out.push_str("# relay-shaper design dump\n");
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out.push_str(&format!("trial = {}\n", cfg.trial));
    out.push_str(&format!("objective = {}\n", objective.kind.label()));
    out.push_str(&format!("constraint = {}\n", point.label));
    out.push_str(&format!("hops = {}\n", net.hop_count()));
    out.push_str(&format!("streams = {}\n", net.stream_count));
    for warning in net.warnings() {
        out.push_str(&format!("warning = {warning}\n"));
    }
    let rank_tol = 1e-9;
    for (k, hop) in net.hops.iter().enumerate() {
        out.push_str(&format!("\n[hop {}]\n", k + 1));
        out.push_str(&format!("noise_variance = {:.12e}\n", hop.noise_variance));
        out.push_str(&format!("power_budget = {:.12e}\n", hop.power_budget));
        out.push_str(&format!("channel = {}\n", format_matrix(&hop.channel)));
        out.push_str(&format!("F = {}\n", format_matrix(&design.f[k])));
        out.push_str(&format!("Q = {}\n", format_matrix(&design.q[k])));
        out.push_str(&format!("P = {}\n", format_matrix(&design.p[k])));

        let cov = transmit_covariance(&net, &design.p, k)?;
        let eigs = hermitian_eigenvalues(&cov)?;
        let trace: f64 = cov.diagonal().iter().map(|z| z.re).sum();
        let rank = eigs.iter().filter(|&&v| v > rank_tol * eigs[0].max(1e-300)).count();
        out.push_str(&format!("achieved_covariance = {}\n", format_matrix(&cov)));
        out.push_str(&format!("audit.trace = {trace:.12e}\n"));
        out.push_str(&format!("audit.max_eigenvalue = {:.12e}\n", eigs[0]));
        out.push_str(&format!("audit.rank = {rank}\n"));
        match &hop.constraint {
            Constraint::PureShaping { r_s } => {
                let slack = hermitian_eigenvalues(&(r_s - &cov))?;
                let margin = slack[slack.len() - 1];
                let ok = margin >= -1e-9 * eigs[0].max(1.0);
                out.push_str(&format!(
                    "audit.constraint = {} (min_eig(R_s - FF^H) = {margin:.3e})\n",
                    if ok { "satisfied" } else { "violated" }
                ));
            }
            Constraint::Joint { tau_max } => {
                let power_ok = trace <= hop.power_budget + 1e-9;
                let peak_ok = eigs[0] <= tau_max + 1e-9;
                out.push_str(&format!(
                    "audit.constraint = {} (sum {:.6e} <= {:.6e}, peak {:.6e} <= {:.6e})\n",
                    if power_ok && peak_ok { "satisfied" } else { "violated" },
                    trace,
                    hop.power_budget,
                    eigs[0],
                    tau_max
                ));
            }
        }
    }
    out.push_str("\n[equalizer]\n");
    out.push_str(&format!("G = {}\n", format_matrix(design.g.as_ref().unwrap())));
    out.push_str("\n[feedback]\n");
    out.push_str(&format!("C = {}\n", format_matrix(&design.c)));

    write_output(cfg.out.as_ref(), &out)
}

// -------------------------------------------------------------------------
// simulate
// -------------------------------------------------------------------------

fn csv_rows(report: &SimReport, out: &mut String) {
    for (i, &snr) in report.snr_db.iter().enumerate() {
        out.push_str(&format!(
            "{snr:.6},{},{:.12e},{:.12e},{},{},{}\n",
            report.metric.label(),
            report.values[i],
            report.stderrs[i],
            report.trials,
            report.design_kind,
            report.seed
        ));
    }
}

fn cmd_simulate(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args)?;
    cfg.validate_for_simulate()?;

    let mut body = String::from("snr_db,metric,value,stderr,trials,design_kind,seed\n");
    for objective in &cfg.objectives {
        let transceivers: &[relay_shaper_core::sim::TransceiverKind] = match cfg.metric {
            Metric::Ber => &cfg.transceivers,
            // The averaged metrics do not involve detection.
            _ => &[relay_shaper_core::sim::TransceiverKind::Linear],
        };
        for &transceiver in transceivers {
            for point in &cfg.sweep {
                let sim = SimConfig {
                    template: cfg.template(point),
                    objective: objective.clone(),
                    transceiver,
                    modulation: cfg.modulation,
                    snr_db: cfg.snr_db.clone(),
                    trials: cfg.trials,
                    symbols_per_trial: cfg.symbols,
                    seed: cfg.seed,
                    threads: cfg.threads,
                };
                let mut report = match cfg.metric {
                    Metric::Ber => run_ber(&sim)?,
                    Metric::Capacity => run_capacity(&sim)?,
                    Metric::SumMse => run_mse(&sim)?,
                };
                report.design_kind = format!("{}_{}", report.design_kind, point.label);
                csv_rows(&report, &mut body);
            }
        }
    }
    write_output(cfg.out.as_ref(), &body)
}

// -------------------------------------------------------------------------
// waterfill
// -------------------------------------------------------------------------

fn cmd_waterfill(args: WaterfillArgs) -> Result<(), CliError> {
    if args.gains.is_empty() {
        return Err(CliError::Config("`--gains` must list at least one channel".into()));
    }
    let aux = match &args.aux {
        Some(aux) => {
            if aux.len() != args.gains.len() {
                return Err(CliError::Config(format!(
                    "`--aux` has {} entries but `--gains` has {}",
                    aux.len(),
                    args.gains.len()
                )));
            }
            aux.clone()
        }
        None => vec![1.0; args.gains.len()],
    };
    let kind = match args.kind.as_str() {
        "aschur_convex" => WaterfillKind::ASchurConvex,
        "mschur_convex" => WaterfillKind::MSchurConvex,
        other => {
            return Err(CliError::Config(format!(
                "unknown kind `{other}` (aschur_convex | mschur_convex)"
            )))
        }
    };

    // The solver expects gains sorted nonincreasing; solve in sorted order
    // and report in the caller's order.
    let n = args.gains.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| args.gains[j].partial_cmp(&args.gains[i]).unwrap());
    let problem = WaterfillProblem {
        gains: order.iter().map(|&i| args.gains[i]).collect(),
        aux: order.iter().map(|&i| aux[i]).collect(),
        budget: args.budget,
        cap: args.cap.unwrap_or(f64::INFINITY),
        kind,
    };
    let solution = cave_waterfill(&problem)?;
    let residuals = kkt_residuals(&problem, &solution);

    let mut power = vec![0.0; n];
    let mut capped = vec![false; n];
    let mut residual = vec![0.0; n];
    for (slot, &src) in order.iter().enumerate() {
        power[src] = solution.powers[slot];
        capped[src] = solution.capped[slot];
        residual[src] = residuals[slot];
    }

    println!("cave water-filling ({})", args.kind);
    println!(
        "budget = {:.6e}  cap = {:.6e}",
        args.budget,
        args.cap.unwrap_or(f64::INFINITY)
    );
    println!("channel  gain          aux           power         capped  kkt_residual");
    for i in 0..n {
        println!(
            "{:<8} {:<13.6e} {:<13.6e} {:<13.6e} {:<7} {:.3e}",
            i + 1,
            args.gains[i],
            aux[i],
            power[i],
            if capped[i] { "yes" } else { "no" },
            residual[i]
        );
    }
    println!("multiplier = {:.12e}", solution.multiplier);
    let spent: f64 = power.iter().sum();
    println!(
        "spent = {:.12e} ({})",
        spent,
        if solution.sum_inactive {
            "sum power constraint inactive: all channels capped"
        } else {
            "sum power constraint active"
        }
    );
    Ok(())
}
