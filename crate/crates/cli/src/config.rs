//! Experiment configuration: a flat `key = value` text file with dotted
//! keys, `#` comments, comma-separated lists, and bracketed complex matrix
//! literals (`[1+2i 0; 0 1]`). Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::Complex;
use relay_shaper_core::network::{
    ConstraintScheme, HopTemplate, NetworkTemplate, ShapingScheme, Weighting,
};
use relay_shaper_core::objective::{ObjectiveKind, ObjectiveSpec};
use relay_shaper_core::sim::{Metric, ModulationScheme, TransceiverKind};
use relay_shaper_core::Mat;

/// Configuration/usage error (exit code 2 territory).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Raw parsed key-value file.
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", lineno + 1));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return err(format!("line {}: empty key or value", lineno + 1));
            }
            values.insert(key, value);
        }
        Ok(RawConfig { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|s| s.parse::<f64>().map_err(|_| ConfigError(format!("`{key}`: not a number: {s}"))))
            .transpose()
    }

    fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key)
            .map(|s| s.parse::<u64>().map_err(|_| ConfigError(format!("`{key}`: not an integer: {s}"))))
            .transpose()
    }

    fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => {
                let mut out = Vec::new();
                for part in s.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    out.push(
                        part.parse::<f64>()
                            .map_err(|_| ConfigError(format!("`{key}`: not a number: {part}")))?,
                    );
                }
                Ok(Some(out))
            }
        }
    }

    fn get_str_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|s| {
            s.split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        })
    }
}

/// Parse one complex scalar: `1`, `-2.5`, `3i`, `1+2i`, `1.5e-3-2e-4i`.
pub fn parse_complex(s: &str) -> Result<Complex<f64>, ConfigError> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return err("empty complex literal");
    }
    if let Some(body) = s.strip_suffix(['i', 'j']) {
        // Find the split between real and imaginary parts: the last +/-
        // that is not a leading sign and not part of an exponent.
        let bytes = body.as_bytes();
        let mut split = None;
        for idx in (1..bytes.len()).rev() {
            let ch = bytes[idx] as char;
            if (ch == '+' || ch == '-') && !matches!(bytes[idx - 1] as char, 'e' | 'E') {
                split = Some(idx);
                break;
            }
        }
        match split {
            Some(idx) => {
                let re: f64 = body[..idx]
                    .parse()
                    .map_err(|_| ConfigError(format!("bad real part in `{s}`")))?;
                let imag_str = &body[idx..];
                let im: f64 = if imag_str == "+" {
                    1.0
                } else if imag_str == "-" {
                    -1.0
                } else {
                    imag_str.parse().map_err(|_| ConfigError(format!("bad imaginary part in `{s}`")))?
                };
                Ok(Complex::new(re, im))
            }
            None => {
                let im: f64 = if body.is_empty() {
                    1.0
                } else if body == "-" {
                    -1.0
                } else {
                    body.parse().map_err(|_| ConfigError(format!("bad imaginary literal `{s}`")))?
                };
                Ok(Complex::new(0.0, im))
            }
        }
    } else {
        let re: f64 = s.parse().map_err(|_| ConfigError(format!("bad number `{s}`")))?;
        Ok(Complex::new(re, 0.0))
    }
}

/// Parse a bracketed matrix literal: rows separated by `;`, entries by
/// whitespace.
pub fn parse_matrix(s: &str) -> Result<Mat, ConfigError> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| ConfigError(format!("matrix literal must be bracketed: {s}")))?;
    let mut rows: Vec<Vec<Complex<f64>>> = Vec::new();
    for row in inner.split(';') {
        let entries: Vec<&str> = row.split_whitespace().collect();
        if entries.is_empty() {
            continue;
        }
        let mut parsed = Vec::with_capacity(entries.len());
        for e in entries {
            parsed.push(parse_complex(e)?);
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return err("empty matrix literal");
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return err("ragged matrix literal");
    }
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// A single point of the constraint sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Suffix appended to the design label, e.g. `tau1.4` or `rho0.5`.
    pub label: String,
    pub constraint: ConstraintScheme<f64>,
}

/// Fully resolved experiment description.
pub struct ExperimentConfig {
    pub hops: usize,
    pub rx: Vec<usize>,
    pub tx: Vec<usize>,
    pub streams: usize,
    pub powers: Vec<f64>,
    pub signal_variance: f64,
    pub sweep: Vec<SweepPoint>,
    pub objectives: Vec<ObjectiveSpec<f64>>,
    pub transceivers: Vec<TransceiverKind>,
    pub metric: Metric,
    pub modulation: ModulationScheme,
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub symbols: usize,
    pub seed: u64,
    pub threads: usize,
    pub out: Option<PathBuf>,
    /// Explicit per-hop channels for `design` (drawn from the seed when
    /// absent).
    pub channels: Option<Vec<Mat>>,
    /// Draw index used by `design` when channels come from the seed.
    pub trial: u64,
}

fn parse_objective(name: &str, raw: &RawConfig) -> Result<ObjectiveSpec<f64>, ConfigError> {
    let kind = match name {
        "weighted_mse" => ObjectiveKind::WeightedMse,
        "capacity" => ObjectiveKind::Capacity,
        "aschur_convex" => ObjectiveKind::ASchurConvex,
        "aschur_concave" => ObjectiveKind::ASchurConcave,
        "mschur_convex" => ObjectiveKind::MSchurConvex,
        "mschur_concave" => ObjectiveKind::MSchurConcave,
        other => return err(format!("unknown objective `{other}`")),
    };
    if kind == ObjectiveKind::WeightedMse {
        let w = match raw.get("objective.weight") {
            Some(lit) => parse_matrix(lit)?,
            None => return err("objective `weighted_mse` needs `objective.weight`"),
        };
        Ok(ObjectiveSpec::weighted_mse(w))
    } else {
        Ok(ObjectiveSpec::of_kind(kind))
    }
}

fn parse_transceiver(name: &str) -> Result<TransceiverKind, ConfigError> {
    match name {
        "linear" => Ok(TransceiverKind::Linear),
        "dfe" => Ok(TransceiverKind::Dfe),
        "thp" => Ok(TransceiverKind::Thp),
        other => err(format!("unknown transceiver `{other}`")),
    }
}

fn expand_per_hop(values: Option<Vec<f64>>, hops: usize, what: &str) -> Result<Vec<f64>, ConfigError> {
    match values {
        None => err(format!("missing `{what}`")),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; hops]),
        Some(v) if v.len() == hops => Ok(v),
        Some(v) => err(format!("`{what}`: expected 1 or {hops} values, got {}", v.len())),
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
        let hops = raw.get_usize("network.hops")?.unwrap_or(1);
        if hops == 0 {
            return err("`network.hops` must be at least 1");
        }
        let rx = expand_per_hop(raw.get_f64_list("network.rx")?, hops, "network.rx")?
            .into_iter()
            .map(|v| v as usize)
            .collect::<Vec<_>>();
        let tx = expand_per_hop(raw.get_f64_list("network.tx")?, hops, "network.tx")?
            .into_iter()
            .map(|v| v as usize)
            .collect::<Vec<_>>();
        let streams = raw
            .get_usize("network.streams")?
            .ok_or_else(|| ConfigError("missing `network.streams`".into()))?;
        let powers = expand_per_hop(raw.get_f64_list("network.power")?, hops, "network.power")?;
        let signal_variance = raw.get_f64("signal.variance")?.unwrap_or(1.0);

        let sweep = Self::parse_sweep(raw)?;

        let objectives = raw
            .get_str_list("objective")
            .unwrap_or_else(|| vec!["capacity".to_string()])
            .iter()
            .map(|name| parse_objective(name, raw))
            .collect::<Result<Vec<_>, _>>()?;
        if objectives.is_empty() {
            return err("no objectives given");
        }

        let transceivers = raw
            .get_str_list("transceiver")
            .unwrap_or_else(|| vec!["linear".to_string()])
            .iter()
            .map(|s| parse_transceiver(s))
            .collect::<Result<Vec<_>, _>>()?;

        let metric = match raw.get("metric").unwrap_or("ber") {
            "ber" => Metric::Ber,
            "capacity" => Metric::Capacity,
            "mse" | "sum_mse" => Metric::SumMse,
            other => return err(format!("unknown metric `{other}`")),
        };
        let modulation = match raw.get("modulation").unwrap_or("qpsk") {
            "qpsk" => ModulationScheme::qpsk(),
            "qam16" | "16qam" => ModulationScheme::qam16(),
            other => return err(format!("unknown modulation `{other}`")),
        };

        let snr_db = raw.get_f64_list("snr_db")?.unwrap_or_default();
        let trials = raw.get_u64("trials")?.unwrap_or(100);
        let symbols = raw.get_usize("symbols")?.unwrap_or(100);
        let seed = raw.get_u64("seed")?.unwrap_or(1);
        let threads = raw.get_usize("threads")?.unwrap_or(0);
        let out = raw.get("out").map(PathBuf::from);
        let trial = raw.get_u64("design.trial")?.unwrap_or(0);

        let channels = {
            let mut mats = Vec::new();
            for k in 0..hops {
                match raw.get(&format!("hop{}.channel", k + 1)) {
                    Some(lit) => mats.push(parse_matrix(lit)?),
                    None => break,
                }
            }
            if mats.is_empty() {
                None
            } else if mats.len() == hops {
                Some(mats)
            } else {
                return err("either give `hopK.channel` for every hop or none");
            }
        };

        Ok(ExperimentConfig {
            hops,
            rx,
            tx,
            streams,
            powers,
            signal_variance,
            sweep,
            objectives,
            transceivers,
            metric,
            modulation,
            snr_db,
            trials,
            symbols,
            seed,
            threads,
            out,
            channels,
            trial,
        })
    }

    fn parse_sweep(raw: &RawConfig) -> Result<Vec<SweepPoint>, ConfigError> {
        match raw.require("constraint.kind")? {
            "joint" => {
                let taus = raw
                    .get_f64_list("constraint.tau")?
                    .ok_or_else(|| ConfigError("joint constraints need `constraint.tau`".into()))?;
                if taus.is_empty() {
                    return err("`constraint.tau` is empty");
                }
                Ok(taus
                    .into_iter()
                    .map(|tau| SweepPoint {
                        label: format!("tau{tau}"),
                        constraint: ConstraintScheme::Joint { tau_max: tau },
                    })
                    .collect())
            }
            "shaping" => {
                let thresholds = raw.get_f64_list("constraint.thresholds")?;
                match raw.get("constraint.scheme").unwrap_or("exponential") {
                    "exponential" => {
                        let thresholds = thresholds
                            .ok_or_else(|| ConfigError("shaping needs `constraint.thresholds`".into()))?;
                        let rhos = raw.get_f64_list("constraint.rho")?.unwrap_or_else(|| vec![0.0]);
                        Ok(rhos
                            .into_iter()
                            .map(|rho| SweepPoint {
                                label: format!("rho{rho}"),
                                constraint: ConstraintScheme::Shaping(ShapingScheme::Exponential {
                                    thresholds: thresholds.clone(),
                                    rho,
                                }),
                            })
                            .collect())
                    }
                    "channel_matched" => {
                        let thresholds = thresholds
                            .ok_or_else(|| ConfigError("shaping needs `constraint.thresholds`".into()))?;
                        let etas = raw.get_f64_list("constraint.eta")?.unwrap_or_else(|| vec![0.0]);
                        let weighting = match raw.get("constraint.weighting").unwrap_or("matrix") {
                            "matrix" => Weighting::Matrix,
                            "scalar" => Weighting::Scalar,
                            other => return err(format!("unknown weighting `{other}`")),
                        };
                        Ok(etas
                            .into_iter()
                            .map(|eta| SweepPoint {
                                label: format!("eta{eta}"),
                                constraint: ConstraintScheme::Shaping(ShapingScheme::ChannelMatched {
                                    thresholds: thresholds.clone(),
                                    eta,
                                    weighting,
                                }),
                            })
                            .collect())
                    }
                    "explicit" => {
                        let lit = raw.require("constraint.r_s")?;
                        Ok(vec![SweepPoint {
                            label: "rs".into(),
                            constraint: ConstraintScheme::Shaping(ShapingScheme::Explicit {
                                r_s: parse_matrix(lit)?,
                            }),
                        }])
                    }
                    other => err(format!("unknown shaping scheme `{other}`")),
                }
            }
            other => err(format!("unknown constraint kind `{other}`")),
        }
    }

    /// Network template for one sweep point.
    pub fn template(&self, point: &SweepPoint) -> NetworkTemplate<f64> {
        NetworkTemplate {
            hops: (0..self.hops)
                .map(|k| HopTemplate {
                    rx: self.rx[k],
                    tx: self.tx[k],
                    noise_variance: 1.0,
                    power_budget: self.powers[k],
                    constraint: point.constraint.clone(),
                })
                .collect(),
            stream_count: self.streams,
            signal_variance: self.signal_variance,
        }
    }

    /// Sanity checks shared by the subcommands.
    pub fn validate_for_simulate(&self) -> Result<(), ConfigError> {
        if self.snr_db.is_empty() {
            return err("`snr_db` must list at least one SNR point");
        }
        if self.trials == 0 {
            return err("`trials` must be at least 1");
        }
        if self.streams == 0 {
            return err("`network.streams` must be at least 1");
        }
        for k in 0..self.hops {
            if self.rx[k] < self.streams || self.tx[k] < self.streams {
                return err(format!(
                    "hop {}: antennas {}x{} below stream count {}",
                    k + 1,
                    self.rx[k],
                    self.tx[k],
                    self.streams
                ));
            }
            if self.powers[k] <= 0.0 {
                return err(format!("hop {}: power must be positive", k + 1));
            }
        }
        Ok(())
    }
}
