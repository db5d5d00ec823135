//! End-to-end tests of the three subcommands: exit codes, output schema,
//! determinism, and the solver worked instances.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relay-shaper"))
}

fn tmp(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("relay_shaper_test_{}_{name}", std::process::id()));
    p
}

fn write_cfg(name: &str, body: &str) -> PathBuf {
    let path = tmp(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const JOINT_CFG: &str = "
network.hops = 3
network.rx = 4
network.tx = 4
network.streams = 4
network.power = 4.0
constraint.kind = joint
constraint.tau = 1.4
objective = aschur_convex
transceiver = linear
modulation = qpsk
metric = ber
snr_db = 5,15
trials = 3
symbols = 10
seed = 9
";

#[test]
fn waterfill_worked_instance() {
    let out = bin()
        .args(["waterfill", "--gains", "4,1", "--budget", "2", "--cap", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("8.333333e-1"), "{text}");
    assert!(text.contains("1.166667e0"), "{text}");
    assert!(text.contains("sum power constraint active"), "{text}");
}

#[test]
fn waterfill_capped_instance() {
    let out = bin()
        .args(["waterfill", "--gains", "4,1", "--budget", "2", "--cap", "1.0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    let power_lines: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with('1') || l.starts_with('2'))
        .collect();
    assert_eq!(power_lines.len(), 2, "{text}");
    for line in power_lines {
        assert!(line.contains("1.000000e0"), "{line}");
    }
}

#[test]
fn waterfill_single_channel_takes_min() {
    let out = bin()
        .args(["waterfill", "--gains", "2.0", "--budget", "0.7", "--cap", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("7.000000e-1"));
}

#[test]
fn waterfill_rejects_inconsistent_lengths() {
    let out = bin()
        .args(["waterfill", "--gains", "4,1", "--aux", "1", "--budget", "2", "--cap", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_row_count_and_determinism() {
    let cfg = write_cfg(
        "sweep.cfg",
        "
network.hops = 3
network.rx = 4
network.tx = 4
network.streams = 4
network.power = 4.0
constraint.kind = joint
constraint.tau = 1.2,1.4,1.8
objective = aschur_convex,aschur_concave
transceiver = linear
modulation = qpsk
metric = ber
snr_db = 5,15
trials = 2
symbols = 10
seed = 11
",
    );
    let out_a = tmp("rows_a.csv");
    let out_b = tmp("rows_b.csv");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "reruns must be byte-identical");

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "snr_db,metric,value,stderr,trials,design_kind,seed"
    );
    // 2 objectives x 3 taus x 2 SNR points.
    assert_eq!(lines.count(), 12);

    // Round-trip at 12 significant digits.
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        let value: f64 = fields[2].parse().unwrap();
        let rendered = format!("{value:.12e}");
        assert_eq!(rendered, fields[2]);
    }
}

#[test]
fn simulate_threads_do_not_change_results() {
    let cfg = write_cfg("threads.cfg", JOINT_CFG);
    let out_a = tmp("thr_a.csv");
    let out_b = tmp("thr_b.csv");
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_a)
        .args(["--threads", "1"])
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_b)
        .env("RELAY_SHAPER_THREADS", "4")
        .status()
        .unwrap()
        .success());
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
}

#[test]
fn simulate_rejects_empty_snr_grid() {
    let cfg = write_cfg(
        "nosnr.cfg",
        "
network.hops = 1
network.rx = 2
network.tx = 2
network.streams = 2
network.power = 2.0
constraint.kind = joint
constraint.tau = 1.0
metric = ber
trials = 1
",
    );
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let cfg = write_cfg("broken.cfg", "this is not a config\n");
    for sub in ["simulate", "design"] {
        let out = bin().args([sub, "--config"]).arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{sub}");
    }
    let missing = tmp("does_not_exist.cfg");
    let out = bin().args(["simulate", "--config"]).arg(&missing).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let cfg = write_cfg("io.cfg", JOINT_CFG);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--trials", "1", "--out", "/nonexistent-dir/x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn design_pure_shaping_saturates_diagonal_r_s() {
    let cfg = write_cfg(
        "shaping_design.cfg",
        "
network.hops = 1
network.rx = 4
network.tx = 4
network.streams = 4
network.power = 4.0
constraint.kind = shaping
constraint.scheme = explicit
constraint.r_s = [0.4 0 0 0; 0 0.8 0 0; 0 0 1.2 0; 0 0 0 1.6]
objective = capacity
snr_db = 10
seed = 3
",
    );
    let out_path = tmp("design_shaping.txt");
    assert!(bin()
        .args(["design", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("audit.constraint = satisfied"), "{text}");
    // F F^H = R_s exactly: trace 4.0, max eigenvalue 1.6, full rank.
    assert!(text.contains("audit.trace = 4.000000000000e0"), "{text}");
    assert!(text.contains("audit.max_eigenvalue = 1.600000000000e0"), "{text}");
    assert!(text.contains("audit.rank = 4"), "{text}");
}

#[test]
fn design_joint_respects_peak_power() {
    let cfg = write_cfg("joint_design.cfg", JOINT_CFG);
    let out_path = tmp("design_joint.txt");
    assert!(bin()
        .args(["design", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut audits = 0;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("audit.max_eigenvalue = ") {
            let v: f64 = rest.trim().parse().unwrap();
            assert!(v <= 1.4 + 1e-9, "eigen-power {v} above cap");
            audits += 1;
        }
        if line.starts_with("audit.constraint") {
            assert!(line.contains("satisfied"), "{line}");
        }
    }
    assert_eq!(audits, 3);
}

#[test]
fn design_accepts_explicit_channels() {
    let cfg = write_cfg(
        "explicit.cfg",
        "
network.hops = 1
network.rx = 2
network.tx = 2
network.streams = 2
network.power = 2.0
constraint.kind = joint
constraint.tau = 1.0
objective = capacity
hop1.channel = [1+0i 0; 0 1]
snr_db = 10
",
    );
    let out = bin().args(["design", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("channel = [+1.000000000e0+0.000000000e0i"), "{text}");
}
