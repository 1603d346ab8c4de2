//! Command-line plumbing: `key=value` configs, CSV tables with a metadata
//! sidecar, and the self-test suite.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::channel::{self, sample_channel};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::harness::{Column, CurveTable, Stat, TableMetadata};
use crate::mmse::{self, SpectralSummary};
use crate::modopt;
use crate::oracle;
use crate::queueing;
use crate::simo;

/// Config keys in serialization order.
pub const CONFIG_KEYS: [&str; 18] = [
    "K",
    "N_t",
    "N_r",
    "sigma2",
    "tau",
    "R_s",
    "B",
    "L",
    "L_h",
    "r",
    "P_0",
    "b_total",
    "b_min",
    "p_e_sensitive",
    "p_e_tolerant",
    "rho",
    "P_ref",
    "Q_0",
];

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::Parse {
        line,
        key: key.to_string(),
        reason: format!("cannot parse `{value}`: {e}"),
    })
}

/// Parses `key=value` lines. Blank lines and `#` comments are ignored, omitted
/// keys keep their defaults, and `B` follows `R_s` unless set explicitly.
pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let mut cfg = SystemConfig::default();
    let mut seen: Vec<(String, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                key: content.to_string(),
                reason: "expected `key=value`".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
            return Err(Error::Parse {
                line,
                key: key.to_string(),
                reason: format!("duplicate key (first set on line {first})"),
            });
        }
        match key {
            "K" => cfg.users = parse_value(line, key, value)?,
            "N_t" => cfg.tx_antennas = parse_value(line, key, value)?,
            "N_r" => cfg.rx_antennas = parse_value(line, key, value)?,
            "sigma2" => cfg.noise_power = parse_value(line, key, value)?,
            "tau" => cfg.csi_error = parse_value(line, key, value)?,
            "R_s" => cfg.symbol_rate = parse_value(line, key, value)?,
            "B" => cfg.bandwidth = parse_value(line, key, value)?,
            "L" => cfg.packet_bits = parse_value(line, key, value)?,
            "L_h" => cfg.header_bits = parse_value(line, key, value)?,
            "r" => cfg.arrival_rate = parse_value(line, key, value)?,
            "P_0" => cfg.circuit_power = parse_value(line, key, value)?,
            "b_total" => cfg.bits_per_use = parse_value(line, key, value)?,
            "b_min" => cfg.min_bits = parse_value(line, key, value)?,
            "p_e_sensitive" => cfg.ser_sensitive = parse_value(line, key, value)?,
            "p_e_tolerant" => cfg.ser_tolerant = parse_value(line, key, value)?,
            "rho" => cfg.heavy_fraction = parse_value(line, key, value)?,
            "P_ref" => cfg.reference_power = parse_value(line, key, value)?,
            "Q_0" => {
                cfg.buffer_packets = if value.eq_ignore_ascii_case("inf") {
                    None
                } else {
                    Some(parse_value(line, key, value)?)
                }
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    key: key.to_string(),
                    reason: "unknown key".into(),
                })
            }
        }
        seen.push((key.to_string(), line));
    }
    if !seen.iter().any(|(k, _)| k == "B") {
        cfg.bandwidth = cfg.symbol_rate;
    }
    if let Err(Error::InvalidConfig { key, reason }) = cfg.validate() {
        let line = seen.iter().find(|(k, _)| k == key).map(|(_, l)| *l).unwrap_or(0);
        return Err(Error::Parse {
            line,
            key: key.to_string(),
            reason,
        });
    }
    Ok(cfg)
}

/// Every config key, one per line, in a form `parse_config` reads back exactly.
pub fn serialize_config(cfg: &SystemConfig) -> String {
    let mut s = String::new();
    let q0 = cfg.buffer_packets.map_or("inf".to_string(), |q| q.to_string());
    let values: [String; 18] = [
        cfg.users.to_string(),
        cfg.tx_antennas.to_string(),
        cfg.rx_antennas.to_string(),
        cfg.noise_power.to_string(),
        cfg.csi_error.to_string(),
        cfg.symbol_rate.to_string(),
        cfg.bandwidth.to_string(),
        cfg.packet_bits.to_string(),
        cfg.header_bits.to_string(),
        cfg.arrival_rate.to_string(),
        cfg.circuit_power.to_string(),
        cfg.bits_per_use.to_string(),
        cfg.min_bits.to_string(),
        cfg.ser_sensitive.to_string(),
        cfg.ser_tolerant.to_string(),
        cfg.heavy_fraction.to_string(),
        cfg.reference_power.to_string(),
        q0,
    ];
    for (k, v) in CONFIG_KEYS.iter().zip(values) {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// 17 significant digits; `NA` for anything non-finite.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NA".to_string()
    }
}

fn sanitize(reason: &str) -> String {
    reason.replace([',', '\n', '\r'], ";")
}

/// CSV body: `x, <col>_mean, <col>_se, <col>_n ..., reason`.
pub fn csv_string(table: &CurveTable) -> String {
    let mut out = String::new();
    out.push_str(&table.x_name);
    for c in &table.columns {
        let _ = write!(out, ",{0}_mean,{0}_se,{0}_n", c.name);
    }
    out.push_str(",reason\n");
    for (row, x) in table.x.iter().enumerate() {
        out.push_str(&format_value(*x));
        for c in &table.columns {
            match c.stats[row] {
                Some(s) => {
                    let _ = write!(out, ",{},{},{}", format_value(s.mean), format_value(s.std_error), s.n);
                }
                None => out.push_str(",NA,NA,0"),
            }
        }
        let _ = writeln!(out, ",{}", sanitize(&table.reasons[row]));
    }
    out
}

pub fn metadata_string(meta: &TableMetadata) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment={}", meta.experiment);
    let _ = writeln!(s, "seed={}", meta.seed);
    let _ = writeln!(s, "trials={}", meta.trials);
    if let Some(ts) = &meta.timestamp {
        let _ = writeln!(s, "timestamp={ts}");
    }
    s.push_str(&serialize_config(&meta.config));
    s
}

/// Sidecar path: `<path>.meta`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Writes the table as CSV and its metadata next to it.
pub fn emit_csv(table: &CurveTable, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::write(path, csv_string(table)).map_err(io)?;
    let meta = sidecar_path(path);
    fs::write(&meta, metadata_string(&table.metadata)).map_err(|source| Error::Io { path: meta, source })
}

/// Reads a CSV written by [`emit_csv`]. Metadata is not restored; the returned
/// table carries a default config.
pub fn read_csv(path: &Path) -> Result<CurveTable> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<CurveTable> {
    let bad = |line: usize, reason: &str| Error::Parse {
        line,
        key: "csv".into(),
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file"))?.split(',').collect();
    if header.len() < 2 || header.last() != Some(&"reason") || (header.len() - 2) % 3 != 0 {
        return Err(bad(1, "unexpected header"));
    }
    let mut columns: Vec<Column> = header[1..header.len() - 1]
        .chunks(3)
        .map(|c| Column {
            name: c[0].trim_end_matches("_mean").to_string(),
            stats: Vec::new(),
        })
        .collect();
    let mut x = Vec::new();
    let mut reasons = Vec::new();
    for (idx, line) in lines.enumerate() {
        let n = idx + 2;
        let fields: Vec<&str> = line.splitn(header.len(), ',').collect();
        if fields.len() != header.len() {
            return Err(bad(n, "wrong field count"));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad(n, "bad number"))
            }
        };
        x.push(num(fields[0])?.ok_or_else(|| bad(n, "missing x"))?);
        for (c, col) in columns.iter_mut().enumerate() {
            let f = &fields[1 + 3 * c..4 + 3 * c];
            let mean = num(f[0])?;
            let se = num(f[1])?;
            let count: usize = f[2].parse().map_err(|_| bad(n, "bad count"))?;
            col.stats.push(mean.map(|mean| Stat {
                mean,
                std_error: se.unwrap_or(f64::NAN),
                n: count,
            }));
        }
        reasons.push(fields[header.len() - 1].to_string());
    }
    Ok(CurveTable {
        x_name: header[0].to_string(),
        x,
        columns,
        reasons,
        metadata: TableMetadata {
            experiment: String::new(),
            config: SystemConfig::default(),
            seed: 0,
            trials: 0,
            timestamp: None,
        },
    })
}

/// Deliberate defects for checking that the self-test notices them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultInjection {
    /// Negate `f3` in the summary handed to the power solver.
    pub flip_f3_sign: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            3
        }
    }
}

/// Runs the oracle suite with fixed seeds.
pub fn selftest(fault: FaultInjection) -> SelftestReport {
    let checks = vec![
        check_haar(),
        check_fixed_point(fault),
        check_dinkelbach(),
        check_queue(),
        check_norms(),
    ];
    SelftestReport { checks }
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn check_haar() -> CheckResult {
    outcome(
        "haar-cross-moment",
        oracle::cross_moment(4, 200_000, 101).map(|est| {
            let target = oracle::cross_moment_exact(4);
            let z = est.z_score(target);
            (z.abs() <= 4.0, format!("mean {:.6e}, target {:.6e}, z {:.2}", est.mean, target, z))
        }),
    )
}

/// Independent SINR evaluation: functionals recomputed from the eigenvalues.
fn reference_sinr(p: f64, total: f64, lambda: &[f64], alpha: f64, tau: f64, s2: f64) -> f64 {
    let n = lambda.len() as f64;
    let f1: f64 = lambda.iter().map(|l| (l / (l + alpha)).powi(2)).sum();
    let f2: f64 = lambda.iter().map(|l| l / (l + alpha)).sum::<f64>().powi(2);
    let f3: f64 = lambda.iter().map(|l| l / ((l + alpha) * (l + alpha))).sum();
    let keep = 1.0 - tau * tau;
    let num = p * keep * (f1 + f2);
    let den = (total - p) * keep * (f2 - n * f1) / (1.0 - n) + n * (n + 1.0) * (p * tau * tau + s2) * f3;
    num / den
}

fn check_fixed_point(fault: FaultInjection) -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let mut rng = channel::rng_from_seed(202);
        let mut worst: f64 = 0.0;
        for k in 0..200 {
            let cfg = SystemConfig {
                users: rng.random_range(2..=4),
                tx_antennas: 2,
                rx_antennas: 32,
                csi_error: rng.random_range(0.0..0.3),
                ..Default::default()
            };
            let real = sample_channel(&cfg, 5000 + k);
            let mut spec = SpectralSummary::new(&real.eigenvalues, cfg.regularizer(), cfg.csi_error)?;
            if fault.flip_f3_sign {
                spec = SpectralSummary::from_functionals(spec.eigenvalues.clone(), spec.alpha, spec.tau, spec.f1, spec.f2, -spec.f3);
            }
            let targets: Vec<f64> = (0..cfg.streams()).map(|_| rng.random_range(0.5..5.0)).collect();
            let r = match mmse::total_power_for_targets(&targets, &spec, cfg.noise_power) {
                Ok(r) => r,
                Err(e) => return Ok((false, format!("instance {k}: {e}"))),
            };
            let sum: f64 = r.powers.iter().sum();
            worst = worst.max((sum - r.total).abs() / r.total);
            for (&p, &t) in r.powers.iter().zip(&targets) {
                let back = reference_sinr(p, r.total, &real.eigenvalues, cfg.regularizer(), cfg.csi_error, cfg.noise_power);
                worst = worst.max((back - t).abs() / t);
            }
        }
        Ok((worst <= 1e-9, format!("worst relative error {worst:.3e}")))
    };
    outcome("power-fixed-point", run())
}

fn check_dinkelbach() -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let cfg = SystemConfig {
            users: 2,
            tx_antennas: 2,
            rx_antennas: 16,
            bits_per_use: 8,
            min_bits: 1,
            csi_error: 0.1,
            heavy_fraction: 0.5,
            ..Default::default()
        };
        let ser = cfg.per_user_ser();
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let real = sample_channel(&cfg, 7000 + k);
            let spec = SpectralSummary::new(&real.eigenvalues, cfg.regularizer(), cfg.csi_error)?;
            let opt = modopt::optimize_allocation(&spec, &cfg, &ser, 1e-8, 100)?;
            let (_, best) = oracle::brute_force_allocation(&spec, &cfg, &ser)?;
            worst = worst.max((opt.power.total - best) / best);
            if opt.trace.deltas.windows(2).any(|w| w[1] > w[0]) {
                return Ok((false, format!("instance {k}: delta increased")));
            }
        }
        Ok((worst <= 5e-3, format!("worst excess over exhaustive search {:.3e}", worst)))
    };
    outcome("dinkelbach-vs-exhaustive", run())
}

fn check_queue() -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let (b, rs, l) = (12u32, 1e5, 1080u32);
        let p_s = queueing::packet_success(1e-2, l, b, 2);
        let t_p = l as f64 / (b as f64 * rs);
        let r = 0.5 * p_s / t_p;
        let analytic = queueing::closed_form_delay(p_s, b, rs, l, r);
        let sim = queueing::simulate_mg1(p_s, t_p, r, 1_000_000, 303)?;
        let rel = (sim.mean_delay - analytic).abs() / analytic;
        let chi = queueing::chi_square_geometric(&sim.attempts, p_s, 0.01)?;
        Ok((
            rel <= 0.02 && chi.passed,
            format!(
                "delay error {:.3e}, chi-square {:.2} (critical {:.2})",
                rel, chi.statistic, chi.critical
            ),
        ))
    };
    outcome("mg1-simulation", run())
}

fn check_norms() -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let cfg = SystemConfig {
            rx_antennas: 8,
            ..Default::default()
        };
        let mut violations = 0;
        for k in 0..100 {
            let real = sample_channel(&cfg, 9000 + k);
            let sel = simo::select_antennas(&real, &cfg)?;
            for i in 0..cfg.users {
                let fro = real.user_block(&real.estimated, i).norm_squared();
                if !(fro > sel.gain[i]) {
                    violations += 1;
                }
            }
        }
        Ok((violations == 0, format!("{violations} violations in {} users", 100 * cfg.users)))
    };
    outcome("frobenius-vs-selected-gain", run())
}
