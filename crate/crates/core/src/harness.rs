//! Monte Carlo sweeps over the CSI quality or the delay-sensitive fraction,
//! aggregated into curve tables.
//!
//! Every trial draws its channel from a seed derived from `(seed, grid index,
//! trial index)`. With common realizations (the default) the grid component is
//! pinned to zero, so each grid point sees the same `H_hat` and `Omega` draws and
//! differences between points are not masked by channel-to-channel noise.
//! Trials run in parallel and are reduced in `(grid, trial)` order, so tables do
//! not depend on the thread schedule.

use rayon::prelude::*;

use crate::channel::{self, sample_channel, ChannelRealization};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::mmse::{self, ReceiverFilter, SpectralSummary};
use crate::modopt;
use crate::switching::{self, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Tau,
    Rho,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Tau => "tau",
            SweepVariable::Rho => "rho",
        }
    }

    fn apply(self, cfg: &SystemConfig, x: f64) -> SystemConfig {
        match self {
            SweepVariable::Tau => cfg.with_csi_error(x),
            SweepVariable::Rho => cfg.with_heavy_fraction(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Transmit power of the optimized MIMO allocation.
    TotalTransmitPower,
    /// Transmit power of the equal-rate MIMO allocation.
    EqualRateTransmitPower,
    TotalPowerMimo,
    TotalPowerSimo,
    EnergyEfficiencyMimo,
    EnergyEfficiencySimo,
    /// 1 when MIMO is selected, 0 when SIMO is.
    SelectedModeFraction,
    /// Empirical SINR of stream 0 under both receivers, equal powers at `P_ref`.
    EmpiricalSinrPair,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::TotalTransmitPower,
        Metric::EqualRateTransmitPower,
        Metric::TotalPowerMimo,
        Metric::TotalPowerSimo,
        Metric::EnergyEfficiencyMimo,
        Metric::EnergyEfficiencySimo,
        Metric::SelectedModeFraction,
        Metric::EmpiricalSinrPair,
    ];

    /// Column stems produced by this metric.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Metric::TotalTransmitPower => &["transmit_power_opt"],
            Metric::EqualRateTransmitPower => &["transmit_power_equal"],
            Metric::TotalPowerMimo => &["total_power_mimo"],
            Metric::TotalPowerSimo => &["total_power_simo"],
            Metric::EnergyEfficiencyMimo => &["ee_mimo"],
            Metric::EnergyEfficiencySimo => &["ee_simo"],
            Metric::SelectedModeFraction => &["mimo_selected"],
            Metric::EmpiricalSinrPair => &["sinr_simplified", "sinr_mmse"],
        }
    }
}

/// Symbols per realization for empirical SINR estimates.
pub const EMPIRICAL_SYMBOLS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub metrics: Vec<Metric>,
    /// Reuse the same channel draws at every grid point.
    pub common_realizations: bool,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, grid: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self {
            variable,
            grid,
            trials,
            seed,
            metrics: Metric::ALL[..7].to_vec(),
            common_realizations: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
        }
        if self.grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidArgument(format!(
                "{} grid must lie in [0, 1]",
                self.variable.name()
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidArgument("no metrics requested".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at grid point `grid_index`.
pub fn trial_seed(seed: u64, grid_index: usize, trial: usize) -> u64 {
    mix(mix(mix(seed) ^ grid_index as u64) ^ trial as u64)
}

/// Mean, standard error and count of one column at one grid point; `None`
/// when no trial produced a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Stat {
    pub fn from_samples(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std_error, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub stats: Vec<Option<Stat>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableMetadata {
    pub experiment: String,
    pub config: SystemConfig,
    pub seed: u64,
    pub trials: usize,
    /// Set by the command-line front end; left empty by library runs.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub x_name: String,
    pub x: Vec<f64>,
    pub columns: Vec<Column>,
    /// Per grid point: why trials were excluded, empty when none were.
    pub reasons: Vec<String>,
    pub metadata: TableMetadata,
}

impl CurveTable {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Means of a column, `None` where missing.
    pub fn means(&self, name: &str) -> Option<Vec<Option<f64>>> {
        self.column(name).map(|c| c.stats.iter().map(|s| s.map(|s| s.mean)).collect())
    }
}

type TrialValues = Vec<std::result::Result<f64, String>>;

fn evaluate_trial(metrics: &[Metric], real: &ChannelRealization, cfg: &SystemConfig, noise_seed: u64) -> TrialValues {
    let mimo = switching::evaluate_mode(Mode::Mimo, real, cfg).map_err(|e| e.to_string());
    let simo = switching::evaluate_mode(Mode::Simo, real, cfg).map_err(|e| e.to_string());
    let mut out = Vec::new();
    for m in metrics {
        match m {
            Metric::TotalTransmitPower => out.push(mimo.as_ref().map(|r| r.transmit_power).map_err(Clone::clone)),
            Metric::EqualRateTransmitPower => out.push(equal_rate_power(real, cfg).map_err(|e| e.to_string())),
            Metric::TotalPowerMimo => out.push(mimo.as_ref().map(|r| r.total_power).map_err(Clone::clone)),
            Metric::TotalPowerSimo => out.push(simo.as_ref().map(|r| r.total_power).map_err(Clone::clone)),
            Metric::EnergyEfficiencyMimo => out.push(mimo.as_ref().map(|r| r.energy_efficiency).map_err(Clone::clone)),
            Metric::EnergyEfficiencySimo => out.push(simo.as_ref().map(|r| r.energy_efficiency).map_err(Clone::clone)),
            Metric::SelectedModeFraction => out.push(
                switching::select_mode(mimo.as_ref().ok(), simo.as_ref().ok())
                    .map(|mode| if mode == Mode::Mimo { 1.0 } else { 0.0 })
                    .map_err(|e| e.to_string()),
            ),
            Metric::EmpiricalSinrPair => {
                let n = real.streams();
                let powers = vec![cfg.reference_power / n as f64; n];
                let mut rng = channel::rng_from_seed(noise_seed);
                match mmse::empirical_sinr_with_rng(
                    real,
                    &powers,
                    cfg.noise_power,
                    EMPIRICAL_SYMBOLS,
                    &[ReceiverFilter::Simplified, ReceiverFilter::Mmse],
                    &mut rng,
                ) {
                    Ok(s) => {
                        out.push(Ok(s[0][0]));
                        out.push(Ok(s[1][0]));
                    }
                    Err(e) => {
                        out.push(Err(e.to_string()));
                        out.push(Err(e.to_string()));
                    }
                }
            }
        }
    }
    out
}

/// Transmit power of the equal-rate MIMO allocation.
pub fn equal_rate_power(real: &ChannelRealization, cfg: &SystemConfig) -> Result<f64> {
    let spec = SpectralSummary::new(&real.eigenvalues, cfg.regularizer(), cfg.csi_error)?;
    let alloc = modopt::equal_rate_baseline(cfg)?;
    Ok(mmse::total_mimo_power(&alloc, &spec, cfg, &cfg.per_user_ser())?.total)
}

fn aggregate(
    x_name: &str,
    grid: &[f64],
    names: Vec<String>,
    results: Vec<Vec<TrialValues>>,
    metadata: TableMetadata,
) -> CurveTable {
    let mut columns: Vec<Column> = names
        .into_iter()
        .map(|name| Column {
            name,
            stats: Vec::with_capacity(grid.len()),
        })
        .collect();
    let mut reasons = Vec::with_capacity(grid.len());
    for point in &results {
        let mut excluded = 0usize;
        let mut first_reason: Option<&str> = None;
        for (c, column) in columns.iter_mut().enumerate() {
            let mut values = Vec::with_capacity(point.len());
            for trial in point {
                match &trial[c] {
                    Ok(v) if v.is_finite() => values.push(*v),
                    Ok(_) => {
                        excluded += 1;
                        first_reason.get_or_insert("non-finite value");
                    }
                    Err(e) => {
                        excluded += 1;
                        first_reason.get_or_insert(e.as_str());
                    }
                }
            }
            column.stats.push(Stat::from_samples(&values));
        }
        reasons.push(match first_reason {
            None => String::new(),
            Some(r) => format!("{excluded} excluded values; first: {r}"),
        });
    }
    CurveTable {
        x_name: x_name.to_string(),
        x: grid.to_vec(),
        columns,
        reasons,
        metadata,
    }
}

/// Runs the full pipeline for every `(grid point, trial)` pair.
pub fn run_sweep(spec: &SweepSpec, cfg: &SystemConfig) -> Result<CurveTable> {
    spec.validate()?;
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect();
    let flat: Vec<TrialValues> = jobs
        .par_iter()
        .map(|&(g, t)| {
            let point_cfg = spec.variable.apply(cfg, spec.grid[g]);
            let channel_index = if spec.common_realizations { 0 } else { g };
            let seed = trial_seed(spec.seed, channel_index, t);
            let real = sample_channel(&point_cfg, seed);
            evaluate_trial(&spec.metrics, &real, &point_cfg, mix(seed ^ 0xA5A5))
        })
        .collect();
    let mut results = Vec::with_capacity(spec.grid.len());
    let mut it = flat.into_iter();
    for _ in 0..spec.grid.len() {
        results.push(it.by_ref().take(spec.trials).collect());
    }
    let names = spec
        .metrics
        .iter()
        .flat_map(|m| m.columns().iter().map(|s| s.to_string()))
        .collect();
    let metadata = TableMetadata {
        experiment: format!("sweep-{}", spec.variable.name()),
        config: cfg.clone(),
        seed: spec.seed,
        trials: spec.trials,
        timestamp: None,
    };
    Ok(aggregate(spec.variable.name(), &spec.grid, names, results, metadata))
}

/// Total-power grid used by the receiver comparison when none is given.
pub const FIG2_POWERS: [f64; 5] = [0.1, 1.0, 10.0, 100.0, 1000.0];

/// Empirical SINR of stream 0 (user 0, antenna 0) with the simplified and the
/// power-aware MMSE receiver, equal stream powers `P / n`, for every total
/// power `P` in `powers`. Each trial reuses one channel and one symbol/noise
/// stream across the whole power grid.
pub fn fig2_experiment(cfg: &SystemConfig, powers: &[f64], trials: usize, seed: u64) -> Result<CurveTable> {
    cfg.validate()?;
    if trials < 200 {
        return Err(Error::InvalidArgument(format!("receiver comparison needs at least 200 trials, got {trials}")));
    }
    if powers.is_empty() || powers.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument("power grid must be non-empty and positive".into()));
    }
    let per_trial: Vec<Vec<TrialValues>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, 0, t);
            let real = sample_channel(cfg, s);
            let n = real.streams();
            powers
                .iter()
                .map(|&total| {
                    let mut rng = channel::rng_from_seed(mix(s ^ 0xA5A5));
                    match mmse::empirical_sinr_with_rng(
                        &real,
                        &vec![total / n as f64; n],
                        cfg.noise_power,
                        EMPIRICAL_SYMBOLS,
                        &[ReceiverFilter::Simplified, ReceiverFilter::Mmse],
                        &mut rng,
                    ) {
                        Ok(v) => vec![Ok(v[0][0]), Ok(v[1][0])],
                        Err(e) => vec![Err(e.to_string()), Err(e.to_string())],
                    }
                })
                .collect()
        })
        .collect();
    // Transpose to (power point, trial).
    let mut results: Vec<Vec<TrialValues>> = vec![Vec::with_capacity(trials); powers.len()];
    for trial in per_trial {
        for (k, values) in trial.into_iter().enumerate() {
            results[k].push(values);
        }
    }
    let metadata = TableMetadata {
        experiment: "fig2".into(),
        config: cfg.clone(),
        seed,
        trials,
        timestamp: None,
    };
    let names = vec!["sinr_simplified".to_string(), "sinr_mmse".to_string()];
    Ok(aggregate("total_power", powers, names, results, metadata))
}

/// Mean transmit powers of both modes over `{0, 1/K, ..., 1}` plus the
/// crossover, as a table. Realizations are shared by every grid point.
pub fn crossover_experiment(cfg: &SystemConfig, trials: usize, seed: u64) -> Result<(CurveTable, switching::CrossoverReport)> {
    cfg.validate()?;
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let realizations = realization_set(cfg, trials, seed);
    let report = switching::crossover_rho(cfg, &realizations)?;
    let k = cfg.users as f64;
    let stat = |v: Option<f64>, n: usize| v.map(|mean| Stat { mean, std_error: f64::NAN, n });
    let mut mimo = Vec::new();
    let mut simo = Vec::new();
    let mut reasons = Vec::new();
    for p in &report.curve {
        mimo.push(stat(p.mimo_transmit.map(|m| m + k * cfg.tx_antennas as f64 * cfg.circuit_power), p.used));
        simo.push(stat(p.simo_transmit.map(|s| s + k * cfg.circuit_power), p.used));
        reasons.push(if p.excluded > 0 {
            format!("{} realizations infeasible in at least one mode", p.excluded)
        } else {
            String::new()
        });
    }
    let table = CurveTable {
        x_name: "rho".into(),
        x: report.curve.iter().map(|p| p.rho).collect(),
        columns: vec![
            Column {
                name: "total_power_mimo".into(),
                stats: mimo,
            },
            Column {
                name: "total_power_simo".into(),
                stats: simo,
            },
        ],
        reasons,
        metadata: TableMetadata {
            experiment: "crossover".into(),
            config: cfg.clone(),
            seed,
            trials,
            timestamp: None,
        },
    };
    Ok((table, report))
}

/// `trials` channel draws with the seeds a sweep would use at grid index 0.
pub fn realization_set(cfg: &SystemConfig, trials: usize, seed: u64) -> Vec<ChannelRealization> {
    (0..trials)
        .into_par_iter()
        .map(|t| sample_channel(cfg, trial_seed(seed, 0, t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig {
            rx_antennas: 64,
            users: 3,
            bits_per_use: 4,
            min_bits: 1,
            ..Default::default()
        }
    }

    #[test]
    fn seeds_differ_by_grid_and_trial() {
        let a = trial_seed(1, 0, 0);
        assert_ne!(a, trial_seed(1, 0, 1));
        assert_ne!(a, trial_seed(1, 1, 0));
        assert_ne!(a, trial_seed(2, 0, 0));
        assert_eq!(a, trial_seed(1, 0, 0));
    }

    #[test]
    fn stat_of_constant_samples() {
        let s = Stat::from_samples(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.std_error, s.n), (2.0, 0.0, 3));
        assert!(Stat::from_samples(&[]).is_none());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = SweepSpec::new(SweepVariable::Tau, vec![0.0, 0.1], 0, 1);
        assert!(s.validate().is_err());
        s.trials = 1;
        s.grid = vec![0.1, 0.1];
        assert!(s.validate().is_err());
        s.grid = vec![0.0, 1.5];
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_trial_runs_are_identical() {
        let spec = SweepSpec::new(SweepVariable::Tau, vec![0.0, 0.2], 1, 77);
        let a = run_sweep(&spec, &cfg()).unwrap();
        let b = run_sweep(&spec, &cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.columns.len(), 7);
        assert!(a.columns.iter().all(|c| c.stats.len() == 2));
    }

    #[test]
    fn infeasible_points_are_reported() {
        let spec = SweepSpec::new(SweepVariable::Tau, vec![0.0, 1.0], 3, 5);
        let t = run_sweep(&spec, &cfg()).unwrap();
        let opt = t.column("transmit_power_opt").unwrap();
        assert!(opt.stats[0].is_some());
        assert!(opt.stats[1].is_none());
        assert!(t.reasons[0].is_empty());
        assert!(!t.reasons[1].is_empty());
    }

    #[test]
    fn fig2_requires_enough_trials() {
        assert!(fig2_experiment(&cfg(), &FIG2_POWERS, 10, 1).is_err());
    }
}
