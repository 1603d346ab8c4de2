//! MU-MIMO versus MU-SIMO at matched throughput: total power, energy
//! efficiency, mode selection and the crossover fraction of delay-sensitive
//! users.
//!
//! Both modes are charged the throughput and delay of the MIMO packet model
//! (`b_total` bits per use over `N_t` streams), so the comparison is purely a
//! comparison of power.

use rayon::prelude::*;

use crate::channel::ChannelRealization;
use crate::config::{ServiceClass, SystemConfig};
use crate::error::{Error, Result};
use crate::mmse::SpectralSummary;
use crate::modopt::{self, ModulationAllocation};
use crate::queueing;
use crate::simo;

pub const DINKELBACH_TOL: f64 = 1e-8;
pub const DINKELBACH_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Mimo,
    Simo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Mimo => "MIMO",
            Mode::Simo => "SIMO",
        }
    }
}

/// Mean delay of each service class; `None` when the class has no users,
/// `+inf` when its queue is unstable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassDelay {
    pub sensitive: Option<f64>,
    pub tolerant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub mode: Mode,
    pub transmit_power: f64,
    pub circuit_power: f64,
    pub total_power: f64,
    /// Sum of per-user payload throughput, bits/s.
    pub throughput: f64,
    /// Bits per joule.
    pub energy_efficiency: f64,
    pub per_class_delay: ClassDelay,
    pub rho: f64,
    /// Integer constellation allocation (MIMO only).
    pub allocation: Option<ModulationAllocation>,
}

/// Throughput and per-class delay of the MIMO packet model.
pub fn traffic(cfg: &SystemConfig) -> (f64, ClassDelay) {
    let mut throughput = 0.0;
    let mut delay = ClassDelay {
        sensitive: None,
        tolerant: None,
    };
    for i in 0..cfg.users {
        let class = cfg.class_of(i);
        let p_s = queueing::packet_success(cfg.ser_of(class), cfg.packet_bits, cfg.bits_per_use, cfg.tx_antennas);
        throughput += queueing::throughput(p_s, cfg.bits_per_use, cfg.symbol_rate, cfg.packet_bits, cfg.header_bits);
        let d = queueing::delay_stats(
            p_s,
            cfg.bits_per_use,
            cfg.symbol_rate,
            cfg.packet_bits,
            cfg.header_bits,
            cfg.arrival_rate,
        )
        .map(|s| s.mean_delay)
        .unwrap_or(f64::INFINITY);
        match class {
            ServiceClass::Sensitive => delay.sensitive = Some(d),
            ServiceClass::Tolerant => delay.tolerant = Some(d),
        }
    }
    (throughput, delay)
}

fn report(mode: Mode, transmit: f64, circuit: f64, cfg: &SystemConfig, allocation: Option<ModulationAllocation>) -> PowerReport {
    let (throughput, per_class_delay) = traffic(cfg);
    let total_power = transmit + circuit;
    PowerReport {
        mode,
        transmit_power: transmit,
        circuit_power: circuit,
        total_power,
        throughput,
        energy_efficiency: throughput / total_power,
        per_class_delay,
        rho: cfg.heavy_fraction,
        allocation,
    }
}

/// Full power report of one mode on one channel realization.
pub fn evaluate_mode(mode: Mode, real: &ChannelRealization, cfg: &SystemConfig) -> Result<PowerReport> {
    let ser = cfg.per_user_ser();
    match mode {
        Mode::Mimo => {
            let spec = SpectralSummary::new(&real.eigenvalues, cfg.regularizer(), cfg.csi_error)?;
            let opt = modopt::optimize_allocation(&spec, cfg, &ser, DINKELBACH_TOL, DINKELBACH_MAX_ITER)?;
            let circuit = (cfg.users * cfg.tx_antennas) as f64 * cfg.circuit_power;
            Ok(report(mode, opt.power.total, circuit, cfg, Some(opt.allocation)))
        }
        Mode::Simo => {
            let sel = simo::select_antennas(real, cfg)?;
            let p = simo::total_simo_power(cfg, &sel, &ser)?;
            Ok(report(mode, p.transmit, p.circuit, cfg, None))
        }
    }
}

/// The mode with the smaller total power; MIMO on ties.
pub fn select_mode(mimo: Option<&PowerReport>, simo: Option<&PowerReport>) -> Result<Mode> {
    match (mimo, simo) {
        (None, None) => Err(Error::NoFeasibleMode),
        (Some(_), None) => Ok(Mode::Mimo),
        (None, Some(_)) => Ok(Mode::Simo),
        (Some(m), Some(s)) => Ok(if s.total_power < m.total_power { Mode::Simo } else { Mode::Mimo }),
    }
}

/// Mean transmit powers of both modes at one `rho`, over the realizations
/// where both modes are feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub rho: f64,
    pub mimo_transmit: Option<f64>,
    pub simo_transmit: Option<f64>,
    /// Realizations feasible in both modes.
    pub used: usize,
    pub excluded: usize,
}

impl CurvePoint {
    fn totals(&self, cfg: &SystemConfig) -> Option<(f64, f64)> {
        let k = cfg.users as f64;
        Some((
            self.mimo_transmit? + k * cfg.tx_antennas as f64 * cfg.circuit_power,
            self.simo_transmit? + k * cfg.circuit_power,
        ))
    }
}

/// `{0, 1/K, ..., 1}`.
pub fn rho_grid(cfg: &SystemConfig) -> Vec<f64> {
    (0..=cfg.users).map(|k| k as f64 / cfg.users as f64).collect()
}

/// Transmit-power curves over `grid`, evaluated on a common realization set.
/// Realizations are processed in parallel and reduced in input order.
pub fn power_curves(cfg: &SystemConfig, realizations: &[ChannelRealization], grid: &[f64]) -> Vec<CurvePoint> {
    grid.iter()
        .map(|&rho| {
            let point_cfg = cfg.with_heavy_fraction(rho);
            let pairs: Vec<Option<(f64, f64)>> = realizations
                .par_iter()
                .map(|real| {
                    let m = evaluate_mode(Mode::Mimo, real, &point_cfg).ok()?;
                    let s = evaluate_mode(Mode::Simo, real, &point_cfg).ok()?;
                    Some((m.transmit_power, s.transmit_power))
                })
                .collect();
            let used: Vec<(f64, f64)> = pairs.iter().flatten().copied().collect();
            let n = used.len();
            let mean = |f: fn(&(f64, f64)) -> f64| (n > 0).then(|| used.iter().map(f).sum::<f64>() / n as f64);
            CurvePoint {
                rho,
                mimo_transmit: mean(|p| p.0),
                simo_transmit: mean(|p| p.1),
                used: n,
                excluded: realizations.len() - n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum CrossoverOutcome {
    /// Mean totals cross at `rho`; `total_power` is the interpolated common total.
    Crossing { rho: f64, total_power: f64, residual: f64 },
    /// The same mode is cheaper at every usable grid point.
    NoCrossover { cheaper: Mode },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverReport {
    pub outcome: CrossoverOutcome,
    pub curve: Vec<CurvePoint>,
    /// Grid points dropped because no realization was feasible in both modes.
    pub excluded_points: Vec<f64>,
}

/// Locates the sign change of `mean P_m(rho) - mean P_s(rho)` on
/// `{0, 1/K, ..., 1}` and refines it by linear interpolation.
pub fn crossover_rho(cfg: &SystemConfig, realizations: &[ChannelRealization]) -> Result<CrossoverReport> {
    let curve = power_curves(cfg, realizations, &rho_grid(cfg));
    crossover_from_curve(cfg, curve)
}

/// Crossover for an already evaluated curve; circuit power is taken from `cfg`.
pub fn crossover_from_curve(cfg: &SystemConfig, curve: Vec<CurvePoint>) -> Result<CrossoverReport> {
    let usable: Vec<(f64, f64, f64)> = curve
        .iter()
        .filter_map(|p| p.totals(cfg).map(|(m, s)| (p.rho, m, s)))
        .collect();
    let excluded_points = curve.iter().filter(|p| p.totals(cfg).is_none()).map(|p| p.rho).collect();
    if usable.is_empty() {
        return Err(Error::NoFeasibleMode);
    }
    let diff = |(_, m, s): &(f64, f64, f64)| m - s;
    let mut outcome = None;
    if diff(&usable[0]) == 0.0 {
        outcome = Some(CrossoverOutcome::Crossing {
            rho: usable[0].0,
            total_power: usable[0].1,
            residual: 0.0,
        });
    }
    for w in usable.windows(2) {
        if outcome.is_some() {
            break;
        }
        let (da, db) = (diff(&w[0]), diff(&w[1]));
        if da * db < 0.0 || (db == 0.0 && da != 0.0) {
            let frac = da / (da - db);
            let lerp = |a: f64, b: f64| a + frac * (b - a);
            let rho = lerp(w[0].0, w[1].0);
            let m = lerp(w[0].1, w[1].1);
            let s = lerp(w[0].2, w[1].2);
            outcome = Some(CrossoverOutcome::Crossing {
                rho,
                total_power: 0.5 * (m + s),
                residual: (m - s).abs() / (0.5 * (m + s)),
            });
        }
    }
    let outcome = outcome.unwrap_or_else(|| CrossoverOutcome::NoCrossover {
        cheaper: if diff(&usable[0]) > 0.0 { Mode::Simo } else { Mode::Mimo },
    });
    Ok(CrossoverReport {
        outcome,
        curve,
        excluded_points,
    })
}

/// Circuit power that puts SIMO ahead at `rho = 0` and MIMO ahead at `rho = 1`:
/// the midpoint `(dP(0) + dP(1)) / (2 K (N_t - 1))` with `dP = P_s - P_m`
/// (transmit only). `None` when no `P_0 >= 0` separates the two ends.
pub fn tune_circuit_power(cfg: &SystemConfig, realizations: &[ChannelRealization]) -> Result<Option<f64>> {
    if cfg.tx_antennas < 2 {
        return Ok(None);
    }
    let curve = power_curves(cfg, realizations, &[0.0, 1.0]);
    let gap = |p: &CurvePoint| -> Result<f64> {
        match (p.mimo_transmit, p.simo_transmit) {
            (Some(m), Some(s)) => Ok(s - m),
            _ => Err(Error::NoFeasibleMode),
        }
    };
    let (low, high) = (gap(&curve[0])?, gap(&curve[1])?);
    if high <= low || high <= 0.0 {
        return Ok(None);
    }
    let p0 = (low + high) / (2.0 * cfg.users as f64 * (cfg.tx_antennas as f64 - 1.0));
    Ok((p0 >= 0.0).then_some(p0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;

    fn cfg() -> SystemConfig {
        SystemConfig {
            rx_antennas: 256,
            bits_per_use: 4,
            min_bits: 1,
            heavy_fraction: 0.0,
            ..Default::default()
        }
    }

    fn dummy(mode: Mode, total: f64) -> PowerReport {
        PowerReport {
            mode,
            transmit_power: total,
            circuit_power: 0.0,
            total_power: total,
            throughput: 1.0,
            energy_efficiency: 1.0 / total,
            per_class_delay: ClassDelay {
                sensitive: None,
                tolerant: None,
            },
            rho: 0.0,
            allocation: None,
        }
    }

    #[test]
    fn circuit_power_per_mode() {
        let c = SystemConfig {
            circuit_power: 0.1,
            ..cfg()
        };
        let real = sample_channel(&c, 1);
        let m = evaluate_mode(Mode::Mimo, &real, &c).unwrap();
        let s = evaluate_mode(Mode::Simo, &real, &c).unwrap();
        assert!((m.circuit_power - 2.0).abs() < 1e-12);
        assert!((s.circuit_power - 1.0).abs() < 1e-12);
        assert_eq!(m.throughput, s.throughput);
        assert!((m.total_power - m.transmit_power - m.circuit_power).abs() < 1e-12);
        assert!((m.energy_efficiency - m.throughput / m.total_power).abs() < 1e-9 * m.energy_efficiency);
    }

    #[test]
    fn selection_rules() {
        let (a, b) = (dummy(Mode::Mimo, 1.0), dummy(Mode::Simo, 2.0));
        assert_eq!(select_mode(Some(&a), Some(&b)).unwrap(), Mode::Mimo);
        assert_eq!(select_mode(Some(&b), Some(&a)).unwrap(), Mode::Simo);
        assert_eq!(select_mode(None, Some(&b)).unwrap(), Mode::Simo);
        assert_eq!(select_mode(Some(&a), None).unwrap(), Mode::Mimo);
        assert_eq!(select_mode(Some(&a), Some(&a)).unwrap(), Mode::Mimo);
        assert!(matches!(select_mode(None, None), Err(Error::NoFeasibleMode)));
    }

    #[test]
    fn heavy_users_wait_less() {
        let c = cfg().with_heavy_fraction(0.5);
        let (_, d) = traffic(&c);
        assert!(d.sensitive.unwrap() < d.tolerant.unwrap());
    }

    #[test]
    fn relaxed_ser_leaves_circuit_power() {
        // SER just under the 2-bit limit needs almost no SINR on the 2-bit streams.
        let c = SystemConfig {
            ser_tolerant: 1.0 - 1e-9,
            circuit_power: 0.1,
            ..cfg()
        };
        let real = sample_channel(&c, 4);
        let m = evaluate_mode(Mode::Mimo, &real, &c).unwrap();
        assert!(m.transmit_power < 1e-6, "{}", m.transmit_power);
        assert!((m.total_power - m.circuit_power).abs() < 1e-6);
    }

    #[test]
    fn interpolated_crossing() {
        let c = SystemConfig {
            users: 2,
            circuit_power: 0.0,
            ..cfg()
        };
        let point = |rho, m, s| CurvePoint {
            rho,
            mimo_transmit: Some(m),
            simo_transmit: Some(s),
            used: 1,
            excluded: 0,
        };
        let curve = vec![point(0.0, 3.0, 1.0), point(0.5, 4.0, 4.0 + 2.0), point(1.0, 5.0, 9.0)];
        let r = crossover_from_curve(&c, curve).unwrap();
        match r.outcome {
            CrossoverOutcome::Crossing { rho, residual, .. } => {
                // d = 2 at 0, -2 at 0.5.
                assert!((rho - 0.25).abs() < 1e-12);
                assert!(residual < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }
}
