//! Energy-efficient constellation sizes for the MU-MIMO mode.
//!
//! Total power is the ratio `P(b) = Phi(b) / Psi(b)` with
//!
//! ```text
//! Phi(b) = sum_ij sigma_hat^2 f3 g(b_ij)      Psi(b) = 1 - c3 sum_ij g(b_ij)
//! g(b)   = 1 / (c2 + c1 / eta(b))
//! ```
//!
//! minimized over `b_ij >= b_min`, `sum_j b_ij = b_total` for each user. The
//! fractional program is solved by Dinkelbach's method: each step minimizes the
//! parametric objective `Phi(b) - delta Psi(b)` through its KKT conditions
//! (bisection on the per-user equality multiplier) and updates
//! `delta = Phi / Psi` at the new point.
//!
//! A closed-form water-filling expression for `b_ij` circulates for this
//! problem, but its constants (a noise spectral density and per-eigenvalue
//! weights) do not line up with the `c1, c2, c3` objective above, and its log
//! argument turns negative for part of the multiplier range. It is not used;
//! the numerical KKT solve is the only path.

use std::collections::HashMap;

use rand::Rng;

use crate::channel;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::mmse::{self, SpectralSummary, StreamPowerResult};

const SNAP: f64 = 1e-9;

/// Constellation exponents for every stream, user-major (`bits[i * N_t + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationAllocation {
    bits: Vec<f64>,
    users: usize,
    tx_antennas: usize,
    total: u32,
    min: u32,
}

impl ModulationAllocation {
    pub fn new(bits: Vec<f64>, users: usize, tx_antennas: usize, total: u32, min: u32) -> Result<Self> {
        if bits.len() != users * tx_antennas {
            return Err(Error::Dimension {
                what: "allocation",
                expected: users * tx_antennas,
                got: bits.len(),
            });
        }
        if (tx_antennas as u64) * (min as u64) > total as u64 {
            return Err(Error::Allocation(format!(
                "b_total = {total} is below N_t * b_min = {}",
                tx_antennas as u64 * min as u64
            )));
        }
        for (i, row) in bits.chunks(tx_antennas.max(1)).enumerate() {
            if let Some(b) = row.iter().find(|&&b| !(b >= min as f64 - SNAP)) {
                return Err(Error::Allocation(format!("user {i}: exponent {b} below b_min = {min}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - total as f64).abs() > SNAP * (total as f64).max(1.0) {
                return Err(Error::Allocation(format!("user {i}: exponents sum to {sum}, expected {total}")));
            }
        }
        Ok(Self {
            bits,
            users,
            tx_antennas,
            total,
            min,
        })
    }

    pub fn from_integers(bits: &[u32], users: usize, tx_antennas: usize, total: u32, min: u32) -> Result<Self> {
        Self::new(bits.iter().map(|&b| b as f64).collect(), users, tx_antennas, total, min)
    }

    /// `b_total / N_t` on every stream, not necessarily integral.
    pub fn equal_split(cfg: &SystemConfig) -> Result<Self> {
        let share = cfg.bits_per_use as f64 / cfg.tx_antennas as f64;
        Self::new(
            vec![share; cfg.streams()],
            cfg.users,
            cfg.tx_antennas,
            cfg.bits_per_use,
            cfg.min_bits,
        )
    }

    pub fn bits(&self) -> &[f64] {
        &self.bits
    }

    pub fn user(&self, i: usize) -> &[f64] {
        &self.bits[i * self.tx_antennas..(i + 1) * self.tx_antennas]
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn min(&self) -> u32 {
        self.min
    }

    pub fn is_integral(&self) -> bool {
        self.bits.iter().all(|b| b.fract() == 0.0)
    }

    /// Integer exponents, if every entry is integral.
    pub fn as_integers(&self) -> Option<Vec<u32>> {
        self.is_integral().then(|| self.bits.iter().map(|&b| b as u32).collect())
    }
}

/// `Phi(b)` and `Psi(b)`; fails when `Psi <= 0`.
pub fn objective_parts(
    alloc: &ModulationAllocation,
    spec: &SpectralSummary,
    cfg: &SystemConfig,
    per_user_ser: &[f64],
) -> Result<(f64, f64)> {
    let (phi, psi) = raw_parts(alloc, spec, cfg, per_user_ser)?;
    if !(psi > 0.0) {
        return Err(Error::InfeasibleTotalPower { psi });
    }
    Ok((phi, psi))
}

fn raw_parts(
    alloc: &ModulationAllocation,
    spec: &SpectralSummary,
    cfg: &SystemConfig,
    per_user_ser: &[f64],
) -> Result<(f64, f64)> {
    if alloc.bits.len() != spec.streams {
        return Err(Error::Dimension {
            what: "allocation streams",
            expected: spec.streams,
            got: alloc.bits.len(),
        });
    }
    let targets = mmse::stream_targets(alloc, cfg, per_user_ser)?;
    let noise_term = spec.scaled_noise(cfg.noise_power) * spec.f3;
    let (mut phi, mut sum_g) = (0.0, 0.0);
    for eta_val in targets {
        if eta_val == 0.0 {
            continue;
        }
        let denominator = spec.c1 + eta_val * spec.c2;
        if !(denominator > 0.0) {
            return Err(Error::InfeasiblePower {
                eta: eta_val,
                denominator,
            });
        }
        let g = eta_val / denominator;
        phi += noise_term * g;
        sum_g += g;
    }
    Ok((phi, 1.0 - spec.c3 * sum_g))
}

/// Per-stream cost `g(b) = eta(b) / (c1 + c2 eta(b))` and its derivative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StreamCost {
    pub c1: f64,
    pub c2: f64,
    pub ser: f64,
    pub symbol_rate: f64,
    pub bandwidth: f64,
}

impl StreamCost {
    fn new(spec: &SpectralSummary, cfg: &SystemConfig, ser: f64) -> Self {
        Self {
            c1: spec.c1,
            c2: spec.c2,
            ser,
            symbol_rate: cfg.symbol_rate,
            bandwidth: cfg.bandwidth,
        }
    }

    fn eta(&self, b: f64) -> Result<f64> {
        mmse::eta(b, self.ser, self.symbol_rate, self.bandwidth)
    }

    /// `+inf` past the pole where `c1 + c2 eta` reaches zero.
    pub fn value(&self, b: f64) -> f64 {
        match self.eta(b) {
            Ok(e) => {
                let d = self.c1 + self.c2 * e;
                if d > 0.0 {
                    e / d
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::NAN,
        }
    }

    pub fn derivative(&self, b: f64) -> f64 {
        let (Ok(e), Ok(de)) = (
            self.eta(b),
            mmse::eta_derivative(b, self.ser, self.symbol_rate, self.bandwidth),
        ) else {
            return f64::NAN;
        };
        let d = self.c1 + self.c2 * e;
        if d > 0.0 {
            self.c1 * de / (d * d)
        } else {
            f64::INFINITY
        }
    }

    /// Largest admissible exponent in `[lo, hi]`: `hi` itself unless the cost
    /// has a pole below it.
    fn upper_limit(&self, lo: f64, hi: f64) -> Result<f64> {
        // Below this exponent the SER target is unreachable for any SINR.
        let floor = -2.0 * (1.0 - self.ser / 2.0).log2();
        let lo = if self.eta(lo).is_err() && floor < hi {
            let nudged = floor + 1e-12 * floor.max(1.0);
            nudged.max(lo)
        } else {
            lo
        };
        let eta_lo = self.eta(lo)?;
        if !(self.c1 + self.c2 * eta_lo > 0.0) {
            return Err(Error::InfeasiblePower {
                eta: eta_lo,
                denominator: self.c1 + self.c2 * eta_lo,
            });
        }
        if self.value(hi).is_finite() {
            return Ok(hi);
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.value(m).is_finite() {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(a)
    }
}

/// Streams of one user that share a cost function, with the admissible range
/// of their exponent.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StreamGroup {
    pub cost: StreamCost,
    pub count: usize,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// Equality multiplier `nu` of each user.
    pub multipliers: Vec<f64>,
    /// Largest `|a g'(b_ij) + nu_i|` over unclamped streams, relative to `max(1, |nu_i|)`.
    pub stationarity: f64,
    /// Largest `|kappa_ij (b_min - b_ij)|`.
    pub slackness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub allocation: ModulationAllocation,
    pub kkt: KktReport,
}

/// One user's KKT solve: minimizes `weight * sum_g count_g g_g(b_g)` subject to
/// `sum_g count_g b_g = total` and `b_g >= b_min`. Returns the exponent of each
/// group, the multiplier, and the stationarity and slackness residuals.
pub(crate) fn solve_user_kkt(groups: &[StreamGroup], weight: f64, total: f64, b_min: f64) -> Result<(Vec<f64>, f64, f64, f64)> {
    let streams: usize = groups.iter().map(|g| g.count).sum();
    if streams == 0 {
        return Err(Error::Allocation("user without streams".into()));
    }
    if (streams as f64) * b_min > total + SNAP {
        return Err(Error::Allocation(format!("b_total = {total} is below {streams} * b_min")));
    }
    let capacity: f64 = groups.iter().map(|g| g.count as f64 * g.upper).sum();
    if capacity < total - SNAP {
        let eta = groups[0].cost.eta(total / streams as f64).unwrap_or(f64::NAN);
        return Err(Error::InfeasiblePower {
            eta,
            denominator: groups[0].cost.c1 + groups[0].cost.c2 * eta,
        });
    }
    let share = total / streams as f64;
    if groups.len() == 1 || weight == 0.0 {
        // Identical costs (or a flat objective): the symmetric point is the
        // stationary point of the equality-constrained problem.
        let nu = -weight * groups[0].cost.derivative(share);
        return Ok((vec![share; groups.len()], nu, 0.0, 0.0));
    }

    let exponent_at = |g: &StreamGroup, nu: f64| -> f64 {
        let slope = |b: f64| weight * g.cost.derivative(b) + nu;
        if slope(b_min) >= 0.0 {
            return b_min;
        }
        if slope(g.upper) <= 0.0 {
            return g.upper;
        }
        let (mut a, mut b) = (b_min, g.upper);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if slope(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let used = |nu: f64| -> f64 { groups.iter().map(|g| g.count as f64 * exponent_at(g, nu)).sum() };

    let mut nu_hi = groups
        .iter()
        .map(|g| -weight * g.cost.derivative(b_min))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut nu_lo = groups
        .iter()
        .map(|g| -weight * g.cost.derivative(g.upper))
        .fold(f64::INFINITY, f64::min);
    if !nu_lo.is_finite() {
        nu_lo = -f64::MAX / 4.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (nu_lo + nu_hi);
        if mid <= nu_lo || mid >= nu_hi {
            break;
        }
        if used(mid) > total {
            nu_lo = mid;
        } else {
            nu_hi = mid;
        }
    }
    let nu = 0.5 * (nu_lo + nu_hi);
    let mut exps: Vec<f64> = groups.iter().map(|g| exponent_at(g, nu)).collect();

    // Spread the bisection remainder over unclamped groups so the equality holds exactly.
    let free: Vec<usize> = (0..groups.len()).filter(|&k| exps[k] > b_min && exps[k] < groups[k].upper).collect();
    let free_count: f64 = free.iter().map(|&k| groups[k].count as f64).sum();
    if free_count > 0.0 {
        let gap = total - groups.iter().zip(&exps).map(|(g, b)| g.count as f64 * b).sum::<f64>();
        for &k in &free {
            exps[k] += gap / free_count;
        }
    }

    let scale = nu.abs().max(1.0);
    let mut stationarity: f64 = 0.0;
    let mut slackness: f64 = 0.0;
    for (g, &b) in groups.iter().zip(&exps) {
        let grad = weight * g.cost.derivative(b) + nu;
        if b > b_min {
            stationarity = stationarity.max(grad.abs() / scale);
        } else {
            // kappa = grad >= 0 at a clamped coordinate; slack is zero there.
            slackness = slackness.max((grad.max(0.0) * (b_min - b)).abs());
        }
    }
    Ok((exps, nu, stationarity, slackness))
}

/// Minimizes `Phi(b) - delta Psi(b)` over the feasible real allocations.
pub fn inner_solve(delta: f64, spec: &SpectralSummary, cfg: &SystemConfig, per_user_ser: &[f64]) -> Result<InnerSolution> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be non-negative, got {delta}")));
    }
    if per_user_ser.len() != cfg.users {
        return Err(Error::Dimension {
            what: "per-user SER vector",
            expected: cfg.users,
            got: per_user_ser.len(),
        });
    }
    if spec.streams != cfg.streams() {
        return Err(Error::Dimension {
            what: "spectral summary streams",
            expected: cfg.streams(),
            got: spec.streams,
        });
    }
    let total = cfg.bits_per_use as f64;
    let b_min = cfg.min_bits as f64;
    if cfg.tx_antennas as f64 * b_min > total {
        return Err(Error::Allocation(format!(
            "b_total = {} is below N_t * b_min = {}",
            cfg.bits_per_use,
            cfg.tx_antennas as u32 * cfg.min_bits
        )));
    }
    let weight = spec.scaled_noise(cfg.noise_power) * spec.f3 + delta * spec.c3;
    let cap = total - (cfg.tx_antennas as f64 - 1.0) * b_min;

    // Users with the same SER solve the same problem.
    let mut solved: HashMap<u64, (f64, f64, f64, f64)> = HashMap::new();
    let mut bits = Vec::with_capacity(cfg.streams());
    let mut multipliers = Vec::with_capacity(cfg.users);
    let (mut stationarity, mut slackness) = (0.0f64, 0.0f64);
    for &ser in per_user_ser {
        let entry = match solved.get(&ser.to_bits()) {
            Some(e) => *e,
            None => {
                let cost = StreamCost::new(spec, cfg, ser);
                let group = StreamGroup {
                    cost,
                    count: cfg.tx_antennas,
                    upper: cost.upper_limit(b_min, cap)?,
                };
                let (exps, nu, st, sl) = solve_user_kkt(&[group], weight, total, b_min)?;
                let e = (exps[0], nu, st, sl);
                solved.insert(ser.to_bits(), e);
                e
            }
        };
        bits.extend(std::iter::repeat_n(entry.0, cfg.tx_antennas));
        multipliers.push(entry.1);
        stationarity = stationarity.max(entry.2);
        slackness = slackness.max(entry.3);
    }
    let allocation = ModulationAllocation::new(bits, cfg.users, cfg.tx_antennas, cfg.bits_per_use, cfg.min_bits)?;
    Ok(InnerSolution {
        allocation,
        kkt: KktReport {
            multipliers,
            stationarity,
            slackness,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachTrace {
    /// `delta_k`, starting with the equal-split power.
    pub deltas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `f(delta_k) = min_b Phi(b) - delta_k Psi(b)` at the last step.
    pub final_f: f64,
    /// Midpoint-convexity violations found by the probe (debug builds only).
    pub convexity_violations: Option<usize>,
}

/// Dinkelbach iteration from the equal split. Returns the lowest-power iterate.
pub fn dinkelbach(
    spec: &SpectralSummary,
    cfg: &SystemConfig,
    per_user_ser: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(ModulationAllocation, DinkelbachTrace)> {
    let mut best = ModulationAllocation::equal_split(cfg)?;
    let (phi, psi) = objective_parts(&best, spec, cfg, per_user_ser)?;
    let mut best_power = phi / psi;
    let mut delta = best_power;
    let mut trace = DinkelbachTrace {
        deltas: vec![delta],
        iterations: 0,
        converged: false,
        final_f: f64::NAN,
        convexity_violations: None,
    };
    if cfg!(debug_assertions) {
        let report = convexity_probe(spec, cfg, per_user_ser, 32, 0x5eed)?;
        trace.convexity_violations = Some(report.violations);
    }
    while trace.iterations < max_iter {
        trace.iterations += 1;
        let step = inner_solve(delta, spec, cfg, per_user_ser)?;
        let (phi, psi) = raw_parts(&step.allocation, spec, cfg, per_user_ser)?;
        let f = phi - delta * psi;
        trace.final_f = f;
        if psi > 0.0 && phi / psi < best_power {
            best_power = phi / psi;
            best = step.allocation.clone();
        }
        if f.abs() <= tol * delta.max(1.0) || f >= 0.0 {
            trace.converged = true;
            break;
        }
        let next = phi / psi;
        if !(next < delta) {
            // Numerically stalled: no strict decrease left to take.
            trace.converged = true;
            break;
        }
        delta = next;
        trace.deltas.push(delta);
    }
    Ok((best, trace))
}

/// Largest-remainder rounding per user; ties are broken toward the more
/// balanced allocation.
pub fn round_allocation(b_star: &ModulationAllocation) -> ModulationAllocation {
    round_allocation_by(b_star, |_| 0.0)
}

/// Largest-remainder rounding per user. When several roundings share the
/// minimal total deviation, the one with the lowest `cost` wins, then the more
/// balanced one (smaller sum of squares).
pub fn round_allocation_by<F>(b_star: &ModulationAllocation, mut cost: F) -> ModulationAllocation
where
    F: FnMut(&ModulationAllocation) -> f64,
{
    let n_t = b_star.tx_antennas;
    let mut current: Vec<f64> = Vec::with_capacity(b_star.bits.len());
    let mut ties: Vec<Vec<Vec<f64>>> = Vec::with_capacity(b_star.users);
    for i in 0..b_star.users {
        let cands = user_roundings(b_star.user(i), b_star.total, b_star.min);
        current.extend_from_slice(&cands[0]);
        ties.push(cands);
    }
    let build = |bits: Vec<f64>| ModulationAllocation {
        bits,
        users: b_star.users,
        tx_antennas: n_t,
        total: b_star.total,
        min: b_star.min,
    };
    for (i, cands) in ties.iter().enumerate() {
        if cands.len() < 2 {
            continue;
        }
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for cand in cands {
            let mut bits = current.clone();
            bits[i * n_t..(i + 1) * n_t].copy_from_slice(cand);
            let c = cost(&build(bits));
            let c = if c.is_nan() { f64::INFINITY } else { c };
            let spread: f64 = cand.iter().map(|b| b * b).sum();
            let better = match &best {
                None => true,
                Some((bc, bs, _)) => c < *bc || (c == *bc && spread < *bs),
            };
            if better {
                best = Some((c, spread, cand.clone()));
            }
        }
        let (_, _, chosen) = best.expect("at least two candidates");
        current[i * n_t..(i + 1) * n_t].copy_from_slice(&chosen);
    }
    build(current)
}

/// All largest-remainder roundings of one user's exponents, most balanced first.
fn user_roundings(row: &[f64], total: u32, min: u32) -> Vec<Vec<f64>> {
    let snapped: Vec<f64> = row
        .iter()
        .map(|&b| {
            let r = b.round();
            let b = if (b - r).abs() < SNAP { r } else { b };
            b.max(min as f64)
        })
        .collect();
    let floors: Vec<f64> = snapped.iter().map(|b| b.floor()).collect();
    let extra = (total as f64 - floors.iter().sum::<f64>()).round().max(0.0) as usize;
    let rems: Vec<f64> = snapped.iter().zip(&floors).map(|(b, f)| b - f).collect();
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| rems[b].total_cmp(&rems[a]).then(a.cmp(&b)));
    if extra == 0 || extra > row.len() {
        let mut out = floors.clone();
        // Sum cannot be fixed by floor/ceil choices; distribute the rest in remainder order.
        let mut left = extra;
        let mut k = 0;
        while left > 0 && !order.is_empty() {
            out[order[k % order.len()]] += 1.0;
            left -= 1;
            k += 1;
        }
        return vec![out];
    }
    let cutoff = rems[order[extra - 1]];
    let sure: Vec<usize> = order.iter().copied().filter(|&k| rems[k] > cutoff + SNAP).collect();
    let tied: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&k| (rems[k] - cutoff).abs() <= SNAP)
        .collect();
    let need = extra - sure.len();
    let mut out = Vec::new();
    for_each_subset(tied.len(), need, &mut |subset| {
        let mut cand = floors.clone();
        for &k in &sure {
            cand[k] += 1.0;
        }
        for &s in subset {
            cand[tied[s]] += 1.0;
        }
        out.push(cand);
    });
    out.sort_by(|a, b| {
        let sa: f64 = a.iter().map(|x| x * x).sum();
        let sb: f64 = b.iter().map(|x| x * x).sum();
        sa.total_cmp(&sb)
    });
    out.dedup();
    out
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, acc: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if acc.len() == k {
            f(acc);
            return;
        }
        for s in start..n {
            acc.push(s);
            rec(s + 1, n, k, acc, f);
            acc.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// `b_total / N_t` bits on every stream.
pub fn equal_rate_baseline(cfg: &SystemConfig) -> Result<ModulationAllocation> {
    if cfg.bits_per_use as usize % cfg.tx_antennas != 0 {
        return Err(Error::Allocation(format!(
            "b_total = {} is not divisible by N_t = {}",
            cfg.bits_per_use, cfg.tx_antennas
        )));
    }
    ModulationAllocation::equal_split(cfg)
}

#[derive(Debug, Clone)]
pub struct OptimizedAllocation {
    /// Real-valued Dinkelbach solution.
    pub relaxed: ModulationAllocation,
    pub trace: DinkelbachTrace,
    /// Integer allocation after rounding.
    pub allocation: ModulationAllocation,
    pub power: StreamPowerResult,
}

/// Dinkelbach, then rounding that prefers the lower total power among tied roundings.
pub fn optimize_allocation(
    spec: &SpectralSummary,
    cfg: &SystemConfig,
    per_user_ser: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<OptimizedAllocation> {
    let (relaxed, trace) = dinkelbach(spec, cfg, per_user_ser, tol, max_iter)?;
    let allocation = round_allocation_by(&relaxed, |a| {
        mmse::total_mimo_power(a, spec, cfg, per_user_ser)
            .map(|r| r.total)
            .unwrap_or(f64::INFINITY)
    });
    let power = mmse::total_mimo_power(&allocation, spec, cfg, per_user_ser)?;
    Ok(OptimizedAllocation {
        relaxed,
        trace,
        allocation,
        power,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub checks: usize,
    pub violations: usize,
    /// Largest relative amount by which a midpoint exceeded its chord.
    pub worst_excess: f64,
}

/// Random-chord midpoint test of the per-stream cost `g` (and hence of `Phi`
/// and `-Psi`) over each SER's admissible exponent range.
pub fn convexity_probe(
    spec: &SpectralSummary,
    cfg: &SystemConfig,
    per_user_ser: &[f64],
    chords: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    let mut rng = channel::rng_from_seed(seed);
    let b_min = cfg.min_bits as f64;
    let cap = cfg.bits_per_use as f64 - (cfg.tx_antennas as f64 - 1.0) * b_min;
    let mut sers: Vec<f64> = per_user_ser.to_vec();
    sers.sort_by(f64::total_cmp);
    sers.dedup();
    let mut report = ConvexityReport {
        checks: 0,
        violations: 0,
        worst_excess: 0.0,
    };
    for ser in sers {
        let cost = StreamCost::new(spec, cfg, ser);
        let upper = cost.upper_limit(b_min, cap)?;
        if upper <= b_min {
            continue;
        }
        for _ in 0..chords {
            let x = rng.random_range(b_min..upper);
            let y = rng.random_range(b_min..upper);
            let (gx, gy, gm) = (cost.value(x), cost.value(y), cost.value(0.5 * (x + y)));
            if !(gx.is_finite() && gy.is_finite() && gm.is_finite()) {
                continue;
            }
            report.checks += 1;
            let chord = 0.5 * (gx + gy);
            let excess = (gm - chord) / chord.abs().max(f64::MIN_POSITIVE);
            if excess > 1e-12 {
                report.violations += 1;
                report.worst_excess = report.worst_excess.max(excess);
            }
        }
    }
    Ok(report)
}
