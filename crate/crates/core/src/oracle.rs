//! Reference computations used to check the analytic formulas: Monte Carlo
//! moments of Haar-distributed unitaries and exhaustive allocation searches.

use crate::channel::{self, haar_unitary};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::mmse::{self, SpectralSummary};
use crate::modopt::ModulationAllocation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MonteCarloEstimate {
    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_error
    }
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn finish(&self) -> MonteCarloEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        MonteCarloEstimate {
            mean: self.mean,
            std_error: (var / self.n as f64).sqrt(),
            samples: self.n,
        }
    }
}

/// `-1 / (n (n^2 - 1))`, the fourth moment of a Haar unitary over two rows and two columns.
pub fn cross_moment_exact(n: usize) -> f64 {
    let n = n as f64;
    -1.0 / (n * (n * n - 1.0))
}

/// Monte Carlo estimate of `E[q_ij q_i'j' conj(q_i'j) conj(q_ij')]` for
/// `i != i'`, `j != j'`. Each sample averages the real part over every such
/// index quadruple of one Haar draw.
pub fn cross_moment(n: usize, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    haar_moment(n, samples, seed, |q, i, ii, j, jj| q[(i, j)] * q[(ii, jj)] * q[(ii, j)].conj() * q[(i, jj)].conj())
}

/// The same estimate for the pattern `q_ij q_ij' conj(q_i'j) conj(q_i'j')`,
/// which vanishes by phase invariance of the Haar measure.
pub fn row_pair_moment(n: usize, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    haar_moment(n, samples, seed, |q, i, ii, j, jj| q[(i, j)] * q[(i, jj)] * q[(ii, j)].conj() * q[(ii, jj)].conj())
}

fn haar_moment<F>(n: usize, samples: usize, seed: u64, term: F) -> Result<MonteCarloEstimate>
where
    F: Fn(&channel::CMatrix, usize, usize, usize, usize) -> num_complex::Complex64,
{
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = channel::rng_from_seed(seed);
    let mut acc = Accumulator::default();
    let per_sample = (n * (n - 1) * n * (n - 1)) as f64;
    for _ in 0..samples {
        let q = haar_unitary(&mut rng, n);
        let mut sum = 0.0;
        for i in 0..n {
            for ii in (0..n).filter(|&ii| ii != i) {
                for j in 0..n {
                    for jj in (0..n).filter(|&jj| jj != j) {
                        sum += term(&q, i, ii, j, jj).re;
                    }
                }
            }
        }
        acc.push(sum / per_sample);
    }
    Ok(acc.finish())
}

/// `(f1 + f2) / (n (n + 1))` for weights `t`.
pub fn desired_power_exact(t: &[f64]) -> f64 {
    let n = t.len() as f64;
    let f1: f64 = t.iter().map(|x| x * x).sum();
    let f2: f64 = t.iter().sum::<f64>().powi(2);
    (f1 + f2) / (n * (n + 1.0))
}

/// Monte Carlo estimate of `E[(sum_l t_l |q_kl|^2)^2]` over Haar `Q`, averaged
/// over the rows `k` of each draw.
pub fn desired_power_moment(t: &[f64], samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    let n = t.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least two weights, got {n}")));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = channel::rng_from_seed(seed);
    let mut acc = Accumulator::default();
    for _ in 0..samples {
        let q = haar_unitary(&mut rng, n);
        let mut sum = 0.0;
        for k in 0..n {
            let s: f64 = (0..n).map(|l| t[l] * q[(k, l)].norm_sqr()).sum();
            sum += s * s;
        }
        acc.push(sum / n as f64);
    }
    Ok(acc.finish())
}

/// Cheapest integer allocation by exhaustive search over every user's
/// compositions of `b_total` into `N_t` parts of at least `b_min`.
pub fn brute_force_allocation(
    spec: &SpectralSummary,
    cfg: &SystemConfig,
    per_user_ser: &[f64],
) -> Result<(ModulationAllocation, f64)> {
    let rows = compositions(cfg.bits_per_use, cfg.tx_antennas, cfg.min_bits);
    if rows.is_empty() {
        return Err(Error::Allocation("no integer allocation satisfies the constraints".into()));
    }
    let combos = (rows.len() as f64).powi(cfg.users as i32);
    if combos > 2.0e6 {
        return Err(Error::InvalidArgument(format!("{combos} allocations is too many to enumerate")));
    }
    let mut index = vec![0usize; cfg.users];
    let mut best: Option<(ModulationAllocation, f64)> = None;
    loop {
        let bits: Vec<u32> = index.iter().flat_map(|&k| rows[k].iter().copied()).collect();
        let alloc =
            ModulationAllocation::from_integers(&bits, cfg.users, cfg.tx_antennas, cfg.bits_per_use, cfg.min_bits)?;
        match mmse::total_mimo_power(&alloc, spec, cfg, per_user_ser) {
            Ok(r) => {
                if best.as_ref().is_none_or(|(_, p)| r.total < *p) {
                    best = Some((alloc, r.total));
                }
            }
            Err(e) if e.is_infeasibility() => {}
            Err(e) => return Err(e),
        }
        // Odometer increment over users.
        let mut u = 0;
        while u < cfg.users {
            index[u] += 1;
            if index[u] < rows.len() {
                break;
            }
            index[u] = 0;
            u += 1;
        }
        if u == cfg.users {
            break;
        }
    }
    best.ok_or(Error::InfeasibleTotalPower { psi: f64::NAN })
}

/// Ordered compositions of `total` into `parts` integers, each at least `min`.
pub fn compositions(total: u32, parts: usize, min: u32) -> Vec<Vec<u32>> {
    fn rec(left: u32, parts: usize, min: u32, acc: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            if left >= min {
                acc.push(left);
                out.push(acc.clone());
                acc.pop();
            }
            return;
        }
        let mut b = min;
        while b as u64 + (parts as u64 - 1) * min as u64 <= left as u64 {
            acc.push(b);
            rec(left - b, parts - 1, min, acc, out);
            acc.pop();
            b += 1;
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, min, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}
