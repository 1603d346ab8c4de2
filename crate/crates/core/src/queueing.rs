//! Packet success, throughput and M/G/1 delay for a user whose packets are
//! retransmitted until they arrive intact. Service time is a geometric number
//! of packet transmission times `t_p`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::channel;
use crate::error::{Error, Result};

/// `(1 - p_e)^(N_t L / b_total)`: all symbols of a packet decoded correctly.
pub fn packet_success(ser: f64, packet_bits: u32, bits_per_use: u32, tx_antennas: usize) -> f64 {
    let symbols = tx_antennas as f64 * packet_bits as f64 / bits_per_use as f64;
    (1.0 - ser).powf(symbols)
}

/// Payload bits delivered per second.
pub fn throughput(p_s: f64, bits_per_use: u32, symbol_rate: f64, packet_bits: u32, header_bits: u32) -> f64 {
    let payload = (packet_bits - header_bits) as f64 / packet_bits as f64;
    payload * bits_per_use as f64 * symbol_rate * p_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueStats {
    pub p_s: f64,
    /// Time to send one packet once, `L / (b R_s)`.
    pub t_p: f64,
    pub mean_service: f64,
    pub second_moment: f64,
    /// Service rate `1 / E[S]`.
    pub mu: f64,
    /// Traffic intensity `r / mu`.
    pub intensity: f64,
    /// Mean number of packets waiting (not in service).
    pub mean_queue: f64,
    /// Mean sojourn time: waiting plus service.
    pub mean_delay: f64,
    pub throughput: f64,
}

/// Pollaczek-Khintchine mean delay with geometric service.
pub fn delay_stats(
    p_s: f64,
    bits_per_use: u32,
    symbol_rate: f64,
    packet_bits: u32,
    header_bits: u32,
    arrival_rate: f64,
) -> Result<QueueStats> {
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Error::UnstableQueue {
            arrival: arrival_rate,
            service: 0.0,
        });
    }
    if !(arrival_rate >= 0.0) {
        return Err(Error::InvalidArgument(format!("arrival rate must be non-negative, got {arrival_rate}")));
    }
    let t_p = packet_bits as f64 / (bits_per_use as f64 * symbol_rate);
    let mean_service = t_p / p_s;
    let second_moment = 2.0 * t_p * t_p / (p_s * p_s) - t_p * t_p / p_s;
    let mu = 1.0 / mean_service;
    if arrival_rate >= mu {
        return Err(Error::UnstableQueue {
            arrival: arrival_rate,
            service: mu,
        });
    }
    let intensity = arrival_rate / mu;
    let mean_queue = arrival_rate * arrival_rate * second_moment / (2.0 * (1.0 - intensity));
    let waiting = if arrival_rate > 0.0 { mean_queue / arrival_rate } else { 0.0 };
    Ok(QueueStats {
        p_s,
        t_p,
        mean_service,
        second_moment,
        mu,
        intensity,
        mean_queue,
        mean_delay: waiting + mean_service,
        throughput: throughput(p_s, bits_per_use, symbol_rate, packet_bits, header_bits),
    })
}

/// `(2 b R_s L - r L^2) / (2 b^2 R_s^2 p_s - 2 r b R_s L)`.
pub fn closed_form_delay(p_s: f64, bits_per_use: u32, symbol_rate: f64, packet_bits: u32, arrival_rate: f64) -> f64 {
    let b = bits_per_use as f64;
    let l = packet_bits as f64;
    let rs = symbol_rate;
    let r = arrival_rate;
    (2.0 * b * rs * l - r * l * l) / (2.0 * b * b * rs * rs * p_s - 2.0 * r * b * rs * l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueSimulation {
    pub packets: usize,
    pub mean_delay: f64,
    pub mean_service: f64,
    /// `attempts[n - 1]` counts packets that needed `n` transmissions.
    pub attempts: Vec<u64>,
}

/// FIFO single-server queue with Poisson arrivals at rate `arrival_rate` and
/// service `t_p * N`, `N ~ Geometric(p_s)` on `{1, 2, ...}`.
pub fn simulate_mg1(p_s: f64, t_p: f64, arrival_rate: f64, packets: usize, seed: u64) -> Result<QueueSimulation> {
    if !(p_s > 0.0 && p_s <= 1.0) || !(t_p > 0.0) || packets == 0 {
        return Err(Error::InvalidArgument("simulation needs 0 < p_s <= 1, t_p > 0 and packets > 0".into()));
    }
    if !(arrival_rate > 0.0) {
        return Err(Error::InvalidArgument("simulation needs a positive arrival rate".into()));
    }
    if arrival_rate * t_p / p_s >= 1.0 {
        return Err(Error::UnstableQueue {
            arrival: arrival_rate,
            service: p_s / t_p,
        });
    }
    let mut rng = channel::rng_from_seed(seed);
    let gaps = Exp::new(arrival_rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let failures = Geometric::new(p_s).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut attempts: Vec<u64> = Vec::new();
    let (mut arrival, mut departure) = (0.0f64, 0.0f64);
    let (mut delay_sum, mut service_sum) = (0.0, 0.0);
    for _ in 0..packets {
        arrival += gaps.sample(&mut rng);
        let n = 1 + failures.sample(&mut rng);
        let service = t_p * n as f64;
        departure = departure.max(arrival) + service;
        delay_sum += departure - arrival;
        service_sum += service;
        let idx = (n - 1) as usize;
        if attempts.len() <= idx {
            attempts.resize(idx + 1, 0);
        }
        attempts[idx] += 1;
    }
    Ok(QueueSimulation {
        packets,
        mean_delay: delay_sum / packets as f64,
        mean_service: service_sum / packets as f64,
        attempts,
    })
}

/// Transmission-count histogram of `samples` packets with success probability `p_s`.
pub fn sample_attempts<R: Rng + ?Sized>(p_s: f64, samples: usize, rng: &mut R) -> Result<Vec<u64>> {
    let failures = Geometric::new(p_s).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut hist: Vec<u64> = Vec::new();
    for _ in 0..samples {
        let idx = failures.sample(rng) as usize;
        if hist.len() <= idx {
            hist.resize(idx + 1, 0);
        }
        hist[idx] += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
    pub passed: bool,
}

/// Goodness of fit of a transmission-count histogram against
/// `P{N = n} = p_s (1 - p_s)^(n - 1)`. Cells with expected count below 5 are
/// merged into an upper tail cell.
pub fn chi_square_geometric(attempts: &[u64], p_s: f64, significance: f64) -> Result<ChiSquareResult> {
    let total: u64 = attempts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty histogram".into()));
    }
    let total_f = total as f64;
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    let mut tail_prob = 1.0;
    let mut n = 0usize;
    loop {
        let prob = p_s * (1.0 - p_s).powi(n as i32);
        // Keep a cell only if both it and the remaining tail stay well populated.
        if prob * total_f < 5.0 || (tail_prob - prob) * total_f < 5.0 {
            break;
        }
        observed.push(attempts.get(n).copied().unwrap_or(0) as f64);
        expected.push(prob * total_f);
        tail_prob -= prob;
        n += 1;
    }
    let tail_observed: u64 = attempts.iter().skip(n).sum();
    observed.push(tail_observed as f64);
    expected.push(tail_prob.max(0.0) * total_f);
    if observed.len() < 2 {
        return Err(Error::InvalidArgument("too few samples for a chi-square test".into()));
    }
    let statistic: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - significance);
    Ok(ChiSquareResult {
        statistic,
        dof,
        critical,
        passed: statistic <= critical,
    })
}
