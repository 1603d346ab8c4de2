//! Deterministic SINR approximation for the simplified linear MMSE receiver,
//! the SER-to-SINR requirement of square MQAM, and the closed-form stream and
//! total powers that meet those requirements.
//!
//! With `t_l = lambda_l / (lambda_l + alpha)` over the eigenvalues of the
//! estimated Gram matrix and `n` streams, the three spectral functionals are
//!
//! ```text
//! f1 = sum t_l^2      f2 = (sum t_l)^2      f3 = sum lambda_l / (lambda_l + alpha)^2
//! ```
//!
//! and the per-stream SINR for stream power `p` under total power `P` is
//!
//! ```text
//!                      p (1 - tau^2)(f1 + f2)
//! SINR = -------------------------------------------------------------------
//!        (P - p) c3 + n(n+1) p tau^2 f3 + n(n+1) sigma^2 f3
//! ```
//!
//! with `c3 = (1 - tau^2)(f2 - n f1) / (1 - n)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{self, CMatrix, ChannelRealization};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::modopt::ModulationAllocation;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<f64>,
    pub alpha: f64,
    pub tau: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    /// Desired-signal coefficient `(f1 + f2)(1 - tau^2)`.
    pub c1: f64,
    /// `c3 - f3 tau^2 n(n+1)`.
    pub c2: f64,
    /// Inter-stream interference coefficient.
    pub c3: f64,
    pub streams: usize,
}

impl SpectralSummary {
    pub fn new(eigenvalues: &[f64], alpha: f64, tau: f64) -> Result<Self> {
        let n = eigenvalues.len();
        if n < 2 {
            return Err(Error::SingularConfiguration { streams: n });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("regularizer must be positive, got {alpha}")));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
        }
        if eigenvalues.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::InvalidArgument("eigenvalues must be non-negative".into()));
        }
        let (mut sum_t, mut f1, mut f3) = (0.0, 0.0, 0.0);
        for &l in eigenvalues {
            let t = l / (l + alpha);
            sum_t += t;
            f1 += t * t;
            f3 += l / ((l + alpha) * (l + alpha));
        }
        let f2 = sum_t * sum_t;
        Ok(Self::from_functionals(eigenvalues.to_vec(), alpha, tau, f1, f2, f3))
    }

    /// Assembles the summary from already-evaluated functionals.
    pub fn from_functionals(eigenvalues: Vec<f64>, alpha: f64, tau: f64, f1: f64, f2: f64, f3: f64) -> Self {
        let n = eigenvalues.len();
        let nf = n as f64;
        let keep = 1.0 - tau * tau;
        // (f2 - n f1) / (1 - n) rewritten with a positive denominator.
        let interference = (nf * f1 - f2) / (nf - 1.0);
        let c1 = (f1 + f2) * keep;
        let c3 = interference * keep;
        let c2 = c3 - f3 * tau * tau * nf * (nf + 1.0);
        Self {
            eigenvalues,
            alpha,
            tau,
            f1,
            f2,
            f3,
            c1,
            c2,
            c3,
            streams: n,
        }
    }

    /// `n(n+1)`, the common scale of the error and noise terms.
    pub fn pair_count(&self) -> f64 {
        let n = self.streams as f64;
        n * (n + 1.0)
    }

    /// `sigma_hat^2 = n(n+1) sigma^2`.
    pub fn scaled_noise(&self, noise_power: f64) -> f64 {
        self.pair_count() * noise_power
    }
}

/// Largest SER for which `bits` bits/symbol has a meaningful SINR requirement.
pub fn ser_limit(bits: f64) -> f64 {
    2.0 * (1.0 - (-bits / 2.0).exp2())
}

/// Required SINR for a `2^bits`-QAM stream to meet `ser` under the Chernoff bound.
pub fn eta(bits: f64, ser: f64, symbol_rate: f64, bandwidth: f64) -> Result<f64> {
    if !(bits > 0.0) {
        return Err(Error::InvalidArgument(format!("constellation exponent must be positive, got {bits}")));
    }
    let limit = ser_limit(bits);
    if !(ser > 0.0) || ser >= limit {
        return Err(Error::InfeasibleSer { bits, ser, limit });
    }
    Ok(2.0 * symbol_rate * (bits.exp2() - 1.0) / (3.0 * bandwidth) * (limit / ser).ln())
}

/// `d eta / d bits`, for the continuous relaxation used by the allocator.
pub fn eta_derivative(bits: f64, ser: f64, symbol_rate: f64, bandwidth: f64) -> Result<f64> {
    let limit = ser_limit(bits);
    if !(ser > 0.0) || ser >= limit {
        return Err(Error::InfeasibleSer { bits, ser, limit });
    }
    let ln2 = std::f64::consts::LN_2;
    let scale = 2.0 * symbol_rate / (3.0 * bandwidth);
    let half = (-bits / 2.0).exp2();
    let dlog = 0.5 * ln2 * half / (1.0 - half);
    Ok(scale * (ln2 * bits.exp2() * (limit / ser).ln() + (bits.exp2() - 1.0) * dlog))
}

/// Stream power that achieves SINR `eta_val` when the total transmit power is `total`.
pub fn stream_power(eta_val: f64, total: f64, spec: &SpectralSummary, noise_power: f64) -> Result<f64> {
    if eta_val == 0.0 {
        return Ok(0.0);
    }
    if !(eta_val > 0.0) {
        return Err(Error::InvalidArgument(format!("required SINR must be non-negative, got {eta_val}")));
    }
    let denominator = spec.c1 + eta_val * spec.c2;
    if !(denominator > 0.0) {
        return Err(Error::InfeasiblePower {
            eta: eta_val,
            denominator,
        });
    }
    Ok(eta_val * (spec.c3 * total + spec.f3 * spec.scaled_noise(noise_power)) / denominator)
}

pub fn sinr_per_stream(power: f64, total: f64, spec: &SpectralSummary, noise_power: f64) -> Result<f64> {
    if !(power >= 0.0) || power > total * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "stream power {power} must lie in [0, total = {total}]"
        )));
    }
    let tau2 = spec.tau * spec.tau;
    let pairs = spec.pair_count();
    let numerator = power * spec.c1;
    let denominator = (total - power) * spec.c3 + pairs * power * tau2 * spec.f3 + pairs * noise_power * spec.f3;
    if denominator == 0.0 {
        if numerator == 0.0 {
            return Err(Error::DegenerateChannel("zero interference, noise and signal"));
        }
        return Err(Error::DegenerateChannel("zero interference-plus-noise power"));
    }
    Ok(numerator / denominator)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamPowerResult {
    /// Per-stream powers in stream order (user-major).
    pub powers: Vec<f64>,
    pub total: f64,
}

/// Joint fixed point of the stream-power equation: every stream meets its own
/// SINR target and the stream powers sum to the total they were computed with.
pub fn total_power_for_targets(targets: &[f64], spec: &SpectralSummary, noise_power: f64) -> Result<StreamPowerResult> {
    let noise_term = spec.scaled_noise(noise_power) * spec.f3;
    let mut phi = 0.0;
    let mut reciprocal_sum = 0.0;
    for &eta_val in targets {
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
        let inv = eta_val / denominator; // 1 / (c2 + c1 / eta)
        phi += noise_term * inv;
        reciprocal_sum += inv;
    }
    let psi = 1.0 - spec.c3 * reciprocal_sum;
    if !(psi > 0.0) {
        return Err(Error::InfeasibleTotalPower { psi });
    }
    let total = phi / psi;
    let powers = targets
        .iter()
        .map(|&e| stream_power(e, total, spec, noise_power))
        .collect::<Result<Vec<_>>>()?;
    Ok(StreamPowerResult { powers, total })
}

/// Required SINR of every stream of `alloc`, user-major.
pub fn stream_targets(alloc: &ModulationAllocation, cfg: &SystemConfig, per_user_ser: &[f64]) -> Result<Vec<f64>> {
    if per_user_ser.len() != alloc.users() {
        return Err(Error::Dimension {
            what: "per-user SER vector",
            expected: alloc.users(),
            got: per_user_ser.len(),
        });
    }
    let mut out = Vec::with_capacity(alloc.bits().len());
    for (i, &ser) in per_user_ser.iter().enumerate() {
        for &b in alloc.user(i) {
            out.push(eta(b, ser, cfg.symbol_rate, cfg.bandwidth)?);
        }
    }
    Ok(out)
}

/// Total MU-MIMO transmit power for a constellation allocation.
pub fn total_mimo_power(
    alloc: &ModulationAllocation,
    spec: &SpectralSummary,
    cfg: &SystemConfig,
    per_user_ser: &[f64],
) -> Result<StreamPowerResult> {
    if alloc.bits().len() != spec.streams {
        return Err(Error::Dimension {
            what: "allocation streams",
            expected: spec.streams,
            got: alloc.bits().len(),
        });
    }
    let targets = stream_targets(alloc, cfg, per_user_ser)?;
    total_power_for_targets(&targets, spec, cfg.noise_power)
}

#[derive(Debug, Clone)]
pub struct RegularizerRefinement {
    pub spectral: SpectralSummary,
    pub power: StreamPowerResult,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates `alpha = sigma^2 / P` against the power fixed point, starting from
/// the configured reference power.
pub fn refine_regularizer(
    eigenvalues: &[f64],
    targets: &[f64],
    cfg: &SystemConfig,
    rel_tol: f64,
    max_iter: usize,
) -> Result<RegularizerRefinement> {
    let mut spectral = SpectralSummary::new(eigenvalues, cfg.regularizer(), cfg.csi_error)?;
    let mut power = total_power_for_targets(targets, &spectral, cfg.noise_power)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        if power.total <= 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let next_spec = SpectralSummary::new(eigenvalues, cfg.noise_power / power.total, cfg.csi_error)?;
        let next = total_power_for_targets(targets, &next_spec, cfg.noise_power)?;
        let change = (next.total - power.total).abs() / power.total;
        spectral = next_spec;
        power = next;
        if change < rel_tol {
            converged = true;
            break;
        }
    }
    Ok(RegularizerRefinement {
        spectral,
        power,
        iterations,
        converged,
    })
}

/// Linear receiver used by [`empirical_receiver_sinr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverFilter {
    /// `(H_hat^H H_hat + alpha I)^-1 H_hat^H`, independent of the power allocation.
    Simplified,
    /// Power-aware filter `(D^H H_hat^H H_hat D + alpha I)^-1 D^H H_hat^H`, where
    /// `D = diag(sqrt(p)) / sqrt(P)` is the allocation normalized by total power.
    Mmse,
}

pub fn receiver_matrix(estimated: &CMatrix, powers: &[f64], noise_power: f64, filter: ReceiverFilter) -> Result<CMatrix> {
    let n = estimated.ncols();
    let total: f64 = powers.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("receiver needs positive total power".into()));
    }
    let alpha = noise_power / total;
    let (gram, rhs) = match filter {
        ReceiverFilter::Simplified => (estimated.adjoint() * estimated, estimated.adjoint()),
        ReceiverFilter::Mmse => {
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                n,
                powers.iter().map(|&p| Complex64::new((p / total).sqrt(), 0.0)),
            ));
            let hd = estimated * &d;
            (hd.adjoint() * &hd, hd.adjoint())
        }
    };
    let regularized = gram + CMatrix::identity(n, n) * Complex64::new(alpha, 0.0);
    let chol = regularized
        .cholesky()
        .ok_or(Error::DegenerateChannel("receiver filter matrix is singular"))?;
    Ok(chol.solve(&rhs))
}

/// Genie-aided per-stream SINR of a linear receiver over `n_symbols` QPSK
/// symbol vectors sent through the true channel.
pub fn empirical_receiver_sinr(
    real: &ChannelRealization,
    powers: &[f64],
    cfg: &SystemConfig,
    n_symbols: usize,
    filter: ReceiverFilter,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = channel::rng_from_seed(seed);
    empirical_sinr_with_rng(real, powers, cfg.noise_power, n_symbols, &[filter], &mut rng).map(|mut v| v.remove(0))
}

/// Runs several filters over the same symbol and noise draws.
pub fn empirical_sinr_with_rng<R: Rng + ?Sized>(
    real: &ChannelRealization,
    powers: &[f64],
    noise_power: f64,
    n_symbols: usize,
    filters: &[ReceiverFilter],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = real.streams();
    if n_symbols < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 symbols, got {n_symbols}")));
    }
    if powers.len() != n {
        return Err(Error::Dimension {
            what: "power vector",
            expected: n,
            got: powers.len(),
        });
    }
    if powers.iter().all(|&p| p == 0.0) {
        return Ok(vec![vec![0.0; n]; filters.len()]);
    }
    let receivers = filters
        .iter()
        .map(|&f| receiver_matrix(&real.estimated, powers, noise_power, f))
        .collect::<Result<Vec<_>>>()?;
    let amplitude = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        powers.iter().map(|&p| Complex64::new(p.sqrt(), 0.0)),
    ));
    let gains: Vec<CMatrix> = receivers.iter().map(|w| w * &real.actual * &amplitude).collect();

    let mut desired = vec![vec![0.0; n]; filters.len()];
    let mut disturbance = vec![vec![0.0; n]; filters.len()];
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..n_symbols {
        for s in x.iter_mut() {
            let re = if rng.random::<bool>() { scale } else { -scale };
            let im = if rng.random::<bool>() { scale } else { -scale };
            *s = Complex64::new(re, im);
        }
        let y = channel::received_with_rng(&real.actual, powers, &x, noise_power, rng)?;
        for (k, w) in receivers.iter().enumerate() {
            let z = w * &y;
            for l in 0..n {
                let wanted = gains[k][(l, l)] * x[l];
                desired[k][l] += wanted.norm_sqr();
                disturbance[k][l] += (z[l] - wanted).norm_sqr();
            }
        }
    }
    let mut out = Vec::with_capacity(filters.len());
    for k in 0..filters.len() {
        let mut sinr = Vec::with_capacity(n);
        for l in 0..n {
            if desired[k][l] == 0.0 {
                sinr.push(0.0);
            } else if disturbance[k][l] == 0.0 {
                return Err(Error::DegenerateChannel("stream has no interference or noise"));
            } else {
                sinr.push(desired[k][l] / disturbance[k][l]);
            }
        }
        out.push(sinr);
    }
    Ok(out)
}
