//! MU-SIMO mode: each user transmits from its single strongest antenna and the
//! MIMO power formulas are reused with `K` streams.

use crate::channel::{CMatrix, ChannelRealization};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::mmse::{self, SpectralSummary};

#[derive(Debug, Clone)]
pub struct SimoSelection {
    /// Selected transmit antenna of each user (0-based).
    pub antenna_index: Vec<usize>,
    /// Squared norm of each user's selected estimated column.
    pub gain: Vec<f64>,
    /// True-channel columns of the selected antennas, `N_r x K`.
    pub effective_channel: CMatrix,
    /// Estimated-channel columns of the selected antennas.
    pub estimated_channel: CMatrix,
    /// Spectral functionals over the `K` eigenvalues of the selected estimated
    /// columns; `None` for a single user.
    pub spectral: Option<SpectralSummary>,
}

/// Picks, per user, the estimated column with the largest squared norm
/// (lowest index on ties).
pub fn select_antennas(real: &ChannelRealization, cfg: &SystemConfig) -> Result<SimoSelection> {
    let users = real.users();
    let rows = real.rx_antennas();
    let mut antenna_index = Vec::with_capacity(users);
    let mut gain = Vec::with_capacity(users);
    let mut effective_channel = CMatrix::zeros(rows, users);
    let mut estimated_channel = CMatrix::zeros(rows, users);
    for i in 0..users {
        let block = real.user_block(&real.estimated, i);
        let (mut best, mut best_gain) = (0, f64::NEG_INFINITY);
        for j in 0..real.tx_antennas {
            let g = block.column(j).norm_squared();
            if g > best_gain {
                best = j;
                best_gain = g;
            }
        }
        let col = i * real.tx_antennas + best;
        effective_channel.set_column(i, &real.actual.column(col));
        estimated_channel.set_column(i, &real.estimated.column(col));
        antenna_index.push(best);
        gain.push(best_gain);
    }
    let spectral = if users >= 2 {
        let (eigenvalues, _) = crate::channel::gram_eigen(&estimated_channel);
        Some(SpectralSummary::new(&eigenvalues, cfg.regularizer(), cfg.csi_error)?)
    } else {
        None
    };
    Ok(SimoSelection {
        antenna_index,
        gain,
        effective_channel,
        estimated_channel,
        spectral,
    })
}

fn spectral_of(sel: &SimoSelection) -> Result<&SpectralSummary> {
    sel.spectral.as_ref().ok_or(Error::SingularConfiguration {
        streams: sel.antenna_index.len(),
    })
}

/// Power a user needs to carry `b_total` bits per use at SER `ser` when the
/// users' powers sum to `total`.
pub fn simo_user_power(bits: u32, ser: f64, total: f64, sel: &SimoSelection, cfg: &SystemConfig) -> Result<f64> {
    let spec = spectral_of(sel)?;
    let target = mmse::eta(bits as f64, ser, cfg.symbol_rate, cfg.bandwidth)?;
    mmse::stream_power(target, total, spec, cfg.noise_power)
}

/// Same as [`simo_user_power`] for an explicit SINR target.
pub fn simo_user_power_for(target: f64, total: f64, sel: &SimoSelection, cfg: &SystemConfig) -> Result<f64> {
    mmse::stream_power(target, total, spectral_of(sel)?, cfg.noise_power)
}

pub fn simo_sinr(power: f64, total: f64, sel: &SimoSelection, cfg: &SystemConfig) -> Result<f64> {
    mmse::sinr_per_stream(power, total, spectral_of(sel)?, cfg.noise_power)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimoPower {
    pub per_user: Vec<f64>,
    pub transmit: f64,
    /// `K P_0`: one active antenna per user.
    pub circuit: f64,
    pub total: f64,
}

/// Per-user powers from the `K`-stream fixed point, plus circuit power.
pub fn total_simo_power(cfg: &SystemConfig, sel: &SimoSelection, per_user_ser: &[f64]) -> Result<SimoPower> {
    let spec = spectral_of(sel)?;
    if per_user_ser.len() != spec.streams {
        return Err(Error::Dimension {
            what: "per-user SER vector",
            expected: spec.streams,
            got: per_user_ser.len(),
        });
    }
    let targets = per_user_ser
        .iter()
        .map(|&ser| mmse::eta(cfg.bits_per_use as f64, ser, cfg.symbol_rate, cfg.bandwidth))
        .collect::<Result<Vec<_>>>()?;
    simo_power_for_targets(&targets, cfg, sel)
}

pub fn simo_power_for_targets(targets: &[f64], cfg: &SystemConfig, sel: &SimoSelection) -> Result<SimoPower> {
    let spec = spectral_of(sel)?;
    let fixed = mmse::total_power_for_targets(targets, spec, cfg.noise_power)?;
    let circuit = sel.antenna_index.len() as f64 * cfg.circuit_power;
    Ok(SimoPower {
        transmit: fixed.total,
        total: fixed.total + circuit,
        per_user: fixed.powers,
        circuit,
    })
}
