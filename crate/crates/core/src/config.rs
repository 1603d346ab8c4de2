//! Scalar system parameters shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// Traffic class of a user. Delay-sensitive ("heavy") users are bound to the
/// smaller symbol error rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServiceClass {
    Sensitive,
    Tolerant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of users `K`.
    pub users: usize,
    /// Transmit antennas per user `N_t`.
    pub tx_antennas: usize,
    /// Receive antennas at the base station `N_r`.
    pub rx_antennas: usize,
    /// Noise power per receive antenna, watts.
    pub noise_power: f64,
    /// CSI quality `tau` in `[0, 1]`; 0 is perfect CSI.
    pub csi_error: f64,
    /// Symbol rate, symbols/s.
    pub symbol_rate: f64,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
    /// Packet length including header, bits.
    pub packet_bits: u32,
    pub header_bits: u32,
    /// Packet arrival rate per user, packets per time unit.
    pub arrival_rate: f64,
    /// Circuit power per active transmit antenna, watts.
    pub circuit_power: f64,
    /// Information bits per channel use for every user (`b`).
    pub bits_per_use: u32,
    /// Smallest admissible constellation exponent.
    pub min_bits: u32,
    pub ser_sensitive: f64,
    pub ser_tolerant: f64,
    /// Fraction of delay-sensitive users.
    pub heavy_fraction: f64,
    /// Power used to form the receiver regularizer `sigma^2 / P_ref`.
    pub reference_power: f64,
    /// Link-layer buffer size in packets. Accepted for completeness; the delay
    /// analytics assume an infinite buffer.
    pub buffer_packets: Option<u32>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            users: 10,
            tx_antennas: 2,
            rx_antennas: 4,
            noise_power: 1.0,
            csi_error: 0.1,
            symbol_rate: 1.0e5,
            bandwidth: 1.0e5,
            packet_bits: 1080,
            header_bits: 32,
            arrival_rate: 1.0,
            circuit_power: 0.1,
            bits_per_use: 12,
            min_bits: 2,
            ser_sensitive: 1.0e-4,
            ser_tolerant: 1.0e-2,
            heavy_fraction: 0.5,
            reference_power: 10.0,
            buffer_packets: None,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(key: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidConfig {
                key,
                reason: reason.into(),
            })
        }
        if self.users < 1 {
            return bad("K", "at least one user required");
        }
        if self.tx_antennas < 1 {
            return bad("N_t", "at least one transmit antenna required");
        }
        if self.rx_antennas < 1 {
            return bad("N_r", "at least one receive antenna required");
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return bad("sigma2", "must be a positive finite number");
        }
        if !(0.0..=1.0).contains(&self.csi_error) {
            return bad("tau", format!("{} outside [0, 1]", self.csi_error));
        }
        if !(self.symbol_rate.is_finite() && self.symbol_rate > 0.0) {
            return bad("R_s", "must be positive");
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return bad("B", "must be positive");
        }
        if self.header_bits == 0 || self.header_bits >= self.packet_bits {
            return bad("L_h", "must satisfy 0 < L_h < L");
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return bad("r", "must be non-negative");
        }
        if !(self.circuit_power.is_finite() && self.circuit_power >= 0.0) {
            return bad("P_0", "must be non-negative");
        }
        if self.min_bits < 1 {
            return bad("b_min", "must be at least 1");
        }
        if (self.bits_per_use as usize) < self.tx_antennas * self.min_bits as usize {
            return bad("b_total", "must be at least N_t * b_min");
        }
        for (key, ser) in [
            ("p_e_sensitive", self.ser_sensitive),
            ("p_e_tolerant", self.ser_tolerant),
        ] {
            if !(ser > 0.0 && ser < 1.0) {
                return bad(key, format!("{ser} outside (0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.heavy_fraction) {
            return bad("rho", format!("{} outside [0, 1]", self.heavy_fraction));
        }
        if !(self.reference_power.is_finite() && self.reference_power > 0.0) {
            return bad("P_ref", "must be positive");
        }
        Ok(())
    }

    /// Total spatial streams in MIMO mode, `N_t * K`.
    pub fn streams(&self) -> usize {
        self.users * self.tx_antennas
    }

    /// Receiver regularizer `sigma^2 / P_ref`.
    pub fn regularizer(&self) -> f64 {
        self.noise_power / self.reference_power
    }

    /// `round(rho * K)`; the first that many users are delay-sensitive.
    pub fn heavy_users(&self) -> usize {
        ((self.heavy_fraction * self.users as f64).round() as usize).min(self.users)
    }

    pub fn class_of(&self, user: usize) -> ServiceClass {
        if user < self.heavy_users() {
            ServiceClass::Sensitive
        } else {
            ServiceClass::Tolerant
        }
    }

    pub fn ser_of(&self, class: ServiceClass) -> f64 {
        match class {
            ServiceClass::Sensitive => self.ser_sensitive,
            ServiceClass::Tolerant => self.ser_tolerant,
        }
    }

    /// Target SER of every user, heavy users first.
    pub fn per_user_ser(&self) -> Vec<f64> {
        (0..self.users)
            .map(|i| self.ser_of(self.class_of(i)))
            .collect()
    }

    pub fn with_csi_error(&self, tau: f64) -> Self {
        Self {
            csi_error: tau,
            ..self.clone()
        }
    }

    pub fn with_heavy_fraction(&self, rho: f64) -> Self {
        Self {
            heavy_fraction: rho,
            ..self.clone()
        }
    }

    pub fn with_circuit_power(&self, p0: f64) -> Self {
        Self {
            circuit_power: p0,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn heavy_users_round_to_nearest() {
        let cfg = SystemConfig::default().with_heavy_fraction(0.26);
        assert_eq!(cfg.heavy_users(), 3);
        let ser = cfg.per_user_ser();
        assert_eq!(ser[..3], [1e-4; 3]);
        assert_eq!(ser[3..], [1e-2; 7]);
    }

    #[test]
    fn rejects_infeasible_bit_budget() {
        let cfg = SystemConfig {
            bits_per_use: 3,
            min_bits: 2,
            ..Default::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidConfig { key: "b_total", .. })
        ));
    }
}
