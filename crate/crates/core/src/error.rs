use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A single stream leaves the interference term undefined (division by `1 - n`).
    #[error("singular configuration: {streams} stream(s), at least 2 required")]
    SingularConfiguration { streams: usize },

    #[error("target SER {ser} is infeasible for {bits} bits/symbol (must be below {limit})")]
    InfeasibleSer { bits: f64, ser: f64, limit: f64 },

    /// `c1 + eta * c2 <= 0`: no positive stream power reaches the SINR target.
    #[error("required SINR {eta} is unreachable on this channel (denominator {denominator})")]
    InfeasiblePower { eta: f64, denominator: f64 },

    /// `1 - c3 * sum(...) <= 0`: the joint power fixed point has no finite solution.
    #[error("no finite total power supports the requested rates (psi = {psi})")]
    InfeasibleTotalPower { psi: f64 },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(&'static str),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid allocation: {0}")]
    Allocation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unstable queue: arrival rate {arrival} >= service rate {service}")]
    UnstableQueue { arrival: f64, service: f64 },

    #[error("invalid config value for `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },

    #[error("config line {line}: {reason} (key `{key}`)")]
    Parse {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("both transmission modes are infeasible")]
    NoFeasibleMode,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors that describe an unreachable operating point rather than a
    /// programming or input mistake.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleSer { .. }
                | Error::InfeasiblePower { .. }
                | Error::InfeasibleTotalPower { .. }
                | Error::DegenerateChannel(_)
                | Error::UnstableQueue { .. }
                | Error::NoFeasibleMode
        )
    }
}
