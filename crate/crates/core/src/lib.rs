//! Energy-efficient link adaptation for uplink multi-user MIMO with imperfect
//! CSI: MMSE SINR approximation, MQAM constellation sizing by fractional
//! programming, M/G/1 delay, and MIMO/SIMO mode switching.

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod mmse;
pub mod modopt;
pub mod oracle;
pub mod queueing;
pub mod simo;
pub mod switching;

pub use config::{ServiceClass, SystemConfig};
pub use error::{Error, Result};
