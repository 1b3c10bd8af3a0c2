//! Joint bit and power allocation for multicarrier (OFDM) links.
//!
//! The crate covers the scalar BER model ([`math`]), Rayleigh fading channel generation
//! ([`channel`]), the allocators ([`alloc`]), the Monte Carlo driver ([`harness`]) and
//! the command-line front end ([`cli`]).

pub mod alloc;
pub mod channel;
pub mod cli;
pub mod error;
pub mod harness;
pub mod math;

pub use error::{Error, Result};
