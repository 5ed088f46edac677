//! Link-level laboratory for multiuser MIMO noncoherent communication.
//!
//! The crate simulates an uplink in which `M` single-antenna users transmit
//! length-`T` codewords through a Rayleigh block-fading channel to an access
//! point with `N` antennas, and the receiver must detect every user's message
//! without channel state information. Three transmitter designs are provided
//! (fixed pilot-aided, systematic learned, non-systematic learned) together
//! with a three-layer DNN receiver trained by hand-derived backpropagation,
//! plus classical LS channel estimation with ZF equalization and exhaustive
//! MLSD as baselines. The `harness` module drives Monte-Carlo BER sweeps and
//! scheme comparisons with fully reproducible seeded random streams.

pub mod analysis;
pub mod baselines;
pub mod channel;
pub mod complexlin;
pub mod harness;
pub mod realmat;
pub mod receiver;
pub mod rng;
pub mod training;
pub mod transmitter;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: configuration/input/shape/singular
/// problems exit 2, non-finite numeric aborts exit 3, I/O failures exit 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
