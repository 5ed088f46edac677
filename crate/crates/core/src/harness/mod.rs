//! Experiment orchestration: configs, Monte-Carlo BER sweeps over SNR for
//! all five schemes, scheme comparison, and CSV/plot-data export.
//!
//! Comparisons use paired seeds: at the same (SNR index, trial index) every
//! scheme sees the same channel, noise and message draws, so curve gaps are
//! measured with common randomness.

pub mod compare;
pub mod config;
pub mod export;
pub mod sweep;

pub use compare::{compare_schemes, improvement_db, snr_at_ber, CompareReport};
pub use config::ExperimentConfig;
pub use export::{read_ber_csv, write_ber_csv, write_manifest, write_plot_data, write_train_log};
pub use sweep::{run_ber_point, run_ber_sweep, scheme_artifacts, SchemeArtifacts};

use std::fmt;

use crate::transmitter::CodebookKind;
use crate::{Error, Result};

/// The five evaluated transmission/detection schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    PilotDnn,
    Systematic,
    NonSystematic,
    LsZf,
    LsMlsd,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::PilotDnn,
        Scheme::Systematic,
        Scheme::NonSystematic,
        Scheme::LsZf,
        Scheme::LsMlsd,
    ];

    /// Does the scheme carry trained artifacts (a DNN receiver)?
    pub fn is_learned(&self) -> bool {
        matches!(
            self,
            Scheme::PilotDnn | Scheme::Systematic | Scheme::NonSystematic
        )
    }

    /// Codebook kind the transmitter uses under this scheme.
    pub fn codebook_kind(&self) -> CodebookKind {
        match self {
            Scheme::Systematic => CodebookKind::Systematic,
            Scheme::NonSystematic => CodebookKind::NonSystematic,
            _ => CodebookKind::PilotAided,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::PilotDnn => "pilot_dnn",
            Scheme::Systematic => "systematic",
            Scheme::NonSystematic => "non_systematic",
            Scheme::LsZf => "ls_zf",
            Scheme::LsMlsd => "ls_mlsd",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pilot_dnn" => Ok(Scheme::PilotDnn),
            "systematic" => Ok(Scheme::Systematic),
            "non_systematic" => Ok(Scheme::NonSystematic),
            "ls_zf" => Ok(Scheme::LsZf),
            "ls_mlsd" => Ok(Scheme::LsMlsd),
            other => Err(Error::Parse(format!("unknown scheme '{other}'"))),
        }
    }
}

/// One SNR point of a BER curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub blocks: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// 95% confidence half-width under the normal approximation.
    pub ci95: f64,
}

impl BerPoint {
    pub fn from_counts(snr_db: f64, blocks: u64, bits: u64, bit_errors: u64) -> Self {
        let ber = if bits > 0 {
            bit_errors as f64 / bits as f64
        } else {
             0.0
        };
        let ci95 = if bits > 0 {
            1.96 * (ber * (1.0 - ber) / bits as f64).sqrt()
        } else {
            0.0
        };
        Self {
            snr_db,
            blocks,
            bits,
            bit_errors,
            ber,
            ci95,
        }
    }

    /// Points with fewer than 100 errors are flagged low-confidence.
    pub fn low_confidence(&self) -> bool {
        self.bit_errors < 100
    }
}

/// A full BER-versus-SNR curve for one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub scheme: Scheme,
    pub points: Vec<BerPoint>,
}
