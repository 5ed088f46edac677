//! Result files: BER CSVs, gnuplot-style plot data, training logs,
//! convergence traces and run manifests.
//!
//! Floats that must survive a round trip are written at 17 significant
//! digits; CSVs use dot-radix decimals with no locale anywhere.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::harness::{BerCurve, BerPoint, ExperimentConfig, Scheme};
use crate::training::{ConvergenceTrace, TrainLogRow};
use crate::{Error, Result};

/// BER CSV schema: `scheme,snr_db,blocks,bits,bit_errors,ber,ci95`.
pub fn write_ber_csv(curve: &BerCurve, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "scheme,snr_db,blocks,bits,bit_errors,ber,ci95")?;
    for p in &curve.points {
        writeln!(
            f,
            "{},{:.16e},{},{},{},{:.16e},{:.16e}",
            curve.scheme, p.snr_db, p.blocks, p.bits, p.bit_errors, p.ber, p.ci95
        )?;
    }
    Ok(())
}

/// Re-import a BER CSV written by [`write_ber_csv`]; the round trip is exact.
pub fn read_ber_csv(path: &Path) -> Result<BerCurve> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty BER CSV".into()))??;
    if header.trim() != "scheme,snr_db,blocks,bits,bit_errors,ber,ci95" {
        return Err(Error::Parse(format!("unexpected BER CSV header '{header}'")));
    }
    let mut scheme: Option<Scheme> = None;
    let mut points = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!("bad BER CSV row '{line}'")));
        }
        let row_scheme: Scheme = fields[0].parse()?;
        match scheme {
            None => scheme = Some(row_scheme),
            Some(s) if s == row_scheme => {}
            Some(s) => {
                return Err(Error::Parse(format!(
                    "mixed schemes in one CSV: {s} and {row_scheme}"
                )))
            }
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("bad float '{s}'")))
        };
        let parse_u = |s: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Parse(format!("bad count '{s}'")))
        };
        points.push(BerPoint {
            snr_db: parse_f(fields[1])?,
            blocks: parse_u(fields[2])?,
            bits: parse_u(fields[3])?,
            bit_errors: parse_u(fields[4])?,
            ber: parse_f(fields[5])?,
            ci95: parse_f(fields[6])?,
        });
    }
    let scheme = scheme.ok_or_else(|| Error::Parse("BER CSV has no data rows".into()))?;
    Ok(BerCurve { scheme, points })
}

/// Gnuplot-style plain-text plot data: comment header, then
/// `snr_db ber ci95` columns.
pub fn write_plot_data(curve: &BerCurve, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# scheme {}", curve.scheme)?;
    writeln!(f, "# snr_db ber ci95")?;
    for p in &curve.points {
        writeln!(f, "{} {:.6e} {:.6e}", p.snr_db, p.ber, p.ci95)?;
    }
    Ok(())
}

/// Training log CSV: `epoch,phase,mean_loss,user_0_err,...,user_{M-1}_err`.
pub fn write_train_log(log: &[TrainLogRow], num_users: usize, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let users: Vec<String> = (0..num_users).map(|m| format!("user_{m}_err")).collect();
    writeln!(f, "epoch,phase,mean_loss,{}", users.join(","))?;
    for row in log {
        let errs: Vec<String> = row.user_err.iter().map(|e| format!("{e:.16e}")).collect();
        writeln!(
            f,
            "{},{},{:.16e},{}",
            row.epoch,
            row.phase,
            row.mean_loss,
            errs.join(",")
        )?;
    }
    Ok(())
}

/// Convergence trace CSV: per probe epoch, every user's per-bit error then
/// every user's per-codeword error.
pub fn write_trace_csv(trace: &ConvergenceTrace, num_users: usize, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let bit_cols: Vec<String> = (0..num_users).map(|m| format!("user_{m}_bit_err")).collect();
    let cw_cols: Vec<String> = (0..num_users)
        .map(|m| format!("user_{m}_codeword_err"))
        .collect();
    writeln!(f, "epoch,{},{}", bit_cols.join(","), cw_cols.join(","))?;
    for (i, &epoch) in trace.epochs.iter().enumerate() {
        let bits: Vec<String> = trace.per_bit[i].iter().map(|e| format!("{e:.16e}")).collect();
        let cws: Vec<String> = trace.per_codeword[i]
            .iter()
            .map(|e| format!("{e:.16e}"))
            .collect();
        writeln!(f, "{},{},{}", epoch, bits.join(","), cws.join(","))?;
    }
    Ok(())
}

/// Run manifest: the full config as key=value plus the config hash and any
/// extra entries (checkpoint provenance, timings).
pub fn write_manifest(
    ec: &ExperimentConfig,
    extra: &[(String, String)],
    path: &Path,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "config_hash={:016x}", ec.config_hash())?;
    for (k, v) in ec.to_key_values() {
        writeln!(f, "{k}={v}")?;
    }
    for (k, v) in extra {
        writeln!(f, "{k}={v}")?;
    }
    Ok(())
}
