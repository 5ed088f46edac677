//! Curve comparison: SNR-at-target-BER crossings and pairwise dB gaps.
//!
//! Crossings interpolate log-linearly (linear SNR against log10 BER) between
//! the two grid points bracketing the target. Gaps are signed improvements:
//! `improvement_db(a, b) = snr_b - snr_a` at the target, positive when `a`
//! reaches the target BER at lower SNR than `b`.

use crate::harness::{BerCurve, Scheme};
use crate::{Error, Result};

/// Interpolated SNR of one curve at one target BER.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub scheme: Scheme,
    pub target_ber: f64,
    /// None when the target lies outside the measured range.
    pub snr_db: Option<f64>,
    /// Propagated 95% half-width in dB, when the crossing exists.
    pub ci_db: Option<f64>,
}

/// Signed pairwise gap at one target BER.
#[derive(Debug, Clone, PartialEq)]
pub struct Gap {
    pub scheme_a: Scheme,
    pub scheme_b: Scheme,
    pub target_ber: f64,
    /// snr_b - snr_a; positive means scheme_a is better. None when either
    /// crossing is unavailable.
    pub improvement_db: Option<f64>,
    pub ci_db: Option<f64>,
}

/// Full comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub targets: Vec<f64>,
    pub crossings: Vec<Crossing>,
    pub gaps: Vec<Gap>,
}

/// Effective BER used for interpolation: zero-error points are floored at
/// half an error over the observed bit count.
fn effective_ber(ber: f64, bits: u64) -> f64 {
    if ber > 0.0 {
        ber
    } else {
        0.5 / bits.max(1) as f64
    }
}

/// Log-linear interpolation of the SNR where the curve crosses `target`.
/// Returns (snr_db, ci_db).
pub fn snr_at_ber(curve: &BerCurve, target: f64) -> Option<(f64, f64)> {
    if !(target > 0.0) {
        return None;
    }
    let pts = &curve.points;
    for w in pts.windows(2) {
        let (hi, lo) = (&w[0], &w[1]);
        let ber_hi = effective_ber(hi.ber, hi.bits);
        let ber_lo = effective_ber(lo.ber, lo.bits);
        if ber_hi >= target && target >= ber_lo && ber_hi > ber_lo {
            let lhi = ber_hi.log10();
            let llo = ber_lo.log10();
            let lt = target.log10();
            let frac = (lhi - lt) / (lhi - llo);
            let snr = hi.snr_db + frac * (lo.snr_db - hi.snr_db);
            // Propagate the binomial CI through the local slope.
            let slope = (lo.snr_db - hi.snr_db) / (llo - lhi); // dB per decade
            let dlog_hi = hi.ci95 / (ber_hi * std::f64::consts::LN_10);
            let dlog_lo = lo.ci95 / (ber_lo * std::f64::consts::LN_10);
            let ci = slope.abs() * dlog_hi.max(dlog_lo);
            return Some((snr, ci));
        }
        // Exact hit on a grid point.
        if (ber_hi - target).abs() < f64::EPSILON {
            return Some((hi.snr_db, 0.0));
        }
    }
    if let Some(last) = pts.last() {
        if (effective_ber(last.ber, last.bits) - target).abs() < f64::EPSILON {
            return Some((last.snr_db, 0.0));
        }
    }
    None
}

/// Signed improvement of `a` over `b` at the target BER: snr_b - snr_a.
pub fn improvement_db(a: &BerCurve, b: &BerCurve, target: f64) -> Option<f64> {
    let (sa, _) = snr_at_ber(a, target)?;
    let (sb, _) = snr_at_ber(b, target)?;
    Some(sb - sa)
}

/// Compare two or more curves at the given target BER levels.
pub fn compare_schemes(curves: &[BerCurve], targets: &[f64]) -> Result<CompareReport> {
    if curves.len() < 2 {
        return Err(Error::Config(
            "compare needs at least two BER curves".into(),
        ));
    }
    if targets.is_empty() {
        return Err(Error::Config("compare needs at least one target BER".into()));
    }
    let mut crossings = Vec::new();
    let mut gaps = Vec::new();
    for &target in targets {
        for curve in curves {
            let hit = snr_at_ber(curve, target);
            crossings.push(Crossing {
                scheme: curve.scheme,
                target_ber: target,
                snr_db: hit.map(|(s, _)| s),
                ci_db: hit.map(|(_, c)| c),
            });
        }
        for (i, a) in curves.iter().enumerate() {
            for b in curves.iter().skip(i + 1) {
                let ha = snr_at_ber(a, target);
                let hb = snr_at_ber(b, target);
                let (improvement_db, ci_db) = match (ha, hb) {
                    (Some((sa, ca)), Some((sb, cb))) => {
                        (Some(sb - sa), Some((ca * ca + cb * cb).sqrt()))
                    }
                    _ => (None, None),
                };
                gaps.push(Gap {
                    scheme_a: a.scheme,
                    scheme_b: b.scheme,
                    target_ber: target,
                    improvement_db,
                    ci_db,
                });
            }
        }
    }
    Ok(CompareReport {
        targets: targets.to_vec(),
        crossings,
        gaps,
    })
}

impl CompareReport {
    /// Plain-text rendering for the CLI.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("SNR at target BER (log-linear interpolation)\n");
        out.push_str(&format!("{:<16} {:>10} {:>12} {:>10}\n", "scheme", "target", "snr_db", "ci_db"));
        for c in &self.crossings {
            match (c.snr_db, c.ci_db) {
                (Some(s), Some(ci)) => out.push_str(&format!(
                    "{:<16} {:>10.1e} {:>12.3} {:>10.3}\n",
                    c.scheme.to_string(),
                    c.target_ber,
                    s,
                    ci
                )),
                _ => out.push_str(&format!(
                    "{:<16} {:>10.1e} {:>12} {:>10}\n",
                    c.scheme.to_string(),
                    c.target_ber,
                    "n/a",
                    "-"
                )),
            }
        }
        out.push_str("\nPairwise gaps (positive: first scheme reaches the target at lower SNR)\n");
        out.push_str(&format!(
            "{:<16} {:<16} {:>10} {:>14} {:>10}\n",
            "scheme_a", "scheme_b", "target", "improvement_db", "ci_db"
        ));
        for g in &self.gaps {
            match (g.improvement_db, g.ci_db) {
                (Some(d), Some(ci)) => out.push_str(&format!(
                    "{:<16} {:<16} {:>10.1e} {:>14.3} {:>10.3}\n",
                    g.scheme_a.to_string(),
                    g.scheme_b.to_string(),
                    g.target_ber,
                    d,
                    ci
                )),
                _ => out.push_str(&format!(
                    "{:<16} {:<16} {:>10.1e} {:>14} {:>10}\n",
                    g.scheme_a.to_string(),
                    g.scheme_b.to_string(),
                    g.target_ber,
                    "n/a",
                    "-"
                )),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::BerPoint;

    /// Synthetic curve ber(snr) = 10^(-(snr - offset)/10) on a grid.
    fn synthetic(scheme: Scheme, offset: f64, grid: &[f64]) -> BerCurve {
        let points = grid
            .iter()
            .map(|&snr| {
                let ber = 10f64.powf(-(snr - offset) / 10.0).min(0.5);
                let bits = 1_000_000u64;
                BerPoint {
                    snr_db: snr,
                    blocks: bits / 8,
                    bits,
                    bit_errors: (ber * bits as f64) as u64,
                    ber,
                    ci95: 1.96 * (ber * (1.0 - ber) / bits as f64).sqrt(),
                }
            })
            .collect();
        BerCurve { scheme, points }
    }

    #[test]
    fn identical_curves_have_zero_gap() {
        let grid = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
        let a = synthetic(Scheme::LsZf, 0.0, &grid);
        let b = synthetic(Scheme::LsMlsd, 0.0, &grid);
        let gap = improvement_db(&a, &b, 1e-2).unwrap();
        assert!(gap.abs() < 1e-9, "gap {gap}");
    }

    #[test]
    fn constructed_offset_recovers_two_db() {
        let grid = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0];
        let a = synthetic(Scheme::PilotDnn, 0.0, &grid);
        let b = synthetic(Scheme::LsZf, 2.0, &grid);
        for target in [1e-1, 1e-2, 1e-3] {
            let gap = improvement_db(&a, &b, target).unwrap();
            assert!((gap - 2.0).abs() < 1e-9, "gap {gap} at {target}");
        }
    }

    #[test]
    fn out_of_range_targets_are_unavailable() {
        let grid = [0.0, 5.0, 10.0];
        let a = synthetic(Scheme::LsZf, 0.0, &grid);
        assert!(snr_at_ber(&a, 1e-6).is_none());
        let report = compare_schemes(
            &[a, synthetic(Scheme::LsMlsd, 1.0, &grid)],
            &[1e-6],
        )
        .unwrap();
        assert!(report.gaps.iter().all(|g| g.improvement_db.is_none()));
    }

    #[test]
    fn compare_requires_two_curves() {
        let grid = [0.0, 5.0];
        let a = synthetic(Scheme::LsZf, 0.0, &grid);
        assert!(compare_schemes(&[a], &[1e-2]).is_err());
    }

    #[test]
    fn report_renders_all_rows() {
        let grid = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0];
        let curves = vec![
            synthetic(Scheme::PilotDnn, 0.0, &grid),
            synthetic(Scheme::LsZf, 0.6, &grid),
            synthetic(Scheme::LsMlsd, -0.9, &grid),
        ];
        let report = compare_schemes(&curves, &[1e-2, 1e-3]).unwrap();
        assert_eq!(report.crossings.len(), 6);
        assert_eq!(report.gaps.len(), 6);
        let text = report.render();
        assert!(text.contains("pilot_dnn"));
        assert!(text.contains("improvement_db"));
    }
}
