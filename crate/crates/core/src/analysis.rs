//! Information-theoretic reference quantities for pilot-based training.
//!
//! `dof_pilot` is the high-SNR pre-log of a pilot scheme that spends M of the
//! T coherence slots on training; `capacity_lower_bound` Monte-Carlo
//! estimates the matching training-based capacity lower bound with optimum
//! power allocation. The normalized channel estimate is modeled as an M x M
//! i.i.d. CN(0,1) matrix, the standard high-SNR normalization for this bound.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::complexlin::ComplexMatrix;
use crate::{Error, Result};

/// Monte-Carlo capacity estimate at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityEstimate {
    pub snr_db: f64,
    /// Bits per channel use.
    pub value: f64,
    pub samples: usize,
    pub stderr: f64,
}

/// Pilot-scheme degrees of freedom: M (1 - M/T).
pub fn dof_pilot(num_users: usize, coherence_time: usize) -> Result<f64> {
    if num_users < 1 || num_users > coherence_time {
        return Err(Error::Config(format!(
            "dof_pilot requires 1 <= M <= T, got M={num_users} T={coherence_time}"
        )));
    }
    let m = num_users as f64;
    let t = coherence_time as f64;
    Ok(m * (1.0 - m / t))
}

/// log2 det of a Hermitian positive-definite matrix via elimination with
/// partial pivoting (pivots of a PD matrix are positive, row swaps leave the
/// determinant magnitude unchanged).
fn log2_det_pd(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut m = a.clone();
    let mut log2_det = 0.0;
    for col in 0..n {
        let mut max_mag = m.get(col, col).norm();
        let mut max_row = col;
        for r in (col + 1)..n {
            let mag = m.get(r, col).norm();
            if mag > max_mag {
                max_mag = mag;
                max_row = r;
            }
        }
        if max_row != col {
            for c in 0..n {
                let t = m.get(col, c);
                m.set(col, c, m.get(max_row, c));
                m.set(max_row, c, t);
            }
        }
        let pivot = m.get(col, col);
        log2_det += pivot.norm().log2();
        for r in (col + 1)..n {
            let factor = m.get(r, col) / pivot;
            for c in col..n {
                let v = m.get(r, c) - factor * m.get(col, c);
                m.set(r, c, v);
            }
        }
    }
    log2_det
}

/// Monte-Carlo estimate of the training-based capacity lower bound:
/// (1 - M/T) E[ log2 det( I_M + rho_eff H H^H / M ) ] with
/// rho_eff = rho / (sqrt(1 - M/T) + sqrt(M/T))^2.
pub fn capacity_lower_bound(
    num_users: usize,
    coherence_time: usize,
    rho_db: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<CapacityEstimate> {
    if num_users < 1 || num_users > coherence_time {
        return Err(Error::Config(format!(
            "capacity_lower_bound requires 1 <= M <= T, got M={num_users} T={coherence_time}"
        )));
    }
    if samples < 1 {
        return Err(Error::Config("samples must be >= 1".into()));
    }
    let m = num_users;
    let frac = m as f64 / coherence_time as f64;
    let prefactor = 1.0 - frac;
    let rho = 10f64.powf(rho_db / 10.0);
    let rho_eff = rho / ((1.0 - frac).sqrt() + frac.sqrt()).powi(2);
    let scale = rho_eff / m as f64;

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..samples {
        let h = ComplexMatrix::from_fn(m, m, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * inv_sqrt2, im * inv_sqrt2)
        });
        let mut gram = h.matmul(&h.hermitian()).expect("square product");
        for i in 0..m {
            for jj in 0..m {
                let v = gram.get(i, jj) * scale;
                gram.set(i, jj, if i == jj { v + 1.0 } else { v });
            }
        }
        let draw = prefactor * log2_det_pd(&gram);
        sum += draw;
        sum_sq += draw * draw;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    let stderr = if samples > 1 {
        (var / (samples - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(CapacityEstimate {
        snr_db: rho_db,
        value: mean,
        samples,
        stderr,
    })
}
