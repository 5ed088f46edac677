//! Classical receivers: least-squares channel estimation, zero-forcing
//! equalization and maximum-likelihood sequence detection.
//!
//! The baselines detect only the data part of the block (pilot slots carry no
//! information). MLSD enumerates all J = L^M data-part hypotheses depth-first
//! with running partial sums, so the per-hypothesis cost stays O(T_d * N)
//! and ties break toward the lowest joint index by construction.

use num_complex::Complex64;

use crate::channel::SystemConfig;
use crate::complexlin::ComplexMatrix;
use crate::transmitter::{combine_labels, qpsk_slice, Codebook, JointLabel, Message};
use crate::{Error, Result};

/// Joint hypothesis counts above this are refused.
pub const MLSD_GUARD: u64 = 1 << 20;

/// Least-squares estimate of the M x N channel.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub h_hat: ComplexMatrix,
}

/// Partition a received block into its pilot part (first T_tau rows) and
/// data part (remaining T_d rows).
pub fn split_block(cfg: &SystemConfig, y: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let y_tau = ComplexMatrix::from_fn(cfg.pilot_len, cfg.num_rx_antennas, |r, c| y.get(r, c));
    let y_d = ComplexMatrix::from_fn(cfg.data_len, cfg.num_rx_antennas, |r, c| {
        y.get(cfg.pilot_len + r, c)
    });
    (y_tau, y_d)
}

/// LS channel estimation from the pilot part: H_hat = (X^H X)^-1 X^H Y.
pub fn ls_estimate(x_tau: &ComplexMatrix, y_tau: &ComplexMatrix) -> Result<ChannelEstimate> {
    if x_tau.rows() != y_tau.rows() {
        return Err(Error::Shape(format!(
            "pilot blocks disagree: X_tau has {} rows, Y_tau has {}",
            x_tau.rows(),
            y_tau.rows()
        )));
    }
    let xh = x_tau.hermitian();
    let gram = xh.matmul(x_tau)?;
    let gram_inv = gram.inverse().map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!("pilot Gram matrix: {msg}")),
        other => other,
    })?;
    let h_hat = gram_inv.matmul(&xh)?.matmul(y_tau)?;
    Ok(ChannelEstimate { h_hat })
}

/// Zero-forcing detection of the data part: equalize with the right
/// pseudo-inverse of the channel estimate, slice every entry to the nearest
/// QPSK point, and read the bits through the Gray map.
pub fn zf_detect(y_d: &ComplexMatrix, est: &ChannelEstimate) -> Result<JointLabel> {
    let pinv = est.h_hat.right_pinv()?;
    let x_hat = y_d.matmul(&pinv)?;
    let num_users = est.h_hat.rows();
    let t_d = y_d.rows();
    let mut bits = Vec::with_capacity(num_users * 2 * t_d);
    for user in 0..num_users {
        for slot in 0..t_d {
            let (b0, b1) = qpsk_slice(x_hat.get(slot, user));
            bits.push(b0);
            bits.push(b1);
        }
    }
    Ok(JointLabel { bits })
}

/// Exhaustive MLSD over the joint data-part hypothesis set: the argmin of
/// ||Y_d - X_d H_hat||_F^2 over all L^M codeword tuples.
pub fn mlsd_detect(
    y_d: &ComplexMatrix,
    est: &ChannelEstimate,
    codebooks: &[Codebook],
    cfg: &SystemConfig,
) -> Result<JointLabel> {
    let j = cfg
        .joint_codebook_size()
        .filter(|&j| j <= MLSD_GUARD)
        .ok_or_else(|| {
            Error::Config(format!(
                "MLSD hypothesis count L^M = {}^{} exceeds the {} guard",
                cfg.codebook_size, cfg.num_users, MLSD_GUARD
            ))
        })?;
    debug_assert!(j >= 1);
    if codebooks.len() != cfg.num_users {
        return Err(Error::Config(format!(
            "expected {} codebooks, got {}",
            cfg.num_users,
            codebooks.len()
        )));
    }
    let t_d = cfg.data_len;
    let n = cfg.num_rx_antennas;
    if y_d.rows() != t_d || y_d.cols() != n {
        return Err(Error::Shape(format!(
            "Y_d must be {}x{}, got {}x{}",
            t_d,
            n,
            y_d.rows(),
            y_d.cols()
        )));
    }

    // Per user and codeword, the predicted contribution to Y_d: the outer
    // product of the codeword data part with the user's channel row.
    let l = cfg.codebook_size;
    let mut contribs: Vec<Vec<Complex64>> = Vec::with_capacity(cfg.num_users * l);
    for cb in codebooks {
        let data = cb.data_part(cfg.pilot_len);
        for cw in 0..l {
            let mut c = vec![Complex64::new(0.0, 0.0); t_d * n];
            for slot in 0..t_d {
                let x = data.get(cw, slot);
                for ant in 0..n {
                    c[slot * n + ant] = x * est.h_hat.get(cb.user_index, ant);
                }
            }
            contribs.push(c);
        }
    }

    let mut search = MlsdSearch {
        y_d,
        contribs: &contribs,
        num_users: cfg.num_users,
        codebook_size: l,
        cell_count: t_d * n,
        partial: vec![Complex64::new(0.0, 0.0); (cfg.num_users + 1) * t_d * n],
        best_residual: f64::INFINITY,
        best: vec![0; cfg.num_users],
        current: vec![0; cfg.num_users],
    };
    search.descend(0);

    let msgs: Vec<Message> = search
        .best
        .iter()
        .enumerate()
        .map(|(m, &idx)| Message::from_index(m, idx, l))
        .collect();
    combine_labels(&msgs, l)
}

struct MlsdSearch<'a> {
    y_d: &'a ComplexMatrix,
    contribs: &'a [Vec<Complex64>],
    num_users: usize,
    codebook_size: usize,
    cell_count: usize,
    /// Partial predicted blocks per recursion level, flattened.
    partial: Vec<Complex64>,
    best_residual: f64,
    best: Vec<usize>,
    current: Vec<usize>,
}

impl MlsdSearch<'_> {
    fn descend(&mut self, user: usize) {
        if user == self.num_users {
            let base = user * self.cell_count;
            let mut residual = 0.0;
            let y = self.y_d.entries();
            for k in 0..self.cell_count {
                residual += (y[k] - self.partial[base + k]).norm_sqr();
            }
            // Strict comparison keeps the first (lowest joint index) winner.
            if residual < self.best_residual {
                self.best_residual = residual;
                self.best.copy_from_slice(&self.current);
            }
            return;
        }
        for cw in 0..self.codebook_size {
            let contrib = &self.contribs[user * self.codebook_size + cw];
            let (lo, hi) = self.partial.split_at_mut((user + 1) * self.cell_count);
            let src = &lo[user * self.cell_count..];
            for k in 0..self.cell_count {
                hi[k] = src[k] + contrib[k];
            }
            self.current[user] = cw;
            self.descend(user + 1);
        }
    }
}

/// Residual of one explicit hypothesis, used by exhaustiveness audits.
pub fn mlsd_residual(
    y_d: &ComplexMatrix,
    est: &ChannelEstimate,
    codebooks: &[Codebook],
    cfg: &SystemConfig,
    indices: &[usize],
) -> Result<f64> {
    let mut pred = ComplexMatrix::zeros(cfg.data_len, cfg.num_rx_antennas);
    for (cb, &idx) in codebooks.iter().zip(indices) {
        let data = cb.data_part(cfg.pilot_len);
        for slot in 0..cfg.data_len {
            for ant in 0..cfg.num_rx_antennas {
                let v = pred.get(slot, ant)
                    + data.get(idx, slot) * est.h_hat.get(cb.user_index, ant);
                pred.set(slot, ant, v);
            }
        }
    }
    Ok(y_d.sub(&pred)?.frob_norm().powi(2))
}
