//! Multiuser waveform designs.
//!
//! Each user owns a codebook of L length-T codewords selected by a one-hot
//! message vector. Three kinds are supported:
//!
//! * `pilot_aided` - fixed: an orthogonal DFT pilot over the first T_tau
//!   slots shared by all L rows, followed by Gray-mapped QPSK data symbols.
//! * `systematic` - L x (T-1) learnable entries plus one fixed column holding
//!   the L modulation symbols.
//! * `non_systematic` - all L x T entries learnable.
//!
//! Learnable entries are plain real parameters (real and imaginary parts
//! independent) with a gradient shadow of the same shape; the power
//! normalization that enforces the average-power budget is part of the
//! differentiable graph and lives here as well.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::SystemConfig;
use crate::complexlin::ComplexMatrix;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Gray labels and QPSK
// ---------------------------------------------------------------------------

/// Gray code of an index: idx ^ (idx >> 1).
pub fn gray_code(idx: usize) -> usize {
    idx ^ (idx >> 1)
}

/// Inverse Gray code.
pub fn gray_decode(g: usize) -> usize {
    let mut idx = g;
    let mut shift = 1;
    while (g >> shift) > 0 {
        idx ^= g >> shift;
        shift += 1;
    }
    idx
}

/// The log2(L)-bit Gray label of a message index, MSB first.
pub fn label_bits(idx: usize, bits: usize) -> Vec<u8> {
    let g = gray_code(idx);
    (0..bits).rev().map(|b| ((g >> b) & 1) as u8).collect()
}

/// Message index back from its Gray label bits (MSB first).
pub fn index_from_label_bits(bits: &[u8]) -> usize {
    let g = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    gray_decode(g)
}

/// Gray-mapped unit-power QPSK: 00 -> (+1+j)/sqrt(2), 01 -> (-1+j)/sqrt(2),
/// 11 -> (-1-j)/sqrt(2), 10 -> (+1-j)/sqrt(2).
pub fn qpsk_map(b0: u8, b1: u8) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = if b0 == 0 { s } else { -s };
    let im = if b1 == 0 { s } else { -s };
    Complex64::new(re, im)
}

/// Nearest-neighbor QPSK slicer: quadrant decision back to the bit pair.
pub fn qpsk_slice(z: Complex64) -> (u8, u8) {
    (u8::from(z.re < 0.0), u8::from(z.im < 0.0))
}

// ---------------------------------------------------------------------------
// Messages and labels
// ---------------------------------------------------------------------------

/// One user's message: a one-hot selector over the L codewords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub user_index: usize,
    pub onehot: Vec<u8>,
}

impl Message {
    pub fn from_index(user_index: usize, hot: usize, codebook_size: usize) -> Self {
        let mut onehot = vec![0u8; codebook_size];
        onehot[hot] = 1;
        Self { user_index, onehot }
    }

    /// Uniform message draw.
    pub fn sample(user_index: usize, codebook_size: usize, rng: &mut impl Rng) -> Self {
        Self::from_index(user_index, rng.random_range(0..codebook_size), codebook_size)
    }

    pub fn validate(&self) -> Result<()> {
        let ones = self.onehot.iter().filter(|&&b| b == 1).count();
        let others = self.onehot.iter().any(|&b| b > 1);
        if ones != 1 || others {
            return Err(Error::Input(format!(
                "malformed one-hot for user {}: {:?}",
                self.user_index, self.onehot
            )));
        }
        Ok(())
    }

    pub fn hot_index(&self) -> Result<usize> {
        self.validate()?;
        Ok(self.onehot.iter().position(|&b| b == 1).unwrap())
    }
}

/// Joint supervisory label: M * log2(L) bits, user-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointLabel {
    pub bits: Vec<u8>,
}

impl JointLabel {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits belonging to user m when each user carries `bits_per_user` bits.
    pub fn user_bits(&self, user: usize, bits_per_user: usize) -> &[u8] {
        &self.bits[user * bits_per_user..(user + 1) * bits_per_user]
    }

    /// Recover every user's message index.
    pub fn split_indices(&self, num_users: usize) -> Vec<usize> {
        let bpu = self.bits.len() / num_users;
        (0..num_users)
            .map(|m| index_from_label_bits(self.user_bits(m, bpu)))
            .collect()
    }

    /// Hamming distance to another label of the same length.
    pub fn bit_errors(&self, other: &JointLabel) -> u64 {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count() as u64
    }
}

/// Concatenate every user's Gray label into the joint training label.
pub fn combine_labels(msgs: &[Message], codebook_size: usize) -> Result<JointLabel> {
    let bits_per_user = codebook_size.trailing_zeros() as usize;
    let mut bits = Vec::with_capacity(msgs.len() * bits_per_user);
    for (m, msg) in msgs.iter().enumerate() {
        if msg.user_index != m {
            return Err(Error::Input(format!(
                "messages must be ordered by user index: slot {m} holds user {}",
                msg.user_index
            )));
        }
        let hot = msg.hot_index()?;
        bits.extend(label_bits(hot, bits_per_user));
    }
    Ok(JointLabel { bits })
}

// ---------------------------------------------------------------------------
// Pilot matrix
// ---------------------------------------------------------------------------

/// The T_tau x M pilot block: the DFT matrix with unit-modulus entries, so
/// each pilot symbol has the same average power as a data symbol and the
/// columns are mutually orthogonal (Gram = M * I).
pub fn build_pilot_matrix(cfg: &SystemConfig) -> Result<ComplexMatrix> {
    if cfg.pilot_len != cfg.num_users {
        return Err(Error::Config(format!(
            "pilot length T_tau must equal M, got T_tau={} M={}",
            cfg.pilot_len, cfg.num_users
        )));
    }
    let m = cfg.num_users;
    Ok(ComplexMatrix::from_fn(m, m, |t, u| {
        let phase = -2.0 * std::f64::consts::PI * (t as f64) * (u as f64) / m as f64;
        Complex64::new(phase.cos(), phase.sin())
    }))
}

// ---------------------------------------------------------------------------
// Codebooks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookKind {
    PilotAided,
    Systematic,
    NonSystematic,
}

impl fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CodebookKind::PilotAided => "pilot_aided",
            CodebookKind::Systematic => "systematic",
            CodebookKind::NonSystematic => "non_systematic",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for CodebookKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pilot_aided" => Ok(CodebookKind::PilotAided),
            "systematic" => Ok(CodebookKind::Systematic),
            "non_systematic" => Ok(CodebookKind::NonSystematic),
            other => Err(Error::Parse(format!("unknown codebook kind '{other}'"))),
        }
    }
}

/// Per-user mapping from the L messages to length-T codewords (rows), with a
/// learnable-entry mask and a gradient shadow for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub user_index: usize,
    pub kind: CodebookKind,
    /// L x T codeword matrix; row l is the codeword selected by message l.
    pub weights: ComplexMatrix,
    /// L x T learnable-entry mask, row-major, true = trainable.
    pub mask: Vec<bool>,
    /// L x T gradient shadow accumulated by training.
    pub grad: ComplexMatrix,
}

impl Codebook {
    /// Fixed pilot-aided codebook: orthogonal pilot prefix shared by every
    /// row, then one Gray-mapped QPSK symbol per data slot. Requires
    /// log2(L) == 2 * T_d so each row carries exactly the message bits.
    pub fn pilot_aided(cfg: &SystemConfig, user_index: usize) -> Result<Self> {
        let bits_per_user = cfg.bits_per_user();
        if bits_per_user != 2 * cfg.data_len {
            return Err(Error::Config(format!(
                "pilot_aided codebooks need log2(L) == 2*T_d, got log2(L)={} T_d={}",
                bits_per_user, cfg.data_len
            )));
        }
        let pilot = build_pilot_matrix(cfg)?;
        let l = cfg.codebook_size;
        let t = cfg.coherence_time;
        let weights = ComplexMatrix::from_fn(l, t, |row, col| {
            if col < cfg.pilot_len {
                pilot.get(col, user_index)
            } else {
                let bits = label_bits(row, bits_per_user);
                let d = col - cfg.pilot_len;
                qpsk_map(bits[2 * d], bits[2 * d + 1])
            }
        });
        Ok(Self {
            user_index,
            kind: CodebookKind::PilotAided,
            mask: vec![false; l * t],
            grad: ComplexMatrix::zeros(l, t),
            weights,
        })
    }

    /// Learned codebook from raw initial weights. For the systematic kind the
    /// final column is overwritten with the L Gray-ordered QPSK symbols and
    /// masked out of training; the non-systematic kind is fully learnable.
    pub fn learned(
        cfg: &SystemConfig,
        user_index: usize,
        kind: CodebookKind,
        mut weights: ComplexMatrix,
    ) -> Result<Self> {
        let l = cfg.codebook_size;
        let t = cfg.coherence_time;
        if weights.rows() != l || weights.cols() != t {
            return Err(Error::Shape(format!(
                "codebook weights must be {}x{}, got {}x{}",
                l,
                t,
                weights.rows(),
                weights.cols()
            )));
        }
        let mask = match kind {
            CodebookKind::NonSystematic => vec![true; l * t],
            CodebookKind::Systematic => {
                if l != 4 {
                    return Err(Error::Config(format!(
                        "systematic codebooks carry one QPSK symbol per message and need L=4, got L={l}"
                    )));
                }
                let sys_col = t - 1;
                for row in 0..l {
                    let bits = label_bits(row, 2);
                    weights.set(row, sys_col, qpsk_map(bits[0], bits[1]));
                }
                let mut mask = vec![true; l * t];
                for row in 0..l {
                    mask[row * t + sys_col] = false;
                }
                mask
            }
            CodebookKind::PilotAided => {
                return Err(Error::Config(
                    "pilot_aided codebooks are fixed; use Codebook::pilot_aided".into(),
                ))
            }
        };
        Ok(Self {
            user_index,
            kind,
            mask,
            grad: ComplexMatrix::zeros(l, t),
            weights,
        })
    }

    pub fn num_codewords(&self) -> usize {
        self.weights.rows()
    }

    pub fn codeword_len(&self) -> usize {
        self.weights.cols()
    }

    /// Average codeword power (1/T)(1/L) sum_l ||row_l||^2.
    pub fn average_power(&self) -> f64 {
        self.weights.energy() / (self.weights.rows() * self.weights.cols()) as f64
    }

    pub fn learnable_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn zero_grad(&mut self) {
        self.grad.entries_mut().fill(Complex64::new(0.0, 0.0));
    }

    /// The data-part rows (columns T_tau..T), used by the MLSD baseline.
    pub fn data_part(&self, pilot_len: usize) -> ComplexMatrix {
        let t_d = self.codeword_len() - pilot_len;
        ComplexMatrix::from_fn(self.num_codewords(), t_d, |row, col| {
            self.weights.get(row, pilot_len + col)
        })
    }
}

/// Select the codeword addressed by a one-hot message: row l of W, which is
/// exactly W^T s.
pub fn select_codeword(cb: &Codebook, msg: &Message) -> Result<Vec<Complex64>> {
    if msg.user_index != cb.user_index {
        return Err(Error::Input(format!(
            "message for user {} applied to codebook of user {}",
            msg.user_index, cb.user_index
        )));
    }
    if msg.onehot.len() != cb.num_codewords() {
        return Err(Error::Input(format!(
            "one-hot length {} does not match codebook size {}",
            msg.onehot.len(),
            cb.num_codewords()
        )));
    }
    let hot = msg.hot_index()?;
    Ok(cb.weights.row(hot).to_vec())
}

/// The scalar that brings a codebook to its average-power budget:
/// c = sqrt(target * T * L / sum |w|^2).
pub fn normalization_scale(cb: &Codebook, target_power: f64) -> Result<f64> {
    let energy = cb.weights.energy();
    if energy <= 0.0 {
        return Err(Error::Input(format!(
            "cannot normalize all-zero codebook for user {}",
            cb.user_index
        )));
    }
    let total = target_power * (cb.weights.rows() * cb.weights.cols()) as f64;
    Ok((total / energy).sqrt())
}

/// Scale the whole codebook so the average codeword power equals the budget
/// exactly. During learned-waveform training this map is part of the
/// differentiable graph; see `training` for its backward pass.
pub fn normalize_codebook(cb: &Codebook, target_power: f64) -> Result<Codebook> {
    let c = normalization_scale(cb, target_power)?;
    let mut out = cb.clone();
    out.weights = cb.weights.scale(c);
    Ok(out)
}

/// Stack M codewords as the columns of the T x M transmit block.
pub fn assemble_block(codewords: &[Vec<Complex64>]) -> Result<ComplexMatrix> {
    let m = codewords.len();
    if m == 0 {
        return Err(Error::Shape("assemble_block with zero users".into()));
    }
    let t = codewords[0].len();
    if codewords.iter().any(|c| c.len() != t) {
        return Err(Error::Shape("codeword length mismatch".into()));
    }
    let mut x = ComplexMatrix::zeros(t, m);
    for (user, cw) in codewords.iter().enumerate() {
        x.set_col(user, cw);
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

/// Write one user's codebook: header `CODEBOOK v1 kind m L T`, then L rows of
/// 2T decimal floats (Re, Im interleaved) at 17 significant digits.
pub fn write_codebook(cb: &Codebook, w: &mut impl Write, comments: &[String]) -> Result<()> {
    writeln!(
        w,
        "CODEBOOK v1 {} {} {} {}",
        cb.kind,
        cb.user_index,
        cb.num_codewords(),
        cb.codeword_len()
    )?;
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    for row in 0..cb.num_codewords() {
        let line: Vec<String> = cb
            .weights
            .row(row)
            .iter()
            .flat_map(|z| [format!("{:.16e}", z.re), format!("{:.16e}", z.im)])
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn save_codebook(cb: &Codebook, path: &Path, comments: &[String]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_codebook(cb, &mut file, comments)
}

/// Read a codebook checkpoint. `#`-prefixed lines are skipped. The kind is
/// restored together with its learnable mask (and, for the systematic kind,
/// the fixed-column invariant is implied by the stored values).
pub fn read_codebook(r: impl std::io::Read) -> Result<Codebook> {
    let reader = BufReader::new(r);
    let mut lines = reader
        .lines()
        .collect::<std::io::Result<Vec<String>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty codebook file".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 6 || tokens[0] != "CODEBOOK" || tokens[1] != "v1" {
        return Err(Error::Parse(format!("bad codebook header '{header}'")));
    }
    let kind: CodebookKind = tokens[2].parse()?;
    let user_index: usize = tokens[3]
        .parse()
        .map_err(|_| Error::Parse("bad user index".into()))?;
    let l: usize = tokens[4]
        .parse()
        .map_err(|_| Error::Parse("bad codebook size".into()))?;
    let t: usize = tokens[5]
        .parse()
        .map_err(|_| Error::Parse("bad codeword length".into()))?;

    let mut weights = ComplexMatrix::zeros(l, t);
    for row in 0..l {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("codebook truncated at row {row}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad float '{s}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != 2 * t {
            return Err(Error::Parse(format!(
                "row {row} has {} values, expected {}",
                vals.len(),
                2 * t
            )));
        }
        for col in 0..t {
            weights.set(row, col, Complex64::new(vals[2 * col], vals[2 * col + 1]));
        }
    }

    let mask = match kind {
        CodebookKind::PilotAided => vec![false; l * t],
        CodebookKind::NonSystematic => vec![true; l * t],
        CodebookKind::Systematic => {
            let mut mask = vec![true; l * t];
            for row in 0..l {
                mask[row * t + (t - 1)] = false;
            }
            mask
        }
    };
    Ok(Codebook {
        user_index,
        kind,
        mask,
        grad: ComplexMatrix::zeros(l, t),
        weights,
    })
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    read_codebook(std::fs::File::open(path)?)
}
