//! The DNN noncoherent receiver.
//!
//! A three-layer perceptron operating on the real embedding of the received
//! block: two ReLU hidden layers followed by a Sigmoid output of one
//! probability per information bit. Forward, binary cross-entropy loss and
//! backward passes are written out explicitly; the backward pass also returns
//! the gradient with respect to the receiver input, which is what the
//! learned-waveform training propagates back through the channel into the
//! transmitter codebooks.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::channel::SystemConfig;
use crate::realmat::RealMatrix;
use crate::transmitter::JointLabel;
use crate::{Error, Result};

/// Probabilities are clamped to [EPS, 1-EPS] before logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Default hidden-layer widths.
pub const DEFAULT_HIDDEN: (usize, usize) = (1024, 512);

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Layer dimensions [input, hidden1, hidden2, output] for a system
/// configuration: input 2NT, output M*log2(L).
pub fn layer_dims(cfg: &SystemConfig, hidden: (usize, usize)) -> [usize; 4] {
    [
        cfg.receiver_input_len(),
        hidden.0,
        hidden.1,
        cfg.bits_per_block(),
    ]
}

/// Soft per-bit estimate, every entry strictly inside (0,1) after clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftEstimate {
    pub probs: Vec<f64>,
}

/// Weights, biases and same-shaped gradient shadows of the receiver network.
///
/// Weight matrices are stored input-major (fan_in x fan_out), so a batched
/// forward pass is plain row-major products.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub dims: [usize; 4],
    pub weights: Vec<RealMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub grad_weights: Vec<RealMatrix>,
    pub grad_biases: Vec<Vec<f64>>,
}

/// Activations cached by a batched forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden1: RealMatrix,
    pub hidden2: RealMatrix,
    pub probs: RealMatrix,
}

impl MlpParams {
    /// All-zero network of the given dimensions.
    pub fn zeros(dims: [usize; 4]) -> Self {
        let weights: Vec<RealMatrix> = (0..3)
            .map(|l| RealMatrix::zeros(dims[l], dims[l + 1]))
            .collect();
        let biases: Vec<Vec<f64>> = (0..3).map(|l| vec![0.0; dims[l + 1]]).collect();
        Self {
            dims,
            grad_weights: weights.clone(),
            grad_biases: biases.clone(),
            weights,
            biases,
        }
    }

    pub fn input_len(&self) -> usize {
        self.dims[0]
    }

    pub fn output_len(&self) -> usize {
        self.dims[3]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.data().len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Multiply count of one forward pass; dominated by the layer products.
    pub fn forward_mul_count(&self) -> usize {
        (0..3).map(|l| self.dims[l] * self.dims[l + 1]).sum()
    }

    /// Multiply count of the first layer alone for a given input width.
    pub fn first_layer_mul_count(input_len: usize, hidden1: usize) -> usize {
        input_len * hidden1
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.all_finite())
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad_weights {
            g.fill(0.0);
        }
        for g in &mut self.grad_biases {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Batched forward pass: rows of `input` are samples of width 2NT.
    pub fn forward_batch(&self, input: &RealMatrix) -> Result<(RealMatrix, ForwardCache)> {
        if input.cols() != self.dims[0] {
            return Err(Error::Shape(format!(
                "receiver input width {} != expected {}",
                input.cols(),
                self.dims[0]
            )));
        }
        let mut h1 = input.matmul(&self.weights[0]);
        h1.add_row_broadcast(&self.biases[0]);
        h1.map_inplace(|z| if z > 0.0 { z } else { 0.0 });

        let mut h2 = h1.matmul(&self.weights[1]);
        h2.add_row_broadcast(&self.biases[1]);
        h2.map_inplace(|z| if z > 0.0 { z } else { 0.0 });

        let mut probs = h2.matmul(&self.weights[2]);
        probs.add_row_broadcast(&self.biases[2]);
        probs.map_inplace(sigmoid);

        let cache = ForwardCache {
            hidden1: h1,
            hidden2: h2,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, y_real: &[f64]) -> Result<(SoftEstimate, ForwardCache)> {
        let input = RealMatrix::from_vec(1, y_real.len(), y_real.to_vec());
        let (probs, cache) = self.forward_batch(&input)?;
        Ok((
            SoftEstimate {
                probs: probs.row(0).to_vec(),
            },
            cache,
        ))
    }

    /// Batched backward pass for the mean per-sample binary cross-entropy.
    ///
    /// Fills the gradient shadows (already scaled by 1/batch) and returns the
    /// gradient of the batch loss with respect to the input rows.
    pub fn backward_batch(
        &mut self,
        input: &RealMatrix,
        cache: &ForwardCache,
        labels: &RealMatrix,
    ) -> Result<RealMatrix> {
        let batch = input.rows();
        if labels.rows() != batch || labels.cols() != self.dims[3] {
            return Err(Error::Shape(format!(
                "labels are {}x{}, expected {}x{}",
                labels.rows(),
                labels.cols(),
                batch,
                self.dims[3]
            )));
        }
        let inv_b = 1.0 / batch as f64;

        // Sigmoid + BCE collapse to delta3 = (p - s)/B at the output.
        let mut delta3 = RealMatrix::zeros(batch, self.dims[3]);
        for r in 0..batch {
            let p = cache.probs.row(r);
            let s = labels.row(r);
            let d = delta3.row_mut(r);
            for k in 0..p.len() {
                d[k] = (p[k] - s[k]) * inv_b;
            }
        }

        self.grad_weights[2] = cache.hidden2.matmul_at_b(&delta3);
        self.grad_biases[2] = delta3.col_sums();

        let mut delta2 = delta3.matmul_a_bt(&self.weights[2]);
        relu_backward(&mut delta2, &cache.hidden2);
        self.grad_weights[1] = cache.hidden1.matmul_at_b(&delta2);
        self.grad_biases[1] = delta2.col_sums();

        let mut delta1 = delta2.matmul_a_bt(&self.weights[1]);
        relu_backward(&mut delta1, &cache.hidden1);
        self.grad_weights[0] = input.matmul_at_b(&delta1);
        self.grad_biases[0] = delta1.col_sums();

        Ok(delta1.matmul_a_bt(&self.weights[0]))
    }
}

/// Zero the deltas wherever the forward ReLU output was zero (subgradient 0
/// at the kink).
fn relu_backward(delta: &mut RealMatrix, activation: &RealMatrix) {
    for (d, &a) in delta.data_mut().iter_mut().zip(activation.data()) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Per-sample binary cross-entropy: -sum_k [s ln p + (1-s) ln(1-p)], with the
/// probabilities clamped away from 0 and 1.
pub fn loss(label: &JointLabel, est: &SoftEstimate) -> Result<f64> {
    if label.len() != est.probs.len() {
        return Err(Error::Shape(format!(
            "label length {} != estimate length {}",
            label.len(),
            est.probs.len()
        )));
    }
    let mut total = 0.0;
    for (&s, &p) in label.bits.iter().zip(&est.probs) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= if s == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total)
}

/// Mean per-sample loss over a batch stored as matrices (labels in {0,1}).
pub fn batch_loss(labels: &RealMatrix, probs: &RealMatrix) -> f64 {
    let mut total = 0.0;
    for (&s, &p) in labels.data().iter().zip(probs.data()) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= if s > 0.5 { p.ln() } else { (1.0 - p).ln() };
    }
    total / labels.rows() as f64
}

/// Hard per-bit decisions: 1 iff prob > 0.5; exact ties resolve to 0.
pub fn harden(est: &SoftEstimate) -> JointLabel {
    JointLabel {
        bits: est.probs.iter().map(|&p| u8::from(p > 0.5)).collect(),
    }
}

/// Random probe of the network used by gradient-check tests: true when the
/// pre-activation magnitude is too close to a ReLU kink for finite
/// differences to be trusted.
pub fn near_relu_kink(p: &MlpParams, input: &[f64], threshold: f64) -> Result<bool> {
    let x = RealMatrix::from_vec(1, input.len(), input.to_vec());
    let mut z1 = x.matmul(&p.weights[0]);
    z1.add_row_broadcast(&p.biases[0]);
    if z1.data().iter().any(|&z| z.abs() < threshold) {
        return Ok(true);
    }
    z1.map_inplace(|z| if z > 0.0 { z } else { 0.0 });
    let mut z2 = z1.matmul(&p.weights[1]);
    z2.add_row_broadcast(&p.biases[1]);
    Ok(z2.data().iter().any(|&z| z.abs() < threshold))
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

/// Write the receiver: header `MLP v1 d0 d1 d2 d3`, then per layer the weight
/// matrix (one row per line, row-major, fan_in x fan_out) followed by the
/// bias vector, all at 17 significant digits.
pub fn write_mlp(p: &MlpParams, w: &mut impl Write, comments: &[String]) -> Result<()> {
    writeln!(
        w,
        "MLP v1 {} {} {} {}",
        p.dims[0], p.dims[1], p.dims[2], p.dims[3]
    )?;
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    for l in 0..3 {
        for r in 0..p.weights[l].rows() {
            let line: Vec<String> = p.weights[l]
                .row(r)
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        let line: Vec<String> = p.biases[l].iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn save_mlp(p: &MlpParams, path: &Path, comments: &[String]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_mlp(p, &mut file, comments)
}

pub fn read_mlp(r: impl std::io::Read) -> Result<MlpParams> {
    let reader = BufReader::new(r);
    let mut lines = reader
        .lines()
        .collect::<std::io::Result<Vec<String>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty receiver checkpoint".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 6 || tokens[0] != "MLP" || tokens[1] != "v1" {
        return Err(Error::Parse(format!("bad receiver header '{header}'")));
    }
    let mut dims = [0usize; 4];
    for (d, tok) in dims.iter_mut().zip(&tokens[2..]) {
        *d = tok
            .parse()
            .map_err(|_| Error::Parse(format!("bad dimension '{tok}'")))?;
    }
    let mut p = MlpParams::zeros(dims);
    let parse_row = |line: &str, expected: usize| -> Result<Vec<f64>> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad float '{s}'"))))
            .collect::<Result<_>>()?;
        if vals.len() != expected {
            return Err(Error::Parse(format!(
                "row has {} values, expected {expected}",
                vals.len()
            )));
        }
        Ok(vals)
    };
    for l in 0..3 {
        for r in 0..dims[l] {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("checkpoint truncated in layer {l}")))?;
            let vals = parse_row(&line, dims[l + 1])?;
            p.weights[l].row_mut(r).copy_from_slice(&vals);
        }
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing bias for layer {l}")))?;
        p.biases[l] = parse_row(&line, dims[l + 1])?;
    }
    Ok(p)
}

pub fn load_mlp(path: &Path) -> Result<MlpParams> {
    read_mlp(std::fs::File::open(path)?)
}

/// Draw a small random network for tests: entries uniform in (-0.5/sqrt(n), 0.5/sqrt(n)).
#[doc(hidden)]
pub fn random_mlp_for_tests(dims: [usize; 4], rng: &mut impl Rng) -> MlpParams {
    let mut p = MlpParams::zeros(dims);
    for l in 0..3 {
        let bound = 0.5 / (dims[l] as f64).sqrt();
        for v in p.weights[l].data_mut() {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
        }
        for v in &mut p.biases[l] {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
        }
    }
    p
}
