//! Optimizers, weight initialization and the end-to-end training loops.
//!
//! Training runs in two phases: Adam for the early epochs, then plain SGD
//! until the end. Data is generated online, so an "epoch" is a fixed number
//! of mini-batches. For the learned-waveform designs the receiver's input
//! gradient propagates through the real embedding, the sampled channel
//! matrix and the power normalization into the masked learnable entries of
//! every user's codebook.
//!
//! All randomness is drawn from streams derived per (seed, purpose, epoch,
//! batch), so training runs are bit-reproducible and never touch the probe
//! streams used for convergence traces.

use std::fmt;

use num_complex::Complex64;

use crate::channel::{
    apply_channel, sample_channel, sample_noise, snr_to_sigma2, ChannelRealization, NoiseParams,
    SystemConfig,
};
use crate::complexlin::ComplexMatrix;
use crate::realmat::RealMatrix;
use crate::receiver::{batch_loss, harden, layer_dims, MlpParams, SoftEstimate, DEFAULT_HIDDEN};
use crate::rng::{derive_stream, purpose, Stream};
use crate::transmitter::{
    assemble_block, combine_labels, normalization_scale, Codebook, CodebookKind, JointLabel,
    Message,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Weight initialization
// ---------------------------------------------------------------------------

/// Which initializer seeds the learnable transmitter entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Xavier,
    Symmetric,
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitKind::Xavier => "xavier",
            InitKind::Symmetric => "symmetric",
        })
    }
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xavier" => Ok(InitKind::Xavier),
            "symmetric" => Ok(InitKind::Symmetric),
            other => Err(Error::Parse(format!("unknown init kind '{other}'"))),
        }
    }
}

/// Xavier-style uniform init: entries i.i.d. on (-1/sqrt(n), 1/sqrt(n)) for
/// fan-in n.
pub fn init_xavier(rows: usize, cols: usize, fan_in: usize, rng: &mut Stream) -> RealMatrix {
    use rand::Rng;
    let bound = 1.0 / (fan_in as f64).sqrt();
    RealMatrix::from_fn(rows, cols, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * bound)
}

/// Symmetrical-interval init: a fair sign flip, then uniform on
/// (1/sqrt(n) - zeta, 1/sqrt(n) + zeta). Every draw has magnitude within
/// zeta of 1/sqrt(n), so no column can start orders of magnitude quieter
/// than another.
pub fn init_symmetric(
    rows: usize,
    cols: usize,
    fan_in: usize,
    zeta: f64,
    rng: &mut Stream,
) -> Result<RealMatrix> {
    use rand::Rng;
    let center = 1.0 / (fan_in as f64).sqrt();
    if !(zeta > 0.0 && zeta < center) {
        return Err(Error::Config(format!(
            "init_symmetric needs 0 < zeta < 1/sqrt(n), got zeta={zeta} 1/sqrt(n)={center}"
        )));
    }
    Ok(RealMatrix::from_fn(rows, cols, |_, _| {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sign * (center - zeta + rng.random::<f64>() * 2.0 * zeta)
    }))
}

/// Xavier-initialized receiver with zero biases (fan-in per layer).
pub fn init_mlp(dims: [usize; 4], rng: &mut Stream) -> MlpParams {
    let mut p = MlpParams::zeros(dims);
    for l in 0..3 {
        p.weights[l] = init_xavier(dims[l], dims[l + 1], dims[l], rng);
    }
    p
}

/// Build one user's learnable codebook with the requested initializer.
/// Transmitter fan-in is the one-hot length L; zeta = zeta_ratio / sqrt(L).
pub fn init_codebook(
    cfg: &SystemConfig,
    user_index: usize,
    kind: CodebookKind,
    init: InitKind,
    zeta_ratio: f64,
    rng: &mut Stream,
) -> Result<Codebook> {
    let l = cfg.codebook_size;
    let t = cfg.coherence_time;
    let fan_in = l;
    let draw = |rng: &mut Stream| -> Result<RealMatrix> {
        match init {
            InitKind::Xavier => Ok(init_xavier(l, 2 * t, fan_in, rng)),
            InitKind::Symmetric => {
                let zeta = zeta_ratio / (fan_in as f64).sqrt();
                init_symmetric(l, 2 * t, fan_in, zeta, rng)
            }
        }
    };
    let flat = draw(rng)?;
    let weights = ComplexMatrix::from_fn(l, t, |r, c| {
        Complex64::new(flat.get(r, 2 * c), flat.get(r, 2 * c + 1))
    });
    Codebook::learned(cfg, user_index, kind, weights)
}

/// All M codebooks of one kind.
pub fn init_codebooks(
    cfg: &SystemConfig,
    kind: CodebookKind,
    init: InitKind,
    zeta_ratio: f64,
    seed: u64,
) -> Result<Vec<Codebook>> {
    (0..cfg.num_users)
        .map(|m| {
            let mut rng = derive_stream(seed, &[purpose::INIT, 1 + m as u64]);
            init_codebook(cfg, m, kind, init, zeta_ratio, &mut rng)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

/// First/second moment shadows plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(total_params: usize) -> Self {
        Self {
            m: vec![0.0; total_params],
            v: vec![0.0; total_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advance the shared step counter; call once per optimizer step before
    /// updating any parameter group.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Bias-corrected Adam update of one contiguous parameter group whose
    /// moments live at [offset, offset + params.len()).
    pub fn update(
        &mut self,
        offset: usize,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
    ) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "param/grad length mismatch");
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient in adam_step".into()));
        }
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[offset + k];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.v[offset + k];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }

    /// Adam update of masked complex parameters (real and imaginary parts are
    /// independent; moments at offset + 2k / offset + 2k + 1).
    pub fn update_complex(
        &mut self,
        offset: usize,
        params: &mut [Complex64],
        grads: &[Complex64],
        mask: &[bool],
        lr: f64,
    ) -> Result<()> {
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, ((p, g), &live)) in params.iter_mut().zip(grads).zip(mask).enumerate() {
            if !live {
                continue;
            }
            if !g.re.is_finite() || !g.im.is_finite() {
                return Err(Error::NonFinite("codebook gradient in adam_step".into()));
            }
            for (part, grad, idx) in [
                (&mut p.re, g.re, offset + 2 * k),
                (&mut p.im, g.im, offset + 2 * k + 1),
            ] {
                let m = &mut self.m[idx];
                *m = self.beta1 * *m + (1.0 - self.beta1) * grad;
                let v = &mut self.v[idx];
                *v = self.beta2 * *v + (1.0 - self.beta2) * grad * grad;
                *part -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Plain SGD: theta <- theta - lr * g.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    assert_eq!(params.len(), grads.len(), "param/grad length mismatch");
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient in sgd_step".into()));
    }
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// SGD over masked complex parameters.
pub fn sgd_step_complex(
    params: &mut [Complex64],
    grads: &[Complex64],
    mask: &[bool],
    lr: f64,
) -> Result<()> {
    for ((p, g), &live) in params.iter_mut().zip(grads).zip(mask) {
        if !live {
            continue;
        }
        if !g.re.is_finite() || !g.im.is_finite() {
            return Err(Error::NonFinite("codebook gradient in sgd_step".into()));
        }
        p.re -= lr * g.re;
        p.im -= lr * g.im;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training configuration and outputs
// ---------------------------------------------------------------------------

/// Knobs of the two-phase training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam_epochs: usize,
    pub sgd_epochs: usize,
    /// Data is generated online; an epoch is this many mini-batches.
    pub batches_per_epoch: usize,
    pub train_snr_db: f64,
    pub seed: u64,
    /// zeta / (1/sqrt(n)) for the symmetric initializer.
    pub zeta_ratio: f64,
    /// Epochs between convergence probes.
    pub eval_every: usize,
    /// Blocks per convergence probe.
    pub probe_blocks: usize,
    /// Receiver hidden-layer widths.
    pub hidden: (usize, usize),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 200,
            adam_epochs: 8,
            sgd_epochs: 2,
            batches_per_epoch: 500,
            train_snr_db: 8.0,
            seed: 1,
            zeta_ratio: 0.1,
            eval_every: 1,
            probe_blocks: 2000,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.batches_per_epoch < 1 {
            return Err(Error::Config("batches_per_epoch must be >= 1".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.adam_epochs + self.sgd_epochs
    }
}

/// Which optimizer drove a given epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Adam,
    Sgd,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Adam => "adam",
            Phase::Sgd => "sgd",
        })
    }
}

/// Per-user detection error rates recorded over training, both as
/// per-codeword (any bit wrong) and per-bit fractions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub epochs: Vec<usize>,
    /// One row per probe, one column per user.
    pub per_codeword: Vec<Vec<f64>>,
    pub per_bit: Vec<Vec<f64>>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, epoch: usize, err: PerUserError) {
        self.epochs.push(epoch);
        self.per_codeword.push(err.codeword);
        self.per_bit.push(err.bit);
    }

    /// User m's per-bit series.
    pub fn user_bit_series(&self, user: usize) -> Vec<f64> {
        self.per_bit.iter().map(|row| row[user]).collect()
    }

    pub fn final_per_bit(&self) -> Option<&[f64]> {
        self.per_bit.last().map(Vec::as_slice)
    }
}

/// One training-log record, exported as CSV by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub phase: Phase,
    pub mean_loss: f64,
    /// Per-user per-codeword error at the probe following this epoch.
    pub user_err: Vec<f64>,
}

/// Everything a finished training run produces.
#[derive(Debug, Clone)]
pub struct Trained {
    pub mlp: MlpParams,
    /// Final codebooks, normalized to the power budget (fixed pilot-aided
    /// books for the pilot-aided scheme).
    pub codebooks: Vec<Codebook>,
    pub trace: ConvergenceTrace,
    pub log: Vec<TrainLogRow>,
    /// Optimizer audit: which phase drove each epoch.
    pub phases: Vec<Phase>,
}

// ---------------------------------------------------------------------------
// Block draws and batch assembly
// ---------------------------------------------------------------------------

/// One simulated block: message indices, channel and noise draws.
#[derive(Debug, Clone)]
pub struct BlockDraw {
    pub hot: Vec<usize>,
    pub channel: ChannelRealization,
    pub noise: ComplexMatrix,
}

impl BlockDraw {
    /// Draw messages (user 0..M-1), then the channel, then the noise, all
    /// from the given streams.
    pub fn sample(
        cfg: &SystemConfig,
        np: NoiseParams,
        msg_rng: &mut Stream,
        ch_rng: &mut Stream,
        noise_rng: &mut Stream,
    ) -> Self {
        let hot = (0..cfg.num_users)
            .map(|m| {
                Message::sample(m, cfg.codebook_size, msg_rng)
                    .hot_index()
                    .expect("sampled message is one-hot")
            })
            .collect();
        let channel = sample_channel(cfg, ch_rng);
        let noise = sample_noise(cfg.coherence_time, cfg.num_rx_antennas, np, noise_rng);
        Self {
            hot,
            channel,
            noise,
        }
    }

    /// Like [`sample`](Self::sample) but with messages, channel and noise
    /// drawn sequentially from one stream.
    pub fn sample_single(cfg: &SystemConfig, np: NoiseParams, rng: &mut Stream) -> Self {
        let hot = (0..cfg.num_users)
            .map(|m| {
                Message::sample(m, cfg.codebook_size, rng)
                    .hot_index()
                    .expect("sampled message is one-hot")
            })
            .collect();
        let channel = sample_channel(cfg, rng);
        let noise = sample_noise(cfg.coherence_time, cfg.num_rx_antennas, np, rng);
        Self {
            hot,
            channel,
            noise,
        }
    }

    pub fn label(&self, cfg: &SystemConfig) -> JointLabel {
        let msgs: Vec<Message> = self
            .hot
            .iter()
            .enumerate()
            .map(|(m, &i)| Message::from_index(m, i, cfg.codebook_size))
            .collect();
        combine_labels(&msgs, cfg.codebook_size).expect("ordered one-hot messages")
    }
}

/// Transmit one draw through its channel using the given (already
/// normalized) codeword matrices and return the receiver input row.
pub fn received_embedding(weights: &[ComplexMatrix], draw: &BlockDraw) -> Result<Vec<f64>> {
    let codewords: Vec<Vec<Complex64>> = weights
        .iter()
        .zip(&draw.hot)
        .map(|(w, &hot)| w.row(hot).to_vec())
        .collect();
    let x = assemble_block(&codewords)?;
    let y = apply_channel(&x, &draw.channel, &draw.noise)?;
    Ok(y.to_real_vec())
}

/// Assemble a batch of receiver inputs and {0,1} label rows.
pub fn build_batch(
    cfg: &SystemConfig,
    weights: &[ComplexMatrix],
    draws: &[BlockDraw],
) -> Result<(RealMatrix, RealMatrix, Vec<JointLabel>)> {
    let width = cfg.receiver_input_len();
    let out_width = cfg.bits_per_block();
    let mut inputs = RealMatrix::zeros(draws.len(), width);
    let mut labels = RealMatrix::zeros(draws.len(), out_width);
    let mut joint = Vec::with_capacity(draws.len());
    for (i, draw) in draws.iter().enumerate() {
        let row = received_embedding(weights, draw)?;
        inputs.row_mut(i).copy_from_slice(&row);
        let label = draw.label(cfg);
        for (dst, &bit) in labels.row_mut(i).iter_mut().zip(&label.bits) {
            *dst = bit as f64;
        }
        joint.push(label);
    }
    Ok((inputs, labels, joint))
}

/// Propagate receiver input gradients back through the embedding, the
/// per-sample channel and the power normalization into the raw codebooks'
/// gradient shadows (respecting the learnable masks).
///
/// `input_grads` row i is dLoss/d y_real for sample i; `scales` holds each
/// user's normalization scalar c_m used in the forward pass.
pub fn backprop_into_codebooks(
    cfg: &SystemConfig,
    codebooks: &mut [Codebook],
    scales: &[f64],
    input_grads: &RealMatrix,
    draws: &[BlockDraw],
) -> Result<()> {
    let t = cfg.coherence_time;
    let n = cfg.num_rx_antennas;
    // dLoss/d W_hat per user, accumulated over the batch.
    let mut grad_normed: Vec<ComplexMatrix> = codebooks
        .iter()
        .map(|cb| ComplexMatrix::zeros(cb.num_codewords(), cb.codeword_len()))
        .collect();

    for (i, draw) in draws.iter().enumerate() {
        // The embedding is linear, so the gradient reshapes exactly like the
        // forward vectorization.
        let g_y = ComplexMatrix::from_real_vec(input_grads.row(i), t, n)?;
        // Y = X H: dL/dX = (dL/dY) H^H with re/im treated independently.
        let g_x = g_y.matmul(&draw.channel.h.hermitian())?;
        for (m, g) in grad_normed.iter_mut().enumerate() {
            let hot = draw.hot[m];
            for slot in 0..t {
                let v = g.get(hot, slot) + g_x.get(slot, m);
                g.set(hot, slot, v);
            }
        }
    }

    // Normalization backward: W_hat = c W with c = sqrt(tau / S),
    // S = sum |W|^2. dL/dW = c (G_hat - W * D / S), D = Re<G_hat, W>.
    for ((cb, g_hat), &c) in codebooks.iter_mut().zip(&grad_normed).zip(scales) {
        let s_energy = cb.weights.energy();
        let mut dot = 0.0;
        for (g, w) in g_hat.entries().iter().zip(cb.weights.entries()) {
            dot += g.re * w.re + g.im * w.im;
        }
        let correction = dot / s_energy;
        let grad = cb.grad.entries_mut();
        for (k, (g, w)) in g_hat.entries().iter().zip(cb.weights.entries()).enumerate() {
            if cb.mask[k] {
                grad[k] += (g - w * correction) * c;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Convergence probes
// ---------------------------------------------------------------------------

/// Anything that turns a batch of receiver inputs into hard bit decisions.
pub trait Detector {
    fn detect(&self, inputs: &RealMatrix) -> Result<Vec<JointLabel>>;
}

impl Detector for MlpParams {
    fn detect(&self, inputs: &RealMatrix) -> Result<Vec<JointLabel>> {
        let (probs, _) = self.forward_batch(inputs)?;
        Ok((0..probs.rows())
            .map(|r| {
                harden(&SoftEstimate {
                    probs: probs.row(r).to_vec(),
                })
            })
            .collect())
    }
}

/// Per-user detection error rates from one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct PerUserError {
    /// Fraction of blocks where any of the user's bits was wrong.
    pub codeword: Vec<f64>,
    /// Fraction of wrong bits.
    pub bit: Vec<f64>,
}

/// Estimate per-user error rates of a detector over freshly drawn blocks at
/// the SNR configured in `cfg`. Draw order per block: messages, channel,
/// noise, all from the one probe stream.
pub fn probe_per_user_error(
    codebooks: &[Codebook],
    detector: &impl Detector,
    cfg: &SystemConfig,
    probe_blocks: usize,
    rng: &mut Stream,
) -> Result<PerUserError> {
    if probe_blocks < 1 {
        return Err(Error::Config("probe_blocks must be >= 1".into()));
    }
    let np = snr_to_sigma2(cfg);
    let weights: Vec<ComplexMatrix> = codebooks.iter().map(|cb| cb.weights.clone()).collect();
    let bits_per_user = cfg.bits_per_user();
    let mut codeword_errs = vec![0u64; cfg.num_users];
    let mut bit_errs = vec![0u64; cfg.num_users];

    let chunk = 256;
    let mut done = 0;
    while done < probe_blocks {
        let count = chunk.min(probe_blocks - done);
        let draws: Vec<BlockDraw> = (0..count)
            .map(|_| BlockDraw::sample_single(cfg, np, rng))
            .collect();
        let (inputs, _, labels) = build_batch(cfg, &weights, &draws)?;
        let decisions = detector.detect(&inputs)?;
        for (decided, truth) in decisions.iter().zip(&labels) {
            for m in 0..cfg.num_users {
                let d = decided.user_bits(m, bits_per_user);
                let t = truth.user_bits(m, bits_per_user);
                let wrong = d.iter().zip(t).filter(|(a, b)| a != b).count();
                bit_errs[m] += wrong as u64;
                if wrong > 0 {
                    codeword_errs[m] += 1;
                }
            }
        }
        done += count;
    }
    let blocks = probe_blocks as f64;
    Ok(PerUserError {
        codeword: codeword_errs.iter().map(|&e| e as f64 / blocks).collect(),
        bit: bit_errs
            .iter()
            .map(|&e| e as f64 / (blocks * bits_per_user as f64))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

/// Train the DNN receiver over the fixed pilot-aided waveform.
pub fn train_pilot_aided(cfg: &SystemConfig, tcfg: &TrainConfig) -> Result<Trained> {
    let codebooks: Vec<Codebook> = (0..cfg.num_users)
        .map(|m| Codebook::pilot_aided(cfg, m))
        .collect::<Result<_>>()?;
    run_training(cfg, tcfg, codebooks, false)
}

/// Jointly train the learnable codebooks of the requested kind and the DNN
/// receiver. Codebooks start from the symmetric initializer unless Xavier is
/// requested.
pub fn train_learning_based(
    cfg: &SystemConfig,
    tcfg: &TrainConfig,
    kind: CodebookKind,
    init: InitKind,
) -> Result<Trained> {
    if kind == CodebookKind::PilotAided {
        return Err(Error::Config(
            "pilot_aided waveforms have no learnable transmitter; use train_pilot_aided".into(),
        ));
    }
    let codebooks = init_codebooks(cfg, kind, init, tcfg.zeta_ratio, tcfg.seed)?;
    run_training(cfg, tcfg, codebooks, true)
}

fn run_training(
    cfg: &SystemConfig,
    tcfg: &TrainConfig,
    mut codebooks: Vec<Codebook>,
    train_transmitter: bool,
) -> Result<Trained> {
    cfg.validate()?;
    tcfg.validate()?;
    let mut train_cfg = cfg.clone();
    train_cfg.snr_db = tcfg.train_snr_db;
    let np = snr_to_sigma2(&train_cfg);

    let dims = layer_dims(cfg, tcfg.hidden);
    let mut mlp = init_mlp(dims, &mut derive_stream(tcfg.seed, &[purpose::INIT, 0]));

    // Adam moment layout: MLP tensors first, then the codebooks (2 real
    // moments per complex entry).
    let mut mlp_offsets = Vec::with_capacity(6);
    let mut total = 0usize;
    for l in 0..3 {
        mlp_offsets.push(total);
        total += mlp.weights[l].data().len();
        mlp_offsets.push(total);
        total += mlp.biases[l].len();
    }
    let mut codebook_offsets = Vec::with_capacity(codebooks.len());
    if train_transmitter {
        for cb in &codebooks {
            codebook_offsets.push(total);
            total += 2 * cb.weights.entries().len();
        }
    }
    let mut adam = AdamState::new(total);

    let mut trace = ConvergenceTrace::default();
    let mut log = Vec::new();
    let mut phases = Vec::new();

    for epoch in 0..tcfg.total_epochs() {
        let phase = if epoch < tcfg.adam_epochs {
            Phase::Adam
        } else {
            Phase::Sgd
        };
        phases.push(phase);
        let mut loss_sum = 0.0;

        for batch in 0..tcfg.batches_per_epoch {
            let path = |p: u64| [purpose::TRAIN, p, epoch as u64, batch as u64];
            let mut msg_rng = derive_stream(tcfg.seed, &path(purpose::MESSAGE));
            let mut ch_rng = derive_stream(tcfg.seed, &path(purpose::CHANNEL));
            let mut noise_rng = derive_stream(tcfg.seed, &path(purpose::NOISE));
            let draws: Vec<BlockDraw> = (0..tcfg.batch_size)
                .map(|_| BlockDraw::sample(cfg, np, &mut msg_rng, &mut ch_rng, &mut noise_rng))
                .collect();

            // Normalization is inside the differentiable graph: scale the raw
            // codebooks to the power budget for this batch's forward pass.
            let mut scales = Vec::with_capacity(codebooks.len());
            let mut weights = Vec::with_capacity(codebooks.len());
            for cb in &codebooks {
                let c = normalization_scale(cb, cfg.user_power_target(cb.user_index))?;
                scales.push(c);
                weights.push(cb.weights.scale(c));
            }

            let (inputs, labels, _) = build_batch(cfg, &weights, &draws)?;
            let (probs, cache) = mlp.forward_batch(&inputs)?;
            let loss = batch_loss(&labels, &probs);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged (seed {}, epoch {epoch}, batch {batch})",
                    tcfg.seed
                )));
            }
            loss_sum += loss;

            let input_grads = mlp.backward_batch(&inputs, &cache, &labels)?;
            if train_transmitter {
                for cb in &mut codebooks {
                    cb.zero_grad();
                }
                backprop_into_codebooks(cfg, &mut codebooks, &scales, &input_grads, &draws)?;
            }

            match phase {
                Phase::Adam => {
                    adam.begin_step();
                    let mut slot = 0;
                    for l in 0..3 {
                        adam.update(
                            mlp_offsets[slot],
                            mlp.weights[l].data_mut(),
                            mlp.grad_weights[l].data(),
                            tcfg.learning_rate,
                        )?;
                        slot += 1;
                        adam.update(
                            mlp_offsets[slot],
                            &mut mlp.biases[l],
                            &mlp.grad_biases[l],
                            tcfg.learning_rate,
                        )?;
                        slot += 1;
                    }
                    if train_transmitter {
                        for (cb, &off) in codebooks.iter_mut().zip(&codebook_offsets) {
                            adam.update_complex(
                                off,
                                cb.weights.entries_mut(),
                                cb.grad.entries(),
                                &cb.mask,
                                tcfg.learning_rate,
                            )?;
                        }
                    }
                }
                Phase::Sgd => {
                    for l in 0..3 {
                        sgd_step(
                            mlp.weights[l].data_mut(),
                            mlp.grad_weights[l].data(),
                            tcfg.learning_rate,
                        )?;
                        sgd_step(&mut mlp.biases[l], &mlp.grad_biases[l], tcfg.learning_rate)?;
                    }
                    if train_transmitter {
                        for cb in &mut codebooks {
                            sgd_step_complex(
                                cb.weights.entries_mut(),
                                cb.grad.entries(),
                                &cb.mask,
                                tcfg.learning_rate,
                            )?;
                        }
                    }
                }
            }
        }

        if !mlp.all_finite() {
            return Err(Error::NonFinite(format!(
                "receiver parameters diverged (seed {}, epoch {epoch})",
                tcfg.seed
            )));
        }

        if (epoch + 1) % tcfg.eval_every == 0 || epoch + 1 == tcfg.total_epochs() {
            let frozen = frozen_codebooks(cfg, &codebooks)?;
            let mut probe_rng = derive_stream(tcfg.seed, &[purpose::PROBE, epoch as u64]);
            let err = probe_per_user_error(
                &frozen,
                &mlp,
                &train_cfg,
                tcfg.probe_blocks,
                &mut probe_rng,
            )?;
            log.push(TrainLogRow {
                epoch,
                phase,
                mean_loss: loss_sum / tcfg.batches_per_epoch as f64,
                user_err: err.codeword.clone(),
            });
            trace.push(epoch, err);
        }
    }

    let codebooks = frozen_codebooks(cfg, &codebooks)?;
    Ok(Trained {
        mlp,
        codebooks,
        trace,
        log,
        phases,
    })
}

/// Normalized read-only copies of the working codebooks (evaluation always
/// sees the power budget satisfied exactly).
fn frozen_codebooks(cfg: &SystemConfig, codebooks: &[Codebook]) -> Result<Vec<Codebook>> {
    codebooks
        .iter()
        .map(|cb| crate::transmitter::normalize_codebook(cb, cfg.user_power_target(cb.user_index)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::receiver::{loss, random_mlp_for_tests};
    use rand::Rng;

    fn small_cfg() -> SystemConfig {
        SystemConfig::symmetric(2, 4, 2, 1, 4, 8.0).unwrap()
    }

    fn tiny_tcfg() -> TrainConfig {
        TrainConfig {
            adam_epochs: 2,
            sgd_epochs: 1,
            batches_per_epoch: 3,
            batch_size: 16,
            probe_blocks: 200,
            hidden: (24, 16),
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn xavier_support_and_moments() {
        let n = 64;
        let mut rng = derive_stream(51, &[purpose::INIT]);
        let w = init_xavier(250, 400, n, &mut rng);
        let bound = 1.0 / (n as f64).sqrt();
        assert!(w.data().iter().all(|&x| x.abs() < bound));

        let count = w.data().len() as f64;
        let mean: f64 = w.data().iter().sum::<f64>() / count;
        let var: f64 = w.data().iter().map(|&x| x * x).sum::<f64>() / count - mean * mean;
        // Mean of U(-b, b) is 0 with sd b/sqrt(3 count).
        assert!(mean.abs() < 3.0 * bound / (3.0 * count).sqrt(), "mean {mean}");
        let expect = bound * bound / 3.0;
        assert!((var / expect - 1.0).abs() < 0.05, "variance {var} vs {expect}");
    }

    #[test]
    fn symmetric_support_and_sign_balance() {
        let n = 4;
        let center = 0.5;
        let zeta = 0.05;
        let mut rng = derive_stream(52, &[purpose::INIT]);
        let w = init_symmetric(320, 320, n, zeta, &mut rng).unwrap();
        let mut positive = 0usize;
        for &x in w.data() {
            let mag = x.abs();
            assert!(
                mag >= center - zeta - 1e-15 && mag <= center + zeta + 1e-15,
                "magnitude {mag} outside the symmetric band"
            );
            if x > 0.0 {
                positive += 1;
            }
        }
        let frac = positive as f64 / w.data().len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "sign fraction {frac}");

        // Per-entry magnitude bound limits column-energy imbalance.
        let ratio = ((center + zeta) / (center - zeta)).powi(2);
        for c in 0..w.cols() {
            let energy: f64 = (0..w.rows()).map(|r| w.get(r, c) * w.get(r, c)).sum();
            let other: f64 = (0..w.rows()).map(|r| w.get(r, 0) * w.get(r, 0)).sum();
            let e_ratio = energy.max(other) / energy.min(other);
            assert!(e_ratio <= ratio, "column energy ratio {e_ratio} > {ratio}");
        }
    }

    #[test]
    fn symmetric_rejects_bad_zeta() {
        let mut rng = derive_stream(53, &[purpose::INIT]);
        assert!(init_symmetric(2, 2, 4, 0.0, &mut rng).is_err());
        assert!(init_symmetric(2, 2, 4, 0.5, &mut rng).is_err());
        assert!(init_symmetric(2, 2, 4, 0.6, &mut rng).is_err());
    }

    #[test]
    fn sgd_examples() {
        let mut p = vec![1.0, 2.0, -3.0];
        sgd_step(&mut p, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, vec![1.0, 2.0, -3.0]);

        let mut p = vec![1.0];
        sgd_step(&mut p, &[2.0], 0.5).unwrap();
        assert_eq!(p, vec![0.0]);

        // Loop oracle on a random case.
        let mut rng = derive_stream(54, &[0]);
        let theta: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let grads: Vec<f64> = (0..20).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut updated = theta.clone();
        sgd_step(&mut updated, &grads, 0.01).unwrap();
        for k in 0..20 {
            assert!((updated[k] - (theta[k] - 0.01 * grads[k])).abs() < 1e-15);
        }

        let mut p = vec![1.0];
        assert!(matches!(
            sgd_step(&mut p, &[f64::NAN], 0.1),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        for &scale in &[1e-6, 1.0, 1e6] {
            let mut state = AdamState::new(1);
            let mut p = vec![0.0];
            state.begin_step();
            state.update(0, &mut p, &[scale], 0.001).unwrap();
            assert!(
                (p[0].abs() / 0.001 - 1.0).abs() < 1e-2,
                "first-step magnitude {} at grad scale {scale}",
                p[0].abs()
            );
        }
    }

    #[test]
    fn adam_zero_gradients_leave_params() {
        let mut state = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..10 {
            state.begin_step();
            state.update(0, &mut p, &[0.0, 0.0, 0.0], 0.01).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_trajectory_matches_reference() {
        // Independently coded scalar Adam, followed for 100 steps.
        struct RefAdam {
            m: f64,
            v: f64,
            t: u32,
        }
        impl RefAdam {
            fn step(&mut self, theta: f64, g: f64, lr: f64) -> f64 {
                let (b1, b2, eps) = (0.9, 0.999, 1e-8);
                self.t += 1;
                self.m = b1 * self.m + (1.0 - b1) * g;
                self.v = b2 * self.v + (1.0 - b2) * g * g;
                let m_hat = self.m / (1.0 - b1.powi(self.t as i32));
                let v_hat = self.v / (1.0 - b2.powi(self.t as i32));
                theta - lr * m_hat / (v_hat.sqrt() + eps)
            }
        }

        let mut rng = derive_stream(55, &[0]);
        let mut state = AdamState::new(4);
        let mut params = vec![0.3, -0.7, 1.1, 0.0];
        let mut reference: Vec<(f64, RefAdam)> = params
            .iter()
            .map(|&p| (p, RefAdam { m: 0.0, v: 0.0, t: 0 }))
            .collect();
        for _ in 0..100 {
            let grads: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            state.begin_step();
            state.update(0, &mut params, &grads, 0.01).unwrap();
            for (k, (theta, r)) in reference.iter_mut().enumerate() {
                *theta = r.step(*theta, grads[k], 0.01);
            }
        }
        for (k, (theta, _)) in reference.iter().enumerate() {
            assert!(
                (params[k] - theta).abs() < 1e-10,
                "trajectory diverged at {k}: {} vs {theta}",
                params[k]
            );
        }
    }

    #[test]
    fn codebook_gradient_matches_end_to_end_finite_differences() {
        // Frozen draws; perturb raw codebook entries through the whole
        // pipeline: normalization, selection, channel, embedding, receiver.
        let cfg = small_cfg();
        let tcfg = tiny_tcfg();
        let mut codebooks = init_codebooks(
            &cfg,
            CodebookKind::Systematic,
            InitKind::Symmetric,
            0.1,
            tcfg.seed,
        )
        .unwrap();
        let mut mlp = random_mlp_for_tests(layer_dims(&cfg, (12, 10)), &mut derive_stream(56, &[0]));
        let np = snr_to_sigma2(&cfg);
        let mut msg_rng = derive_stream(57, &[purpose::MESSAGE]);
        let mut ch_rng = derive_stream(57, &[purpose::CHANNEL]);
        let mut noise_rng = derive_stream(57, &[purpose::NOISE]);
        let draws: Vec<BlockDraw> = (0..3)
            .map(|_| BlockDraw::sample(&cfg, np, &mut msg_rng, &mut ch_rng, &mut noise_rng))
            .collect();

        let eval = |books: &[Codebook], mlp: &MlpParams| -> f64 {
            let weights: Vec<ComplexMatrix> = books
                .iter()
                .map(|cb| {
                    let c = normalization_scale(cb, cfg.user_power_target(cb.user_index)).unwrap();
                    cb.weights.scale(c)
                })
                .collect();
            let mut total = 0.0;
            for draw in &draws {
                let input = received_embedding(&weights, draw).unwrap();
                let (est, _) = mlp.forward(&input).unwrap();
                total += loss(&draw.label(&cfg), &est).unwrap();
            }
            total / draws.len() as f64
        };

        // Analytic gradient.
        let mut scales = Vec::new();
        let mut weights = Vec::new();
        for cb in &codebooks {
            let c = normalization_scale(cb, cfg.user_power_target(cb.user_index)).unwrap();
            scales.push(c);
            weights.push(cb.weights.scale(c));
        }
        let (inputs, labels, _) = build_batch(&cfg, &weights, &draws).unwrap();
        let (_, cache) = mlp.forward_batch(&inputs).unwrap();
        let input_grads = mlp.backward_batch(&inputs, &cache, &labels).unwrap();
        for cb in &mut codebooks {
            cb.zero_grad();
        }
        backprop_into_codebooks(&cfg, &mut codebooks, &scales, &input_grads, &draws).unwrap();

        let step = 1e-6;
        let mut checked = 0;
        for user in 0..cfg.num_users {
            for k in (0..codebooks[user].weights.entries().len()).step_by(3) {
                if !codebooks[user].mask[k] {
                    continue;
                }
                for part in 0..2 {
                    let mut plus = codebooks.clone();
                    let mut minus = codebooks.clone();
                    if part == 0 {
                        plus[user].weights.entries_mut()[k].re += step;
                        minus[user].weights.entries_mut()[k].re -= step;
                    } else {
                        plus[user].weights.entries_mut()[k].im += step;
                        minus[user].weights.entries_mut()[k].im -= step;
                    }
                    let fd = (eval(&plus, &mlp) - eval(&minus, &mlp)) / (2.0 * step);
                    let g = codebooks[user].grad.entries()[k];
                    let an = if part == 0 { g.re } else { g.im };
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4,
                        "user {user} entry {k} part {part}: fd={fd:.4e} an={an:.4e} rel={rel:.2e}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked >= 10, "too few probes ({checked})");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let cfg = small_cfg();
        let mut tcfg = tiny_tcfg();
        tcfg.learning_rate = 0.0;
        let trained = train_pilot_aided(&cfg, &tcfg).unwrap();
        let init = init_mlp(
            layer_dims(&cfg, tcfg.hidden),
            &mut derive_stream(tcfg.seed, &[purpose::INIT, 0]),
        );
        assert_eq!(trained.mlp.weights, init.weights);
        assert_eq!(trained.mlp.biases, init.biases);
        // Untrained receiver: bits are coin flips, per-bit error near 0.5.
        for row in &trained.trace.per_bit {
            for &e in row {
                assert!((e - 0.5).abs() < 0.12, "per-bit error {e} far from 0.5");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_cfg();
        let tcfg = tiny_tcfg();
        let a = train_pilot_aided(&cfg, &tcfg).unwrap();
        let b = train_pilot_aided(&cfg, &tcfg).unwrap();
        assert_eq!(a.mlp.weights, b.mlp.weights);
        assert_eq!(a.mlp.biases, b.mlp.biases);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn probing_does_not_consume_training_streams() {
        let cfg = small_cfg();
        let mut every = tiny_tcfg();
        every.eval_every = 1;
        let mut sparse = tiny_tcfg();
        sparse.eval_every = 3;
        let a = train_pilot_aided(&cfg, &every).unwrap();
        let b = train_pilot_aided(&cfg, &sparse).unwrap();
        assert_eq!(a.mlp.weights, b.mlp.weights, "probe cadence changed training");
    }

    #[test]
    fn two_phase_schedule_audit() {
        let cfg = small_cfg();
        let tcfg = tiny_tcfg();
        let trained = train_pilot_aided(&cfg, &tcfg).unwrap();
        assert_eq!(trained.phases.len(), 3);
        assert_eq!(trained.phases[..2], [Phase::Adam, Phase::Adam]);
        assert_eq!(trained.phases[2], Phase::Sgd);
    }

    #[test]
    fn pilot_training_learns_something() {
        let cfg = small_cfg();
        let mut tcfg = tiny_tcfg();
        tcfg.adam_epochs = 3;
        tcfg.sgd_epochs = 1;
        tcfg.batches_per_epoch = 100;
        tcfg.batch_size = 64;
        tcfg.hidden = (64, 32);
        tcfg.probe_blocks = 500;
        let trained = train_pilot_aided(&cfg, &tcfg).unwrap();
        let last = trained.trace.per_bit.last().unwrap();
        let mean: f64 = last.iter().sum::<f64>() / last.len() as f64;
        assert!(mean < 0.25, "mean per-bit error after training {mean}");
    }

    #[test]
    fn systematic_entries_stay_fixed_under_training() {
        let cfg = small_cfg();
        let mut tcfg = tiny_tcfg();
        tcfg.batches_per_epoch = 5;
        let init_books = init_codebooks(
            &cfg,
            CodebookKind::Systematic,
            InitKind::Symmetric,
            tcfg.zeta_ratio,
            tcfg.seed,
        )
        .unwrap();
        let trained =
            train_learning_based(&cfg, &tcfg, CodebookKind::Systematic, InitKind::Symmetric)
                .unwrap();
        // Final books are normalized, so compare the fixed column up to the
        // final scale: the ratio to the initial fixed entries must be one
        // real constant per user.
        let t = cfg.coherence_time;
        for (trained_cb, init_cb) in trained.codebooks.iter().zip(&init_books) {
            let mut expected_scale = None;
            for row in 0..cfg.codebook_size {
                let before = init_cb.weights.get(row, t - 1);
                let after = trained_cb.weights.get(row, t - 1);
                let ratio = after / before;
                assert!(ratio.im.abs() < 1e-12, "fixed entry rotated: {ratio}");
                match expected_scale {
                    None => expected_scale = Some(ratio.re),
                    Some(s) => assert!(
                        (ratio.re - s).abs() < 1e-12,
                        "fixed column scaled non-uniformly"
                    ),
                }
            }
        }

        // The raw learnable mask itself is honored: re-run one batch worth of
        // SGD manually and check masked entries are bit-identical.
        let mut books = init_books;
        let before: Vec<Complex64> = books
            .iter()
            .flat_map(|cb| cb.weights.entries().to_vec())
            .collect();
        for cb in &mut books {
            cb.zero_grad();
            for g in cb.grad.entries_mut() {
                *g = Complex64::new(0.3, -0.2);
            }
            let grads = cb.grad.entries().to_vec();
            sgd_step_complex(cb.weights.entries_mut(), &grads, &cb.mask, 0.1).unwrap();
        }
        let mut idx = 0;
        for cb in &books {
            for (k, w) in cb.weights.entries().iter().enumerate() {
                if !cb.mask[k] {
                    assert_eq!(w.re.to_bits(), before[idx].re.to_bits());
                    assert_eq!(w.im.to_bits(), before[idx].im.to_bits());
                }
                idx += 1;
            }
        }
    }

    #[test]
    fn probe_error_with_stub_detectors() {
        let cfg = small_cfg();
        let books: Vec<Codebook> = (0..cfg.num_users)
            .map(|m| Codebook::pilot_aided(&cfg, m).unwrap())
            .collect();

        // All-zero outputs (harden of a zero network): per-codeword error is
        // the chance a uniform 2-bit label is nonzero, 0.75; per-bit 0.5.
        struct ZeroDetector {
            width: usize,
        }
        impl Detector for ZeroDetector {
            fn detect(&self, inputs: &RealMatrix) -> Result<Vec<JointLabel>> {
                Ok((0..inputs.rows())
                    .map(|_| JointLabel {
                        bits: vec![0; self.width],
                    })
                    .collect())
            }
        }
        let mut rng = derive_stream(58, &[purpose::PROBE]);
        let err = probe_per_user_error(
            &books,
            &ZeroDetector {
                width: cfg.bits_per_block(),
            },
            &cfg,
            4000,
            &mut rng,
        )
        .unwrap();
        for m in 0..cfg.num_users {
            assert!((err.codeword[m] - 0.75).abs() < 0.03, "codeword {:?}", err.codeword);
            assert!((err.bit[m] - 0.5).abs() < 0.03, "bit {:?}", err.bit);
        }

        // A genie that replays the transmitted labels scores zero everywhere.
        // It reproduces the probe's own draw order from a cloned stream.
        struct GenieDetector {
            cfg: SystemConfig,
            stream: std::cell::RefCell<Stream>,
        }
        impl Detector for GenieDetector {
            fn detect(&self, inputs: &RealMatrix) -> Result<Vec<JointLabel>> {
                let np = snr_to_sigma2(&self.cfg);
                let mut rng = self.stream.borrow_mut();
                Ok((0..inputs.rows())
                    .map(|_| {
                        BlockDraw::sample_single(&self.cfg, np, &mut rng)
                            .label(&self.cfg)
                    })
                    .collect())
            }
        }
        let genie = GenieDetector {
            cfg: cfg.clone(),
            stream: std::cell::RefCell::new(derive_stream(59, &[purpose::PROBE])),
        };
        let mut rng = derive_stream(59, &[purpose::PROBE]);
        let err = probe_per_user_error(&books, &genie, &cfg, 500, &mut rng).unwrap();
        assert!(err.codeword.iter().all(|&e| e == 0.0), "{:?}", err.codeword);
        assert!(err.bit.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn probe_matches_recount_oracle() {
        // Recount the errors of a fixed-decision detector from regenerated
        // draws and compare against the probe's own counting.
        let cfg = small_cfg();
        let books: Vec<Codebook> = (0..cfg.num_users)
            .map(|m| Codebook::pilot_aided(&cfg, m).unwrap())
            .collect();
        struct FixedDetector {
            bits: Vec<u8>,
        }
        impl Detector for FixedDetector {
            fn detect(&self, inputs: &RealMatrix) -> Result<Vec<JointLabel>> {
                Ok((0..inputs.rows())
                    .map(|_| JointLabel {
                        bits: self.bits.clone(),
                    })
                    .collect())
            }
        }
        let fixed = FixedDetector {
            bits: vec![1, 0, 0, 1],
        };
        let blocks = 700;
        let mut rng = derive_stream(60, &[purpose::PROBE]);
        let err = probe_per_user_error(&books, &fixed, &cfg, blocks, &mut rng).unwrap();

        let np = snr_to_sigma2(&cfg);
        let mut rng = derive_stream(60, &[purpose::PROBE]);
        let mut cw = vec![0u64; 2];
        let mut bits = vec![0u64; 2];
        for _ in 0..blocks {
            let draw = BlockDraw::sample_single(&cfg, np, &mut rng);
            let label = draw.label(&cfg);
            for m in 0..2 {
                let wrong = label
                    .user_bits(m, 2)
                    .iter()
                    .zip(&fixed.bits[2 * m..2 * m + 2])
                    .filter(|(a, b)| a != b)
                    .count();
                bits[m] += wrong as u64;
                if wrong > 0 {
                    cw[m] += 1;
                }
            }
        }
        for m in 0..2 {
            assert!((err.codeword[m] - cw[m] as f64 / blocks as f64).abs() < 1e-12);
            assert!((err.bit[m] - bits[m] as f64 / (2 * blocks) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn per_user_error_is_permutation_consistent() {
        // A detector that errs only inside user 0's bit slice reports all its
        // error mass on user 0; flipping the slice moves it to user 1.
        let cfg = small_cfg();
        let books: Vec<Codebook> = (0..cfg.num_users)
            .map(|m| Codebook::pilot_aided(&cfg, m).unwrap())
            .collect();
        struct SliceSpoiler {
            cfg: SystemConfig,
            stream: std::cell::RefCell<Stream>,
            spoil_user: usize,
        }
        impl Detector for SliceSpoiler {
            fn detect(&self, inputs: &RealMatrix) -> Result<Vec<JointLabel>> {
                let np = snr_to_sigma2(&self.cfg);
                let mut rng = self.stream.borrow_mut();
                Ok((0..inputs.rows())
                    .map(|_| {
                        let mut label = BlockDraw::sample_single(&self.cfg, np, &mut rng)
                            .label(&self.cfg);
                        label.bits[2 * self.spoil_user] ^= 1;
                        label
                    })
                    .collect())
            }
        }
        for spoil in 0..2usize {
            let det = SliceSpoiler {
                cfg: cfg.clone(),
                stream: std::cell::RefCell::new(derive_stream(61, &[purpose::PROBE])),
                spoil_user: spoil,
            };
            let mut rng = derive_stream(61, &[purpose::PROBE]);
            let err = probe_per_user_error(&books, &det, &cfg, 300, &mut rng).unwrap();
            for m in 0..2 {
                if m == spoil {
                    assert!((err.codeword[m] - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(err.codeword[m], 0.0);
                }
            }
        }
    }
}
