//! Monte-Carlo BER sweeps.
//!
//! Each SNR point simulates independent blocks until the bit-error budget is
//! met or the block cap is hit. Trial t of point s draws its channel, noise
//! and messages from streams derived from (seed, purpose, s, t), identically
//! for every scheme: comparisons are paired. Trials run in fixed-size chunks
//! whose internal order never affects the counts, so results are
//! bit-identical regardless of thread count.

use std::path::Path;

use rayon::prelude::*;

use crate::baselines::{ls_estimate, mlsd_detect, split_block, zf_detect};
use crate::channel::{snr_to_sigma2, NoiseParams, SystemConfig};
use crate::complexlin::ComplexMatrix;
use crate::harness::{BerCurve, BerPoint, ExperimentConfig, Scheme};
use crate::receiver::{load_mlp, MlpParams};
use crate::rng::{derive_stream, purpose};
use crate::training::{build_batch, BlockDraw, Detector};
use crate::transmitter::{build_pilot_matrix, load_codebook, Codebook};
use crate::{Error, Result};

/// Trials per evaluation chunk (fixed: part of the deterministic contract).
const CHUNK: u64 = 512;

/// Budget slack allowed by the energy audit.
const ENERGY_TOL: f64 = 1e-9;

/// Frozen per-scheme artifacts a sweep runs against.
#[derive(Debug, Clone)]
pub enum SchemeArtifacts {
    /// DNN receiver over fixed or learned codebooks.
    Dnn {
        codebooks: Vec<Codebook>,
        mlp: MlpParams,
    },
    /// Classical detection over the pilot-aided waveform.
    Baseline {
        codebooks: Vec<Codebook>,
        pilot: ComplexMatrix,
        use_mlsd: bool,
    },
}

impl SchemeArtifacts {
    pub fn codebooks(&self) -> &[Codebook] {
        match self {
            SchemeArtifacts::Dnn { codebooks, .. } => codebooks,
            SchemeArtifacts::Baseline { codebooks, .. } => codebooks,
        }
    }
}

/// Assemble the artifacts a scheme needs. Baselines are built from the
/// config alone; learned schemes load their checkpoints (receiver `mlp.txt`,
/// plus `codebook_user<m>.txt` for the learned waveforms).
pub fn scheme_artifacts(
    cfg: &SystemConfig,
    scheme: Scheme,
    checkpoint_dir: Option<&Path>,
) -> Result<SchemeArtifacts> {
    let pilot_books = || -> Result<Vec<Codebook>> {
        (0..cfg.num_users)
            .map(|m| Codebook::pilot_aided(cfg, m))
            .collect()
    };
    match scheme {
        Scheme::LsZf | Scheme::LsMlsd => Ok(SchemeArtifacts::Baseline {
            codebooks: pilot_books()?,
            pilot: build_pilot_matrix(cfg)?,
            use_mlsd: scheme == Scheme::LsMlsd,
        }),
        Scheme::PilotDnn => {
            let dir = checkpoint_dir.ok_or_else(|| {
                Error::Config("pilot_dnn sweep needs --checkpoint with a trained receiver".into())
            })?;
            let mlp = load_mlp(&dir.join("mlp.txt"))?;
            Ok(SchemeArtifacts::Dnn {
                codebooks: pilot_books()?,
                mlp,
            })
        }
        Scheme::Systematic | Scheme::NonSystematic => {
            let dir = checkpoint_dir.ok_or_else(|| {
                Error::Config(format!(
                    "{scheme} sweep needs --checkpoint with trained codebooks and receiver"
                ))
            })?;
            let mlp = load_mlp(&dir.join("mlp.txt"))?;
            let codebooks: Vec<Codebook> = (0..cfg.num_users)
                .map(|m| load_codebook(&dir.join(format!("codebook_user{m}.txt"))))
                .collect::<Result<_>>()?;
            for (m, cb) in codebooks.iter().enumerate() {
                if cb.user_index != m || cb.kind != scheme.codebook_kind() {
                    return Err(Error::Config(format!(
                        "checkpoint codebook_user{m}.txt is {} for user {}, expected {} for user {m}",
                        cb.kind,
                        cb.user_index,
                        scheme.codebook_kind()
                    )));
                }
            }
            Ok(SchemeArtifacts::Dnn { codebooks, mlp })
        }
    }
}

/// Audit the transmit-power accounting: every codebook must sit on its
/// average-power budget, and a sampled block's total energy must match the
/// sum of the selected codeword energies.
pub fn audit_block_energy(cfg: &SystemConfig, artifacts: &SchemeArtifacts) -> Result<()> {
    for cb in artifacts.codebooks() {
        let target = cfg.user_power_target(cb.user_index);
        let got = cb.average_power();
        if (got - target).abs() > ENERGY_TOL {
            return Err(Error::Config(format!(
                "codebook for user {} misses the power budget: {got} vs {target}",
                cb.user_index
            )));
        }
    }
    // One sampled block: energy equals the selected rows' energy exactly.
    let mut rng = derive_stream(0, &[purpose::MESSAGE]);
    let np = NoiseParams::new(1.0).expect("fixed sigma");
    let draw = BlockDraw::sample_single(cfg, np, &mut rng);
    let mut expected = 0.0;
    for (cb, &hot) in artifacts.codebooks().iter().zip(&draw.hot) {
        expected += cb.weights.row(hot).iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let cws: Vec<Vec<num_complex::Complex64>> = artifacts
        .codebooks()
        .iter()
        .zip(&draw.hot)
        .map(|(cb, &hot)| cb.weights.row(hot).to_vec())
        .collect();
    let x = crate::transmitter::assemble_block(&cws)?;
    if (x.energy() - expected).abs() > ENERGY_TOL {
        return Err(Error::Config(format!(
            "block energy accounting off: {} vs {expected}",
            x.energy()
        )));
    }
    Ok(())
}

/// Count the wrong bits of one baseline trial.
fn baseline_trial_errors(
    cfg: &SystemConfig,
    codebooks: &[Codebook],
    pilot: &ComplexMatrix,
    use_mlsd: bool,
    np: NoiseParams,
    seed: u64,
    snr_index: u64,
    trial: u64,
) -> Result<u64> {
    let mut msg_rng = derive_stream(seed, &[purpose::MESSAGE, snr_index, trial]);
    let mut ch_rng = derive_stream(seed, &[purpose::CHANNEL, snr_index, trial]);
    let mut noise_rng = derive_stream(seed, &[purpose::NOISE, snr_index, trial]);
    let draw = BlockDraw::sample(cfg, np, &mut msg_rng, &mut ch_rng, &mut noise_rng);
    let truth = draw.label(cfg);

    let cws: Vec<Vec<num_complex::Complex64>> = codebooks
        .iter()
        .zip(&draw.hot)
        .map(|(cb, &hot)| cb.weights.row(hot).to_vec())
        .collect();
    let x = crate::transmitter::assemble_block(&cws)?;
    let y = crate::channel::apply_channel(&x, &draw.channel, &draw.noise)?;
    let (y_tau, y_d) = split_block(cfg, &y);
    let est = ls_estimate(pilot, &y_tau)?;
    let decided = if use_mlsd {
        mlsd_detect(&y_d, &est, codebooks, cfg)?
    } else {
        zf_detect(&y_d, &est)?
    };
    Ok(truth.bit_errors(&decided))
}

/// Simulate one SNR point of the sweep.
pub fn run_ber_point(
    ec: &ExperimentConfig,
    snr_index: usize,
    artifacts: &SchemeArtifacts,
) -> Result<BerPoint> {
    let snr_db = *ec
        .snr_grid_db
        .get(snr_index)
        .ok_or_else(|| Error::Config(format!("snr index {snr_index} out of range")))?;
    let mut cfg = ec.system.clone();
    cfg.snr_db = snr_db;
    let np = snr_to_sigma2(&cfg);
    let bits_per_block = cfg.bits_per_block() as u64;

    let mut blocks = 0u64;
    let mut bit_errors = 0u64;
    while blocks < ec.max_blocks && bit_errors < ec.min_bit_errors {
        let count = CHUNK.min(ec.max_blocks - blocks);
        let chunk_errors: u64 = match artifacts {
            SchemeArtifacts::Dnn { codebooks, mlp } => {
                let weights: Vec<ComplexMatrix> =
                    codebooks.iter().map(|cb| cb.weights.clone()).collect();
                let draws: Vec<BlockDraw> = (blocks..blocks + count)
                    .map(|trial| {
                        let mut msg_rng =
                            derive_stream(ec.seed, &[purpose::MESSAGE, snr_index as u64, trial]);
                        let mut ch_rng =
                            derive_stream(ec.seed, &[purpose::CHANNEL, snr_index as u64, trial]);
                        let mut noise_rng =
                            derive_stream(ec.seed, &[purpose::NOISE, snr_index as u64, trial]);
                        BlockDraw::sample(&cfg, np, &mut msg_rng, &mut ch_rng, &mut noise_rng)
                    })
                    .collect();
                let (inputs, _, labels) = build_batch(&cfg, &weights, &draws)?;
                let decisions = mlp.detect(&inputs)?;
                decisions
                    .iter()
                    .zip(&labels)
                    .map(|(d, t)| t.bit_errors(d))
                    .sum()
            }
            SchemeArtifacts::Baseline {
                codebooks,
                pilot,
                use_mlsd,
            } => (blocks..blocks + count)
                .into_par_iter()
                .map(|trial| {
                    baseline_trial_errors(
                        &cfg,
                        codebooks,
                        pilot,
                        *use_mlsd,
                        np,
                        ec.seed,
                        snr_index as u64,
                        trial,
                    )
                })
                .collect::<Result<Vec<u64>>>()?
                .into_iter()
                .sum(),
        };
        bit_errors += chunk_errors;
        blocks += count;
    }

    Ok(BerPoint::from_counts(
        snr_db,
        blocks,
        blocks * bits_per_block,
        bit_errors,
    ))
}

/// Run the full sweep over the configured SNR grid.
pub fn run_ber_sweep(ec: &ExperimentConfig, artifacts: &SchemeArtifacts) -> Result<BerCurve> {
    ec.validate()?;
    audit_block_energy(&ec.system, artifacts)?;
    let points = (0..ec.snr_grid_db.len())
        .map(|idx| run_ber_point(ec, idx, artifacts))
        .collect::<Result<Vec<_>>>()?;
    Ok(BerCurve {
        scheme: ec.scheme,
        points,
    })
}
