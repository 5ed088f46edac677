//! Command-line front end: training, BER sweeps, curve comparison,
//! information-theoretic reference numbers and convergence traces.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nclink_core::analysis::{capacity_lower_bound, dof_pilot};
use nclink_core::harness::{
    compare_schemes, read_ber_csv, run_ber_point, scheme_artifacts, write_ber_csv, write_manifest,
    write_plot_data, write_train_log, BerCurve, ExperimentConfig, Scheme,
};
use nclink_core::harness::export::write_trace_csv;
use nclink_core::harness::sweep::audit_block_energy;
use nclink_core::receiver::save_mlp;
use nclink_core::rng::{derive_stream, purpose};
use nclink_core::training::{train_learning_based, train_pilot_aided, InitKind, Trained};
use nclink_core::transmitter::{save_codebook, CodebookKind};
use nclink_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "nclink",
    about = "Multiuser MIMO noncoherent link laboratory",
    version
)]
struct Cli {
    /// Override the experiment seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a scheme's artifacts and write checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// pilot_dnn, systematic or non_systematic.
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        out: PathBuf,
        /// Transmitter initializer for learned waveforms.
        #[arg(long, default_value = "symmetric")]
        init: InitKind,
    },
    /// Monte-Carlo BER sweep over the configured SNR grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scheme: Scheme,
        /// Directory holding trained checkpoints (learned schemes).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare exported BER curves at target BER levels.
    Compare {
        /// Comma-separated BER CSV paths.
        #[arg(long, value_delimiter = ',')]
        inputs: Vec<PathBuf>,
        /// Comma-separated target BERs.
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3")]
        targets: Vec<f64>,
    },
    /// Closed-form / Monte-Carlo reference quantities.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Train a learned waveform and export its convergence trace.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// xavier or symmetric.
        #[arg(long)]
        init: InitKind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Pilot-scheme degrees of freedom M(1 - M/T).
    Dof {
        #[arg(long = "M", visible_alias = "m")]
        m: usize,
        #[arg(long = "T", visible_alias = "t")]
        t: usize,
    },
    /// Training-based capacity lower bound (Monte-Carlo).
    Capacity {
        #[arg(long = "M", visible_alias = "m")]
        m: usize,
        #[arg(long = "T", visible_alias = "t")]
        t: usize,
        #[arg(long)]
        rho_db: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut ec = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        ec.seed = seed;
        ec.train.seed = seed;
    }
    Ok(ec)
}

fn save_training(
    ec: &ExperimentConfig,
    scheme: Scheme,
    trained: &Trained,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let comments = vec![
        format!("train_snr_db {}", ec.train.train_snr_db),
        format!("seed {}", ec.seed),
    ];
    save_mlp(&trained.mlp, &out.join("mlp.txt"), &comments)?;
    if scheme != Scheme::PilotDnn {
        for cb in &trained.codebooks {
            save_codebook(
                cb,
                &out.join(format!("codebook_user{}.txt", cb.user_index)),
                &comments,
            )?;
        }
    }
    write_train_log(&trained.log, ec.system.num_users, &out.join("train_log.csv"))?;
    write_trace_csv(&trained.trace, ec.system.num_users, &out.join("trace.csv"))?;
    write_manifest(
        ec,
        &[("command".into(), "train".into()), ("trained_scheme".into(), scheme.to_string())],
        &out.join("manifest.txt"),
    )?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            scheme,
            out,
            init,
        } => {
            let mut ec = load_config(&config, cli.seed)?;
            ec.scheme = scheme;
            if cli.verbose {
                eprintln!(
                    "training {scheme} at {} dB for {} epochs",
                    ec.train.train_snr_db,
                    ec.train.total_epochs()
                );
            }
            let trained = match scheme {
                Scheme::PilotDnn => train_pilot_aided(&ec.system, &ec.train)?,
                Scheme::Systematic => {
                    train_learning_based(&ec.system, &ec.train, CodebookKind::Systematic, init)?
                }
                Scheme::NonSystematic => {
                    train_learning_based(&ec.system, &ec.train, CodebookKind::NonSystematic, init)?
                }
                Scheme::LsZf | Scheme::LsMlsd => {
                    return Err(Error::Config(format!(
                        "{scheme} is a classical baseline with nothing to train"
                    )))
                }
            };
            if cli.verbose {
                if let Some(last) = trained.trace.final_per_bit() {
                    eprintln!("final per-user per-bit error: {last:?}");
                }
            }
            save_training(&ec, scheme, &trained, &out)?;
            println!("checkpoints written to {}", out.display());
            Ok(())
        }
        Command::Sweep {
            config,
            scheme,
            checkpoint,
            out,
        } => {
            let mut ec = load_config(&config, cli.seed)?;
            ec.scheme = scheme;
            let artifacts = scheme_artifacts(&ec.system, scheme, checkpoint.as_deref())?;
            audit_block_energy(&ec.system, &artifacts)?;
            std::fs::create_dir_all(&out)?;
            let mut points = Vec::new();
            for idx in 0..ec.snr_grid_db.len() {
                let point = run_ber_point(&ec, idx, &artifacts)?;
                if cli.verbose {
                    eprintln!(
                        "snr {:>6.2} dB: ber {:.3e} ({} errors / {} blocks{})",
                        point.snr_db,
                        point.ber,
                        point.bit_errors,
                        point.blocks,
                        if point.low_confidence() {
                            ", low confidence"
                        } else {
                            ""
                        }
                    );
                }
                points.push(point);
            }
            let curve = BerCurve { scheme, points };
            let csv = out.join(format!("ber_{scheme}.csv"));
            write_ber_csv(&curve, &csv)?;
            write_plot_data(&curve, &out.join(format!("ber_{scheme}.dat")))?;
            write_manifest(
                &ec,
                &[("command".into(), "sweep".into())],
                &out.join("manifest.txt"),
            )?;
            println!("curve written to {}", csv.display());
            Ok(())
        }
        Command::Compare { inputs, targets } => {
            let curves: Vec<BerCurve> = inputs
                .iter()
                .map(|p| read_ber_csv(p))
                .collect::<Result<_>>()?;
            let report = compare_schemes(&curves, &targets)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Analyze { what } => match what {
            AnalyzeCommand::Dof { m, t } => {
                println!("dof_pilot(M={m}, T={t}) = {:.6}", dof_pilot(m, t)?);
                Ok(())
            }
            AnalyzeCommand::Capacity {
                m,
                t,
                rho_db,
                samples,
            } => {
                let seed = cli.seed.unwrap_or(1);
                let mut rng = derive_stream(seed, &[purpose::CAPACITY]);
                let est = capacity_lower_bound(m, t, rho_db, samples, &mut rng)?;
                println!(
                    "capacity_lower_bound(M={m}, T={t}, rho={rho_db} dB) = {:.6} bits/use (stderr {:.2e}, {} samples)",
                    est.value, est.stderr, est.samples
                );
                Ok(())
            }
        },
        Command::Convergence { config, init, out } => {
            let ec = load_config(&config, cli.seed)?;
            let kind = match ec.scheme {
                Scheme::Systematic => CodebookKind::Systematic,
                Scheme::NonSystematic => CodebookKind::NonSystematic,
                other => {
                    return Err(Error::Config(format!(
                        "convergence traces need a learned-waveform scheme in the config, got {other}"
                    )))
                }
            };
            let trained = train_learning_based(&ec.system, &ec.train, kind, init)?;
            std::fs::create_dir_all(&out)?;
            write_trace_csv(&trained.trace, ec.system.num_users, &out.join("trace.csv"))?;
            write_train_log(&trained.log, ec.system.num_users, &out.join("train_log.csv"))?;
            write_manifest(
                &ec,
                &[
                    ("command".into(), "convergence".into()),
                    ("init".into(), init.to_string()),
                ],
                &out.join("manifest.txt"),
            )?;
            if let Some(last) = trained.trace.final_per_bit() {
                println!("final per-user per-bit error: {last:?}");
            }
            println!("trace written to {}", out.join("trace.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
