// Scratch experiment runner used while tuning training recipes.

use nclink_core::channel::SystemConfig;
use nclink_core::training::{
    train_learning_based, train_pilot_aided, InitKind, TrainConfig, Trained,
};
use nclink_core::transmitter::CodebookKind;

fn report(tag: &str, trained: &Trained) {
    for (i, epoch) in trained.trace.epochs.iter().enumerate() {
        println!(
            "{tag} epoch {epoch} loss {:.4} per-bit {:?}",
            trained.log[i].mean_loss, trained.trace.per_bit[i]
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("small");

    match mode {
        "small" => {
            let cfg = SystemConfig::symmetric(2, 4, 2, 1, 4, 8.0).unwrap();
            let tcfg = TrainConfig {
                adam_epochs: 8,
                sgd_epochs: 2,
                batches_per_epoch: 100,
                batch_size: 64,
                probe_blocks: 1000,
                hidden: (64, 32),
                seed: 5,
                ..TrainConfig::default()
            };
            let t0 = std::time::Instant::now();
            let trained = train_pilot_aided(&cfg, &tcfg).unwrap();
            report("pilot", &trained);
            println!("pilot elapsed {:?}", t0.elapsed());

            let t0 = std::time::Instant::now();
            let learned = train_learning_based(
                &cfg,
                &tcfg,
                CodebookKind::NonSystematic,
                InitKind::Symmetric,
            )
            .unwrap();
            report("non_sys", &learned);
            println!("non_sys elapsed {:?}", t0.elapsed());
        }
        "fig3" => {
            // 4x8, T=5 at modest network size to gauge dynamics fast.
            let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
            let snr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8.0);
            let hidden: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(256);
            let epochs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(6);
            let cfg = SystemConfig::symmetric(4, 8, 4, 1, 4, snr).unwrap();
            let tcfg = TrainConfig {
                adam_epochs: epochs * 4 / 5,
                sgd_epochs: epochs - epochs * 4 / 5,
                batches_per_epoch: 300,
                batch_size: 200,
                probe_blocks: 2000,
                hidden: (hidden, hidden / 2),
                train_snr_db: snr,
                seed,
                ..TrainConfig::default()
            };
            for (tag, kind, init) in [
                ("pilot", None, InitKind::Xavier),
                (
                    "sys_symm",
                    Some(CodebookKind::Systematic),
                    InitKind::Symmetric,
                ),
                (
                    "non_symm",
                    Some(CodebookKind::NonSystematic),
                    InitKind::Symmetric,
                ),
                (
                    "non_xavier",
                    Some(CodebookKind::NonSystematic),
                    InitKind::Xavier,
                ),
            ] {
                let t0 = std::time::Instant::now();
                let trained = match kind {
                    None => train_pilot_aided(&cfg, &tcfg).unwrap(),
                    Some(k) => train_learning_based(&cfg, &tcfg, k, init).unwrap(),
                };
                report(tag, &trained);
                println!("{tag} elapsed {:?}", t0.elapsed());
            }
        }
        "fig2" => {
            // Init comparison over seeds: final max-over-users per-bit error.
            let hidden: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(256);
            let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(6);
            let snr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(8.0);
            let seed_lo: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1);
            let seed_hi: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(5);
            let cfg = SystemConfig::symmetric(4, 8, 4, 1, 4, snr).unwrap();
            for seed in seed_lo..=seed_hi {
                let tcfg = TrainConfig {
                    adam_epochs: epochs * 4 / 5,
                    sgd_epochs: epochs - epochs * 4 / 5,
                    batches_per_epoch: 300,
                    batch_size: 200,
                    probe_blocks: 2000,
                    hidden: (hidden, hidden / 2),
                    train_snr_db: snr,
                    seed,
                    ..TrainConfig::default()
                };
                let mut finals = Vec::new();
                for init in [InitKind::Symmetric, InitKind::Xavier] {
                    let trained = train_learning_based(
                        &cfg,
                        &tcfg,
                        CodebookKind::NonSystematic,
                        init,
                    )
                    .unwrap();
                    let last = trained.trace.per_bit.last().unwrap().clone();
                    let max = last.iter().cloned().fold(0.0, f64::max);
                    finals.push((init, max, last));
                }
                for (init, max, last) in &finals {
                    println!("seed {seed} {init:?} max {max:.4} users {last:?}");
                }
            }
        }
        "longtrain" => {
            // longtrain <scheme> <hidden1> <epochs> <snr> <seed> [M N Ttau]
            let scheme = args.get(2).map(String::as_str).unwrap_or("pilot");
            let hidden: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(256);
            let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(20);
            let snr: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(8.0);
            let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1);
            let m: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(4);
            let n: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(8);
            let t_tau: usize = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(m);
            let cfg = SystemConfig::symmetric(m, n, t_tau, 1, 4, snr).unwrap();
            let tcfg = TrainConfig {
                adam_epochs: epochs * 4 / 5,
                sgd_epochs: epochs - epochs * 4 / 5,
                batches_per_epoch: 500,
                batch_size: 200,
                probe_blocks: 4000,
                eval_every: 2,
                hidden: (hidden, hidden / 2),
                train_snr_db: snr,
                seed,
                ..TrainConfig::default()
            };
            let t0 = std::time::Instant::now();
            let trained = match scheme {
                "pilot" => train_pilot_aided(&cfg, &tcfg).unwrap(),
                "sys" => train_learning_based(
                    &cfg,
                    &tcfg,
                    CodebookKind::Systematic,
                    InitKind::Symmetric,
                )
                .unwrap(),
                "non" => train_learning_based(
                    &cfg,
                    &tcfg,
                    CodebookKind::NonSystematic,
                    InitKind::Symmetric,
                )
                .unwrap(),
                other => panic!("unknown scheme {other}"),
            };
            report(scheme, &trained);
            println!("{scheme} h{hidden} snr{snr} elapsed {:?}", t0.elapsed());
        }
        "mlsdtime" => {
            use nclink_core::baselines::{ls_estimate, mlsd_detect, split_block};
            use nclink_core::channel::{apply_channel, snr_to_sigma2};
            use nclink_core::rng::{derive_stream, purpose};
            use nclink_core::training::BlockDraw;
            use nclink_core::transmitter::{assemble_block, build_pilot_matrix, Codebook};

            let cfg = SystemConfig::symmetric(8, 16, 8, 1, 4, 8.0).unwrap();
            let books: Vec<Codebook> = (0..8)
                .map(|m| Codebook::pilot_aided(&cfg, m).unwrap())
                .collect();
            let pilot = build_pilot_matrix(&cfg).unwrap();
            let np = snr_to_sigma2(&cfg);
            let blocks = 200u64;
            let t0 = std::time::Instant::now();
            let mut errors = 0u64;
            for trial in 0..blocks {
                let mut rng = derive_stream(1, &[purpose::MESSAGE, trial]);
                let draw = BlockDraw::sample_single(&cfg, np, &mut rng);
                let cws: Vec<_> = books
                    .iter()
                    .zip(&draw.hot)
                    .map(|(cb, &hot)| cb.weights.row(hot).to_vec())
                    .collect();
                let x = assemble_block(&cws).unwrap();
                let y = apply_channel(&x, &draw.channel, &draw.noise).unwrap();
                let (y_tau, y_d) = split_block(&cfg, &y);
                let est = ls_estimate(&pilot, &y_tau).unwrap();
                let decided = mlsd_detect(&y_d, &est, &books, &cfg).unwrap();
                errors += draw.label(&cfg).bit_errors(&decided);
            }
            let dt = t0.elapsed();
            println!(
                "8x16 MLSD: {blocks} blocks in {dt:?} ({:.1} ms/block), {errors} bit errors",
                dt.as_secs_f64() * 1000.0 / blocks as f64
            );
        }
        other => eprintln!("unknown mode {other}"),
    }
}
