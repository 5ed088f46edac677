// Batch-step timing for the receiver at given widths.

use nclink_core::channel::{snr_to_sigma2, SystemConfig};
use nclink_core::realmat::RealMatrix;
use nclink_core::receiver::layer_dims;
use nclink_core::rng::{derive_stream, purpose};
use nclink_core::training::{build_batch, init_mlp, BlockDraw};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hidden: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1024);
    let m: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let n: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);
    let cfg = SystemConfig::symmetric(m, n, m, 1, 4, 8.0).unwrap();
    let dims = layer_dims(&cfg, (hidden, hidden / 2));
    let mut mlp = init_mlp(dims, &mut derive_stream(1, &[purpose::INIT]));
    let np = snr_to_sigma2(&cfg);
    let mut rng = derive_stream(1, &[purpose::MESSAGE]);
    let draws: Vec<BlockDraw> = (0..200)
        .map(|_| BlockDraw::sample_single(&cfg, np, &mut rng))
        .collect();
    let books: Vec<_> = (0..m)
        .map(|u| {
            nclink_core::transmitter::Codebook::pilot_aided(&cfg, u)
                .unwrap()
                .weights
        })
        .collect();
    let (inputs, labels, _) = build_batch(&cfg, &books, &draws).unwrap();

    let reps = 30;
    let t0 = std::time::Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        let (probs, cache) = mlp.forward_batch(&inputs).unwrap();
        let g: RealMatrix = mlp.backward_batch(&inputs, &cache, &labels).unwrap();
        sink += probs.get(0, 0) + g.get(0, 0);
    }
    let dt = t0.elapsed();
    let flops = 200.0 * 3.0 * 2.0 * dims.windows(2).map(|w| w[0] * w[1]).sum::<usize>() as f64;
    println!(
        "dims {dims:?}: {:.1} ms/batch (fwd+bwd), ~{:.2} GFLOPS ({sink:.3e})",
        dt.as_secs_f64() * 1000.0 / reps as f64,
        flops * reps as f64 / dt.as_secs_f64() / 1e9
    );
}
