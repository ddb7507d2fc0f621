//! Frames per second of the simulator, P = M = 2, N_c = 4, at 7 dB.
//! `cargo run --release -p ncc-ofdma --example throughput`

use std::time::Instant;

use ncc_ofdma::montecarlo::{estimate_stats, EstimatorConfig};
use ncc_ofdma::{Mode, NetworkConfig};

fn main() {
    let frames = 1_000_000;
    for l in [1, 2, 4] {
        let config = NetworkConfig::simple(2, 2, l, 4, 2, Mode::Realistic).unwrap();
        let est = EstimatorConfig::new(frames, 1).unwrap();
        let t = Instant::now();
        let s = estimate_stats(&config, 5.0, &est, 0).unwrap();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "L={l}: {:.2} us/frame, outage {:.3e}",
            1e6 * secs / frames as f64,
            s.frame_outage()
        );
    }
}
