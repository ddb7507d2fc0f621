//! Deterministic Monte Carlo outage estimation.
//!
//! Trial `t` of grid point `i` always runs on the seed
//! `mix_seed(mix_seed(master_seed, i), t)`, so no RNG state is shared
//! between trials. Trials are grouped in fixed-size batches, batches are
//! evaluated on a rayon pool and reduced by integer addition. Early
//! stopping is decided batch by batch in batch order. Together these make
//! every result independent of the worker count.

use rayon::prelude::*;

use crate::analysis::{Engine, OutageCurve, OutagePoint};
use crate::channel::NetworkConfig;
use crate::error::{Error, Result};
use crate::protocol::simulate_frame;

/// Environment variable capping the worker count.
pub const WORKERS_ENV: &str = "NCC_OFDMA_WORKERS";

/// SplitMix64 finalizer applied to `seed + stream·φ`.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at grid point `point`.
pub fn trial_seed(master_seed: u64, point: u64, trial: u64) -> u64 {
    mix_seed(mix_seed(master_seed, point), trial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub trials: u64,
    pub master_seed: u64,
    /// Stop once the frame-outage standard error drops to this value
    /// (checked at batch boundaries, after at least one outage).
    pub target_stderr: Option<f64>,
    pub batch_size: u64,
    /// Worker cap; `None` defers to `NCC_OFDMA_WORKERS`, then to rayon.
    pub workers: Option<usize>,
    /// Per-point progress lines on stderr.
    pub progress: bool,
}

impl EstimatorConfig {
    pub fn new(trials: u64, master_seed: u64) -> Result<Self> {
        let est = Self {
            trials,
            master_seed,
            target_stderr: None,
            batch_size: 4096,
            workers: None,
            progress: false,
        };
        est.validate()?;
        Ok(est)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if let Some(t) = self.target_stderr {
            if !(t > 0.0) {
                return Err(Error::config("target_stderr", "must be positive"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_batch_size(mut self, batch_size: u64) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_target_stderr(mut self, target: f64) -> Self {
        self.target_stderr = Some(target);
        self
    }
}

/// Event counts accumulated over trials.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialStats {
    pub trials: u64,
    pub frame_outages: u64,
    /// Source packets lost at the destination in the broadcast phase
    /// (out of `trials · P`).
    pub source_dest_failures: u64,
    /// (source, relay) pairs where the relay failed to decode the source
    /// (out of `trials · P · M`).
    pub relay_source_failures: u64,
    /// Relays that decoded all sources (out of `trials · M`).
    pub relay_all_success: u64,
    /// Histogram of the decode-set size m = 0..=M.
    pub m_histogram: Vec<u64>,
}

impl TrialStats {
    fn empty(relays: usize) -> Self {
        Self {
            m_histogram: vec![0; relays + 1],
            ..Self::default()
        }
    }

    fn merge(&mut self, other: &TrialStats) {
        self.trials += other.trials;
        self.frame_outages += other.frame_outages;
        self.source_dest_failures += other.source_dest_failures;
        self.relay_source_failures += other.relay_source_failures;
        self.relay_all_success += other.relay_all_success;
        for (a, b) in self.m_histogram.iter_mut().zip(&other.m_histogram) {
            *a += b;
        }
    }

    pub fn frame_outage(&self) -> f64 {
        ratio(self.frame_outages, self.trials)
    }

    pub fn frame_stderr(&self) -> f64 {
        binomial_stderr(self.frame_outage(), self.trials)
    }

    /// Per-source destination outage frequency.
    pub fn source_dest_outage(&self, sources: usize) -> f64 {
        ratio(self.source_dest_failures, self.trials * sources as u64)
    }

    /// Per-(source, relay) relay outage frequency.
    pub fn relay_source_outage(&self, sources: usize, relays: usize) -> f64 {
        ratio(
            self.relay_source_failures,
            self.trials * (sources * relays) as u64,
        )
    }

    /// Frequency with which one relay decodes all sources.
    pub fn relay_all_success_rate(&self, relays: usize) -> f64 {
        ratio(self.relay_all_success, self.trials * relays as u64)
    }

    pub fn to_point(&self, snr: f64) -> OutagePoint {
        OutagePoint {
            snr,
            outage: self.frame_outage(),
            stderr: self.frame_stderr(),
            trials: self.trials,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// sqrt(p(1 − p)/n).
pub fn binomial_stderr(p: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

fn resolve_workers(est: &EstimatorConfig) -> Option<usize> {
    est.workers.or_else(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
    })
}

fn with_pool<R: Send>(est: &EstimatorConfig, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = resolve_workers(est) {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_batch(
    config: &NetworkConfig,
    snr: f64,
    master: u64,
    point: u64,
    range: std::ops::Range<u64>,
) -> Result<TrialStats> {
    let mut stats = TrialStats::empty(config.relays());
    let point_seed = mix_seed(master, point);
    for t in range {
        let out = simulate_frame(config, snr, mix_seed(point_seed, t))?;
        stats.trials += 1;
        stats.frame_outages += u64::from(out.frame_outage);
        stats.source_dest_failures += out.direct_failures() as u64;
        stats.relay_source_failures += out
            .relay_source_ok
            .iter()
            .flatten()
            .filter(|ok| !**ok)
            .count() as u64;
        stats.relay_all_success += out.m as u64;
        stats.m_histogram[out.m] += 1;
    }
    Ok(stats)
}

fn estimate_in_pool(
    config: &NetworkConfig,
    snr: f64,
    est: &EstimatorConfig,
    point: u64,
    chunk: usize,
) -> Result<TrialStats> {
    if !(snr > 0.0) {
        return Err(Error::usage("snr must be positive"));
    }
    let batches = est.trials.div_ceil(est.batch_size);
    let mut total = TrialStats::empty(config.relays());
    let mut next = 0u64;
    while next < batches {
        let end = (next + chunk as u64).min(batches);
        let results: Vec<Result<TrialStats>> = (next..end)
            .into_par_iter()
            .map(|b| {
                let start = b * est.batch_size;
                let stop = (start + est.batch_size).min(est.trials);
                run_batch(config, snr, est.master_seed, point, start..stop)
            })
            .collect();
        for r in results {
            total.merge(&r?);
            if let Some(target) = est.target_stderr {
                if total.frame_outages > 0 && total.frame_stderr() <= target {
                    return Ok(total);
                }
            }
        }
        next = end;
    }
    Ok(total)
}

fn chunk_size() -> usize {
    rayon::current_num_threads().max(1) * 4
}

/// Full event counts for grid point `point` at `snr`.
pub fn estimate_stats(
    config: &NetworkConfig,
    snr: f64,
    est: &EstimatorConfig,
    point: u64,
) -> Result<TrialStats> {
    est.validate()?;
    with_pool(est, || {
        estimate_in_pool(config, snr, est, point, chunk_size())
    })?
}

/// Frame-outage estimate at one SNR (grid point 0).
pub fn estimate_outage(
    config: &NetworkConfig,
    snr: f64,
    est: &EstimatorConfig,
) -> Result<OutagePoint> {
    Ok(estimate_stats(config, snr, est, 0)?.to_point(snr))
}

/// One point per grid value; point `i` uses seeds derived from
/// `(master_seed, i)`.
pub fn sweep(
    config: &NetworkConfig,
    snr_grid: &[f64],
    est: &EstimatorConfig,
) -> Result<OutageCurve> {
    Ok(sweep_stats(config, snr_grid, est)?.0)
}

/// Like [`sweep`], also returning the raw counts per point.
pub fn sweep_stats(
    config: &NetworkConfig,
    snr_grid: &[f64],
    est: &EstimatorConfig,
) -> Result<(OutageCurve, Vec<TrialStats>)> {
    if snr_grid.is_empty() {
        return Err(Error::usage("SNR grid is empty"));
    }
    if snr_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::usage("SNR grid must be strictly increasing"));
    }
    est.validate()?;
    let stats = with_pool(est, || {
        snr_grid
            .iter()
            .enumerate()
            .map(|(i, &snr)| {
                let s = estimate_in_pool(config, snr, est, i as u64, chunk_size())?;
                if est.progress {
                    eprintln!(
                        "[{}] {:>3}/{} snr={:.2} dB outage={:.3e} trials={}",
                        config.mode(),
                        i + 1,
                        snr_grid.len(),
                        10.0 * snr.log10(),
                        s.frame_outage(),
                        s.trials
                    );
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let points = stats
        .iter()
        .zip(snr_grid)
        .map(|(s, &snr)| s.to_point(snr))
        .collect();
    let curve =
        OutageCurve::new(points, config.mode(), Engine::MonteCarlo)?.with_config(config.clone());
    Ok((curve, stats))
}
