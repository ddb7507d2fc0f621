//! Block-fading channel model.
//!
//! Every link in the network (source→destination, source→relay and
//! relay→destination) sees one unit-mean exponential power gain per
//! coherence block. All subcarriers inside a block share that gain.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

/// OFDMA grid of `blocks` coherence blocks, each `subcarriers_per_block` wide.
///
/// Subcarrier `n` belongs to block `n / subcarriers_per_block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfdmaGrid {
    blocks: usize,
    subcarriers_per_block: usize,
}

impl OfdmaGrid {
    pub fn new(blocks: usize, subcarriers_per_block: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::config(
                "L",
                "at least one coherence block is required",
            ));
        }
        if subcarriers_per_block == 0 {
            return Err(Error::config(
                "N_c",
                "a coherence block needs at least one subcarrier",
            ));
        }
        Ok(Self {
            blocks,
            subcarriers_per_block,
        })
    }

    /// Number of coherence blocks (L).
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Subcarriers per coherence block (N_c).
    pub fn subcarriers_per_block(&self) -> usize {
        self.subcarriers_per_block
    }

    /// Total subcarrier count N = L·N_c.
    pub fn subcarriers(&self) -> usize {
        self.blocks * self.subcarriers_per_block
    }

    pub fn block_of(&self, subcarrier: usize) -> usize {
        subcarrier / self.subcarriers_per_block
    }

    /// Subcarrier indices of one block.
    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        let start = block * self.subcarriers_per_block;
        start..start + self.subcarriers_per_block
    }
}

/// Which receivers benefit from the destination's allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Relays only see the destination-chosen subcarriers; the allocation
    /// looks random to them.
    Realistic,
    /// Relays are assumed to enjoy their own optimal allocation, as if the
    /// matching had been computed for each relay.
    Optimistic,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Realistic, Mode::Optimistic];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Realistic => "realistic",
            Mode::Optimistic => "optimistic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "realistic" => Ok(Mode::Realistic),
            "optimistic" => Ok(Mode::Optimistic),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// How the matching picks among equally large saturable user sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    Lexicographic,
    /// Priorities are shuffled with a seed derived from the frame seed.
    Random,
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lexicographic" | "lex" => Ok(TieBreak::Lexicographic),
            "random" => Ok(TieBreak::Random),
            other => Err(Error::config(
                "tie_break",
                format!("unknown tie-break `{other}`"),
            )),
        }
    }
}

/// Network and allocation parameters for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    sources: usize,
    relays: usize,
    grid: OfdmaGrid,
    k1: usize,
    k2: usize,
    rate_r: f64,
    mode: Mode,
    r0: f64,
    tie_break: TieBreak,
}

impl NetworkConfig {
    /// Validates and builds a config. `k2` is the per-relay subcarrier quota
    /// in the relay phase.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sources: usize,
        relays: usize,
        grid: OfdmaGrid,
        k1: usize,
        k2: usize,
        rate_r: f64,
        mode: Mode,
        r0: f64,
    ) -> Result<Self> {
        let n = grid.subcarriers();
        if sources == 0 {
            return Err(Error::config("P", "at least one source is required"));
        }
        if k1 == 0 {
            return Err(Error::config("K1", "must be at least 1"));
        }
        if sources * k1 > n {
            return Err(Error::config(
                "K1",
                format!(
                    "P·K1 = {} exceeds the {n} available subcarriers",
                    sources * k1
                ),
            ));
        }
        if relays > 0 {
            if k2 == 0 {
                return Err(Error::config(
                    "K2",
                    "must be at least 1 when relays are present",
                ));
            }
            if relays * k2 > n {
                return Err(Error::config(
                    "K2",
                    format!(
                        "M·K2 = {} exceeds the {n} available subcarriers",
                        relays * k2
                    ),
                ));
            }
        }
        if !(rate_r > 0.0 && rate_r.is_finite()) {
            return Err(Error::config("rate_r", "must be a positive finite number"));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::config("R0", "must be a positive finite number"));
        }
        Ok(Self {
            sources,
            relays,
            grid,
            k1,
            k2,
            rate_r,
            mode,
            r0,
            tie_break: TieBreak::Lexicographic,
        })
    }

    /// `P` sources, `M` relays, `L` blocks of `N_c` subcarriers, with the
    /// defaults K2 = K1, rate_r = 1, R0 = 1.
    pub fn simple(
        sources: usize,
        relays: usize,
        blocks: usize,
        subcarriers_per_block: usize,
        k1: usize,
        mode: Mode,
    ) -> Result<Self> {
        let grid = OfdmaGrid::new(blocks, subcarriers_per_block)?;
        Self::new(sources, relays, grid, k1, k1, 1.0, mode, 1.0)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn grid(&self) -> OfdmaGrid {
        self.grid
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn rate_r(&self) -> f64 {
        self.rate_r
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }
}

/// A network node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Source(usize),
    Relay(usize),
    Destination,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Source(i) => write!(f, "source {i}"),
            Node::Relay(r) => write!(f, "relay {r}"),
            Node::Destination => f.write_str("destination"),
        }
    }
}

/// A directed link with independent fading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    SourceDestination(usize),
    SourceRelay { source: usize, relay: usize },
    RelayDestination(usize),
}

impl Link {
    /// The link from `tx` to `rx`, if the network has one.
    pub fn between(tx: Node, rx: Node) -> Option<Link> {
        match (tx, rx) {
            (Node::Source(s), Node::Destination) => Some(Link::SourceDestination(s)),
            (Node::Source(s), Node::Relay(r)) => Some(Link::SourceRelay {
                source: s,
                relay: r,
            }),
            (Node::Relay(r), Node::Destination) => Some(Link::RelayDestination(r)),
            _ => None,
        }
    }
}

/// Fading power gains of every (link, block) pair for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    sources: usize,
    relays: usize,
    grid: OfdmaGrid,
    snr: f64,
    seed: u64,
    // Layout: source→destination [P][L], source→relay [P][M][L], relay→destination [M][L].
    gains: Vec<f64>,
}

impl ChannelRealization {
    /// Builds a realization from explicit gains, in the order
    /// source→destination `[P][L]`, source→relay `[P][M][L]`,
    /// relay→destination `[M][L]`.
    pub fn from_gains(
        sources: usize,
        relays: usize,
        grid: OfdmaGrid,
        snr: f64,
        gains: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::link_count(sources, relays) * grid.blocks();
        if gains.len() != expected {
            return Err(Error::usage(format!(
                "expected {expected} gains for {sources} sources, {relays} relays and {} blocks, got {}",
                grid.blocks(),
                gains.len()
            )));
        }
        if let Some(g) = gains.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::usage(format!("gains must be nonnegative, got {g}")));
        }
        if !(snr > 0.0) {
            return Err(Error::usage("snr must be positive"));
        }
        Ok(Self {
            sources,
            relays,
            grid,
            snr,
            seed: 0,
            gains,
        })
    }

    fn link_count(sources: usize, relays: usize) -> usize {
        sources + sources * relays + relays
    }

    fn link_index(&self, link: Link) -> Option<usize> {
        let (p, m) = (self.sources, self.relays);
        match link {
            Link::SourceDestination(s) if s < p => Some(s),
            Link::SourceRelay { source, relay } if source < p && relay < m => {
                Some(p + source * m + relay)
            }
            Link::RelayDestination(r) if r < m => Some(p + p * m + r),
            _ => None,
        }
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn grid(&self) -> OfdmaGrid {
        self.grid
    }

    /// Mean SNR (linear).
    pub fn snr(&self) -> f64 {
        self.snr
    }

    /// Seed the realization was drawn from (0 for hand-built ones).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Every link present in this realization, in storage order.
    pub fn links(&self) -> Vec<Link> {
        let mut links = Vec::with_capacity(Self::link_count(self.sources, self.relays));
        links.extend((0..self.sources).map(Link::SourceDestination));
        for source in 0..self.sources {
            links.extend((0..self.relays).map(|relay| Link::SourceRelay { source, relay }));
        }
        links.extend((0..self.relays).map(Link::RelayDestination));
        links
    }

    pub fn contains(&self, link: Link) -> bool {
        self.link_index(link).is_some()
    }

    pub fn gain(&self, link: Link, block: usize) -> Result<f64> {
        let idx = self
            .link_index(link)
            .ok_or_else(|| Error::usage(format!("{link:?} is not part of this network")))?;
        if block >= self.grid.blocks() {
            return Err(Error::usage(format!(
                "block {block} out of range (L = {})",
                self.grid.blocks()
            )));
        }
        Ok(self.gains[idx * self.grid.blocks() + block])
    }

    /// Gains of one link across all blocks.
    pub fn link_gains(&self, link: Link) -> Result<&[f64]> {
        let idx = self
            .link_index(link)
            .ok_or_else(|| Error::usage(format!("{link:?} is not part of this network")))?;
        let l = self.grid.blocks();
        Ok(&self.gains[idx * l..(idx + 1) * l])
    }

    /// Whether `block` on `link` supports `rate_r`.
    pub fn block_ok(&self, link: Link, block: usize, rate_r: f64) -> Result<bool> {
        Ok(capacity_ok(self.snr, self.gain(link, block)?, rate_r))
    }
}

#[inline]
pub(crate) fn capacity_ok(snr: f64, gain: f64, rate_r: f64) -> bool {
    (1.0 + snr * gain).log2() >= rate_r
}

/// Draws one i.i.d. Rayleigh block-fading realization.
///
/// The gains depend only on the network shape and `seed`, never on `snr`,
/// so the same seed gives paired channels across an SNR sweep and across
/// allocation modes.
pub fn draw_realization(config: &NetworkConfig, snr: f64, seed: u64) -> Result<ChannelRealization> {
    if !(snr > 0.0) {
        return Err(Error::usage("snr must be positive"));
    }
    let count =
        ChannelRealization::link_count(config.sources, config.relays) * config.grid.blocks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = (0..count).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    Ok(ChannelRealization {
        sources: config.sources,
        relays: config.relays,
        grid: config.grid,
        snr,
        seed,
        gains,
    })
}

/// Whether subcarrier `subcarrier` on `link` supports `rate_r`:
/// log2(1 + snr·|h|²) ≥ rate_r for the gain of the subcarrier's block.
pub fn subcarrier_ok(
    real: &ChannelRealization,
    link: Link,
    subcarrier: usize,
    rate_r: f64,
) -> Result<bool> {
    let n = real.grid.subcarriers();
    if subcarrier >= n {
        return Err(Error::usage(format!(
            "subcarrier {subcarrier} out of range (N = {n})"
        )));
    }
    real.block_ok(link, real.grid.block_of(subcarrier), rate_r)
}

/// Probability that one Rayleigh block fails the rate threshold:
/// 1 − exp(−(2^rate_r − 1)/snr).
pub fn block_outage_prob(snr: f64, rate_r: f64) -> f64 {
    let threshold = rate_r.exp2() - 1.0;
    -(-threshold / snr).exp_m1()
}

/// Converts dB to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: usize, m: usize, l: usize, nc: usize) -> NetworkConfig {
        NetworkConfig::simple(p, m, l, nc, 1, Mode::Realistic).unwrap()
    }

    #[test]
    fn realization_is_deterministic() {
        let c = cfg(2, 2, 3, 4);
        assert_eq!(
            draw_realization(&c, 10.0, 42).unwrap(),
            draw_realization(&c, 10.0, 42).unwrap()
        );
        assert_ne!(
            draw_realization(&c, 10.0, 42).unwrap().gains,
            draw_realization(&c, 10.0, 43).unwrap().gains
        );
    }

    #[test]
    fn gains_do_not_depend_on_snr() {
        let c = cfg(2, 1, 2, 2);
        let a = draw_realization(&c, 1.0, 7).unwrap();
        let b = draw_realization(&c, 1000.0, 7).unwrap();
        assert_eq!(a.gains, b.gains);
    }

    #[test]
    fn no_relays_means_direct_links_only() {
        let c = cfg(3, 0, 2, 2);
        let r = draw_realization(&c, 1.0, 1).unwrap();
        assert_eq!(
            r.links(),
            vec![
                Link::SourceDestination(0),
                Link::SourceDestination(1),
                Link::SourceDestination(2)
            ]
        );
        assert!(r
            .gain(
                Link::SourceRelay {
                    source: 0,
                    relay: 0
                },
                0
            )
            .is_err());
    }

    #[test]
    fn empirical_gain_mean_is_one() {
        // 10^6 draws: stderr of the mean is 1e-3, tolerance 0.01.
        let c = cfg(1, 0, 1000, 1);
        let mut sum = 0.0;
        let mut n = 0usize;
        for seed in 0..1000 {
            let r = draw_realization(&c, 1.0, seed).unwrap();
            sum += r.gains.iter().sum::<f64>();
            n += r.gains.len();
        }
        assert_eq!(n, 1_000_000);
        assert!((sum / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_gain_is_always_in_outage() {
        let grid = OfdmaGrid::new(1, 2).unwrap();
        let r = ChannelRealization::from_gains(1, 0, grid, 1e12, vec![0.0]).unwrap();
        for rate in [1e-6, 0.5, 1.0, 8.0] {
            assert!(!subcarrier_ok(&r, Link::SourceDestination(0), 0, rate).unwrap());
        }
    }

    #[test]
    fn huge_snr_with_positive_gain_is_fine() {
        let grid = OfdmaGrid::new(1, 2).unwrap();
        let r = ChannelRealization::from_gains(1, 0, grid, 1e300, vec![1e-3]).unwrap();
        assert!(subcarrier_ok(&r, Link::SourceDestination(0), 1, 20.0).unwrap());
    }

    #[test]
    fn subcarrier_ok_is_constant_within_a_block() {
        let c = cfg(2, 2, 3, 5);
        for seed in 0..50 {
            let r = draw_realization(&c, 2.0, seed).unwrap();
            for link in r.links() {
                for block in 0..3 {
                    let first = subcarrier_ok(&r, link, block * 5, 1.0).unwrap();
                    for n in r.grid().block_range(block) {
                        assert_eq!(subcarrier_ok(&r, link, n, 1.0).unwrap(), first);
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_range_lookups_are_usage_errors() {
        let c = cfg(1, 1, 2, 2);
        let r = draw_realization(&c, 1.0, 0).unwrap();
        assert!(matches!(
            subcarrier_ok(&r, Link::SourceDestination(0), 4, 1.0),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            subcarrier_ok(&r, Link::RelayDestination(1), 0, 1.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn block_outage_closed_form() {
        assert!((block_outage_prob(10.0, 1.0) - 0.095_162_581_964_040_43).abs() < 1e-15);
        assert!(block_outage_prob(1e12, 1.0) < 1e-11);
        assert!(block_outage_prob(10.0, 1e-12) < 1e-12);
    }

    #[test]
    fn block_outage_matches_monte_carlo() {
        // 10^6 exponential draws; compare within 3 standard errors.
        let c = cfg(1, 0, 1000, 1);
        for (snr, rate) in [(10.0, 1.0), (3.0, 0.5), (50.0, 2.0)] {
            let mut fails = 0usize;
            for seed in 0..1000 {
                let r = draw_realization(&c, snr, seed + 10_000).unwrap();
                fails += r
                    .gains
                    .iter()
                    .filter(|&&g| !capacity_ok(snr, g, rate))
                    .count();
            }
            let n = 1e6;
            let p = block_outage_prob(snr, rate);
            let est = fails as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!(
                (est - p).abs() <= 3.0 * se,
                "snr {snr} rate {rate}: {est} vs {p}"
            );
        }
    }

    #[test]
    fn gains_are_uncorrelated_across_links() {
        // Two distinct (link, block) pairs over 10^6 frames.
        let c = cfg(1, 1, 1, 1);
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let n = 1_000_000u64;
        for seed in 0..n {
            let r = draw_realization(&c, 1.0, seed).unwrap();
            let x = r.gains[0];
            let y = r.gains[1];
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let n = n as f64;
        let cov = sxy / n - sx / n * sy / n;
        let corr = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
        assert!(corr.abs() < 0.01, "correlation {corr}");
    }

    #[test]
    fn config_validation_names_fields() {
        let grid = OfdmaGrid::new(2, 2).unwrap();
        let err = NetworkConfig::new(3, 0, grid, 2, 2, 1.0, Mode::Realistic, 1.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "K1"));
        let err = NetworkConfig::new(1, 1, grid, 1, 5, 1.0, Mode::Realistic, 1.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "K2"));
        let err = NetworkConfig::new(1, 0, grid, 1, 1, 0.0, Mode::Realistic, 1.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "rate_r"));
        assert!(
            matches!(OfdmaGrid::new(0, 4), Err(Error::Config { ref field, .. }) if field == "L")
        );
    }

    #[test]
    fn zero_db_is_unity() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
    }
}
