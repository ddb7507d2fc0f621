//! One network-coded cooperative OFDMA frame.
//!
//! Broadcast phase: the destination allocates `K1` subcarriers per source
//! from its own availability graph; sources transmit, and the destination
//! and every relay try to decode. Relay phase: relays that decoded all `P`
//! packets send one coded packet each over `K2` subcarriers allocated by
//! the destination. The network code is modelled as a (P + m, P) MDS
//! erasure code.

use crate::channel::{
    capacity_ok, draw_realization, ChannelRealization, Link, Mode, NetworkConfig, Node, TieBreak,
};
use crate::error::{Error, Result};
use crate::matching::{
    build_graph, max_constraint_matching, max_constraint_matching_seeded, BipartiteGraph, Matching,
};
use crate::montecarlo::mix_seed;

const BROADCAST_TIE_STREAM: u64 = 0x6272_6f61_6463_6173;
const RELAY_TIE_STREAM: u64 = 0x7265_6c61_7970_6861;

/// Subcarriers used by each source in the broadcast phase.
///
/// Saturated sources use their matched subcarriers. Unsaturated sources are
/// still given `K1` leftover subcarriers so that relays can hear them; those
/// subcarriers are in outage at the destination in the isolated case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    matching: Matching,
    subcarriers: Vec<Vec<usize>>,
}

impl Allocation {
    pub fn matching(&self) -> &Matching {
        &self.matching
    }

    /// Subcarriers carrying `source`'s packet.
    pub fn subcarriers(&self, source: usize) -> &[usize] {
        &self.subcarriers[source]
    }

    pub fn is_saturated(&self, source: usize) -> bool {
        self.matching.is_saturated(source)
    }
}

/// Per-frame decoding results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameOutcome {
    /// Relays that decoded all P source packets, ascending.
    pub relay_decode_set: Vec<usize>,
    pub m: usize,
    /// Source packet received at the destination in the broadcast phase.
    pub direct_success: Vec<bool>,
    /// Coded packet received at the destination, aligned with `relay_decode_set`.
    pub coded_success: Vec<bool>,
    /// Source recovered after network decoding.
    pub recovered: Vec<bool>,
    pub frame_outage: bool,
    /// `relay_source_ok[r][i]`: relay `r` decoded source `i`.
    pub relay_source_ok: Vec<Vec<bool>>,
}

impl FrameOutcome {
    pub fn direct_failures(&self) -> usize {
        self.direct_success.iter().filter(|ok| !**ok).count()
    }

    pub fn coded_failures(&self) -> usize {
        self.coded_success.iter().filter(|ok| !**ok).count()
    }

    /// `seed m direct_failures coded_failures outage` on one line.
    pub fn trace_line(&self, seed: u64) -> String {
        format!(
            "seed={seed} m={} direct_failures={} coded_failures={} outage={}",
            self.m,
            self.direct_failures(),
            self.coded_failures(),
            u8::from(self.frame_outage)
        )
    }
}

fn sources(config: &NetworkConfig) -> Vec<Node> {
    (0..config.sources()).map(Node::Source).collect()
}

fn allocate(
    g: &BipartiteGraph,
    k: usize,
    tie_break: TieBreak,
    seed: u64,
    stream: u64,
) -> Result<Matching> {
    match tie_break {
        TieBreak::Lexicographic => max_constraint_matching(g, k),
        TieBreak::Random => max_constraint_matching_seeded(g, k, mix_seed(seed, stream)),
    }
}

/// Destination-side allocation of `K1` subcarriers per source.
pub fn broadcast_allocate(real: &ChannelRealization, config: &NetworkConfig) -> Result<Allocation> {
    check_shape(real, config)?;
    let k = config.k1();
    let g = build_graph(real, Node::Destination, &sources(config), config.rate_r())?;
    let matching = allocate(&g, k, config.tie_break(), real.seed(), BROADCAST_TIE_STREAM)?;
    let grid = real.grid();
    let n = grid.subcarriers();

    let mut used = vec![false; n];
    let mut subcarriers: Vec<Vec<usize>> = (0..config.sources())
        .map(|u| matching.assigned(u).to_vec())
        .collect();
    for list in &subcarriers {
        for &s in list {
            used[s] = true;
        }
    }
    for list in subcarriers.iter_mut().filter(|l| l.is_empty()) {
        // Lowest block with k free subcarriers, else the lowest free ones.
        let block =
            (0..grid.blocks()).find(|&b| grid.block_range(b).filter(|&s| !used[s]).count() >= k);
        let pool: Vec<usize> = match block {
            Some(b) => grid.block_range(b).filter(|&s| !used[s]).take(k).collect(),
            None => (0..n).filter(|&s| !used[s]).take(k).collect(),
        };
        debug_assert_eq!(pool.len(), k);
        for &s in &pool {
            used[s] = true;
        }
        *list = pool;
    }
    Ok(Allocation {
        matching,
        subcarriers,
    })
}

fn check_shape(real: &ChannelRealization, config: &NetworkConfig) -> Result<()> {
    if real.sources() != config.sources()
        || real.relays() != config.relays()
        || real.grid() != config.grid()
    {
        return Err(Error::usage(
            "realization does not match the network config",
        ));
    }
    Ok(())
}

fn all_ok(
    real: &ChannelRealization,
    link: Link,
    subcarriers: &[usize],
    rate_r: f64,
) -> Result<bool> {
    let gains = real.link_gains(link)?;
    let grid = real.grid();
    Ok(subcarriers
        .iter()
        .all(|&s| capacity_ok(real.snr(), gains[grid.block_of(s)], rate_r)))
}

/// Per-relay, per-source decoding table `[relay][source]`.
///
/// Realistic: relay `r` decodes source `u` iff every subcarrier the
/// destination gave `u` is usable on `u → r`. Optimistic: iff `u` would be
/// saturated by a matching computed on `r`'s own graph.
pub fn relay_decoding(
    real: &ChannelRealization,
    config: &NetworkConfig,
    alloc: &Allocation,
) -> Result<Vec<Vec<bool>>> {
    check_shape(real, config)?;
    let p = config.sources();
    let srcs = sources(config);
    (0..config.relays())
        .map(|r| match config.mode() {
            Mode::Realistic => (0..p)
                .map(|u| {
                    all_ok(
                        real,
                        Link::SourceRelay {
                            source: u,
                            relay: r,
                        },
                        alloc.subcarriers(u),
                        config.rate_r(),
                    )
                })
                .collect(),
            Mode::Optimistic => {
                let g = build_graph(real, Node::Relay(r), &srcs, config.rate_r())?;
                let own = allocate(
                    &g,
                    config.k1(),
                    config.tie_break(),
                    real.seed(),
                    BROADCAST_TIE_STREAM ^ (r as u64 + 1),
                )?;
                Ok((0..p).map(|u| own.is_saturated(u)).collect())
            }
        })
        .collect()
}

/// Relays that decoded all `P` sources.
pub fn relay_decode_set(
    real: &ChannelRealization,
    config: &NetworkConfig,
    alloc: &Allocation,
) -> Result<Vec<usize>> {
    Ok(decode_set_from(&relay_decoding(real, config, alloc)?))
}

fn decode_set_from(table: &[Vec<bool>]) -> Vec<usize> {
    table
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().all(|ok| *ok))
        .map(|(r, _)| r)
        .collect()
}

/// Whether each source's broadcast packet reached the destination.
pub fn direct_success(
    real: &ChannelRealization,
    config: &NetworkConfig,
    alloc: &Allocation,
) -> Result<Vec<bool>> {
    (0..config.sources())
        .map(|u| {
            all_ok(
                real,
                Link::SourceDestination(u),
                alloc.subcarriers(u),
                config.rate_r(),
            )
        })
        .collect()
}

/// True iff the (P + m, P) MDS code recovers everything: at most `m` of the
/// `P + m` packets failed.
pub fn mds_recovers(
    sources: usize,
    m: usize,
    direct_failures: usize,
    coded_failures: usize,
) -> bool {
    debug_assert!(direct_failures <= sources && coded_failures <= m);
    direct_failures + coded_failures <= m
}

/// Relay phase and network decoding at the destination.
pub fn relay_phase_and_decode(
    real: &ChannelRealization,
    config: &NetworkConfig,
    decode_set: &[usize],
    direct_success: &[bool],
) -> Result<FrameOutcome> {
    check_shape(real, config)?;
    let m = decode_set.len();
    if m > config.relays() || decode_set.iter().any(|&r| r >= config.relays()) {
        return Err(Error::usage("decode set references unknown relays"));
    }
    if direct_success.len() != config.sources() {
        return Err(Error::usage(
            "direct_success must have one entry per source",
        ));
    }
    let coded_success = if m == 0 {
        Vec::new()
    } else {
        let relays: Vec<Node> = decode_set.iter().map(|&r| Node::Relay(r)).collect();
        let g = build_graph(real, Node::Destination, &relays, config.rate_r())?;
        let matching = allocate(
            &g,
            config.k2(),
            config.tie_break(),
            real.seed(),
            RELAY_TIE_STREAM,
        )?;
        (0..m).map(|i| matching.is_saturated(i)).collect()
    };
    let direct_failures = direct_success.iter().filter(|ok| !**ok).count();
    let coded_failures = coded_success.iter().filter(|ok: &&bool| !**ok).count();
    let frame_outage = !mds_recovers(config.sources(), m, direct_failures, coded_failures);
    let recovered = if frame_outage {
        direct_success.to_vec()
    } else {
        vec![true; config.sources()]
    };
    Ok(FrameOutcome {
        relay_decode_set: decode_set.to_vec(),
        m,
        direct_success: direct_success.to_vec(),
        coded_success,
        recovered,
        frame_outage,
        relay_source_ok: Vec::new(),
    })
}

/// Runs one frame on a given realization.
pub fn run_frame(real: &ChannelRealization, config: &NetworkConfig) -> Result<FrameOutcome> {
    let alloc = broadcast_allocate(real, config)?;
    let table = relay_decoding(real, config, &alloc)?;
    let decode_set = decode_set_from(&table);
    let direct = direct_success(real, config, &alloc)?;
    let mut outcome = relay_phase_and_decode(real, config, &decode_set, &direct)?;
    outcome.relay_source_ok = table;
    Ok(outcome)
}

/// Four sources, one relay, L = 2 blocks of N_c = 4 subcarriers, K1 = K2 = 2.
///
/// At the destination u1 and u2 are alive in block 1, u3 in both blocks and
/// u4 in block 2. The relay sees the same except that u2 is alive only in
/// block 2, so the subcarriers the destination gives u2 are dead at the
/// relay even though the Hall condition holds there too.
pub fn figure_one_example() -> (ChannelRealization, NetworkConfig) {
    let grid = crate::channel::OfdmaGrid::new(2, 4).expect("valid grid");
    let config =
        NetworkConfig::new(4, 1, grid, 2, 2, 1.0, Mode::Realistic, 1.0).expect("valid config");
    let (up, down) = (10.0, 0.0);
    let mut gains = Vec::with_capacity(18);
    // source→destination
    gains.extend([up, down, up, down, up, up, down, up]);
    // source→relay
    gains.extend([up, down, down, up, up, up, down, up]);
    // relay→destination
    gains.extend([up, up]);
    let real = ChannelRealization::from_gains(4, 1, grid, 1.0, gains).expect("valid gains");
    (real, config)
}

/// Draws a realization from `seed` and runs one frame on it.
pub fn simulate_frame(config: &NetworkConfig, snr: f64, seed: u64) -> Result<FrameOutcome> {
    let real = draw_realization(config, snr, seed)?;
    run_frame(&real, config)
}
