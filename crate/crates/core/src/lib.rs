//! Network-coded cooperative OFDMA: destination-side maximum-constraint
//! K-matching subcarrier allocation, a frame-level simulator with relay
//! decoding and MDS network coding, closed-form outage probabilities and
//! diversity-order estimation.
//!
//! Relays only see the subcarriers the destination picked for each source,
//! so from their side the allocation is random and source→relay links get
//! no frequency diversity. [`Mode::Realistic`] models that; [`Mode::Optimistic`]
//! assumes every relay enjoys the destination's diversity.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod matching;
pub mod montecarlo;
pub mod protocol;

pub use analysis::{
    asymptotic_leading_term, conditional_outage, dest_frame_outage, diversity_slope,
    overall_outage, relay_count_distribution, relay_success_all, AnalyticParams, Engine,
    OutageCurve, OutagePoint, SlopeFit, SnrWindow,
};
pub use channel::{
    block_outage_prob, db_to_linear, draw_realization, subcarrier_ok, ChannelRealization, Link,
    Mode, NetworkConfig, Node, OfdmaGrid, TieBreak,
};
pub use error::{Error, Result};
pub use matching::{
    build_graph, hall_condition, isolated_users, max_constraint_matching, BipartiteGraph,
    HallCheck, Matching,
};
pub use montecarlo::{estimate_outage, sweep, EstimatorConfig, TrialStats};
pub use protocol::{
    broadcast_allocate, relay_decode_set, relay_phase_and_decode, simulate_frame, Allocation,
    FrameOutcome,
};
