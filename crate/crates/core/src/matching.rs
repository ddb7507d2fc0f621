//! User↔subcarrier availability graphs and the maximum-constraint
//! K-matching used by the destination to allocate subcarriers.
//!
//! A user is *saturated* when it receives exactly `K` subcarriers; users
//! that cannot be saturated receive nothing. The matching maximizes the
//! number of saturated users.

use std::borrow::Cow;
use std::fmt::Write as _;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{capacity_ok, ChannelRealization, Link, Node};
use crate::error::{Error, Result};

/// Largest user count accepted by the subset-enumerating operations.
pub const MAX_ENUMERATED_USERS: usize = 20;

/// Bipartite graph between users and subcarriers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    subcarriers: usize,
    // Sorted, deduplicated neighbourhood per user.
    adj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn new(users: usize, subcarriers: usize) -> Self {
        Self {
            subcarriers,
            adj: vec![Vec::new(); users],
        }
    }

    /// Builds a graph from `(user, subcarrier)` pairs; duplicates collapse.
    pub fn from_edges(
        users: usize,
        subcarriers: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut g = Self::new(users, subcarriers);
        for (u, s) in edges {
            g.add_edge(u, s)?;
        }
        Ok(g)
    }

    /// Adds an edge. Returns `false` if it was already present.
    pub fn add_edge(&mut self, user: usize, subcarrier: usize) -> Result<bool> {
        if user >= self.adj.len() || subcarrier >= self.subcarriers {
            return Err(Error::usage(format!(
                "edge ({user}, {subcarrier}) outside a {}x{} graph",
                self.adj.len(),
                self.subcarriers
            )));
        }
        let list = &mut self.adj[user];
        match list.binary_search(&subcarrier) {
            Ok(_) => Ok(false),
            Err(pos) => {
                list.insert(pos, subcarrier);
                Ok(true)
            }
        }
    }

    pub fn users(&self) -> usize {
        self.adj.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    /// N(u), ascending.
    pub fn neighbors(&self, user: usize) -> &[usize] {
        &self.adj[user]
    }

    pub fn has_edge(&self, user: usize, subcarrier: usize) -> bool {
        self.adj
            .get(user)
            .is_some_and(|n| n.binary_search(&subcarrier).is_ok())
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, n)| n.iter().map(move |&s| (u, s)))
    }

    /// |N(X)| for a set of users.
    pub fn neighborhood_size(&self, users: &[usize]) -> usize {
        let mut seen = vec![false; self.subcarriers];
        let mut count = 0;
        for &u in users {
            for &s in &self.adj[u] {
                if !seen[s] {
                    seen[s] = true;
                    count += 1;
                }
            }
        }
        count
    }

    /// Adjacency dump, one `u<i>: s<j>,s<k>` line per user (1-based labels).
    pub fn dump(&self) -> String {
        dump_lists(self.adj.iter().map(Vec::as_slice))
    }
}

fn dump_lists<'a>(lists: impl Iterator<Item = &'a [usize]>) -> String {
    let mut out = String::new();
    for (u, list) in lists.enumerate() {
        let _ = write!(out, "u{}:", u + 1);
        if !list.is_empty() {
            out.push(' ');
            out.push_str(&list.iter().map(|s| format!("s{}", s + 1)).join(","));
        }
        out.push('\n');
    }
    out
}

/// Subcarrier assignment where each user holds exactly `k` subcarriers or none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    k: usize,
    assignment: Vec<Vec<usize>>,
}

impl Matching {
    fn empty(users: usize, k: usize) -> Self {
        Self {
            k,
            assignment: vec![Vec::new(); users],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn users(&self) -> usize {
        self.assignment.len()
    }

    /// Subcarriers assigned to `user`, ascending; empty when unsaturated.
    pub fn assigned(&self, user: usize) -> &[usize] {
        &self.assignment[user]
    }

    pub fn is_saturated(&self, user: usize) -> bool {
        !self.assignment[user].is_empty()
    }

    pub fn saturated(&self) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&u| self.is_saturated(u))
            .collect()
    }

    pub fn saturated_count(&self) -> usize {
        self.assignment.iter().filter(|a| !a.is_empty()).count()
    }

    /// Checks disjointness, edge membership and the all-or-nothing quota.
    pub fn validate(&self, g: &BipartiteGraph) -> Result<()> {
        if self.assignment.len() != g.users() {
            return Err(Error::usage(
                "matching and graph disagree on the user count",
            ));
        }
        let mut owner = vec![None; g.subcarriers()];
        for (u, list) in self.assignment.iter().enumerate() {
            if !list.is_empty() && list.len() != self.k {
                return Err(Error::usage(format!(
                    "user {u} holds {} subcarriers, quota is {}",
                    list.len(),
                    self.k
                )));
            }
            for &s in list {
                if !g.has_edge(u, s) {
                    return Err(Error::usage(format!("({u}, {s}) is not an edge")));
                }
                if let Some(v) = owner[s].replace(u) {
                    return Err(Error::usage(format!(
                        "subcarrier {s} given to users {v} and {u}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same line format as [`BipartiteGraph::dump`].
    pub fn dump(&self) -> String {
        dump_lists(self.assignment.iter().map(Vec::as_slice))
    }
}

/// Builds the availability graph seen by `receiver`: edge (u, s) iff
/// subcarrier `s` is not in outage on the link `users[u] → receiver`.
pub fn build_graph(
    real: &ChannelRealization,
    receiver: Node,
    users: &[Node],
    rate_r: f64,
) -> Result<BipartiteGraph> {
    if let Node::Relay(r) = receiver {
        if r >= real.relays() {
            return Err(Error::usage(format!("unknown receiver {receiver}")));
        }
    }
    let grid = real.grid();
    let mut g = BipartiteGraph::new(users.len(), grid.subcarriers());
    for (u, &tx) in users.iter().enumerate() {
        let link = Link::between(tx, receiver)
            .filter(|l| real.contains(*l))
            .ok_or_else(|| Error::usage(format!("no link from {tx} to {receiver}")))?;
        let gains = real.link_gains(link)?;
        let list = &mut g.adj[u];
        for (block, &gain) in gains.iter().enumerate() {
            if capacity_ok(real.snr(), gain, rate_r) {
                list.extend(grid.block_range(block));
            }
        }
    }
    Ok(g)
}

/// Outcome of the Hall-type check |N(X)| ≥ K|X|.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HallCheck {
    pub holds: bool,
    /// A smallest violating subset (lexicographically first among those).
    pub witness: Option<Vec<usize>>,
}

/// Checks |N(X)| ≥ k|X| for every nonempty user subset X.
pub fn hall_condition(g: &BipartiteGraph, k: usize) -> Result<HallCheck> {
    let n = g.users();
    if n > MAX_ENUMERATED_USERS {
        return Err(Error::usage(format!(
            "hall_condition enumerates subsets; {n} users exceeds the limit of {MAX_ENUMERATED_USERS}"
        )));
    }
    for size in 1..=n {
        for subset in (0..n).combinations(size) {
            if g.neighborhood_size(&subset) < k * size {
                return Ok(HallCheck {
                    holds: false,
                    witness: Some(subset),
                });
            }
        }
    }
    Ok(HallCheck {
        holds: true,
        witness: None,
    })
}

/// Users with an empty neighbourhood.
pub fn isolated_users(g: &BipartiteGraph) -> Vec<usize> {
    (0..g.users()).filter(|&u| g.adj[u].is_empty()).collect()
}

/// Maximum-constraint K-matching with lexicographic tie-breaking.
///
/// Among the largest sets of users that can all be given `k` distinct
/// subcarriers, the lexicographically smallest (by user index) is chosen,
/// and the assignment inside it is found by augmenting paths that scan
/// subcarriers in ascending order.
pub fn max_constraint_matching(g: &BipartiteGraph, k: usize) -> Result<Matching> {
    let users: Vec<usize> = (0..g.users()).collect();
    let subcarriers: Vec<usize> = (0..g.subcarriers()).collect();
    matching_with_priority(g, k, &users, &subcarriers)
}

/// Like [`max_constraint_matching`], but user priority and subcarrier scan
/// order are shuffled with `seed`.
pub fn max_constraint_matching_seeded(g: &BipartiteGraph, k: usize, seed: u64) -> Result<Matching> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users: Vec<usize> = (0..g.users()).collect();
    let mut subcarriers: Vec<usize> = (0..g.subcarriers()).collect();
    users.shuffle(&mut rng);
    subcarriers.shuffle(&mut rng);
    matching_with_priority(g, k, &users, &subcarriers)
}

fn matching_with_priority(
    g: &BipartiteGraph,
    k: usize,
    user_order: &[usize],
    subcarrier_order: &[usize],
) -> Result<Matching> {
    if k == 0 {
        return Err(Error::usage("K must be at least 1"));
    }
    // Users with fewer than k neighbours can never be saturated.
    let candidates: Vec<usize> = user_order
        .iter()
        .copied()
        .filter(|&u| g.adj[u].len() >= k)
        .collect();
    if candidates.len() > MAX_ENUMERATED_USERS {
        if let Some(m) = Assigner::new(g, k, subcarrier_order).saturate(&candidates) {
            return Ok(m);
        }
        return Err(Error::usage(format!(
            "{} saturable candidates exceed the enumeration limit of {MAX_ENUMERATED_USERS}",
            candidates.len()
        )));
    }
    let bound = candidates.len().min(g.subcarriers() / k);
    let mut assigner = Assigner::new(g, k, subcarrier_order);
    for size in (1..=bound).rev() {
        for subset in candidates.iter().copied().combinations(size) {
            if let Some(m) = assigner.saturate(&subset) {
                return Ok(m);
            }
        }
    }
    Ok(Matching::empty(g.users(), k))
}

/// Capacitated augmenting-path search: each user may hold `k` subcarriers,
/// each subcarrier one user.
struct Assigner<'a> {
    g: &'a BipartiteGraph,
    k: usize,
    // Neighbour lists re-sorted by the subcarrier scan order.
    ordered_adj: Cow<'a, [Vec<usize>]>,
    owner: Vec<Option<usize>>,
    visited: Vec<bool>,
}

impl<'a> Assigner<'a> {
    fn new(g: &'a BipartiteGraph, k: usize, subcarrier_order: &[usize]) -> Self {
        let identity = subcarrier_order.iter().enumerate().all(|(i, &s)| i == s);
        let ordered_adj = if identity {
            Cow::Borrowed(g.adj.as_slice())
        } else {
            let mut rank = vec![0; g.subcarriers];
            for (i, &s) in subcarrier_order.iter().enumerate() {
                rank[s] = i;
            }
            g.adj
                .iter()
                .map(|n| {
                    let mut n = n.clone();
                    n.sort_by_key(|&s| rank[s]);
                    n
                })
                .collect::<Vec<_>>()
                .into()
        };
        Self {
            g,
            k,
            ordered_adj,
            owner: vec![None; g.subcarriers],
            visited: vec![false; g.subcarriers],
        }
    }

    fn saturate(&mut self, users: &[usize]) -> Option<Matching> {
        self.owner.iter_mut().for_each(|o| *o = None);
        for &u in users {
            for _ in 0..self.k {
                self.visited.iter_mut().for_each(|v| *v = false);
                if !self.augment(u) {
                    return None;
                }
            }
        }
        let mut m = Matching::empty(self.g.users(), self.k);
        for (s, owner) in self.owner.iter().enumerate() {
            if let Some(u) = owner {
                m.assignment[*u].push(s);
            }
        }
        Some(m)
    }

    // Free subcarriers are taken before any existing holder is displaced.
    fn augment(&mut self, u: usize) -> bool {
        if let Some(&s) = self.ordered_adj[u]
            .iter()
            .find(|&&s| !self.visited[s] && self.owner[s].is_none())
        {
            self.owner[s] = Some(u);
            return true;
        }
        for i in 0..self.ordered_adj[u].len() {
            let s = self.ordered_adj[u][i];
            if self.visited[s] {
                continue;
            }
            self.visited[s] = true;
            match self.owner[s] {
                None => {
                    self.owner[s] = Some(u);
                    return true;
                }
                Some(v) if v != u => {
                    if self.augment(v) {
                        self.owner[s] = Some(u);
                        return true;
                    }
                }
                Some(_) => {}
            }
        }
        false
    }
}

/// Exhaustive reference routines, independent of the augmenting-path code.
/// Exponential; intended for small graphs in self-tests.
pub mod oracle {
    use super::BipartiteGraph;

    /// Largest number of users that can simultaneously hold `k` distinct
    /// neighbouring subcarriers each, by backtracking over assignments.
    pub fn max_saturable(g: &BipartiteGraph, k: usize) -> usize {
        let mut used = vec![false; g.subcarriers()];
        let mut best = 0;
        search(g, k, 0, 0, &mut used, &mut best);
        best
    }

    /// Whether every user can be saturated.
    pub fn all_saturable(g: &BipartiteGraph, k: usize) -> bool {
        max_saturable(g, k) == g.users()
    }

    fn search(
        g: &BipartiteGraph,
        k: usize,
        user: usize,
        count: usize,
        used: &mut [bool],
        best: &mut usize,
    ) {
        if count + (g.users() - user) <= *best {
            return;
        }
        if user == g.users() {
            *best = count;
            return;
        }
        // Give `user` a k-subset of free neighbours, or skip it.
        let free: Vec<usize> = g
            .neighbors(user)
            .iter()
            .copied()
            .filter(|&s| !used[s])
            .collect();
        if free.len() >= k {
            let mut chosen = Vec::with_capacity(k);
            choose(g, k, user, count, &free, 0, &mut chosen, used, best);
        }
        search(g, k, user + 1, count, used, best);
    }

    #[allow(clippy::too_many_arguments)]
    fn choose(
        g: &BipartiteGraph,
        k: usize,
        user: usize,
        count: usize,
        free: &[usize],
        from: usize,
        chosen: &mut Vec<usize>,
        used: &mut [bool],
        best: &mut usize,
    ) {
        if chosen.len() == k {
            search(g, k, user + 1, count + 1, used, best);
            return;
        }
        for i in from..free.len() {
            if free.len() - i < k - chosen.len() {
                break;
            }
            let s = free[i];
            used[s] = true;
            chosen.push(s);
            choose(g, k, user, count, free, i + 1, chosen, used, best);
            chosen.pop();
            used[s] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::OfdmaGrid;
    use proptest::prelude::*;

    fn block_graph(users: &[&[usize]], nc: usize, blocks: usize) -> BipartiteGraph {
        let mut g = BipartiteGraph::new(users.len(), nc * blocks);
        for (u, alive) in users.iter().enumerate() {
            for &b in *alive {
                for s in b * nc..(b + 1) * nc {
                    g.add_edge(u, s).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn figure_one_destination_matching() {
        // u1,u2 alive in block 1; u3,u4 alive in block 2; N_c = 4.
        let g = block_graph(&[&[0], &[0], &[1], &[1]], 4, 2);
        assert!(hall_condition(&g, 2).unwrap().holds);
        let m = max_constraint_matching(&g, 2).unwrap();
        m.validate(&g).unwrap();
        assert_eq!(m.saturated(), vec![0, 1, 2, 3]);
        assert_eq!(m.dump(), "u1: s1,s2\nu2: s3,s4\nu3: s5,s6\nu4: s7,s8\n");
    }

    #[test]
    fn dump_format() {
        let g = BipartiteGraph::from_edges(2, 3, [(0, 2), (0, 0)]).unwrap();
        assert_eq!(g.dump(), "u1: s1,s3\nu2:\n");
    }

    #[test]
    fn singleton_violation_is_reported() {
        let g = BipartiteGraph::from_edges(2, 6, [(0, 0), (1, 1), (1, 2), (1, 3)]).unwrap();
        let check = hall_condition(&g, 2).unwrap();
        assert!(!check.holds);
        assert_eq!(check.witness, Some(vec![0]));
    }

    #[test]
    fn pair_violation_is_minimal() {
        // Each user alone has 2 neighbours, together they share them.
        let g = BipartiteGraph::from_edges(3, 6, [(0, 0), (0, 1), (1, 0), (1, 1), (2, 4), (2, 5)])
            .unwrap();
        let check = hall_condition(&g, 2).unwrap();
        assert_eq!(check.witness, Some(vec![0, 1]));
        let m = max_constraint_matching(&g, 2).unwrap();
        assert_eq!(m.saturated(), vec![0, 2]);
    }

    #[test]
    fn hall_guard() {
        let g = BipartiteGraph::new(21, 4);
        assert!(matches!(hall_condition(&g, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn empty_graph_gives_empty_matching() {
        let g = BipartiteGraph::new(4, 8);
        let m = max_constraint_matching(&g, 2).unwrap();
        assert!(m.saturated().is_empty());
        assert_eq!(isolated_users(&g), vec![0, 1, 2, 3]);
    }

    #[test]
    fn complete_graph_has_no_isolated_users() {
        let g = BipartiteGraph::from_edges(3, 4, (0..3).flat_map(|u| (0..4).map(move |s| (u, s))))
            .unwrap();
        assert!(isolated_users(&g).is_empty());
    }

    #[test]
    fn one_alive_block_is_not_isolated() {
        let g = block_graph(&[&[1], &[]], 2, 3);
        assert_eq!(isolated_users(&g), vec![1]);
    }

    #[test]
    fn augmenting_path_reassigns_subcarriers() {
        // Greedy would give u0 {0,1} and starve u1, which only sees {0,1}.
        let g = BipartiteGraph::from_edges(2, 4, [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1)])
            .unwrap();
        let m = max_constraint_matching(&g, 2).unwrap();
        m.validate(&g).unwrap();
        assert_eq!(m.assigned(0), &[2, 3]);
        assert_eq!(m.assigned(1), &[0, 1]);
    }

    #[test]
    fn seeded_tie_break_is_deterministic_and_valid() {
        let g = block_graph(&[&[0, 1], &[0, 1], &[0]], 2, 2);
        let a = max_constraint_matching_seeded(&g, 2, 9).unwrap();
        let b = max_constraint_matching_seeded(&g, 2, 9).unwrap();
        assert_eq!(a, b);
        a.validate(&g).unwrap();
        assert_eq!(a.saturated_count(), 2);
    }

    #[test]
    fn build_graph_follows_block_gains() {
        let grid = OfdmaGrid::new(2, 4).unwrap();
        // One source, one relay: sd = [5, 0], sr = [0, 5], rd = [1, 1].
        let real =
            ChannelRealization::from_gains(1, 1, grid, 10.0, vec![5.0, 0.0, 0.0, 5.0, 1.0, 1.0])
                .unwrap();
        let d = build_graph(&real, Node::Destination, &[Node::Source(0)], 1.0).unwrap();
        assert_eq!(d.neighbors(0), &[0, 1, 2, 3]);
        let r = build_graph(&real, Node::Relay(0), &[Node::Source(0)], 1.0).unwrap();
        assert_eq!(r.neighbors(0), &[4, 5, 6, 7]);
        assert!(build_graph(&real, Node::Relay(3), &[Node::Source(0)], 1.0).is_err());
        assert!(build_graph(&real, Node::Source(0), &[Node::Relay(0)], 1.0).is_err());
    }

    #[test]
    fn extreme_snr_graphs() {
        let grid = OfdmaGrid::new(2, 3).unwrap();
        let gains = vec![0.5; 2 * 2];
        let hi = ChannelRealization::from_gains(2, 0, grid, 1e15, gains.clone()).unwrap();
        let g = build_graph(
            &hi,
            Node::Destination,
            &[Node::Source(0), Node::Source(1)],
            1.0,
        )
        .unwrap();
        assert_eq!(g.edge_count(), 12);
        let zero = ChannelRealization::from_gains(2, 0, grid, 1.0, vec![0.0; 4]).unwrap();
        let g = build_graph(
            &zero,
            Node::Destination,
            &[Node::Source(0), Node::Source(1)],
            1.0,
        )
        .unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    fn arb_graph(max_u: usize, max_s: usize) -> impl Strategy<Value = BipartiteGraph> {
        (1..=max_u, 1..=max_s).prop_flat_map(|(u, s)| {
            proptest::collection::vec(proptest::bool::weighted(0.4), u * s).prop_map(move |bits| {
                BipartiteGraph::from_edges(
                    u,
                    s,
                    bits.iter()
                        .enumerate()
                        .filter(|(_, b)| **b)
                        .map(|(i, _)| (i / s, i % s)),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn matching_agrees_with_oracle(g in arb_graph(5, 10), k in 1usize..=2) {
            let m = max_constraint_matching(&g, k).unwrap();
            m.validate(&g).unwrap();
            prop_assert_eq!(m.saturated_count(), oracle::max_saturable(&g, k));
        }

        #[test]
        fn hall_agrees_with_exhaustive_assignment(g in arb_graph(6, 12), k in 1usize..=2) {
            let check = hall_condition(&g, k).unwrap();
            prop_assert_eq!(check.holds, oracle::all_saturable(&g, k));
            if check.holds {
                prop_assert_eq!(max_constraint_matching(&g, k).unwrap().saturated_count(), g.users());
            }
        }

        #[test]
        fn adding_an_edge_never_hurts(g in arb_graph(5, 10), k in 1usize..=2, u in 0usize..5, s in 0usize..10) {
            let before = max_constraint_matching(&g, k).unwrap().saturated_count();
            let mut h = g.clone();
            if u < h.users() && s < h.subcarriers() {
                h.add_edge(u, s).unwrap();
            }
            prop_assert!(max_constraint_matching(&h, k).unwrap().saturated_count() >= before);
        }

        #[test]
        fn isolated_users_are_never_saturated(g in arb_graph(6, 12), k in 1usize..=2) {
            let m = max_constraint_matching(&g, k).unwrap();
            for u in isolated_users(&g) {
                prop_assert!(!m.is_saturated(u));
            }
        }
    }
}
