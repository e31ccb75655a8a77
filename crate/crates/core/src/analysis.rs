//! Structural analysis of the round-1 choice graph of the leader-collection
//! sub-phases: reach sets, chain lengths, cycles, leader sharing and the
//! layered preimage of a leader.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::jpp::pointer::ConnectorState;
use crate::jpp::{JppSim, SubphaseRecord};
use crate::model::{sqrt_log2_ceil, NodeId, Role};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("length mismatch: {choices} choices for {roles} roles")]
    Length { choices: usize, roles: usize },
    #[error("leader {0} has a choice")]
    LeaderChoice(NodeId),
    #[error("node {0} chose itself")]
    SelfChoice(NodeId),
    #[error("node {0} chose out-of-range node {1}")]
    OutOfRange(NodeId, NodeId),
}

/// `r(v)` for every connector. A connector without a choice (it failed
/// before calling) ends every chain that reaches it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionalGraph {
    r: Vec<Option<NodeId>>,
    roles: Vec<Role>,
}

impl FunctionalGraph {
    pub fn new(r: Vec<Option<NodeId>>, roles: Vec<Role>) -> Result<Self, GraphError> {
        if r.len() != roles.len() {
            return Err(GraphError::Length { choices: r.len(), roles: roles.len() });
        }
        let n = r.len();
        for (v, (choice, role)) in r.iter().zip(&roles).enumerate() {
            let v = NodeId(v as u32);
            match (choice, role) {
                (Some(_), Role::Leader) => return Err(GraphError::LeaderChoice(v)),
                (Some(u), _) if *u == v => return Err(GraphError::SelfChoice(v)),
                (Some(u), _) if u.index() >= n => return Err(GraphError::OutOfRange(v, *u)),
                _ => {}
            }
        }
        Ok(FunctionalGraph { r, roles })
    }

    /// Every connector picks a uniform other node.
    pub fn sample(roles: Vec<Role>, rng: &mut RngStream) -> Self {
        let n = roles.len() as u32;
        let r = (0..n).map(|v| (roles[v as usize] == Role::Connector).then(|| rng.other_node(n, NodeId(v)))).collect();
        FunctionalGraph { r, roles }
    }

    pub fn from_record(record: &SubphaseRecord, roles: &[Role]) -> Result<Self, GraphError> {
        Self::new(record.choices.clone(), roles.to_vec())
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn choice(&self, v: NodeId) -> Option<NodeId> {
        self.r[v.index()]
    }

    pub fn role(&self, v: NodeId) -> Role {
        self.roles[v.index()]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    fn is_leader(&self, v: NodeId) -> bool {
        self.roles[v.index()] == Role::Leader
    }
}

/// Each node is a leader with probability `2^-⌈√log2 n⌉`.
pub fn sample_roles(n: u32, rng: &mut RngStream) -> Vec<Role> {
    let p = (-(sqrt_log2_ceil(n as f64) as f64)).exp2();
    (0..n).map(|_| if rng.bernoulli(p) { Role::Leader } else { Role::Connector }).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Leader(NodeId),
    /// First node reached twice.
    Cycle(NodeId),
    /// A connector without a choice.
    Dead(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachSet {
    pub nodes: Vec<NodeId>,
    pub terminal: Terminal,
}

/// Follows `r` from `v` to the first leader or the first repeated node.
/// `v` must be a connector.
pub fn reach_set(g: &FunctionalGraph, v: NodeId) -> ReachSet {
    assert_eq!(g.role(v), Role::Connector, "reach_set from a leader");
    let mut seen = HashMap::new();
    seen.insert(v, ());
    let mut nodes = Vec::new();
    let mut cur = v;
    loop {
        let Some(next) = g.choice(cur) else {
            return ReachSet { nodes, terminal: Terminal::Dead(cur) };
        };
        if seen.insert(next, ()).is_some() {
            return ReachSet { nodes, terminal: Terminal::Cycle(next) };
        }
        nodes.push(next);
        if g.is_leader(next) {
            return ReachSet { nodes, terminal: Terminal::Leader(next) };
        }
        cur = next;
    }
}

/// `|R(v)|` and the terminal kind of one connector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chain {
    pub len: u32,
    pub terminal: Terminal,
}

#[derive(Clone, Copy)]
enum Mark {
    New,
    OnStack(u32),
    /// Leader or dead end at distance `dist`.
    Ends {
        dist: u32,
        terminal: Terminal,
    },
    /// Enters a cycle of length `cycle` after `tail` steps, at `entry`.
    Loops {
        tail: u32,
        cycle: u32,
        entry: NodeId,
    },
}

/// All connectors' chains in linear time.
pub fn all_chains(g: &FunctionalGraph) -> Vec<Option<Chain>> {
    let n = g.len();
    let mut mark = vec![Mark::New; n];
    let mut stack: Vec<NodeId> = Vec::new();
    for s in 0..n {
        if g.roles[s] == Role::Leader || !matches!(mark[s], Mark::New) {
            continue;
        }
        stack.clear();
        let mut cur = NodeId(s as u32);
        // walk until something already classified
        let base = loop {
            mark[cur.index()] = Mark::OnStack(stack.len() as u32);
            stack.push(cur);
            match g.choice(cur) {
                None => break Mark::Ends { dist: 0, terminal: Terminal::Dead(cur) },
                Some(next) if g.is_leader(next) => break Mark::Ends { dist: 0, terminal: Terminal::Leader(next) },
                Some(next) => match mark[next.index()] {
                    Mark::New => cur = next,
                    Mark::OnStack(pos) => {
                        let cycle = stack.len() as u32 - pos;
                        for &w in &stack[pos as usize..] {
                            mark[w.index()] = Mark::Loops { tail: 0, cycle, entry: w };
                        }
                        stack.truncate(pos as usize);
                        break Mark::Loops { tail: 0, cycle, entry: next };
                    }
                    done => break done,
                },
            }
        };
        // `base` describes the successor of the top of the stack
        let mut succ = base;
        while let Some(w) = stack.pop() {
            let m = match succ {
                Mark::Ends { dist, terminal } => {
                    let dist = match terminal {
                        Terminal::Dead(d) if d == w => 0,
                        _ => dist + 1,
                    };
                    Mark::Ends { dist, terminal }
                }
                Mark::Loops { tail, cycle, entry } => Mark::Loops { tail: tail + 1, cycle, entry },
                _ => unreachable!(),
            };
            mark[w.index()] = m;
            succ = m;
        }
    }
    (0..n)
        .map(|v| match mark[v] {
            _ if g.roles[v] == Role::Leader => None,
            Mark::Ends { dist, terminal } => Some(Chain { len: dist, terminal }),
            Mark::Loops { tail, cycle, entry } => {
                // v on the cycle repeats itself first
                let entry = if tail == 0 { NodeId(v as u32) } else { entry };
                Some(Chain { len: tail + cycle - 1, terminal: Terminal::Cycle(entry) })
            }
            _ => unreachable!(),
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainLengthStats {
    pub connectors: u64,
    pub cycles: u64,
    pub dead: u64,
    pub max: u32,
    pub median: u32,
    pub histogram: BTreeMap<u32, u64>,
}

pub fn chain_length_stats(g: &FunctionalGraph) -> ChainLengthStats {
    let mut s = ChainLengthStats::default();
    let mut lens = Vec::new();
    for c in all_chains(g).into_iter().flatten() {
        s.connectors += 1;
        match c.terminal {
            Terminal::Cycle(_) => s.cycles += 1,
            Terminal::Dead(_) => s.dead += 1,
            Terminal::Leader(_) => {}
        }
        *s.histogram.entry(c.len).or_default() += 1;
        lens.push(c.len);
    }
    lens.sort_unstable();
    s.max = lens.last().copied().unwrap_or(0);
    s.median = lens.get(lens.len() / 2).copied().unwrap_or(0);
    s
}

/// Where a pointer started at `v` sits after `steps` single moves along `r`,
/// stopping at a leader. Brute-force walk with cycle shortcut. Returns the
/// node and whether it is a leader; `None` if the walk hits a dead end.
pub fn walk_pointer(g: &FunctionalGraph, v: NodeId, steps: u64) -> Option<(NodeId, bool)> {
    let mut first_seen: HashMap<NodeId, u64> = HashMap::new();
    let mut path = vec![v];
    let mut cur = v;
    let mut k = 0u64;
    first_seen.insert(v, 0);
    while k < steps {
        if g.is_leader(cur) {
            return Some((cur, true));
        }
        let next = g.choice(cur)?;
        k += 1;
        if let Some(&i) = first_seen.get(&next) {
            let cycle = k - i;
            let pos = i + (steps - i) % cycle;
            return Some((path[pos as usize], false));
        }
        first_seen.insert(next, k);
        path.push(next);
        cur = next;
    }
    Some((cur, g.is_leader(cur)))
}

/// Per `(leader, sub-phase)` group: how many connectors chose it in phase 2.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShareCounts {
    pub groups: BTreeMap<(NodeId, u8), u64>,
    pub connectors: u64,
    pub max_group: u64,
    /// Connectors with at least one chosen group of at least `threshold`.
    pub one_large: u64,
    /// Connectors whose two chosen groups both reach `threshold`.
    pub two_large: u64,
    pub threshold: f64,
}

/// `threshold` is usually `2^⌈√log2 n⌉ / log2 n`.
pub fn leader_share_counts(states: &[ConnectorState], roles: &[Role], threshold: f64) -> ShareCounts {
    let mut s = ShareCounts { threshold, ..Default::default() };
    for (st, role) in states.iter().zip(roles) {
        if *role != Role::Connector {
            continue;
        }
        s.connectors += 1;
        for c in st.chosen() {
            *s.groups.entry((c.leader, c.subphase)).or_default() += 1;
        }
    }
    s.max_group = s.groups.values().copied().max().unwrap_or(0);
    for (st, role) in states.iter().zip(roles) {
        if *role != Role::Connector {
            continue;
        }
        let large = st.chosen().filter(|c| s.groups[&(c.leader, c.subphase)] as f64 >= threshold).count();
        if large >= 1 {
            s.one_large += 1;
        }
        if large >= 2 {
            s.two_large += 1;
        }
    }
    s
}

/// Reversed `r` edges in compressed form.
pub struct Preimages {
    offsets: Vec<u32>,
    sources: Vec<NodeId>,
}

impl Preimages {
    pub fn new(g: &FunctionalGraph) -> Self {
        let n = g.len();
        let mut offsets = vec![0u32; n + 1];
        for u in g.r.iter().flatten() {
            offsets[u.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut sources = vec![NodeId(0); offsets[n] as usize];
        for (v, u) in g.r.iter().enumerate() {
            if let Some(u) = u {
                sources[fill[u.index()] as usize] = NodeId(v as u32);
                fill[u.index()] += 1;
            }
        }
        Preimages { offsets, sources }
    }

    pub fn of(&self, u: NodeId) -> &[NodeId] {
        &self.sources[self.offsets[u.index()] as usize..self.offsets[u.index() + 1] as usize]
    }
}

/// `|L_1(u)|, |L_2(u)|, …` where `L_1(u) = r⁻¹(u)` and `L_i = r⁻¹(L_{i-1})`.
/// Trailing empty layers are dropped.
pub fn layer_sizes(pre: &Preimages, u: NodeId) -> Vec<u64> {
    let mut sizes = Vec::new();
    let mut layer = vec![u];
    loop {
        let next: Vec<NodeId> = layer.iter().flat_map(|&w| pre.of(w).iter().copied()).collect();
        if next.is_empty() {
            return sizes;
        }
        sizes.push(next.len() as u64);
        layer = next;
    }
}

/// Per consecutive pair: `|L_{i+1}| ≤ |L_i| + K(log2 n + √(|L_i|·log2 n))`.
pub fn layer_growth_ok(layers: &[u64], n: u32, k: f64) -> Vec<bool> {
    let l = (n as f64).log2();
    layers.windows(2).map(|w| w[1] as f64 <= w[0] as f64 + k * (l + (w[0] as f64 * l).sqrt())).collect()
}

/// `K` such that `p = K · 2^{2s} · log2²n / n`.
pub fn cycle_k(p: f64, n: u32) -> f64 {
    let s = sqrt_log2_ceil(n as f64) as f64;
    let l = (n as f64).log2();
    p * n as f64 / ((2.0 * s).exp2() * l * l)
}

/// `K` such that `len = K · 2^s · log2 n`.
pub fn chain_k(len: f64, n: u32) -> f64 {
    let s = sqrt_log2_ceil(n as f64) as f64;
    len / (s.exp2() * (n as f64).log2())
}

/// `K` such that `group = K · 2^{3.1·s}`.
pub fn group_k(group: f64, n: u32) -> f64 {
    let s = sqrt_log2_ceil(n as f64) as f64;
    group / (3.1 * s).exp2()
}

/// Each value is at most `(1 + band)` times its predecessor.
pub fn non_increasing_within(values: &[f64], band: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + band))
}

/// Structural summary of one JPP run recorded with sub-phase snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub n: u32,
    pub connectors: u64,
    pub leaders: u64,
    /// Chains over all recorded sub-phases.
    pub chains: u64,
    pub cycles: u64,
    pub max_chain: u32,
    pub median_chain: u32,
    /// Connectors whose chain is at least `2^s / log2 n` long.
    pub long_chains: u64,
    pub max_group: u64,
    pub two_large: u64,
    pub layer_pairs: u64,
    pub layer_pairs_ok: u64,
    pub short_of_two_leaders: u64,
}

/// Layer-growth constant used by `analyze_run`.
pub const LAYER_K: f64 = 8.0;

pub fn analyze_run(sim: &JppSim) -> Result<RunAnalysis, GraphError> {
    let n = sim.roles().len() as u32;
    let s = sqrt_log2_ceil(n as f64) as f64;
    let l = (n as f64).log2();
    let threshold = s.exp2() / l;
    let roles = sim.roles();
    let leaders = roles.iter().filter(|&&r| r == Role::Leader).count() as u64;
    let mut a = RunAnalysis {
        n,
        connectors: n as u64 - leaders,
        leaders,
        chains: 0,
        cycles: 0,
        max_chain: 0,
        median_chain: 0,
        long_chains: 0,
        max_group: 0,
        two_large: 0,
        layer_pairs: 0,
        layer_pairs_ok: 0,
        short_of_two_leaders: 0,
    };
    let mut medians = Vec::new();
    for rec in sim.records() {
        let g = FunctionalGraph::from_record(rec, roles)?;
        let st = chain_length_stats(&g);
        a.chains += st.connectors;
        a.cycles += st.cycles;
        a.max_chain = a.max_chain.max(st.max);
        medians.push(st.median);
        a.long_chains += st.histogram.range(threshold.ceil() as u32..).map(|(_, c)| c).sum::<u64>();
        let pre = Preimages::new(&g);
        for (u, role) in roles.iter().enumerate() {
            if *role != Role::Leader {
                continue;
            }
            let ok = layer_growth_ok(&layer_sizes(&pre, NodeId(u as u32)), n, LAYER_K);
            a.layer_pairs += ok.len() as u64;
            a.layer_pairs_ok += ok.iter().filter(|&&b| b).count() as u64;
        }
    }
    medians.sort_unstable();
    a.median_chain = medians.get(medians.len() / 2).copied().unwrap_or(0);
    let shares = leader_share_counts(sim.connectors(), roles, threshold);
    a.max_group = shares.max_group;
    a.two_large = shares.two_large;
    a.short_of_two_leaders = sim
        .connectors()
        .iter()
        .zip(roles)
        .enumerate()
        .filter(|(v, (st, r))| {
            **r == Role::Connector && !sim.failures().is_failed(NodeId(*v as u32), sim.round()) && st.chosen_len() < 2
        })
        .count() as u64;
    Ok(a)
}

/// Aggregate over the runs of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: u32,
    pub failure_scale: f64,
    pub runs: u64,
    pub cycle_probability: f64,
    pub cycle_k: f64,
    pub max_chain: u32,
    pub chain_k: f64,
    pub median_chain: u32,
    pub long_chain_fraction: f64,
    pub max_group: u64,
    pub group_k: f64,
    pub two_large_fraction: f64,
    pub layer_pairs: u64,
    pub layer_ok_fraction: f64,
    /// Runs in which every live connector ended with two chosen leaders.
    pub runs_all_two_leaders: u64,
}

impl AnalysisReport {
    pub fn aggregate(n: u32, failure_scale: f64, runs: &[RunAnalysis]) -> Self {
        let sum = |f: fn(&RunAnalysis) -> u64| runs.iter().map(f).sum::<u64>();
        let chains = sum(|a| a.chains).max(1) as f64;
        let connectors = sum(|a| a.connectors).max(1) as f64;
        let cycle_probability = sum(|a| a.cycles) as f64 / chains;
        let max_chain = runs.iter().map(|a| a.max_chain).max().unwrap_or(0);
        let max_group = runs.iter().map(|a| a.max_group).max().unwrap_or(0);
        let mut medians: Vec<u32> = runs.iter().map(|a| a.median_chain).collect();
        medians.sort_unstable();
        let pairs = sum(|a| a.layer_pairs);
        AnalysisReport {
            n,
            failure_scale,
            runs: runs.len() as u64,
            cycle_probability,
            cycle_k: cycle_k(cycle_probability, n),
            max_chain,
            chain_k: chain_k(max_chain as f64, n),
            median_chain: medians.get(medians.len() / 2).copied().unwrap_or(0),
            long_chain_fraction: sum(|a| a.long_chains) as f64 / chains,
            max_group,
            group_k: group_k(max_group as f64, n),
            two_large_fraction: sum(|a| a.two_large) as f64 / connectors,
            layer_pairs: pairs,
            layer_ok_fraction: if pairs == 0 { 1.0 } else { sum(|a| a.layer_pairs_ok) as f64 / pairs as f64 },
            runs_all_two_leaders: runs.iter().filter(|a| a.short_of_two_leaders == 0).count() as u64,
        }
    }
}
