//! Jumping-Push-Pull.
//!
//! Phase 0 pushes the rumor from the source for `c·log log n` rounds. Every
//! node then becomes a leader with probability `2^-⌈√log n⌉`. Connectors run
//! five pointer-jumping sub-phases to collect leader addresses and keep two.
//! In phase 3 connectors pull from their leaders and forward the rumor once
//! to their other leader. Phase 4 is median-counter push&pull.

pub mod median;
pub mod pointer;
pub mod schedule;

use crate::engine::{execute_round, Payload, PullRequest, Responder, RoundAction, RoundOutcome, Target};
use crate::error::{ConfigError, SimError};
use crate::failure::FailureAssignment;
use crate::metrics::{BitCosts, Metrics};
use crate::model::{ctr_max_for, NodeId, Role, SimConfig};
use crate::rng::RngStream;
use crate::trace::{PhaseLabel, RunMeta, RunOutcome, Trace, TraceRow};

use median::{McState, Tally};
use pointer::{finalize_phase2, finalize_subphase, pointer_answer, ConnectorState, Phase3State, Ptr};
use schedule::{Schedule, Segment};

/// Longest schedule the simulator will execute.
pub const MAX_ROUNDS: u64 = 1 << 24;

/// Each node independently becomes a leader with probability
/// `2^-⌈√log2 n_v⌉` for its own estimate `n_v`.
pub fn assign_roles(schedule: &Schedule, rng: &mut RngStream) -> Vec<Role> {
    (0..schedule.node_table.len())
        .map(|v| {
            let class = schedule.classes[schedule.node_table[v] as usize];
            let p = (-(class.sqrt_log as f64)).exp2();
            if rng.bernoulli(p) {
                Role::Leader
            } else {
                Role::Connector
            }
        })
        .collect()
}

/// Round-1 choices and end-of-sub-phase pointers of one sub-phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubphaseRecord {
    pub subphase: u8,
    /// `r(v)` for every connector that placed its first call.
    pub choices: Vec<Option<NodeId>>,
    /// Pointers just before the sub-phase was closed.
    pub final_ptrs: Vec<Ptr>,
}

#[derive(Clone, Copy, Debug)]
struct Cursor {
    seg: Segment,
    local: u64,
}

#[derive(Clone, Debug)]
pub struct JppSim {
    cfg: SimConfig,
    run_id: u64,
    n: u32,
    start: NodeId,
    failures: FailureAssignment,
    fail_events: Vec<(u32, NodeId)>,
    next_fail: usize,
    schedule: Schedule,
    class_ctr_max: Vec<u32>,
    class_sizes: Vec<usize>,
    roles: Vec<Role>,
    connectors: Vec<ConnectorState>,
    ptrs: Vec<Ptr>,
    informed: Vec<bool>,
    informed_count: u64,
    live_uninformed: u64,
    mc: Vec<McState>,
    tallies: Vec<Tally>,
    round: u32,
    total_rounds: u32,
    cursors: Vec<Option<Cursor>>,
    metrics: Metrics,
    rows: Vec<TraceRow>,
    actions: Vec<RoundAction>,
    outcome: RoundOutcome,
    completion_round: Option<u32>,
    last_infection_round: Option<u32>,
    record: bool,
    records: Vec<SubphaseRecord>,
    pending_choices: Vec<Option<Vec<Option<NodeId>>>>,
}

impl JppSim {
    /// Sets up a run. Draws, in order of independent streams: start node,
    /// estimates (non-exact only), failures, roles.
    pub fn new(cfg: &SimConfig, run_id: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let n = cfg.n;
        let seed = cfg.seed;
        let start = crate::sim::resolve_start(cfg);
        let estimates = if cfg.non_exact {
            schedule::draw_estimates(cfg, &mut RngStream::new(seed, "estimates"))
        } else {
            Vec::new()
        };
        let schedule = schedule::compute_schedule(cfg, &estimates)?;
        let total = schedule.total_rounds();
        if total > MAX_ROUNDS {
            return Err(ConfigError::ScheduleTooLong(total).into());
        }
        let total_rounds = total as u32;
        let mut failures = crate::failure::sample_failures(cfg, total_rounds, &mut RngStream::new(seed, "failures"));
        failures.spare(start);
        let roles = assign_roles(&schedule, &mut RngStream::new(seed, "roles"));
        let class_ctr_max = schedule
            .classes
            .iter()
            .enumerate()
            .map(|(i, _)| {
                // representative estimate of the class
                let v = schedule.node_table.iter().position(|&t| t as usize == i).unwrap_or(0);
                let nv = schedule.log2_estimates.get(v).copied().unwrap_or((n as f64).log2()).exp2();
                ctr_max_for(if cfg.non_exact { nv } else { n as f64 }, cfg.ctr_max_add)
            })
            .collect();

        let mut informed = vec![false; n as usize];
        informed[start.index()] = true;
        let mut fail_events: Vec<(u32, NodeId)> =
            failures.failed_nodes().map(|v| (failures.failed_at(v).unwrap(), v)).collect();
        fail_events.sort();
        let mut live_uninformed = n as u64 - 1;
        let mut next_fail = 0;
        while next_fail < fail_events.len() && fail_events[next_fail].0 == 0 {
            if !informed[fail_events[next_fail].1.index()] {
                live_uninformed -= 1;
            }
            next_fail += 1;
        }

        let mut class_sizes = vec![0; schedule.tables.len()];
        for &t in &schedule.node_table {
            class_sizes[t as usize] += 1;
        }
        let cursors = vec![None; schedule.tables.len()];
        Ok(JppSim {
            cfg: cfg.clone(),
            run_id,
            n,
            start,
            failures,
            fail_events,
            next_fail,
            schedule,
            class_ctr_max,
            class_sizes,
            roles,
            connectors: vec![ConnectorState::default(); n as usize],
            ptrs: vec![Ptr::Fresh; n as usize],
            informed,
            informed_count: 1,
            live_uninformed,
            mc: vec![McState::A; n as usize],
            tallies: vec![Tally::default(); n as usize],
            round: 0,
            total_rounds,
            cursors,
            metrics: Metrics::new(BitCosts::for_config(cfg)),
            rows: Vec::with_capacity(total_rounds as usize),
            actions: Vec::new(),
            outcome: RoundOutcome::default(),
            completion_round: (live_uninformed == 0).then_some(0),
            last_infection_round: None,
            record: false,
            records: Vec::new(),
            pending_choices: vec![None; 6],
        })
    }

    /// Keeps round-1 choices and final pointers of every sub-phase.
    pub fn record_subphases(&mut self, on: bool) {
        self.record = on;
    }

    pub fn records(&self) -> &[SubphaseRecord] {
        &self.records
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn connectors(&self) -> &[ConnectorState] {
        &self.connectors
    }

    /// Current sub-phase pointers.
    pub fn pointers(&self) -> &[Ptr] {
        &self.ptrs
    }

    pub fn informed(&self) -> &[bool] {
        &self.informed
    }

    pub fn informed_count(&self) -> u64 {
        self.informed_count
    }

    pub fn median_states(&self) -> &[McState] {
        &self.mc
    }

    pub fn failures(&self) -> &FailureAssignment {
        &self.failures
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn start_node(&self) -> NodeId {
        self.start
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn total_rounds(&self) -> u32 {
        self.total_rounds
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn ctr_max_of(&self, v: NodeId) -> u32 {
        self.class_ctr_max[self.schedule.node_table[v.index()] as usize]
    }

    /// Segment label node `v` is in during the most recently executed round.
    pub fn label_of(&self, v: NodeId) -> Option<PhaseLabel> {
        self.cursors[self.schedule.node_table[v.index()] as usize].map(|c| c.seg.label)
    }

    /// Actions the nodes would declare for the next round, computed on a
    /// copy from the current state only.
    pub fn peek_actions(&self) -> Vec<RoundAction> {
        if self.round >= self.total_rounds {
            return Vec::new();
        }
        let mut copy = self.clone();
        let r = copy.round + 1;
        copy.prepare(r);
        copy.plan(r);
        copy.actions
    }

    /// Channels and deliveries of the most recent round.
    pub fn last_outcome(&self) -> &RoundOutcome {
        &self.outcome
    }

    /// Actions executed in the most recent round.
    pub fn last_actions(&self) -> &[RoundAction] {
        &self.actions
    }

    fn inform(&mut self, v: NodeId, round: u32) {
        let i = v.index();
        if !self.informed[i] {
            self.informed[i] = true;
            self.informed_count += 1;
            if !self.failures.is_failed(v, round) {
                self.live_uninformed -= 1;
            }
            self.last_infection_round = Some(round);
        }
    }

    fn row_label(&self) -> PhaseLabel {
        if self.schedule.is_uniform() {
            return self.cursors[0].map_or(PhaseLabel::Phase4, |c| c.seg.label);
        }
        // label held by the most nodes
        let mut counts: Vec<(PhaseLabel, usize)> = Vec::new();
        for (class, cur) in self.cursors.iter().enumerate() {
            let Some(cur) = cur else { continue };
            let size = self.class_sizes[class];
            match counts.iter_mut().find(|(l, _)| *l == cur.seg.label) {
                Some(e) => e.1 += size,
                None => counts.push((cur.seg.label, size)),
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        counts.first().map_or(PhaseLabel::Phase4, |c| c.0)
    }

    /// Round-boundary transitions for a node entering a segment, then its
    /// action for the round.
    fn plan_node(&self, v: NodeId, cur: Cursor, rng: &mut RngStream) -> Option<RoundAction> {
        let i = v.index();
        let state = &self.connectors[i];
        match cur.seg.label {
            PhaseLabel::Phase0 => self.informed[i].then(|| RoundAction::push(v, Target::UniformRandom, Payload::Rumor)),
            PhaseLabel::Dummy(_) | PhaseLabel::Push | PhaseLabel::Pull | PhaseLabel::PushPull => None,
            PhaseLabel::Sub(_) => {
                if self.roles[i] == Role::Leader {
                    return None;
                }
                if cur.local == 1 {
                    return Some(RoundAction::pull(v, Target::UniformRandom, PullRequest::Pointer));
                }
                match self.ptrs[i] {
                    Ptr::Fresh => Some(RoundAction::pull(v, Target::UniformRandom, PullRequest::Pointer)),
                    Ptr::At { node, .. } if node != v => {
                        Some(RoundAction::pull(v, Target::Stored(node), PullRequest::Pointer))
                    }
                    // a pointer resting on itself answers its own request
                    Ptr::At { .. } | Ptr::Lost => None,
                }
            }
            PhaseLabel::Phase3 => {
                if self.roles[i] == Role::Leader {
                    return None;
                }
                match state.phase3 {
                    Phase3State::Idle if !self.informed[i] && state.chosen_len() > 0 => {
                        let k = rng.below(state.chosen_len() as u32) as usize;
                        let leader = state.chosen().nth(k).unwrap().leader;
                        Some(RoundAction::pull(v, Target::Stored(leader), PullRequest::Rumor))
                    }
                    Phase3State::MustPushTo(w) => Some(RoundAction::push(v, Target::Stored(w), Payload::Rumor)),
                    _ => None,
                }
            }
            PhaseLabel::Phase4 => median::action(v, self.mc[i]),
        }
    }

    fn enter_segment(&mut self, v: NodeId, label: PhaseLabel, rng: &mut RngStream) {
        let i = v.index();
        match label {
            PhaseLabel::Phase3 if self.roles[i] == Role::Connector => {
                let s = &mut self.connectors[i];
                s.phase3 = if !self.informed[i] {
                    Phase3State::Idle
                } else if s.chosen_len() > 0 {
                    let k = rng.below(s.chosen_len() as u32) as usize;
                    Phase3State::MustPushTo(s.chosen().nth(k).unwrap().leader)
                } else {
                    Phase3State::Done
                };
            }
            PhaseLabel::Phase4 => {
                self.mc[i] = if self.informed[i] { McState::B(1) } else { McState::A };
            }
            _ => {}
        }
    }

    /// Failures and segment positions for round `r`.
    fn prepare(&mut self, r: u32) {
        self.round = r;
        while self.next_fail < self.fail_events.len() && self.fail_events[self.next_fail].0 <= r {
            let v = self.fail_events[self.next_fail].1;
            if !self.informed[v.index()] {
                self.live_uninformed -= 1;
            }
            self.next_fail += 1;
        }
        for (c, t) in self.cursors.iter_mut().zip(&self.schedule.tables) {
            *c = t.at(r as u64).map(|(seg, local)| Cursor { seg, local });
        }
    }

    /// Fills `self.actions` for round `r`. Entry transitions happen at the
    /// round boundary, before any node acts or answers.
    fn plan(&mut self, r: u32) {
        let mut rng = RngStream::for_round(self.cfg.seed, "jpp/plan", r);
        let mut actions = std::mem::take(&mut self.actions);
        actions.clear();
        let any_entry = self.cursors.iter().flatten().any(|c| c.local == 1);
        let any_failures = !self.failures.is_empty();
        for v in 0..self.n {
            let node = NodeId(v);
            let Some(cur) = self.cursors[self.schedule.node_table[v as usize] as usize] else { continue };
            if any_failures && self.failures.is_failed(node, r) {
                continue;
            }
            if any_entry && cur.local == 1 {
                self.enter_segment(node, cur.seg.label, &mut rng);
            }
            if let Some(a) = self.plan_node(node, cur, &mut rng) {
                actions.push(a);
            }
        }
        self.actions = actions;
    }

    /// Executes the next round. Returns `None` once the schedule is over.
    pub fn step(&mut self) -> Result<Option<&TraceRow>, SimError> {
        if self.round >= self.total_rounds {
            return Ok(None);
        }
        let r = self.round + 1;
        let seed = self.cfg.seed;
        self.prepare(r);
        let label = self.row_label();
        self.metrics.begin_round(label);
        self.plan(r);
        let actions = std::mem::take(&mut self.actions);

        // Execute.
        let mut outcome = std::mem::take(&mut self.outcome);
        {
            let view = View {
                roles: &self.roles,
                ptrs: &self.ptrs,
                informed: &self.informed,
                mc: &self.mc,
                node_table: &self.schedule.node_table,
                cursors: &self.cursors,
            };
            let mut engine_rng = RngStream::for_round(seed, "engine", r);
            execute_round(
                self.n,
                &actions,
                &view,
                &self.failures,
                r,
                &mut engine_rng,
                &mut self.metrics,
                &mut outcome,
            )?;
        }

        self.apply(r, &actions, &outcome);
        self.actions = actions;
        self.outcome = outcome;

        // Exit transitions.
        let mut choose_rng = RngStream::for_round(seed, "jpp/choose", r);
        for class in 0..self.cursors.len() {
            let Some(cur) = self.cursors[class] else { continue };
            if cur.local != cur.seg.len {
                continue;
            }
            if let PhaseLabel::Sub(k) = cur.seg.label {
                self.close_subphase(class, k, &mut choose_rng);
            }
        }

        if self.live_uninformed == 0 && self.completion_round.is_none() {
            self.completion_round = Some(r);
        }
        self.rows.push(TraceRow::snapshot(r, label, self.informed_count, &self.metrics));
        Ok(self.rows.last())
    }

    fn apply(&mut self, r: u32, actions: &[RoundAction], outcome: &RoundOutcome) {
        let in_p4: Vec<bool> =
            self.cursors.iter().map(|c| matches!(c, Some(c) if c.seg.label == PhaseLabel::Phase4)).collect();
        let any_p4 = in_p4.iter().any(|&b| b);
        let node_table = &self.schedule.node_table;

        if any_p4 {
            self.tallies.iter_mut().for_each(|t| *t = Tally::default());
            let mc = &self.mc;
            median::tally_round(
                actions,
                outcome,
                &mut self.tallies,
                |v| in_p4[node_table[v.index()] as usize],
                |v| mc[v.index()],
            );
        }

        // Pointer requests: silence means the chain is lost.
        for a in actions {
            let i = a.caller.index();
            match (a.pull, a.push) {
                (Some(PullRequest::Pointer), _) => self.ptrs[i] = Ptr::Lost,
                (None, Some(Payload::Rumor)) => {
                    if let Phase3State::MustPushTo(_) = self.connectors[i].phase3 {
                        if self.cursors[node_table[i] as usize].is_some_and(|c| c.seg.label == PhaseLabel::Phase3) {
                            self.connectors[i].phase3 = Phase3State::Done;
                            self.connectors[i].pushes += 1;
                        }
                    }
                }
                _ => {}
            }
        }
        if self.record {
            let calls = actions.iter().filter(|a| a.target != Target::NoCall);
            for (a, ch) in calls.zip(&outcome.channels) {
                if a.pull != Some(PullRequest::Pointer) || a.target != Target::UniformRandom {
                    continue;
                }
                let class = node_table[a.caller.index()] as usize;
                if let Some(Cursor { seg: Segment { label: PhaseLabel::Sub(k), .. }, .. }) = self.cursors[class] {
                    let n = self.n as usize;
                    let slot = self.pending_choices[k as usize].get_or_insert_with(|| vec![None; n]);
                    slot[a.caller.index()] = Some(ch.callee);
                }
            }
        }

        for d in &outcome.deliveries {
            match d.payload {
                Payload::Address { node, leader } => {
                    self.ptrs[d.to.index()] = Ptr::At { node, leader };
                }
                Payload::Rumor => {
                    let to = d.to.index();
                    let newly = !self.informed[to];
                    self.inform(d.to, r);
                    // a connector that pulled the rumor forwards it once
                    if newly
                        && d.direction == crate::engine::Direction::Pulled
                        && self.roles[to] == Role::Connector
                        && self.cursors[self.schedule.node_table[to] as usize]
                            .is_some_and(|c| c.seg.label == PhaseLabel::Phase3)
                    {
                        let s = &mut self.connectors[to];
                        s.phase3 = match s.other_leader(d.from) {
                            Some(w) => Phase3State::MustPushTo(w),
                            None => Phase3State::Done,
                        };
                    }
                }
                Payload::TaggedRumor(_) => self.inform(d.to, r),
            }
        }

        if any_p4 {
            for v in 0..self.n as usize {
                let class = self.schedule.node_table[v] as usize;
                if !in_p4[class] || self.failures.is_failed(NodeId(v as u32), r) {
                    continue;
                }
                self.mc[v] = median::transition(self.mc[v], &self.tallies[v], self.class_ctr_max[class]);
            }
        }
    }

    fn close_subphase(&mut self, class: usize, k: u8, rng: &mut RngStream) {
        let node_table = &self.schedule.node_table;
        if self.record {
            let final_ptrs = self.ptrs.clone();
            let choices = self.pending_choices[k as usize].take().unwrap_or_else(|| vec![None; self.n as usize]);
            self.records.push(SubphaseRecord { subphase: k, choices, final_ptrs });
        }
        for (v, &c) in node_table.iter().enumerate() {
            if c as usize != class || self.roles[v] != Role::Connector {
                continue;
            }
            let s = &mut self.connectors[v];
            finalize_subphase(s, &mut self.ptrs[v], k);
            if k == 5 {
                finalize_phase2(s, rng);
            }
        }
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while self.step()?.is_some() {}
        Ok(())
    }

    pub fn into_trace(mut self) -> Trace {
        self.metrics.flush();
        let failed = self.failures.failed_nodes().filter(|&v| self.failures.is_failed(v, self.round)).count() as u64;
        Trace {
            meta: RunMeta::from_config(self.run_id, &self.cfg),
            rows: self.rows,
            outcome: RunOutcome {
                failed,
                informed: self.informed_count,
                complete: self.live_uninformed == 0,
                completion_round: self.completion_round,
                last_infection_round: self.last_infection_round,
                metrics: self.metrics,
            },
        }
    }
}

/// Read-only round-start view used to answer incoming channels.
struct View<'a> {
    roles: &'a [Role],
    ptrs: &'a [Ptr],
    informed: &'a [bool],
    mc: &'a [McState],
    node_table: &'a [u16],
    cursors: &'a [Option<Cursor>],
}

impl Responder for View<'_> {
    fn respond(&self, callee: NodeId, _caller: NodeId, request: PullRequest) -> Option<Payload> {
        let s = self;
        let i = callee.index();
        match request {
            PullRequest::Pointer => {
                pointer_answer(callee, s.roles[i], s.ptrs[i]).map(|(node, leader)| Payload::Address { node, leader })
            }
            PullRequest::Rumor => s.informed[i].then_some(Payload::Rumor),
            PullRequest::Exchange => {
                let class = s.node_table[i] as usize;
                if s.cursors[class].is_some_and(|c| c.seg.label == PhaseLabel::Phase4) {
                    median::reply(s.mc[i])
                } else {
                    // not yet counting: behaves as a fresh B1 if it holds the rumor
                    median::reply(if s.informed[i] { McState::B(1) } else { McState::A })
                }
            }
        }
    }
}

/// Runs JPP to the end of its schedule.
pub fn run_jpp(cfg: &SimConfig, run_id: u64) -> Result<Trace, SimError> {
    let mut sim = JppSim::new(cfg, run_id)?;
    sim.run_to_end()?;
    Ok(sim.into_trace())
}
