//! Reference protocols on the same engine: push, pull and median-counter
//! push&pull.

use crate::engine::{execute_round, Payload, PullRequest, RoundAction, RoundOutcome, Target};
use crate::error::SimError;
use crate::failure::{sample_failures, FailureAssignment};
use crate::jpp::median::{self, McState, Tally};
use crate::metrics::{BitCosts, Metrics};
use crate::model::{Mode, NodeId, SimConfig};
use crate::rng::RngStream;
use crate::sim::resolve_start;
use crate::trace::{PhaseLabel, RunMeta, RunOutcome, Trace, TraceRow};

/// State shared by the three baselines.
struct Run {
    cfg: SimConfig,
    run_id: u64,
    cap: u32,
    failures: FailureAssignment,
    informed: Vec<bool>,
    informed_count: u64,
    live_uninformed: u64,
    fail_events: Vec<(u32, NodeId)>,
    next_fail: usize,
    metrics: Metrics,
    rows: Vec<TraceRow>,
    completion_round: Option<u32>,
    last_infection_round: Option<u32>,
    actions: Vec<RoundAction>,
    outcome: RoundOutcome,
}

impl Run {
    fn new(cfg: &SimConfig, run_id: u64) -> Self {
        let n = cfg.n;
        let cap = cfg.baseline_cap();
        let start = resolve_start(cfg);
        let mut failures = sample_failures(cfg, cap, &mut RngStream::new(cfg.seed, "failures"));
        failures.spare(start);
        let mut informed = vec![false; n as usize];
        informed[start.index()] = true;
        let mut fail_events: Vec<(u32, NodeId)> =
            failures.failed_nodes().map(|v| (failures.failed_at(v).unwrap(), v)).collect();
        fail_events.sort();
        let mut run = Run {
            cfg: cfg.clone(),
            run_id,
            cap,
            failures,
            informed,
            informed_count: 1,
            live_uninformed: n as u64 - 1,
            fail_events,
            next_fail: 0,
            metrics: Metrics::new(BitCosts::for_config(cfg)),
            rows: Vec::new(),
            completion_round: None,
            last_infection_round: None,
            actions: Vec::new(),
            outcome: RoundOutcome::default(),
        };
        run.advance_failures(0);
        if run.live_uninformed == 0 {
            run.completion_round = Some(0);
        }
        run
    }

    fn advance_failures(&mut self, round: u32) {
        while self.next_fail < self.fail_events.len() && self.fail_events[self.next_fail].0 <= round {
            let v = self.fail_events[self.next_fail].1;
            if !self.informed[v.index()] {
                self.live_uninformed -= 1;
            }
            self.next_fail += 1;
        }
    }

    fn live(&self, v: u32, round: u32) -> bool {
        !self.failures.is_failed(NodeId(v), round)
    }

    fn inform(&mut self, v: NodeId, round: u32) -> bool {
        let i = v.index();
        if self.informed[i] {
            return false;
        }
        self.informed[i] = true;
        self.informed_count += 1;
        self.live_uninformed -= 1;
        self.last_infection_round = Some(round);
        true
    }

    fn end_round(&mut self, round: u32, label: PhaseLabel) {
        if self.live_uninformed == 0 && self.completion_round.is_none() {
            self.completion_round = Some(round);
        }
        self.rows.push(TraceRow::snapshot(round, label, self.informed_count, &self.metrics));
    }

    fn finish(mut self, complete: bool) -> Trace {
        self.metrics.flush();
        let last = self.rows.last().map_or(0, |r| r.round);
        let failed = self.failures.failed_nodes().filter(|&v| self.failures.is_failed(v, last)).count() as u64;
        Trace {
            meta: RunMeta::from_config(self.run_id, &self.cfg),
            rows: self.rows,
            outcome: RunOutcome {
                failed,
                informed: self.informed_count,
                complete,
                completion_round: self.completion_round,
                last_infection_round: self.last_infection_round,
                metrics: self.metrics,
            },
        }
    }
}

/// Push and pull. Stops once every live node is informed or at the cap.
fn run_simple(cfg: &SimConfig, run_id: u64, pull: bool) -> Result<Trace, SimError> {
    cfg.validate()?;
    let label = if pull { PhaseLabel::Pull } else { PhaseLabel::Push };
    let mut run = Run::new(cfg, run_id);
    for r in 1..=run.cap {
        if run.live_uninformed == 0 {
            break;
        }
        run.advance_failures(r);
        run.metrics.begin_round(label);
        let mut actions = std::mem::take(&mut run.actions);
        actions.clear();
        for v in 0..cfg.n {
            if !run.live(v, r) || run.informed[v as usize] != !pull {
                continue;
            }
            actions.push(if pull {
                RoundAction::pull(NodeId(v), Target::UniformRandom, PullRequest::Rumor)
            } else {
                RoundAction::push(NodeId(v), Target::UniformRandom, Payload::Rumor)
            });
        }
        let mut outcome = std::mem::take(&mut run.outcome);
        {
            let informed = &run.informed;
            let respond =
                |callee: NodeId, _: NodeId, _: PullRequest| informed[callee.index()].then_some(Payload::Rumor);
            let mut rng = RngStream::for_round(cfg.seed, "engine", r);
            execute_round(cfg.n, &actions, &respond, &run.failures, r, &mut rng, &mut run.metrics, &mut outcome)?;
        }
        for d in &outcome.deliveries {
            run.inform(d.to, r);
        }
        run.actions = actions;
        run.outcome = outcome;
        run.end_round(r, label);
    }
    let complete = run.live_uninformed == 0;
    Ok(run.finish(complete))
}

/// Each informed node pushes the rumor to a uniform node every round.
pub fn run_push(cfg: &SimConfig, run_id: u64) -> Result<Trace, SimError> {
    run_simple(&with_mode(cfg, Mode::Push), run_id, false)
}

/// Each uninformed node pulls from a uniform node every round.
pub fn run_pull(cfg: &SimConfig, run_id: u64) -> Result<Trace, SimError> {
    run_simple(&with_mode(cfg, Mode::Pull), run_id, true)
}

fn with_mode(cfg: &SimConfig, mode: Mode) -> SimConfig {
    SimConfig { mode, ..cfg.clone() }
}

/// Outcome of a median-counter run beyond the common trace.
#[derive(Clone, Debug, PartialEq)]
pub struct MedianRun {
    pub trace: Trace,
    /// Round in which the last live node reached `D`, if all did.
    pub all_d_round: Option<u32>,
    /// Final states.
    pub states: Vec<McState>,
}

/// Median-counter push&pull from a single `B1` node. Stops when every live
/// node is in `D` or at the cap.
pub fn run_push_pull_median(cfg: &SimConfig, run_id: u64) -> Result<Trace, SimError> {
    Ok(run_median_detailed(cfg, run_id)?.trace)
}

pub fn run_median_detailed(cfg: &SimConfig, run_id: u64) -> Result<MedianRun, SimError> {
    let cfg = with_mode(cfg, Mode::PushPullMedian);
    cfg.validate()?;
    let n = cfg.n;
    let ctr_max = cfg.ctr_max();
    let label = PhaseLabel::PushPull;
    let mut run = Run::new(&cfg, run_id);
    let mut states = vec![McState::A; n as usize];
    for (v, s) in states.iter_mut().enumerate() {
        if run.informed[v] {
            *s = McState::B(1);
        }
    }
    let mut tallies = vec![Tally::default(); n as usize];
    // live nodes not yet in D
    let mut active = (0..n).filter(|&v| run.live(v, 0)).count() as u64;
    let mut all_d_round = None;
    for r in 1..=run.cap {
        if active == 0 {
            break;
        }
        run.advance_failures(r);
        run.metrics.begin_round(label);
        let mut actions = std::mem::take(&mut run.actions);
        actions.clear();
        for v in 0..n {
            if run.live(v, r) {
                actions.extend(median::action(NodeId(v), states[v as usize]));
            }
        }
        let mut outcome = std::mem::take(&mut run.outcome);
        {
            let st = &states;
            let respond = |callee: NodeId, _: NodeId, _: PullRequest| median::reply(st[callee.index()]);
            let mut rng = RngStream::for_round(cfg.seed, "engine", r);
            execute_round(n, &actions, &respond, &run.failures, r, &mut rng, &mut run.metrics, &mut outcome)?;
        }
        tallies.iter_mut().for_each(|t| *t = Tally::default());
        median::tally_round(&actions, &outcome, &mut tallies, |_| true, |v| states[v.index()]);
        for d in &outcome.deliveries {
            run.inform(d.to, r);
        }
        active = 0;
        for v in 0..n as usize {
            if !run.live(v as u32, r) {
                continue;
            }
            states[v] = median::transition(states[v], &tallies[v], ctr_max);
            if states[v] != McState::D {
                active += 1;
            }
        }
        if active == 0 {
            all_d_round = Some(r);
        }
        run.actions = actions;
        run.outcome = outcome;
        run.end_round(r, label);
    }
    let complete = run.live_uninformed == 0;
    Ok(MedianRun { trace: run.finish(complete), all_d_round, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_on_two_nodes_takes_one_round() {
        let t = run_push(&SimConfig::new(2, Mode::Push, 0), 0).unwrap();
        assert_eq!(t.rounds(), 1);
        assert!(t.outcome.complete);
        assert_eq!(t.outcome.completion_round, Some(1));
    }

    #[test]
    fn pull_on_two_nodes_takes_one_round() {
        let t = run_pull(&SimConfig::new(2, Mode::Pull, 0), 0).unwrap();
        assert_eq!(t.rounds(), 1);
        assert!(t.outcome.complete);
    }

    #[test]
    fn median_on_two_nodes_ends_in_d() {
        let cfg = SimConfig::new(2, Mode::PushPullMedian, 0);
        let m = run_median_detailed(&cfg, 0).unwrap();
        assert!(m.trace.outcome.complete);
        assert!(m.all_d_round.is_some());
        assert!(m.all_d_round.unwrap() <= 3 * cfg.ctr_max() + 3);
        assert!(m.states.iter().all(|&s| s == McState::D));
    }

    #[test]
    fn only_survivor_is_complete_at_round_zero() {
        let mut cfg = SimConfig::new(64, Mode::Push, 1);
        cfg.failure_scale = 1e9;
        cfg.failure_timing = crate::model::FailureTiming::AtStart;
        let t = run_push(&cfg, 0).unwrap();
        assert!(t.outcome.complete);
        assert_eq!(t.outcome.informed, 1);
        assert_eq!(t.rounds(), 0);
    }

    #[test]
    fn push_rounds_are_logarithmic() {
        let cfg = SimConfig::new(1 << 12, Mode::Push, 5);
        let t = run_push(&cfg, 0).unwrap();
        assert!(t.outcome.complete);
        let r = t.outcome.completion_round.unwrap();
        assert!((12..=48).contains(&r), "{r}");
    }
}
