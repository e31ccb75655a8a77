use std::collections::HashSet;

use jpp_core::analysis::{walk_pointer, FunctionalGraph};
use jpp_core::engine::{execute_round, Direction, Payload, PullRequest, RoundAction, RoundOutcome, Target};
use jpp_core::failure::FailureAssignment;
use jpp_core::jpp::pointer::{Phase3State, Ptr};
use jpp_core::jpp::JppSim;
use jpp_core::metrics::{BitCosts, Metrics};
use jpp_core::rng::RngStream;
use jpp_core::*;

#[test]
fn first_phase0_round_has_one_action() {
    let cfg = SimConfig::new(1024, Mode::Jpp, 3);
    let mut sim = JppSim::new(&cfg, 0).unwrap();
    sim.step().unwrap();
    assert_eq!(sim.last_actions().len(), 1);
    assert_eq!(sim.last_actions()[0].caller, sim.start_node());
    assert_eq!(sim.rows()[0].phase, PhaseLabel::Phase0);
}

#[test]
fn two_pushes_to_one_target_inform_once() {
    let mut metrics = Metrics::new(BitCosts::for_config(&SimConfig::new(4, Mode::Push, 0)));
    metrics.begin_round(PhaseLabel::Phase0);
    let actions = [
        RoundAction::push(NodeId(0), Target::Stored(NodeId(2)), Payload::Rumor),
        RoundAction::push(NodeId(1), Target::Stored(NodeId(2)), Payload::Rumor),
    ];
    let mut out = RoundOutcome::default();
    let silent = |_: NodeId, _: NodeId, _: PullRequest| None;
    execute_round(
        4,
        &actions,
        &silent,
        &FailureAssignment::none(4),
        1,
        &mut RngStream::new(0, "e"),
        &mut metrics,
        &mut out,
    )
    .unwrap();
    let informed: HashSet<NodeId> =
        [NodeId(0), NodeId(1)].into_iter().chain(out.deliveries.iter().map(|d| d.to)).collect();
    assert_eq!(informed.len(), 3);
    assert_eq!(metrics.totals.rumor_msgs, 2);
}

#[test]
fn pointer_jumping_on_a_path() {
    // v=0 -> 1 -> 2 -> 3 -> leader 4
    let g = FunctionalGraph::new(
        vec![Some(NodeId(1)), Some(NodeId(2)), Some(NodeId(3)), Some(NodeId(4)), None],
        vec![Role::Connector, Role::Connector, Role::Connector, Role::Connector, Role::Leader],
    )
    .unwrap();
    let after = |t: u32| walk_pointer(&g, NodeId(0), 1 << (t - 1)).unwrap();
    assert_eq!(after(1), (NodeId(1), false));
    assert_eq!(after(2), (NodeId(2), false));
    assert_eq!(after(3), (NodeId(4), true));
    assert_eq!(after(4), (NodeId(4), true));
}

#[test]
fn pointers_on_leaders_stay_put() {
    let cfg = SimConfig::new(2048, Mode::Jpp, 11);
    let mut sim = JppSim::new(&cfg, 0).unwrap();
    let table = sim.schedule().tables[0].clone();
    let mut prev: Vec<Ptr> = sim.pointers().to_vec();
    let mut absorbed = 0;
    while sim.step().unwrap().is_some() {
        let (seg, local) = table.at(sim.round() as u64).unwrap();
        if matches!(seg.label, PhaseLabel::Sub(_)) && local > 1 && local < seg.len {
            for (p, q) in prev.iter().zip(sim.pointers()) {
                if p.at_leader() {
                    assert_eq!(p, q);
                    absorbed += 1;
                }
            }
        }
        prev = sim.pointers().to_vec();
    }
    assert!(absorbed > 0);
}

#[test]
fn all_leader_draw_runs_to_completion() {
    let seed = (0..200u64)
        .find(|&s| {
            let sim = JppSim::new(&SimConfig::new(2, Mode::Jpp, s), 0).unwrap();
            sim.roles().iter().all(|&r| r == Role::Leader)
        })
        .expect("some seed draws two leaders");
    let t = run_protocol(&SimConfig::new(2, Mode::Jpp, seed)).unwrap();
    assert!(t.outcome.complete);
    assert_eq!(t.outcome.informed, 2);
}

#[test]
fn two_node_roles_are_fair_coins() {
    // p = 1/2 per node; 400 nodes over 200 seeds, sd = 10
    let leaders: usize = (0..200u64)
        .map(|s| {
            JppSim::new(&SimConfig::new(2, Mode::Jpp, s), 0)
                .unwrap()
                .roles()
                .iter()
                .filter(|&&r| r == Role::Leader)
                .count()
        })
        .sum();
    assert!((leaders as i64 - 200).abs() <= 30, "{leaders}");
}

#[test]
fn phase3_pull_then_single_forward() {
    let cfg = SimConfig::new(1 << 12, Mode::Jpp, 2);
    let mut sim = JppSim::new(&cfg, 0).unwrap();
    let n = cfg.n as usize;
    // round in which a connector pulled the rumor, and from whom
    let mut pulled: Vec<Option<(u32, NodeId)>> = vec![None; n];
    let mut pushes = vec![0u32; n];
    let mut checked = 0;
    while sim.step().unwrap().is_some() {
        if sim.rows().last().unwrap().phase != PhaseLabel::Phase3 {
            continue;
        }
        let r = sim.round();
        let before = pulled.clone();
        for d in &sim.last_outcome().deliveries {
            if d.direction == Direction::Pulled {
                pulled[d.to.index()] = Some((r, d.from));
            }
        }
        for a in sim.last_actions() {
            let v = a.caller.index();
            if sim.roles()[v] == Role::Leader {
                panic!("leader {v} called in phase 3");
            }
            if a.push.is_some() {
                pushes[v] += 1;
                if let Some((t, from)) = before[v] {
                    assert_eq!(t + 1, r, "forward happens in the next round");
                    let Target::Stored(w) = a.target else { panic!("push without stored target") };
                    assert_ne!(w, from);
                    assert!(sim.connectors()[v].chosen_leaders().contains(&w));
                    checked += 1;
                }
            } else {
                assert!(!sim.informed()[v] || pulled[v].is_some_and(|(t, _)| t == r));
                assert!(sim.connectors()[v].chosen_len() > 0);
            }
        }
    }
    assert!(pushes.iter().all(|&p| p <= 1));
    assert!(checked > 0);
    for (st, role) in sim.connectors().iter().zip(sim.roles()) {
        if *role == Role::Connector && st.chosen_len() == 0 {
            assert!(matches!(st.phase3, Phase3State::Idle | Phase3State::Done));
            assert_eq!(st.pushes, 0);
        }
    }
}

#[test]
fn non_exact_run_labels_dummy_intervals() {
    let mut cfg = SimConfig::new(64, Mode::Jpp, 4);
    cfg.non_exact = true;
    cfg.rho = 2;
    cfg.c = 1;
    cfg.estimate_spread = 1.5;
    let t = run_protocol(&cfg).unwrap();
    let labels: Vec<PhaseLabel> = t.rows.iter().map(|r| r.phase).collect();
    assert!(labels.iter().any(|l| l.is_dummy()));
    assert_eq!(labels[0], PhaseLabel::Phase0);
    assert!(labels.contains(&PhaseLabel::Phase4));
    assert!(t.outcome.complete);
}

#[test]
fn schedule_too_long_is_a_config_error() {
    let mut cfg = SimConfig::new(1 << 16, Mode::Jpp, 0);
    cfg.non_exact = true;
    cfg.rho = 8;
    assert!(matches!(run_protocol(&cfg), Err(SimError::Config(ConfigError::ScheduleTooLong(_)))));
}

#[test]
fn push_trace_for_two_nodes() {
    let t = run_protocol(&SimConfig::new(2, Mode::Push, 0)).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].informed, 2);
}

#[test]
fn jpp_informs_everyone_at_65536() {
    let t = run_protocol(&SimConfig::new(1 << 16, Mode::Jpp, 1)).unwrap();
    assert_eq!(t.outcome.informed, 65536);
    assert_eq!(t.rounds(), 128);
}

#[test]
fn failed_nodes_neither_act_nor_answer() {
    let mut cfg = SimConfig::new(512, Mode::Jpp, 8);
    cfg.failure_scale = 2.0;
    cfg.failure_timing = FailureTiming::PerRound;
    let mut sim = JppSim::new(&cfg, 0).unwrap();
    assert!(sim.failures().count() > 0);
    while sim.step().unwrap().is_some() {
        let r = sim.round();
        for a in sim.last_actions() {
            assert!(!sim.failures().is_failed(a.caller, r));
        }
        for d in &sim.last_outcome().deliveries {
            assert!(!sim.failures().is_failed(d.from, r));
            assert!(!sim.failures().is_failed(d.to, r));
        }
    }
}
