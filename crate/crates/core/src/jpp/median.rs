//! Median-counter push&pull termination.
//!
//! States `A` (uninformed), `B(1..=ctr_max)`, `C(remaining)` and `D`. Nodes
//! in `B` or `C` send the rumor, tagged with their state, over every channel
//! they take part in; `D` nodes are silent and place no calls.

use crate::engine::{CounterTag, Payload, PullRequest, RoundAction, RoundOutcome, Target};
use crate::model::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McState {
    A,
    B(u32),
    C(u32),
    D,
}

impl McState {
    pub fn tag(self) -> Option<CounterTag> {
        match self {
            McState::B(i) => Some(CounterTag::B(i)),
            McState::C(_) => Some(CounterTag::C),
            McState::A | McState::D => None,
        }
    }

    /// Position in the forward-only order A < B1 < … < B_ctrmax < C < D.
    pub fn rank(self, ctr_max: u32) -> u32 {
        match self {
            McState::A => 0,
            McState::B(i) => i,
            McState::C(_) => ctr_max + 1,
            McState::D => ctr_max + 2,
        }
    }

    pub fn has_rumor(self) -> bool {
        !matches!(self, McState::A)
    }
}

/// What a node observed about its partners in one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub from_b: bool,
    pub from_c: bool,
    /// Partners in `B(j)` with `j ≥ i`.
    pub higher: u32,
    /// Partners in `A` or `B(j')` with `j' < i`.
    pub lower: u32,
}

impl Tally {
    /// Records a partner tag, seen by a node currently in `own`.
    pub fn observe(&mut self, own: McState, tag: CounterTag) {
        match tag {
            CounterTag::C => self.from_c = true,
            CounterTag::B(j) => {
                self.from_b = true;
                if let McState::B(i) = own {
                    if j >= i {
                        self.higher += 1;
                    } else {
                        self.lower += 1;
                    }
                }
            }
        }
    }

    /// Records a silent incoming caller, i.e. a partner in state `A`.
    pub fn observe_uninformed(&mut self) {
        self.lower += 1;
    }
}

/// One node's transition at the end of a round.
pub fn transition(state: McState, tally: &Tally, ctr_max: u32) -> McState {
    match state {
        McState::A if tally.from_c => McState::C(ctr_max),
        McState::A if tally.from_b => McState::B(1),
        McState::A => McState::A,
        McState::B(_) if tally.from_c => McState::C(ctr_max),
        McState::B(i) if tally.higher > tally.lower => {
            if i >= ctr_max {
                McState::C(ctr_max)
            } else {
                McState::B(i + 1)
            }
        }
        b @ McState::B(_) => b,
        McState::C(r) if r <= 1 => McState::D,
        McState::C(r) => McState::C(r - 1),
        McState::D => McState::D,
    }
}

/// Push&pull action of a node in state `s`; `None` for `D`.
pub fn action(v: NodeId, s: McState) -> Option<RoundAction> {
    match s {
        McState::D => None,
        _ => Some(RoundAction {
            caller: v,
            target: Target::UniformRandom,
            push: s.tag().map(Payload::TaggedRumor),
            pull: Some(PullRequest::Exchange),
        }),
    }
}

/// Answer to an exchange request.
pub fn reply(s: McState) -> Option<Payload> {
    s.tag().map(Payload::TaggedRumor)
}

/// Builds per-node tallies from a round's outcome. `participates(v)` says
/// whether `v` runs the counter this round; `state(v)` is its round-start
/// state. Returns the nodes that received the rumor.
pub fn tally_round(
    actions: &[RoundAction],
    outcome: &RoundOutcome,
    tallies: &mut [Tally],
    participates: impl Fn(NodeId) -> bool,
    state: impl Fn(NodeId) -> McState,
) {
    let calls = actions.iter().filter(|a| a.target != Target::NoCall);
    for (a, ch) in calls.zip(&outcome.channels) {
        debug_assert_eq!(a.caller, ch.caller);
        if ch.live && a.pull == Some(PullRequest::Exchange) && a.push.is_none() && participates(ch.callee) {
            tallies[ch.callee.index()].observe_uninformed();
        }
    }
    for d in &outcome.deliveries {
        if let Payload::TaggedRumor(tag) = d.payload {
            if participates(d.to) {
                let own = state(d.to);
                tallies[d.to.index()].observe(own, tag);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tally_of(own: McState, partners: &[McState]) -> Tally {
        let mut t = Tally::default();
        for p in partners {
            match p.tag() {
                Some(tag) => t.observe(own, tag),
                None => t.observe_uninformed(),
            }
        }
        t
    }

    #[test]
    fn b1_with_two_b1_and_one_a_advances() {
        let t = tally_of(McState::B(1), &[McState::B(1), McState::B(1), McState::A]);
        assert_eq!(transition(McState::B(1), &t, 6), McState::B(2));
    }

    #[test]
    fn b2_with_single_lower_partner_stays() {
        let t = tally_of(McState::B(2), &[McState::B(1)]);
        assert_eq!(transition(McState::B(2), &t, 6), McState::B(2));
    }

    #[test]
    fn ties_do_not_advance() {
        let t = tally_of(McState::B(2), &[McState::B(3), McState::A]);
        assert_eq!(transition(McState::B(2), &t, 6), McState::B(2));
    }

    #[test]
    fn contact_with_c_switches_to_c() {
        let t = tally_of(McState::A, &[McState::B(1), McState::C(2)]);
        assert_eq!(transition(McState::A, &t, 6), McState::C(6));
        let t = tally_of(McState::B(4), &[McState::C(1)]);
        assert_eq!(transition(McState::B(4), &t, 6), McState::C(6));
    }

    #[test]
    fn a_from_b_only_becomes_b1() {
        let t = tally_of(McState::A, &[McState::B(3)]);
        assert_eq!(transition(McState::A, &t, 6), McState::B(1));
        let t = tally_of(McState::A, &[McState::A]);
        assert_eq!(transition(McState::A, &t, 6), McState::A);
    }

    #[test]
    fn top_counter_moves_to_c() {
        let t = tally_of(McState::B(6), &[McState::B(6)]);
        assert_eq!(transition(McState::B(6), &t, 6), McState::C(6));
    }

    #[test]
    fn c_counts_down_to_d() {
        let mut s = McState::C(3);
        let t = Tally::default();
        let mut rounds = 0;
        while s != McState::D {
            s = transition(s, &t, 3);
            rounds += 1;
        }
        assert_eq!(rounds, 3);
        assert_eq!(transition(McState::D, &tally_of(McState::D, &[McState::C(1)]), 3), McState::D);
    }

    #[test]
    fn d_is_silent() {
        assert!(action(NodeId(0), McState::D).is_none());
        assert!(reply(McState::D).is_none());
        assert!(reply(McState::A).is_none());
        let a = action(NodeId(0), McState::A).unwrap();
        assert!(a.push.is_none());
        assert_eq!(reply(McState::B(2)), Some(Payload::TaggedRumor(CounterTag::B(2))));
    }

    #[test]
    fn ranks_are_ordered() {
        let order = [McState::A, McState::B(1), McState::B(2), McState::C(1), McState::D];
        let ranks: Vec<_> = order.iter().map(|s| s.rank(2)).collect();
        assert!(ranks.windows(2).all(|w| w[0] < w[1]));
    }
}
