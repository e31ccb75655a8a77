//! Connector state for the leader-collection sub-phases and the phase that
//! follows them.

use crate::model::{NodeId, Role};
use crate::rng::RngStream;

/// A connector's pointer within the current sub-phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Ptr {
    /// Reset at sub-phase start: the node answers pointer requests with its
    /// own address.
    #[default]
    Fresh,
    /// Points at `node`; `leader` is set once the node is known to be a
    /// leader, after which the pointer never moves again this sub-phase.
    At { node: NodeId, leader: bool },
    /// The chain went through a failed node; answers nothing.
    Lost,
}

impl Ptr {
    /// Answer to a pointer request, given the callee's round-start pointer.
    pub fn reply(self, me: NodeId) -> Option<(NodeId, bool)> {
        match self {
            Ptr::Fresh => Some((me, false)),
            Ptr::At { node, leader } => Some((node, leader)),
            Ptr::Lost => None,
        }
    }

    pub fn node(self) -> Option<NodeId> {
        match self {
            Ptr::At { node, .. } => Some(node),
            _ => None,
        }
    }

    pub fn at_leader(self) -> bool {
        matches!(self, Ptr::At { leader: true, .. })
    }
}

/// A leader address collected at the end of a sub-phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Collected {
    pub leader: NodeId,
    pub subphase: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Phase3State {
    #[default]
    Idle,
    MustPushTo(NodeId),
    /// Informed but holds no other leader to forward to.
    Done,
}

const MAX_COLLECTED: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConnectorState {
    collected: [Option<Collected>; MAX_COLLECTED],
    chosen: [Option<Collected>; 2],
    pub black_count: u8,
    pub phase3: Phase3State,
    pub pushes: u8,
}

impl ConnectorState {
    pub fn collected(&self) -> impl Iterator<Item = Collected> + '_ {
        self.collected.iter().flatten().copied()
    }

    pub fn collected_len(&self) -> usize {
        self.collected.iter().flatten().count()
    }

    pub fn chosen(&self) -> impl Iterator<Item = Collected> + '_ {
        self.chosen.iter().flatten().copied()
    }

    pub fn chosen_len(&self) -> usize {
        self.chosen.iter().flatten().count()
    }

    pub fn chosen_leaders(&self) -> Vec<NodeId> {
        self.chosen().map(|c| c.leader).collect()
    }

    fn collect(&mut self, item: Collected) {
        if self.collected().any(|c| c.leader == item.leader) {
            return;
        }
        if let Some(slot) = self.collected.iter_mut().find(|s| s.is_none()) {
            *slot = Some(item);
        }
    }

    /// The other chosen leader, if any.
    pub fn other_leader(&self, pulled_from: NodeId) -> Option<NodeId> {
        self.chosen().map(|c| c.leader).find(|&l| l != pulled_from)
    }
}

/// Closes sub-phase `k`: a pointer resting on a confirmed leader is kept
/// (duplicates collapse), anything else counts as a black sub-phase.
pub fn finalize_subphase(state: &mut ConnectorState, ptr: &mut Ptr, k: u8) {
    match *ptr {
        Ptr::At { node, leader: true } => state.collect(Collected { leader: node, subphase: k }),
        _ => state.black_count += 1,
    }
    *ptr = Ptr::Fresh;
}

/// Keeps two distinct collected leaders chosen uniformly at random, or all of
/// them when fewer than two were collected.
pub fn finalize_phase2(state: &mut ConnectorState, rng: &mut RngStream) {
    let items: Vec<Collected> = state.collected().collect();
    state.chosen = [None, None];
    match items.len() {
        0 => {}
        1 => state.chosen[0] = Some(items[0]),
        len => {
            let i = rng.below(len as u32) as usize;
            let mut j = rng.below(len as u32 - 1) as usize;
            if j >= i {
                j += 1;
            }
            state.chosen = [Some(items[i]), Some(items[j])];
        }
    }
}

/// What a pointer request to `callee` returns.
#[inline]
pub fn pointer_answer(callee: NodeId, role: Role, ptr: Ptr) -> Option<(NodeId, bool)> {
    match role {
        Role::Leader => Some((callee, true)),
        Role::Connector => ptr.reply(callee),
    }
}
