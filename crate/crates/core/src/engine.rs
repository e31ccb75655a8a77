//! Synchronous round execution.
//!
//! A round has three steps that the API keeps apart:
//!
//! 1. the protocol declares one [`RoundAction`] per acting node from its
//!    state at the end of the previous round;
//! 2. [`execute_round`] resolves targets, opens channels and asks the
//!    [`Responder`] (a read-only view of round-start state) what each callee
//!    sends back;
//! 3. the protocol applies the returned [`RoundOutcome`].
//!
//! Actions are fixed before any of this round's data exists, so a node's
//! choice of partner can never depend on what it learns in the same round.

use serde::{Deserialize, Serialize};

use crate::error::ProtocolBug;
use crate::failure::FailureAssignment;
use crate::metrics::{Event, Metrics};
use crate::model::NodeId;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    UniformRandom,
    Stored(NodeId),
    NoCall,
}

/// Median-counter state advertised alongside the rumor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CounterTag {
    B(u32),
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    Rumor,
    /// An address; `leader` is set when the sender knows it names a leader.
    Address {
        node: NodeId,
        leader: bool,
    },
    TaggedRumor(CounterTag),
}

/// What a caller asks for over its channel. The callee's answer depends only
/// on its own round-start state and this request kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PullRequest {
    /// Pointer jumping: "send me your current pointer".
    Pointer,
    /// Plain pull of the rumor.
    Rumor,
    /// Median-counter push&pull exchange.
    Exchange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundAction {
    pub caller: NodeId,
    pub target: Target,
    pub push: Option<Payload>,
    pub pull: Option<PullRequest>,
}

impl RoundAction {
    pub fn push(caller: NodeId, target: Target, payload: Payload) -> Self {
        RoundAction { caller, target, push: Some(payload), pull: None }
    }

    pub fn pull(caller: NodeId, target: Target, request: PullRequest) -> Self {
        RoundAction { caller, target, push: None, pull: Some(request) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Pushed,
    Pulled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub from: NodeId,
    pub to: NodeId,
    pub payload: Payload,
    pub direction: Direction,
}

/// An opened channel. `live` is false when the callee was failed; the caller
/// gets no signal of that beyond silence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Channel {
    pub caller: NodeId,
    pub callee: NodeId,
    pub live: bool,
}

pub trait Responder {
    fn respond(&self, callee: NodeId, caller: NodeId, request: PullRequest) -> Option<Payload>;
}

impl<F> Responder for F
where
    F: Fn(NodeId, NodeId, PullRequest) -> Option<Payload>,
{
    fn respond(&self, callee: NodeId, caller: NodeId, request: PullRequest) -> Option<Payload> {
        self(callee, caller, request)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RoundOutcome {
    pub channels: Vec<Channel>,
    pub deliveries: Vec<Delivery>,
}

impl RoundOutcome {
    pub fn clear(&mut self) {
        self.channels.clear();
        self.deliveries.clear();
    }
}

/// Executes one synchronous round.
///
/// `actions` must be sorted by strictly increasing caller id and contain no
/// failed caller. Uniform targets are drawn from `rng` in caller order.
/// Callers with a live callee may receive an answer; a callee may answer any
/// number of incoming channels.
#[allow(clippy::too_many_arguments)]
pub fn execute_round<R: Responder + ?Sized>(
    n: u32,
    actions: &[RoundAction],
    responder: &R,
    failures: &FailureAssignment,
    round: u32,
    rng: &mut RngStream,
    metrics: &mut Metrics,
    out: &mut RoundOutcome,
) -> Result<(), ProtocolBug> {
    out.clear();
    let mut prev: Option<NodeId> = None;
    for action in actions {
        let caller = action.caller;
        if caller.0 >= n {
            return Err(ProtocolBug::OutOfRange { round, caller });
        }
        match prev {
            Some(p) if p == caller => return Err(ProtocolBug::DuplicateCaller { round, caller }),
            Some(p) if p > caller => return Err(ProtocolBug::Unsorted { round, caller }),
            _ => {}
        }
        prev = Some(caller);
        let any_failures = !failures.is_empty();
        if any_failures && failures.is_failed(caller, round) {
            return Err(ProtocolBug::FailedCaller { round, caller });
        }

        let callee = match action.target {
            Target::NoCall => continue,
            Target::UniformRandom => rng.other_node(n, caller),
            Target::Stored(t) => {
                if t == caller {
                    return Err(ProtocolBug::SelfCall { round, caller });
                }
                if t.0 >= n {
                    return Err(ProtocolBug::OutOfRange { round, caller: t });
                }
                t
            }
        };
        metrics.account(Event::Open);
        let live = !any_failures || !failures.is_failed(callee, round);
        out.channels.push(Channel { caller, callee, live });
        if !live {
            continue;
        }
        if let Some(payload) = action.push {
            metrics.account(Event::Deliver(&payload));
            out.deliveries.push(Delivery { from: caller, to: callee, payload, direction: Direction::Pushed });
        }
        if let Some(request) = action.pull {
            if let Some(payload) = responder.respond(callee, caller, request) {
                metrics.account(Event::Deliver(&payload));
                out.deliveries.push(Delivery { from: callee, to: caller, payload, direction: Direction::Pulled });
            }
        }
    }
    Ok(())
}
