//! Node failure assignment: which nodes fail, and from which round on.

use crate::model::{FailureTiming, NodeId, SimConfig};
use crate::rng::RngStream;

/// `failed_at[v] = Some(r)` means node `v` neither acts nor answers in round
/// `r` or later. Round 0 is "before the first round".
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FailureAssignment {
    failed_at: Vec<Option<u32>>,
    count: usize,
}

impl FailureAssignment {
    pub fn none(n: u32) -> Self {
        FailureAssignment { failed_at: vec![None; n as usize], count: 0 }
    }

    pub fn from_rounds(failed_at: Vec<Option<u32>>) -> Self {
        let count = failed_at.iter().filter(|f| f.is_some()).count();
        FailureAssignment { failed_at, count }
    }

    #[inline]
    pub fn is_failed(&self, v: NodeId, round: u32) -> bool {
        matches!(self.failed_at.get(v.index()), Some(Some(r)) if *r <= round)
    }

    pub fn failed_at(&self, v: NodeId) -> Option<u32> {
        self.failed_at.get(v.index()).copied().flatten()
    }

    /// Number of nodes that fail at some point.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn failed_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.failed_at.iter().enumerate().filter(|(_, f)| f.is_some()).map(|(i, _)| NodeId(i as u32))
    }

    /// Clears any failure of `v`.
    pub fn spare(&mut self, v: NodeId) {
        if let Some(slot) = self.failed_at.get_mut(v.index()) {
            if slot.take().is_some() {
                self.count -= 1;
            }
        }
    }
}

/// Marks each node failed independently with probability
/// `cfg.failure_probability()`. Per-round failures pick a uniform round in
/// `1..=total_rounds`.
pub fn sample_failures(cfg: &SimConfig, total_rounds: u32, rng: &mut RngStream) -> FailureAssignment {
    let n = cfg.n;
    if cfg.failure_timing == FailureTiming::None || cfg.failure_scale == 0.0 {
        return FailureAssignment::none(n);
    }
    let p = cfg.failure_probability();
    let span = total_rounds.max(1);
    let failed_at = (0..n)
        .map(|_| {
            if !rng.bernoulli(p) {
                return None;
            }
            Some(match cfg.failure_timing {
                FailureTiming::AtStart => 0,
                FailureTiming::PerRound => 1 + rng.below(span),
                FailureTiming::None => unreachable!(),
            })
        })
        .collect();
    FailureAssignment::from_rounds(failed_at)
}
