//! Entry point dispatching on the configured mode.

use crate::error::SimError;
use crate::model::{Mode, NodeId, SimConfig, StartNode};
use crate::rng::RngStream;
use crate::trace::Trace;

/// The node holding the rumor at round 0.
pub fn resolve_start(cfg: &SimConfig) -> NodeId {
    match cfg.start_node {
        StartNode::Fixed(v) => v,
        StartNode::Random => NodeId(RngStream::new(cfg.seed, "start").below(cfg.n)),
    }
}

/// Runs one simulation. `run_id` is copied into the trace.
pub fn run_with_id(cfg: &SimConfig, run_id: u64) -> Result<Trace, SimError> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Jpp => crate::jpp::run_jpp(cfg, run_id),
        Mode::Push => crate::baselines::run_push(cfg, run_id),
        Mode::Pull => crate::baselines::run_pull(cfg, run_id),
        Mode::PushPullMedian => crate::baselines::run_push_pull_median(cfg, run_id),
    }
}

pub fn run_protocol(cfg: &SimConfig) -> Result<Trace, SimError> {
    run_with_id(cfg, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_start_is_in_range_and_seeded() {
        let mut cfg = SimConfig::new(100, Mode::Push, 3);
        cfg.start_node = StartNode::Random;
        let a = resolve_start(&cfg);
        assert!(a.0 < 100);
        assert_eq!(a, resolve_start(&cfg));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SimConfig::new(1, Mode::Jpp, 0);
        assert!(matches!(run_protocol(&cfg), Err(SimError::Config(_))));
    }
}
