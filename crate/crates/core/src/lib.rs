//! Simulator for rumor spreading in the random phone call model: the
//! Jumping-Push-Pull protocol, reference push/pull/median-counter protocols,
//! structural analysis of the pointer graphs, and trace output.

pub mod analysis;
pub mod baselines;
pub mod engine;
pub mod error;
pub mod failure;
pub mod io;
pub mod jpp;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sim;
pub mod trace;

pub use error::{ConfigError, IoError, ProtocolBug, SimError};
pub use model::{FailureTiming, Mode, NodeId, Role, SimConfig, StartNode};
pub use sim::{run_protocol, run_with_id};
pub use trace::{PhaseLabel, Trace, TraceRow};
