//! Lockstep orchestration of the two controllers.

pub mod fault;
pub mod frame;
pub mod scenario;
pub mod sim;

pub use fault::{Duration, FaultKind, FaultSpec, InjectError};
pub use frame::Frame;
pub use scenario::{run, Scenario, ScenarioError, Trace};
pub use sim::{ResyncResult, Sim, SimConfig, Step, HEARTBEAT_LIMIT};
