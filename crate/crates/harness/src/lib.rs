//! Simulation harness for sharepass: an in-process network with byzantine
//! fault injection, leakage audits, fault-tolerance sweeps and timing runs.

pub mod audit;
pub mod catalog;
pub mod plan;
pub mod scenario;
pub mod simnet;
pub mod sweep;
pub mod timing;

pub use plan::{Action, Behavior, FaultPlan, NodePlan, ReportLie, Scenario, Strategy};
pub use scenario::{run_scenario, Outcome, ScenarioResult, StepResult};
