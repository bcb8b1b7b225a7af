//! Long-running sharepass daemons: dealer, shareholder, service and logger
//! served over length-prefixed TCP with file-backed stores.

pub mod config;
pub mod server;
pub mod sink;

pub use config::{NodeConfig, Role};
pub use server::{bind, run_node, serve, NodeError, RunningNode};
