//! Opinion dynamics on weighted influence networks.
//!
//! Agents repeatedly average the opinions of those they listen to while
//! anchoring on their own initial view; across a sequence of issues the
//! settled opinions of one issue become the anchors for the next. The crate
//! provides the network model, the within-issue and cross-issue dynamics,
//! structural predicates that decide convergence and consensus ahead of any
//! simulation, a bounded-confidence coupling between issues, and the oracle
//! and verification machinery behind the `opdyn` binary.

pub mod bounded_confidence;
pub mod cli;
pub mod error;
pub mod graph;
pub mod issue_sequence;
pub mod network;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod single_issue;
pub mod verify;

pub use error::{Error, Result};
pub use network::{AgentPartition, InfluenceNetwork};
