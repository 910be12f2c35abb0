//! Affinity-aware function scheduling for serverless platforms.
//!
//! - [`dsl`]: the policy language (parse, print, lint).
//! - [`cluster`]: registry, cluster configuration and live activity tables.
//! - [`scheduler`]: worker selection under a policy.
//! - [`sim`]: a deterministic discrete-event simulator of a multi-zone
//!   cluster running divide/impera workloads over eventually-consistent
//!   storage.
//! - [`scenario`]: bundled configurations and scripts.

pub mod cluster;
pub mod dsl;
pub mod ids;
pub mod scenario;
pub mod scheduler;
pub mod sim;

pub use ids::{ActivationId, FunctionId, TagId, WorkerId, ZoneId};
