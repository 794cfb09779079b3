//! Discrete-event simulation and analysis of partial fork-join service systems
//! with replication and random server slowdowns.
//!
//! A job consists of `k` identical tasks encoded into `r >= k` same-size
//! replicas; the job finishes when any `k` replicas complete. Replica service
//! times are `x * (1 + S)`, where `x` is the task size and `S` a random
//! slowdown. The crate provides:
//!
//! - [`model`]: system parameters, task-size distributions, slowdown models,
//!   and order-statistic arithmetic shared by everything else.
//! - [`engine`]: a deterministic event-driven simulator with any-k-of-r
//!   completion, cancellation, and per-job delay decomposition.
//! - [`policies`]: the dispatching/replication policies (uniform baseline,
//!   batch idle-server dispatch with early cancellation, large/small pool
//!   dispatch, and their size-based variants).
//! - [`analytics`]: closed-form delay bounds, asymptotic service times, and
//!   batch-means output analysis.
//! - [`optimizer`]: the size-based replication-profile solver (scalar dual
//!   search plus per-size argmin scans).

pub mod analytics;
pub mod engine;
mod error;
pub mod model;
pub mod optimizer;
pub mod policies;

pub use error::{Error, Result};
