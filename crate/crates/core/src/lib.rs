//! Adaptive CSMA scheduling and congestion control on conflict graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`conflict_graph`] enumerates the feasible schedule set and decides
//!   admissibility of arrival-rate vectors against the capacity region.
//! * [`gibbs`] holds the exact product-form computations: partition function,
//!   service rates, the concave objective and its fixed point.
//! * [`chain`] simulates the continuous-time CSMA chain and builds the discrete
//!   Glauber kernel together with its mixing diagnostics.
//! * [`traffic`] samples arrivals and integrates queues exactly.
//! * [`scheduler`] and [`congestion`] implement the epoch update rules.
//! * [`sim`] orchestrates whole experiments and streams metrics.

pub mod chain;
pub mod conflict_graph;
pub mod congestion;
mod error;
pub mod gibbs;
pub mod scheduler;
pub mod seeding;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};

pub use conflict_graph::{
    enumerate_independent_sets, is_strictly_admissible, max_weight_independent_set,
    Admissibility, ConflictGraph, IndependentSetFamily, RateVector, Schedule,
};
pub use gibbs::{BackoffVector, GibbsDistribution};
