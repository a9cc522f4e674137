//! Constrained hybrid-action reinforcement learning with a feasibility
//! projection layer, together with a robotic reducer-assembly scheduling
//! simulator, hierarchical baselines and an experiment harness.

pub mod agent;
pub mod baselines;
pub mod constraint;
pub mod env;
pub mod error;
pub mod harness;
pub mod neural;
pub mod projection;

pub use constraint::{Assignment, ConstraintSystem, HybridAction, ProblemScale, Region, State};
pub use error::{Error, Result};
