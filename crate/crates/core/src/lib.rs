//! Joint content placement and request routing for hybrid cache networks.
//!
//! Users reach a back-end server over an uncached path, modeled either with
//! a constant delay or as an M/M/1 queue, and may also reach a subset of
//! in-network caches. The crate evaluates the average access delay of a
//! placement and routing, computes optimal routing for a placement, and
//! searches placements with exact, special-case polynomial and greedy
//! solvers. An analytical p-LRU baseline and a discrete-event simulator
//! cover the evaluation side.

pub mod error;
pub mod eval;
pub mod exact;
pub mod exec;
pub mod experiment;
pub mod greedy;
pub mod model;
pub mod plru;
pub mod routing;
pub mod sim;
pub mod solution;
pub mod solve;
pub mod special;
pub mod workload;

pub use error::{Error, Result};
pub use eval::{eval_ci, eval_cs, evaluate, EvaluationReport};
pub use exec::Execution;
pub use model::{Delay, Placement, ProblemInstance, RoutingPolicy, UncachedModel};
pub use solution::Solution;
pub use solve::{solve, Algorithm, SolveOptions, SolveOutput};
