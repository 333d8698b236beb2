//! Learning pseudo-backdoors for mixed integer programs.
//!
//! The crate bundles everything needed to study branching-priority
//! pseudo-backdoors end to end: a MIP model with a GISP generator, a
//! bounded-variable simplex, a priority-aware branch-and-bound solver, a
//! fractionality-weighted candidate sampler, the bipartite graph encoding,
//! a from-scratch graph attention network with its training loops, and the
//! experiment pipeline that ties them together.

pub mod backdoor;
pub mod bnb;
pub mod error;
pub mod graph;
pub mod lp;
pub mod mip;
pub mod neural;
pub mod pipeline;
pub mod seed;

pub use backdoor::{priorities_from, sample_candidates, CandidateFile, CandidateSet};
pub use bnb::{solve_mip, BnbConfig, BnbResult, BnbStatus, Measure, PriorityMap};
pub use error::{Error, Result};
pub use graph::{encode, BipartiteGraph};
pub use lp::{fractionality, solve_lp, LpSolution, LpStatus};
pub use mip::{generate_gisp, read_instance, write_instance, GispConfig, MipInstance, Row, Sense};
pub use neural::{ModelParams, TrainConfig};
pub use pipeline::{EvalReport, RankingPair, SolveRecord};
