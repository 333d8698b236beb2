//! Shared fixtures for the benchmarks.

use backdoor_core::lp::LpSolution;
use backdoor_core::pipeline::Preset;
use backdoor_core::{encode, sample_candidates, solve_lp, BipartiteGraph, CandidateSet, MipInstance};

pub struct Fixture {
    pub instance: MipInstance,
    pub root: LpSolution,
    pub candidates: Vec<CandidateSet>,
    pub graph: BipartiteGraph,
}

/// First instance of a preset with its root LP, ten sampled candidates and
/// the graph of the first one.
pub fn fixture(preset: &str) -> Fixture {
    let instance = Preset::named(preset)
        .and_then(|p| p.generate(1, 7))
        .expect("preset generates")
        .remove(0);
    let root = solve_lp(&instance, None).expect("root LP solves");
    let candidates = sample_candidates(&instance, &root, 10, 0.05, 7).expect("candidates");
    let graph = encode(&instance, &root, &candidates[0]).expect("graph encodes");
    Fixture {
        instance,
        root,
        candidates,
        graph,
    }
}
