//! Candidate pseudo-backdoor sampling.
//!
//! Candidates are drawn from the integer variables without replacement, each
//! draw proportional to the variable's root-LP fractionality plus a small
//! floor so that all-integral roots still yield full-size sets.

use std::io::{Read, Write};

use rand::seq::index::sample_weighted;
use serde::{Deserialize, Serialize};

use crate::bnb::PriorityMap;
use crate::error::{Error, Result};
use crate::lp::{fractionality, LpSolution, LpStatus};
use crate::mip::MipInstance;
use crate::seed;

/// Added to every fractionality weight.
pub const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub id: usize,
    pub instance_id: String,
    /// Sorted, distinct variable indices.
    pub vars: Vec<usize>,
    pub source_seed: u64,
}

/// Number of variables in each candidate: `max(1, ceil(fraction * |I|))`.
pub fn candidate_size(num_integer: usize, size_fraction: f64) -> usize {
    // the epsilon keeps exact products such as 0.01 * 1000 from rounding up
    let raw = (size_fraction * num_integer as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(num_integer.max(1))
}

/// Draws `count` index sets of `size` items from `weights`, each set without
/// replacement and proportional to weight. Sets are returned sorted.
pub fn sample_weighted_sets(weights: &[f64], count: usize, size: usize, rng_seed: u64) -> Result<Vec<Vec<usize>>> {
    if weights.is_empty() {
        return Err(Error::EmptyIntegerSet);
    }
    if size == 0 || size > weights.len() {
        return Err(Error::InvalidConfig(format!(
            "set size {size} not in 1..={}",
            weights.len()
        )));
    }
    let mut rng = seed::rng(rng_seed);
    (0..count)
        .map(|_| {
            let picked = sample_weighted(&mut rng, weights.len(), |i| weights[i], size)
                .map_err(|e| Error::InvalidConfig(format!("sampling weights: {e}")))?;
            let mut set = picked.into_vec();
            set.sort_unstable();
            Ok(set)
        })
        .collect()
}

pub fn sample_candidates(
    instance: &MipInstance,
    root_lp: &LpSolution,
    count: usize,
    size_fraction: f64,
    rng_seed: u64,
) -> Result<Vec<CandidateSet>> {
    if instance.integer.is_empty() {
        return Err(Error::EmptyIntegerSet);
    }
    if root_lp.status != LpStatus::Optimal {
        return Err(Error::RootNotOptimal(format!("{:?}", root_lp.status)));
    }
    if !(size_fraction > 0.0 && size_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "size_fraction {size_fraction} not in (0, 1]"
        )));
    }
    let weights: Vec<f64> = instance
        .integer
        .iter()
        .map(|&j| fractionality(root_lp.x[j]) + WEIGHT_FLOOR)
        .collect();
    let size = candidate_size(instance.integer.len(), size_fraction);
    let sets = sample_weighted_sets(&weights, count, size, rng_seed)?;
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(id, positions)| CandidateSet {
            id,
            instance_id: instance.id.clone(),
            vars: positions.into_iter().map(|p| instance.integer[p]).collect(),
            source_seed: rng_seed,
        })
        .collect())
}

/// Priority 1 on the candidate's members and 0 elsewhere.
pub fn priorities_from(candidate: &CandidateSet, n: usize) -> Result<PriorityMap> {
    if candidate.vars.is_empty() {
        return Err(Error::EmptyCandidate);
    }
    if let Some(&bad) = candidate.vars.iter().find(|&&j| j >= n) {
        return Err(Error::ShapeMismatch(format!(
            "candidate variable {bad} out of range for {n} variables"
        )));
    }
    Ok(PriorityMap::from_members(n, &candidate.vars))
}

/// On-disk form of an instance's candidate list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFile {
    pub instance_id: String,
    pub seed: u64,
    pub sets: Vec<Vec<usize>>,
}

impl CandidateFile {
    pub fn from_sets(instance_id: &str, seed: u64, sets: &[CandidateSet]) -> Self {
        Self {
            instance_id: instance_id.to_owned(),
            seed,
            sets: sets.iter().map(|c| c.vars.clone()).collect(),
        }
    }

    pub fn candidates(&self) -> Vec<CandidateSet> {
        self.sets
            .iter()
            .enumerate()
            .map(|(id, vars)| CandidateSet {
                id,
                instance_id: self.instance_id.clone(),
                vars: vars.clone(),
                source_seed: self.seed,
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(&mut writer, self).map_err(Error::from_json)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        serde_json::from_reader(reader).map_err(Error::from_json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::BasisStatus;
    use crate::mip::{generate_gisp, GispConfig};

    fn fake_root(x: Vec<f64>) -> LpSolution {
        let n = x.len();
        LpSolution {
            status: LpStatus::Optimal,
            x,
            duals: vec![],
            basis: vec![BasisStatus::Basic; n],
            objective: 0.0,
            iterations: 0,
        }
    }

    fn binary_instance(n: usize) -> MipInstance {
        MipInstance {
            id: "b".into(),
            objective: vec![1.0; n],
            rows: vec![],
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            integer: (0..n).collect(),
        }
    }

    #[test]
    fn one_percent_of_thousand_is_ten() {
        let inst = binary_instance(1000);
        let root = fake_root((0..1000).map(|i| (i % 7) as f64 / 7.0).collect());
        let sets = sample_candidates(&inst, &root, 50, 0.01, 3).unwrap();
        assert_eq!(sets.len(), 50);
        for s in &sets {
            assert_eq!(s.vars.len(), 10);
            assert!(s.vars.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn integral_root_still_samples_full_sets() {
        let inst = binary_instance(40);
        let root = fake_root(vec![1.0; 40]);
        let sets = sample_candidates(&inst, &root, 200, 0.1, 9).unwrap();
        assert!(sets.iter().all(|s| s.vars.len() == 4));
        let mut seen = [false; 40];
        sets.iter().flat_map(|s| &s.vars).for_each(|&v| seen[v] = true);
        assert!(seen.iter().filter(|&&b| b).count() > 30);
    }

    #[test]
    fn sizes_round_up_with_minimum_one() {
        assert_eq!(candidate_size(38, 0.01), 1);
        assert_eq!(candidate_size(150, 0.01), 2);
        assert_eq!(candidate_size(1000, 0.01), 10);
        assert_eq!(candidate_size(5, 1.0), 5);
    }

    #[test]
    fn members_come_from_integer_set() {
        let mut inst = binary_instance(10);
        inst.integer = vec![1, 4, 6, 9];
        let root = fake_root(vec![0.5; 10]);
        let sets = sample_candidates(&inst, &root, 30, 0.5, 1).unwrap();
        assert!(sets.iter().all(|s| s.vars.iter().all(|v| inst.integer.contains(v))));
    }

    #[test]
    fn deterministic_for_seed() {
        let inst = generate_gisp(&GispConfig {
            removable_fraction: 0.5,
            ..GispConfig::new(12, 0.4, 100.0, 1.0, 2)
        })
        .unwrap();
        let root = crate::lp::solve_lp(&inst, None).unwrap();
        let a = sample_candidates(&inst, &root, 20, 0.1, 77).unwrap();
        let b = sample_candidates(&inst, &root, 20, 0.1, 77).unwrap();
        let c = sample_candidates(&inst, &root, 20, 0.1, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        let mut inst = binary_instance(3);
        inst.integer.clear();
        let root = fake_root(vec![0.5; 3]);
        assert!(matches!(
            sample_candidates(&inst, &root, 1, 0.5, 0),
            Err(Error::EmptyIntegerSet)
        ));
        let inst = binary_instance(3);
        let mut bad = root.clone();
        bad.status = LpStatus::Infeasible;
        assert!(sample_candidates(&inst, &bad, 1, 0.5, 0).is_err());
        assert!(sample_candidates(&inst, &root, 1, 0.0, 0).is_err());
    }

    #[test]
    fn priority_maps() {
        let c = CandidateSet {
            id: 0,
            instance_id: "x".into(),
            vars: vec![2, 5],
            source_seed: 0,
        };
        assert_eq!(priorities_from(&c, 6).unwrap().priority, vec![0, 0, 1, 0, 0, 1]);
        let all = CandidateSet { vars: (0..4).collect(), ..c.clone() };
        assert_eq!(priorities_from(&all, 4).unwrap().priority, vec![1; 4]);
        let empty = CandidateSet { vars: vec![], ..c };
        assert!(matches!(priorities_from(&empty, 6), Err(Error::EmptyCandidate)));
    }

    #[test]
    fn candidate_file_round_trip() {
        let inst = binary_instance(20);
        let root = fake_root(vec![0.3; 20]);
        let sets = sample_candidates(&inst, &root, 5, 0.2, 4).unwrap();
        let file = CandidateFile::from_sets(&inst.id, 4, &sets);
        let mut buf = Vec::new();
        file.write(&mut buf).unwrap();
        let back = CandidateFile::read(buf.as_slice()).unwrap();
        assert_eq!(back.candidates(), sets);
    }
}
