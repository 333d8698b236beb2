//! Experiment pipeline: instance presets, solve-record collection, label
//! construction, test-time candidate selection and evaluation.
//!
//! Scores follow the ranking-loss convention: a lower score means the
//! candidate is predicted to solve faster.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backdoor::{priorities_from, sample_candidates, CandidateSet};
use crate::bnb::{solve_mip, BnbConfig, BnbStatus, Measure, PriorityMap};
use crate::error::{Error, Result};
use crate::graph::{encode, BipartiteGraph};
use crate::lp::{solve_lp, LpSolution};
use crate::mip::{generate_gisp, GispConfig, MipInstance};
use crate::neural::tape::sigmoid;
use crate::neural::{LabeledGraph, ModelParams, PairExample};
use crate::seed::{self, derive_seed, Stream};

// ---------------------------------------------------------------------------
// Presets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub num_vertices: usize,
    pub edge_probability: f64,
    pub removable_fraction: f64,
    pub vertex_revenue: f64,
    pub edge_cost: f64,
}

impl Preset {
    pub fn named(name: &str) -> Result<Self> {
        let (num_vertices, edge_probability) = match name {
            "toy" => (15, 0.5),
            "easy" => (25, 0.4),
            "hard" => (35, 0.4),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset {other:?} (expected toy, easy or hard)"
                )))
            }
        };
        Ok(Self {
            name: name.to_owned(),
            num_vertices,
            edge_probability,
            removable_fraction: 0.5,
            vertex_revenue: 100.0,
            edge_cost: 1.0,
        })
    }

    pub fn gisp_config(&self, seed: u64) -> GispConfig {
        GispConfig {
            num_vertices: self.num_vertices,
            edge_probability: self.edge_probability,
            vertex_revenue: self.vertex_revenue,
            edge_cost: self.edge_cost,
            removable_fraction: self.removable_fraction,
            seed,
        }
    }

    /// `count` instances with ids `<preset>-s<seed>-<index>`.
    pub fn generate(&self, count: usize, base_seed: u64) -> Result<Vec<MipInstance>> {
        (0..count)
            .map(|i| {
                let mut inst = generate_gisp(&self.gisp_config(derive_seed(base_seed, Stream::Instance, i as u64)))?;
                inst.id = format!("{}-s{base_seed}-{i:04}", self.name);
                Ok(inst)
            })
            .collect()
    }
}

/// FNV-1a, used to key per-instance random streams by instance id.
fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

// ---------------------------------------------------------------------------
// Solve records

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Default,
    Candidate(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub instance_id: String,
    pub setting: Setting,
    /// Seed of the candidate pool the setting refers to.
    pub seed: u64,
    pub status: BnbStatus,
    pub measure_value: f64,
    pub node_count: usize,
    pub objective: Option<f64>,
}

pub type RecordKey = (String, Setting, u64);

impl SolveRecord {
    pub fn key(&self) -> RecordKey {
        (self.instance_id.clone(), self.setting, self.seed)
    }

    pub fn usable(&self) -> bool {
        self.status == BnbStatus::Optimal
    }
}

/// JSON-lines record store with a single-writer append contract.
#[derive(Debug, Default)]
pub struct RecordStore {
    path: Option<PathBuf>,
    records: Vec<SolveRecord>,
    keys: HashSet<RecordKey>,
}

impl RecordStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates the store at `path`. A trailing line without a
    /// newline is an interrupted write and is dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self {
            path: Some(path.clone()),
            ..Self::default()
        };
        let Ok(file) = File::open(&path) else {
            File::create(&path)?;
            return Ok(store);
        };
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        let mut complete_len = 0u64;
        let mut line_no = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 {
                break;
            }
            line_no += 1;
            if !line.ends_with('\n') {
                warn!("{}: dropping incomplete final line {line_no}", path.display());
                break;
            }
            let record: SolveRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                column: e.column(),
                message: e.to_string(),
            })?;
            store.keys.insert(record.key());
            store.records.push(record);
            complete_len += read as u64;
        }
        let file = OpenOptions::new().write(true).open(&path)?;
        if file.metadata()?.len() != complete_len {
            file.set_len(complete_len)?;
        }
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[SolveRecord] {
        &self.records
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.keys.contains(key)
    }

    /// Appends records whose key is not yet present; returns how many were new.
    pub fn append(&mut self, records: Vec<SolveRecord>) -> Result<usize> {
        let fresh: Vec<_> = records.into_iter().filter(|r| !self.keys.contains(&r.key())).collect();
        if fresh.is_empty() {
            return Ok(0);
        }
        if let Some(path) = &self.path {
            let mut buf = Vec::new();
            for r in &fresh {
                serde_json::to_writer(&mut buf, r).map_err(Error::from_json)?;
                buf.push(b'\n');
            }
            let mut file = OpenOptions::new().append(true).open(path)?;
            file.seek(SeekFrom::End(0))?;
            file.write_all(&buf)?;
            file.flush()?;
        }
        let n = fresh.len();
        for r in fresh {
            self.keys.insert(r.key());
            self.records.push(r);
        }
        Ok(n)
    }
}

// ---------------------------------------------------------------------------
// Collection

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub candidates: usize,
    pub size_fraction: f64,
    pub seed: u64,
    pub bnb: BnbConfig,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            candidates: 50,
            size_fraction: 0.01,
            seed: 0,
            bnb: BnbConfig::default(),
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn candidate_seed(&self, instance_id: &str, stream: Stream) -> u64 {
        derive_seed(self.seed, stream, id_hash(instance_id))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
    }
}

/// An instance with its root relaxation and sampled candidate pool.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub instance: MipInstance,
    pub root: LpSolution,
    pub seed: u64,
    pub candidates: Vec<CandidateSet>,
}

impl PreparedInstance {
    pub fn new(instance: &MipInstance, config: &RunConfig, stream: Stream) -> Result<Self> {
        let root = solve_lp(instance, None)?;
        let seed = config.candidate_seed(&instance.id, stream);
        let candidates = sample_candidates(instance, &root, config.candidates, config.size_fraction, seed)?;
        Ok(Self {
            instance: instance.clone(),
            root,
            seed,
            candidates,
        })
    }

    pub fn graph(&self, candidate: &CandidateSet) -> Result<BipartiteGraph> {
        encode(&self.instance, &self.root, candidate)
    }

    /// Graphs for every candidate, sharing one encoding.
    pub fn graphs(&self) -> Result<Vec<BipartiteGraph>> {
        let base = self.graph(&self.candidates[0])?;
        Ok(self.candidates.iter().map(|c| base.with_candidate(&c.vars)).collect())
    }

    fn solve(&self, setting: Setting, bnb: &BnbConfig) -> Result<SolveRecord> {
        let n = self.instance.num_vars();
        let priorities = match setting {
            Setting::Default => PriorityMap::zeros(n),
            Setting::Candidate(id) => priorities_from(&self.candidates[id], n)?,
        };
        let result = solve_mip(&self.instance, &priorities, bnb)?;
        if result.status != BnbStatus::Optimal {
            warn!("{} {setting:?}: solver stopped with {:?}", self.instance.id, result.status);
        }
        Ok(SolveRecord {
            instance_id: self.instance.id.clone(),
            setting,
            seed: self.seed,
            status: result.status,
            measure_value: result.measure_value,
            node_count: result.node_count,
            objective: result.objective,
        })
    }
}

fn missing_runs(prepared: &PreparedInstance, config: &RunConfig, done: &dyn Fn(&RecordKey) -> bool) -> Result<Vec<SolveRecord>> {
    let settings = std::iter::once(Setting::Default).chain((0..prepared.candidates.len()).map(Setting::Candidate));
    let mut memo: HashMap<&[usize], SolveRecord> = HashMap::new();
    let mut out = Vec::new();
    for setting in settings {
        if done(&(prepared.instance.id.clone(), setting, prepared.seed)) {
            continue;
        }
        let record = match setting {
            Setting::Candidate(id) if config.bnb.measure == Measure::NodeCount => {
                let vars = prepared.candidates[id].vars.as_slice();
                match memo.get(vars) {
                    Some(r) => SolveRecord { setting, ..r.clone() },
                    None => {
                        let r = prepared.solve(setting, &config.bnb)?;
                        memo.insert(vars, r.clone());
                        r
                    }
                }
            }
            _ => prepared.solve(setting, &config.bnb)?,
        };
        out.push(record);
    }
    Ok(out)
}

/// One default run plus one run per candidate for every instance. Records
/// already in `store` are skipped; new ones are appended per instance in
/// instance order, so an interrupted collection resumes to the same file.
/// Returns this split's records in canonical order.
pub fn collect_runs(instances: &[MipInstance], config: &RunConfig, store: &mut RecordStore) -> Result<Vec<SolveRecord>> {
    let pool = config.pool()?;
    let chunk = config.jobs.max(1) * 2;
    for group in instances.chunks(chunk) {
        let results: Vec<Vec<SolveRecord>> = pool.install(|| {
            group
                .par_iter()
                .map(|inst| {
                    let prepared = PreparedInstance::new(inst, config, Stream::Candidates)?;
                    missing_runs(&prepared, config, &|k| store.contains(k))
                })
                .collect::<Result<_>>()
        })?;
        for records in results {
            store.append(records)?;
        }
    }
    let ids: HashSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let mut out: Vec<SolveRecord> = store
        .records()
        .iter()
        .filter(|r| ids.contains(r.instance_id.as_str()))
        .cloned()
        .collect();
    let order: HashMap<&str, usize> = instances.iter().enumerate().map(|(i, x)| (x.id.as_str(), i)).collect();
    out.sort_by_key(|r| (order[r.instance_id.as_str()], r.setting, r.seed));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Labels

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingPair {
    pub instance_id: String,
    pub first: usize,
    pub second: usize,
    /// -1 when `first` solved with the smaller measure.
    pub y: i8,
}

/// `-1` if `m1 < m2`, `+1` if `m1 > m2`, none when equal.
pub fn ranking_label(m1: f64, m2: f64) -> Option<i8> {
    if m1 < m2 {
        Some(-1)
    } else if m1 > m2 {
        Some(1)
    } else {
        None
    }
}

pub const DEFAULT_PAIR_CAP: usize = 300;

fn group_by_instance(records: &[SolveRecord]) -> Vec<(&str, Vec<&SolveRecord>)> {
    let mut order = Vec::new();
    let mut groups: HashMap<&str, Vec<&SolveRecord>> = HashMap::new();
    for r in records {
        let entry = groups.entry(r.instance_id.as_str()).or_insert_with(|| {
            order.push(r.instance_id.as_str());
            Vec::new()
        });
        entry.push(r);
    }
    order
        .into_iter()
        .map(|id| (id, groups.remove(id).expect("grouped")))
        .collect()
}

/// All candidate pairs with distinct measures, per instance, optionally
/// capped by a seeded uniform subsample.
pub fn build_ranking_pairs(records: &[SolveRecord], cap: Option<usize>, pair_seed: u64) -> Vec<RankingPair> {
    let mut out = Vec::new();
    for (id, group) in group_by_instance(records) {
        let mut usable: BTreeMap<usize, f64> = BTreeMap::new();
        for r in group {
            match (r.setting, r.usable()) {
                (Setting::Candidate(c), true) => {
                    usable.insert(c, r.measure_value);
                }
                (Setting::Candidate(c), false) => {
                    warn!("{id}: candidate {c} excluded from labels (status {:?})", r.status)
                }
                _ => {}
            }
        }
        if usable.len() < 2 {
            warn!("{id}: only {} usable candidate runs, no pairs", usable.len());
            continue;
        }
        let entries: Vec<(usize, f64)> = usable.into_iter().collect();
        let mut pairs = Vec::new();
        for (i, &(a, ma)) in entries.iter().enumerate() {
            for &(b, mb) in &entries[i + 1..] {
                if let Some(y) = ranking_label(ma, mb) {
                    pairs.push(RankingPair {
                        instance_id: id.to_owned(),
                        first: a,
                        second: b,
                        y,
                    });
                }
            }
        }
        match cap {
            Some(cap) if pairs.len() > cap => {
                let mut rng = seed::rng(derive_seed(pair_seed, Stream::PairCap, id_hash(id)));
                let mut keep = index::sample(&mut rng, pairs.len(), cap).into_vec();
                keep.sort_unstable();
                out.extend(keep.into_iter().map(|k| pairs[k].clone()));
            }
            _ => out.extend(pairs),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierExample {
    pub instance_id: String,
    pub candidate: usize,
    /// 1 iff the candidate beat the default run.
    pub label: u8,
}

/// Index of the lowest score; ties go to the lowest index.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s < scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Scores every candidate of `prepared` and returns the selected one with
/// all scores.
pub fn select_best_candidate(scorer: &ModelParams, prepared: &PreparedInstance) -> Result<(usize, Vec<f64>)> {
    let graphs = prepared.graphs()?;
    let scores = graphs.iter().map(|g| scorer.forward(g)).collect::<Result<Vec<_>>>()?;
    let best = select_best(&scores).ok_or(Error::EmptyInput("candidate list"))?;
    Ok((best, scores))
}

/// Graphs plus index-based training examples.
#[derive(Debug, Clone)]
pub struct ScorerDataset {
    pub graphs: Vec<BipartiteGraph>,
    pub pairs: Vec<PairExample>,
    pub ranking_pairs: Vec<RankingPair>,
}

#[derive(Debug, Clone)]
pub struct ClassifierDataset {
    pub graphs: Vec<BipartiteGraph>,
    pub examples: Vec<LabeledGraph>,
    pub labels: Vec<ClassifierExample>,
}

fn prepare_all(instances: &[MipInstance], config: &RunConfig, stream: Stream) -> Result<Vec<PreparedInstance>> {
    let pool = config.pool()?;
    pool.install(|| instances.par_iter().map(|i| PreparedInstance::new(i, config, stream)).collect())
}

fn check_seed(prepared: &PreparedInstance, record: &SolveRecord) -> Result<()> {
    if record.seed != prepared.seed {
        return Err(Error::InvalidConfig(format!(
            "{}: record seed {} does not match candidate seed {} (collected with another --seed?)",
            record.instance_id, record.seed, prepared.seed
        )));
    }
    Ok(())
}

/// Ranking pairs for the scorer. Candidates with identical variable sets
/// share one graph.
pub fn build_scorer_dataset(
    instances: &[MipInstance],
    records: &[SolveRecord],
    config: &RunConfig,
    cap: Option<usize>,
) -> Result<ScorerDataset> {
    let ranking_pairs = build_ranking_pairs(records, cap, config.seed);
    if ranking_pairs.is_empty() {
        return Err(Error::EmptyInput("no ranking pairs in the records"));
    }
    let prepared = prepare_all(instances, config, Stream::Candidates)?;
    let by_id: HashMap<&str, &PreparedInstance> = prepared.iter().map(|p| (p.instance.id.as_str(), p)).collect();
    for r in records {
        if let Some(p) = by_id.get(r.instance_id.as_str()) {
            check_seed(p, r)?;
        }
    }

    let mut graphs = Vec::new();
    let mut slots: HashMap<(&str, &[usize]), usize> = HashMap::new();
    let mut base: HashMap<&str, BipartiteGraph> = HashMap::new();
    let mut slot = |id: &str, cand: usize| -> Result<usize> {
        let p = by_id
            .get(id)
            .ok_or_else(|| Error::MissingRun(format!("records mention unknown instance {id}")))?;
        let c = p
            .candidates
            .get(cand)
            .ok_or_else(|| Error::MissingRun(format!("{id}: candidate {cand} not in pool")))?;
        let key = (p.instance.id.as_str(), c.vars.as_slice());
        if let Some(&s) = slots.get(&key) {
            return Ok(s);
        }
        if !base.contains_key(key.0) {
            base.insert(key.0, p.graph(c)?);
        }
        graphs.push(base[key.0].with_candidate(&c.vars));
        slots.insert(key, graphs.len() - 1);
        Ok(graphs.len() - 1)
    };
    let mut pairs = Vec::with_capacity(ranking_pairs.len());
    for rp in &ranking_pairs {
        pairs.push(PairExample {
            first: slot(&rp.instance_id, rp.first)?,
            second: slot(&rp.instance_id, rp.second)?,
            y: rp.y as f64,
        });
    }
    Ok(ScorerDataset {
        graphs,
        pairs,
        ranking_pairs,
    })
}

/// One example per instance: the scorer's pick, labeled by whether it beat
/// the default run in the collected records.
pub fn build_classifier_dataset(
    instances: &[MipInstance],
    records: &[SolveRecord],
    scorer: &ModelParams,
    config: &RunConfig,
) -> Result<ClassifierDataset> {
    let prepared = prepare_all(instances, config, Stream::Candidates)?;
    let mut lookup: HashMap<(&str, Setting), &SolveRecord> = HashMap::new();
    for r in records {
        lookup.insert((r.instance_id.as_str(), r.setting), r);
    }
    let mut graphs = Vec::new();
    let mut examples = Vec::new();
    let mut labels = Vec::new();
    for p in &prepared {
        let id = p.instance.id.as_str();
        let Some(default) = lookup.get(&(id, Setting::Default)) else {
            return Err(Error::MissingRun(format!("{id}: no default run collected")));
        };
        check_seed(p, default)?;
        let (best, _) = select_best_candidate(scorer, p)?;
        let Some(chosen) = lookup.get(&(id, Setting::Candidate(best))) else {
            return Err(Error::MissingRun(format!("{id}: no run for candidate {best}")));
        };
        if !(default.usable() && chosen.usable()) {
            warn!("{id}: excluded from classifier data (statuses {:?}/{:?})", default.status, chosen.status);
            continue;
        }
        let label = u8::from(chosen.measure_value < default.measure_value);
        graphs.push(p.graph(&p.candidates[best])?);
        examples.push(LabeledGraph {
            graph: graphs.len() - 1,
            label: label as f64,
        });
        labels.push(ClassifierExample {
            instance_id: id.to_owned(),
            candidate: best,
            label,
        });
    }
    if examples.is_empty() {
        return Err(Error::EmptyInput("no usable classifier examples"));
    }
    Ok(ClassifierDataset {
        graphs,
        examples,
        labels,
    })
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stdev: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean, sample standard deviation (0 for a single value) and quartiles.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("summary of no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stdev = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        mean,
        stdev,
        p25: percentile(&sorted, 0.25),
        median: percentile(&sorted, 0.5),
        p75: percentile(&sorted, 0.75),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Win,
    Tie,
    Loss,
}

/// Comparison against the default measure; running the default itself is a tie.
pub fn compare(measure: f64, default: f64, ran_default: bool) -> Outcome {
    if ran_default || measure == default {
        Outcome::Tie
    } else if measure < default {
        Outcome::Win
    } else {
        Outcome::Loss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub instance_id: String,
    pub default_measure: f64,
    pub default_status: BnbStatus,
    pub candidate: usize,
    pub candidate_vars: Vec<usize>,
    pub scorer_measure: f64,
    pub scorer_status: BnbStatus,
    pub classifier_probability: f64,
    /// Whether the classifier accepted the scorer's candidate.
    pub accepted: bool,
}

impl EvalInstance {
    pub fn scorer_cls_measure(&self) -> f64 {
        if self.accepted {
            self.scorer_measure
        } else {
            self.default_measure
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub solver: String,
    pub total: f64,
    pub summary: Summary,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub measure: Measure,
    pub rows: Vec<EvalRow>,
    pub instances: Vec<EvalInstance>,
}

fn row(solver: &str, measures: &[f64], outcomes: impl Iterator<Item = Outcome>) -> Result<EvalRow> {
    let (mut wins, mut ties, mut losses) = (0, 0, 0);
    for o in outcomes {
        match o {
            Outcome::Win => wins += 1,
            Outcome::Tie => ties += 1,
            Outcome::Loss => losses += 1,
        }
    }
    Ok(EvalRow {
        solver: solver.to_owned(),
        total: measures.iter().sum(),
        summary: summarize(measures)?,
        wins,
        ties,
        losses,
    })
}

impl EvalReport {
    pub fn from_instances(measure: Measure, instances: Vec<EvalInstance>) -> Result<Self> {
        let default: Vec<f64> = instances.iter().map(|i| i.default_measure).collect();
        let scorer: Vec<f64> = instances.iter().map(|i| i.scorer_measure).collect();
        let gated: Vec<f64> = instances.iter().map(EvalInstance::scorer_cls_measure).collect();
        let rows = vec![
            row("default", &default, instances.iter().map(|_| Outcome::Tie))?,
            row(
                "scorer",
                &scorer,
                instances.iter().map(|i| compare(i.scorer_measure, i.default_measure, false)),
            )?,
            row(
                "scorer+cls",
                &gated,
                instances
                    .iter()
                    .map(|i| compare(i.scorer_cls_measure(), i.default_measure, !i.accepted)),
            )?,
        ];
        Ok(Self {
            measure,
            rows,
            instances,
        })
    }

    pub fn row(&self, solver: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.solver == solver)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut buf = serde_json::to_vec_pretty(self).expect("report serializes");
        buf.push(b'\n');
        buf
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(Error::from_json)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let unit = match self.measure {
            Measure::NodeCount => "nodes",
            Measure::WallSeconds => "seconds",
        };
        let mut out = String::new();
        let _ = writeln!(out, "measure: {unit}, instances: {}", self.instances.len());
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10}   win / tie / loss",
            "solver", "mean", "stdev", "25 pct", "median", "75 pct"
        );
        for r in &self.rows {
            let s = &r.summary;
            let _ = writeln!(
                out,
                "{:<12} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2}   {} / {} / {}",
                r.solver, s.mean, s.stdev, s.p25, s.median, s.p75, r.wins, r.ties, r.losses
            );
        }
        out
    }
}

/// Runs default, scorer and scorer+classifier on each test instance, with
/// candidates drawn from the held-out test stream.
pub fn evaluate(
    instances: &[MipInstance],
    scorer: &ModelParams,
    classifier: &ModelParams,
    config: &RunConfig,
) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::EmptyInput("test split"));
    }
    let pool = config.pool()?;
    let rows: Vec<EvalInstance> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| {
                let prepared = PreparedInstance::new(inst, config, Stream::TestCandidates)?;
                let default = prepared.solve(Setting::Default, &config.bnb)?;
                let (best, _) = select_best_candidate(scorer, &prepared)?;
                let chosen = prepared.solve(Setting::Candidate(best), &config.bnb)?;
                let graph = prepared.graph(&prepared.candidates[best])?;
                let probability = sigmoid(classifier.forward(&graph)?);
                Ok(EvalInstance {
                    instance_id: inst.id.clone(),
                    default_measure: default.measure_value,
                    default_status: default.status,
                    candidate: best,
                    candidate_vars: prepared.candidates[best].vars.clone(),
                    scorer_measure: chosen.measure_value,
                    scorer_status: chosen.status,
                    classifier_probability: probability,
                    accepted: probability > 0.5,
                })
            })
            .collect::<Result<_>>()
    })?;
    EvalReport::from_instances(config.bnb.measure, rows)
}
