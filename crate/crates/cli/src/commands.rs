use std::fs;
use std::path::{Path, PathBuf};

use backdoor_core::bnb::{BnbConfig, Measure, PriorityMap};
use backdoor_core::mip::instance_to_bytes;
use backdoor_core::neural::{
    classification_accuracy, ranking_accuracy, train_classifier as fit_classifier, train_scorer as fit_scorer,
    HyperParams, ModelParams, TrainConfig, TrainOutcome,
};
use backdoor_core::pipeline::{
    build_classifier_dataset, build_scorer_dataset, collect_runs, evaluate as run_evaluation, EvalReport,
    PreparedInstance, Preset, RecordStore, RunConfig, SolveRecord,
};
use backdoor_core::seed::Stream;
use backdoor_core::{priorities_from, read_instance, solve_mip, CandidateFile, MipInstance};
use log::info;
use serde_json::json;

use crate::failure::{AtPath, CliResult, Failure};
use crate::{
    CandidateArgs, CollectArgs, EvaluateArgs, GenArgs, RecordArgs, ReportArgs, SampleArgs, SolveArgs, SolverArgs,
    TrainArgs, TrainClassifierArgs, TrainScorerArgs,
};

pub struct Context {
    pub data: PathBuf,
    pub force: bool,
}

impl Context {
    /// Writes `bytes` unless the file already holds them. Differing content
    /// is a conflict unless `--force` was given. Returns whether it wrote.
    fn write_output(&self, path: &Path, bytes: &[u8]) -> CliResult<bool> {
        if let Ok(existing) = fs::read(path) {
            if existing == bytes {
                info!("{} unchanged", path.display());
                return Ok(false);
            }
            if !self.force {
                return Err(Failure::conflict(path));
            }
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).at(parent)?;
        }
        fs::write(path, bytes).at(path)?;
        Ok(true)
    }

    fn default_dir(&self, kind: &str, name: &str) -> PathBuf {
        self.data.join(kind).join(name)
    }
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instances".to_owned())
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::new("io", crate::failure::EXIT_IO, "file not found").at(path))
    }
}

fn read_instance_file(path: &Path) -> CliResult<MipInstance> {
    let file = fs::File::open(path).at(path)?;
    read_instance(file).at(path)
}

/// Every `*.json` instance in `dir`, in file-name order.
fn read_instances(dir: &Path) -> CliResult<Vec<MipInstance>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::invalid("no instance files (*.json) found").at(dir));
    }
    paths.iter().map(|p| read_instance_file(p)).collect()
}

fn read_model(path: &Path) -> CliResult<ModelParams> {
    let file = fs::File::open(path).at(path)?;
    ModelParams::read(file).at(path)
}

fn read_records(path: &Path, instances: &[MipInstance]) -> CliResult<Vec<SolveRecord>> {
    require_file(path)?;
    let store = RecordStore::open(path).at(path)?;
    let ids: std::collections::HashSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    Ok(store
        .records()
        .iter()
        .filter(|r| ids.contains(r.instance_id.as_str()))
        .cloned()
        .collect())
}

fn bnb_config(args: &SolverArgs) -> CliResult<BnbConfig> {
    if args.node_limit == 0 {
        return Err(Failure::invalid("--node-limit must be at least 1"));
    }
    Ok(BnbConfig {
        node_limit: args.node_limit,
        wall_time_limit: args.time_limit,
        measure: if args.wall_seconds {
            Measure::WallSeconds
        } else {
            Measure::NodeCount
        },
        ..BnbConfig::default()
    })
}

fn run_config(run: &CandidateArgs, solver: &SolverArgs, jobs: usize) -> CliResult<RunConfig> {
    Ok(RunConfig {
        candidates: run.candidates,
        size_fraction: run.fraction,
        seed: run.seed,
        bnb: bnb_config(solver)?,
        jobs,
    })
}

fn record_config(args: &RecordArgs) -> RunConfig {
    RunConfig {
        candidates: args.candidates,
        size_fraction: args.fraction,
        seed: args.collect_seed,
        ..RunConfig::default()
    }
}

fn train_config(args: &TrainArgs, base: TrainConfig) -> TrainConfig {
    TrainConfig {
        margin: args.margin,
        learning_rate: args.learning_rate.unwrap_or(base.learning_rate),
        epochs: args.epochs.unwrap_or(base.epochs),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        seed: args.seed,
        hyper: HyperParams {
            hidden: args.hidden,
            heads: args.heads,
            rounds: args.rounds,
            ..HyperParams::default()
        },
    }
}

/// Skip-or-verify for model outputs: an existing file is kept unless
/// `--force` asks for retraining.
fn skip_existing(ctx: &Context, out: &Path) -> bool {
    if out.exists() && !ctx.force {
        print_json(json!({ "skipped": out.display().to_string(), "reason": "output exists" }));
        return true;
    }
    false
}

fn save_model(ctx: &Context, out: &Path, outcome: &TrainOutcome, history: Option<&Path>) -> CliResult<()> {
    ctx.write_output(out, &outcome.params.to_bytes())?;
    if let Some(h) = history {
        let mut bytes = serde_json::to_vec_pretty(&outcome.history).expect("history serializes");
        bytes.push(b'\n');
        ctx.write_output(h, &bytes)?;
    }
    Ok(())
}

pub fn gen_instances(ctx: &Context, args: GenArgs) -> CliResult {
    let preset = Preset::named(&args.preset)?;
    let out = args
        .out
        .unwrap_or_else(|| ctx.default_dir("instances", &format!("{}-s{}", args.preset, args.seed)));
    let instances = preset.generate(args.count, args.seed)?;
    let mut written = 0;
    for inst in &instances {
        if ctx.write_output(&out.join(format!("{}.json", inst.id)), &instance_to_bytes(inst))? {
            written += 1;
        }
    }
    print_json(json!({
        "dir": out.display().to_string(),
        "instances": instances.len(),
        "written": written,
    }));
    Ok(())
}

pub fn solve(_ctx: &Context, args: SolveArgs) -> CliResult {
    let instance = read_instance_file(&args.instance)?;
    let n = instance.num_vars();
    let priorities = if let Some(path) = &args.priorities {
        let text = fs::read_to_string(path).at(path)?;
        let map: PriorityMap = serde_json::from_str(&text)
            .map_err(|e| Failure::new("parse", crate::failure::EXIT_PARSE, e.to_string()).at(path))?;
        if map.len() != n {
            return Err(Failure::invalid(format!("{} priorities for {n} variables", map.len())).at(path));
        }
        map
    } else if let (Some(path), Some(id)) = (&args.candidates, args.candidate_id) {
        let file = CandidateFile::read(fs::File::open(path).at(path)?).at(path)?;
        if file.instance_id != instance.id {
            return Err(Failure::invalid(format!(
                "candidate file is for {}, instance is {}",
                file.instance_id, instance.id
            ))
            .at(path));
        }
        let sets = file.candidates();
        let candidate = sets
            .get(id)
            .ok_or_else(|| Failure::invalid(format!("candidate {id} not in file ({} sets)", sets.len())).at(path))?;
        priorities_from(candidate, n)?
    } else {
        PriorityMap::zeros(n)
    };
    let result = solve_mip(&instance, &priorities, &bnb_config(&args.solver)?)?;
    if let Some(path) = &args.run_log {
        let mut buf = Vec::new();
        result.write_run_log(&mut buf)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).at(parent)?;
        }
        fs::write(path, buf).at(path)?;
    }
    print_json(json!({
        "instance_id": instance.id,
        "status": result.status,
        "objective": result.objective,
        "best_bound": result.best_bound,
        "node_count": result.node_count,
        "measure_value": result.measure_value,
    }));
    Ok(())
}

pub fn sample(ctx: &Context, args: SampleArgs) -> CliResult {
    let instances = read_instances(&args.run.instances)?;
    let config = run_config(&args.run, &SolverArgs::default_limits(), 1)?;
    let out = args
        .out
        .unwrap_or_else(|| ctx.default_dir("candidates", &dir_name(&args.run.instances)));
    for inst in &instances {
        let prepared = PreparedInstance::new(inst, &config, Stream::Candidates)?;
        let file = CandidateFile::from_sets(&inst.id, prepared.seed, &prepared.candidates);
        let mut bytes = Vec::new();
        file.write(&mut bytes)?;
        ctx.write_output(&out.join(format!("{}.json", inst.id)), &bytes)?;
    }
    print_json(json!({ "dir": out.display().to_string(), "instances": instances.len() }));
    Ok(())
}

pub fn collect(ctx: &Context, args: CollectArgs) -> CliResult {
    let instances = read_instances(&args.run.instances)?;
    let config = run_config(&args.run, &args.solver, args.jobs)?;
    let path = args.records.unwrap_or_else(|| {
        ctx.data
            .join("records")
            .join(format!("{}.jsonl", dir_name(&args.run.instances)))
    });
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    let mut store = RecordStore::open(&path).at(&path)?;
    let before = store.records().len();
    let records = collect_runs(&instances, &config, &mut store).at(&path)?;
    print_json(json!({
        "records": path.display().to_string(),
        "split_records": records.len(),
        "new": store.records().len() - before,
    }));
    Ok(())
}

pub fn train_scorer(ctx: &Context, args: TrainScorerArgs) -> CliResult {
    if skip_existing(ctx, &args.out) {
        return Ok(());
    }
    let instances = read_instances(&args.data.instances)?;
    let records = read_records(&args.data.records, &instances)?;
    let cap = (args.pair_cap > 0).then_some(args.pair_cap);
    let data = build_scorer_dataset(&instances, &records, &record_config(&args.data), cap)?;
    let outcome = fit_scorer(&data.graphs, &data.pairs, &train_config(&args.train, TrainConfig::default()))?;
    let accuracy = ranking_accuracy(&outcome.params, &data.graphs, &data.pairs)?;
    save_model(ctx, &args.out, &outcome, args.train.history.as_deref())?;
    print_json(json!({
        "out": args.out.display().to_string(),
        "pairs": data.pairs.len(),
        "graphs": data.graphs.len(),
        "final_loss": outcome.history.last().map(|h| h.loss),
        "train_accuracy": accuracy,
    }));
    Ok(())
}

pub fn train_classifier(ctx: &Context, args: TrainClassifierArgs) -> CliResult {
    if skip_existing(ctx, &args.out) {
        return Ok(());
    }
    let scorer = read_model(&args.scorer)?;
    let instances = read_instances(&args.data.instances)?;
    let records = read_records(&args.data.records, &instances)?;
    let data = build_classifier_dataset(&instances, &records, &scorer, &record_config(&args.data))?;
    let outcome = fit_classifier(&data.graphs, &data.examples, &train_config(&args.train, TrainConfig::classifier()))?;
    let accuracy = classification_accuracy(&outcome.params, &data.graphs, &data.examples)?;
    save_model(ctx, &args.out, &outcome, args.train.history.as_deref())?;
    let positives = data.labels.iter().filter(|l| l.label == 1).count();
    print_json(json!({
        "out": args.out.display().to_string(),
        "examples": data.examples.len(),
        "positive": positives,
        "final_loss": outcome.history.last().map(|h| h.loss),
        "train_accuracy": accuracy,
    }));
    Ok(())
}

pub fn evaluate(ctx: &Context, args: EvaluateArgs) -> CliResult {
    let scorer = read_model(&args.scorer)?;
    let classifier = read_model(&args.classifier)?;
    let instances = read_instances(&args.run.instances)?;
    let config = run_config(&args.run, &args.solver, args.jobs)?;
    let report = run_evaluation(&instances, &scorer, &classifier, &config)?;
    ctx.write_output(&args.out, &report.to_json())?;
    let table = report.to_table();
    ctx.write_output(&args.out.with_extension("txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

pub fn report(_ctx: &Context, args: ReportArgs) -> CliResult {
    let bytes = fs::read(&args.report).at(&args.report)?;
    let report = EvalReport::from_json(&bytes).at(&args.report)?;
    if args.json {
        print!("{}", String::from_utf8(report.to_json()).expect("utf-8 json"));
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

impl SolverArgs {
    fn default_limits() -> Self {
        Self {
            node_limit: BnbConfig::default().node_limit,
            time_limit: None,
            wall_seconds: false,
        }
    }
}
