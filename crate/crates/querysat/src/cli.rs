//! Command-line interface.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use querysat_core::generators::{GenSpec, Task};
use querysat_core::loss::GradientMode;
use querysat_core::model::{Architecture, Model, ModelConfig, NoiseSchedule};
use querysat_core::probe::{probe, summarize, ProbeSummary};
use querysat_core::solvers::{GsatBudget, DEFAULT_DECISION_BUDGET};
use querysat_core::theorem::{build_identifying_query, decode_formula, rational_clause_losses, verify_theorem1_exhaustive};
use querysat_core::train::{evaluate, TrainConfig, Trainer};
use querysat_core::{CnfFormula, FactorGraph};
use serde::Serialize;
use serde_json::json;

use crate::bench::{cactus, cactus_json, run_bench, solve_one, BenchStatus, Solver};
use crate::checkpoint::Checkpoint;
use crate::dataset::{gen_dataset, Dataset};
use crate::dimacs::read_dimacs;
use crate::stamp::{write_stamp, Clock};

#[derive(Debug, Parser)]
#[command(name = "querysat", version, about = "Query-based neural SAT solving lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset of satisfiable instances.
    Generate(GenerateArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Solve a single DIMACS file.
    Solve(SolveArgs),
    /// Benchmark solvers and write cactus-plot data.
    Bench(BenchArgs),
    /// Query introspection over a trail of checkpoints.
    Probe(ProbeArgs),
    /// Exact-arithmetic loss constructions.
    #[command(subcommand)]
    Theorem(TheoremCommand),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long)]
    pub min_size: usize,
    #[arg(long)]
    pub max_size: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Branching decisions allowed to the satisfiability filter per candidate.
    #[arg(long, default_value_t = DEFAULT_DECISION_BUDGET)]
    pub decision_budget: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GradModeArg {
    ClauseSum,
    Log,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    PerStep,
    PerPass,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "querysat", value_parser = parse_arch)]
    pub arch: Architecture,
    #[arg(long, default_value_t = 128)]
    pub feature_maps: usize,
    #[arg(long, default_value_t = 4)]
    pub noise_dims: usize,
    #[arg(long, default_value_t = 8)]
    pub assignments: usize,
    #[arg(long, default_value_t = 0.2)]
    pub grad_scale_alpha: f32,
    #[arg(long, value_enum, default_value = "clause-sum")]
    pub query_grad_mode: GradModeArg,
    #[arg(long, value_enum, default_value = "per-step")]
    pub noise: NoiseArg,
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    Architecture::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Architecture::ALL.iter().map(|a| a.name()).collect();
        format!("unknown architecture {s:?} (expected one of {})", names.join(", "))
    })
}

impl ModelArgs {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            architecture: self.arch,
            feature_maps: self.feature_maps,
            noise_dims: self.noise_dims,
            assignments: self.assignments,
            grad_scale_alpha: self.grad_scale_alpha,
            query_grad_mode: match self.query_grad_mode {
                GradModeArg::ClauseSum => GradientMode::ClauseSum,
                GradModeArg::Log => GradientMode::Log,
            },
            noise_schedule: match self.noise {
                NoiseArg::PerStep => NoiseSchedule::PerStep,
                NoiseArg::PerPass => NoiseSchedule::PerPass,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f32,
    #[arg(long, default_value_t = 32)]
    pub train_steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u64,
    #[arg(long, default_value_t = 20_000)]
    pub node_budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub validation_interval: u64,
    #[arg(long, default_value_t = 64)]
    pub validation_steps: usize,
    /// Also save a checkpoint every this many iterations (0: final only).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Continue from a training checkpoint; model and training settings come from it.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "wall")]
    pub clock: Clock,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long, default_value_t = 20_000)]
    pub node_budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "wall")]
    pub clock: Clock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Querysat,
    Gsat,
    Dpll,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Checkpoint for the neural solver.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Recurrent step limit for the neural solver.
    #[arg(long, default_value_t = 1024)]
    pub steps: usize,
    #[arg(long, default_value_t = GsatBudget::default().max_flips)]
    pub max_flips: u64,
    #[arg(long, default_value_t = GsatBudget::default().max_tries)]
    pub max_tries: u64,
    #[arg(long, default_value_t = DEFAULT_DECISION_BUDGET)]
    pub decision_budget: u64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub formula: PathBuf,
    #[arg(long, value_enum, default_value = "dpll")]
    pub solver: SolverArg,
    #[command(flatten)]
    pub limits: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `solution.json` and the stamp.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "querysat,gsat,dpll")]
    pub solvers: Vec<SolverArg>,
    #[command(flatten)]
    pub limits: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "wall")]
    pub clock: Clock,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Checkpoint files, or directories whose `.qsc` files are all used.
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long, default_value_t = 20_000)]
    pub node_budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TheoremCommand {
    /// Encode a formula's clauses at the identifying rational query and decode them back.
    Demo {
        #[arg(long)]
        formula: PathBuf,
        /// Gap between the primes of each pair.
        #[arg(long, default_value_t = 2)]
        h: u64,
    },
    /// Check that the loss agrees with Boolean evaluation at every binary assignment.
    Verify1 {
        #[arg(long)]
        formula: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Solve(a) => cmd_solve(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Probe(a) => cmd_probe(&a).map(|_| ()),
        Command::Theorem(t) => cmd_theorem(&t),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let spec = GenSpec {
        task: a.task,
        min_size: a.min_size,
        max_size: a.max_size,
        count: a.count,
        seed: a.seed,
    };
    let manifest = gen_dataset(&spec, a.decision_budget, &a.out).context("generate")?;
    write_stamp(
        &a.out,
        "generate",
        a.seed,
        Clock::Frozen,
        &json!({ "spec": spec, "decision_budget": a.decision_budget }),
    )?;
    eprintln!("wrote {} instances to {}", manifest.instances.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub loss: f64,
    pub val_solved_fraction: Option<f64>,
    pub wall_ms: u64,
}

pub const FINAL_CHECKPOINT: &str = "checkpoint.qsc";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn trail_name(iteration: u64) -> String {
    format!("iter_{iteration:08}.qsc")
}

fn training_checkpoint(trainer: &Trainer<'_>) -> Checkpoint {
    Checkpoint {
        model: trainer.model().clone(),
        train: Some(*trainer.config()),
        iteration: trainer.iteration(),
        optimizer: Some(trainer.optimizer().clone()),
        trainer: Some(trainer.state()),
    }
}

/// Trains and writes `metrics.csv`, the final checkpoint, and the optional
/// checkpoint trail. Returns the metrics rows.
pub fn cmd_train(a: &TrainArgs) -> Result<Vec<MetricsRow>> {
    let data = Dataset::load(&a.dataset).context("train: loading the training set")?;
    let graphs = data.graphs();
    let validation = match &a.validation {
        Some(p) => Some(Dataset::load(p).context("train: loading the validation set")?.graphs()),
        None => None,
    };
    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("train: resuming from {}", path.display()))?;
            let (Some(config), Some(opt), Some(state)) = (ck.train, ck.optimizer, ck.trainer) else {
                bail!("train: {} is not a training checkpoint", path.display());
            };
            let config = TrainConfig {
                iterations: a.iterations,
                ..config
            };
            Trainer::resume(ck.model, opt, &graphs, config, state)?
        }
        None => {
            let config = TrainConfig {
                learning_rate: a.lr,
                train_steps: a.train_steps,
                iterations: a.iterations,
                node_budget: a.node_budget,
                seed: a.seed,
                validation_interval: a.validation_interval,
                validation_steps: a.validation_steps,
                ..TrainConfig::default()
            };
            let model = Model::new(a.model.config(), a.seed)?;
            Trainer::new(model, &graphs, config)?
        }
    };
    create_dir(&a.out)?;
    if a.checkpoint_every > 0 {
        create_dir(&a.out.join(CHECKPOINT_DIR))?;
    }
    let config = *trainer.config();
    write_stamp(
        &a.out,
        "train",
        config.seed,
        a.clock,
        &json!({ "model": trainer.model().config(), "train": config, "dataset": a.dataset, "validation": a.validation, "resume": a.resume }),
    )?;
    let watch = a.clock.start();
    let mut rows = Vec::new();
    while !trainer.finished() {
        let rec = trainer.step().with_context(|| format!("train: iteration {}", trainer.iteration() + 1))?;
        let mut val = None;
        if let (Some(v), true) = (&validation, trainer.validation_due()) {
            let eval = evaluate(trainer.model(), v, config.validation_steps, config.node_budget, config.seed, None)?;
            val = Some(eval.solved_fraction());
            eprintln!(
                "iteration {} loss {:.4} validation solved {:.3}",
                rec.iteration,
                rec.loss,
                eval.solved_fraction()
            );
        }
        rows.push(MetricsRow {
            iteration: rec.iteration,
            loss: rec.loss,
            val_solved_fraction: val,
            wall_ms: watch.millis(),
        });
        if a.checkpoint_every > 0 && rec.iteration % a.checkpoint_every == 0 {
            training_checkpoint(&trainer).save(&a.out.join(CHECKPOINT_DIR).join(trail_name(rec.iteration)))?;
        }
    }
    write_csv(&a.out.join("metrics.csv"), &rows)?;
    training_checkpoint(&trainer).save(&a.out.join(FINAL_CHECKPOINT))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub steps: usize,
    pub instances: usize,
    pub solved: usize,
    pub solved_fraction: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct InstanceRow<'a> {
    instance: usize,
    file: &'a str,
    solved: bool,
    exit_step: Option<usize>,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalRow> {
    let ck = Checkpoint::load(&a.checkpoint).context("eval: loading the checkpoint")?;
    let data = Dataset::load(&a.dataset).context("eval: loading the dataset")?;
    let graphs = data.graphs();
    let watch = a.clock.start();
    let eval = evaluate(&ck.model, &graphs, a.steps, a.node_budget, a.seed, None).context("eval")?;
    let row = EvalRow {
        steps: a.steps,
        instances: graphs.len(),
        solved: eval.solved(),
        solved_fraction: eval.solved_fraction(),
        wall_seconds: watch.seconds(),
    };
    create_dir(&a.out)?;
    write_csv(&a.out.join("eval_metrics.csv"), std::slice::from_ref(&row))?;
    let per: Vec<InstanceRow<'_>> = eval
        .results
        .iter()
        .map(|r| InstanceRow {
            instance: r.instance,
            file: &data.names[r.instance],
            solved: r.exit_step.is_some(),
            exit_step: r.exit_step,
        })
        .collect();
    write_csv(&a.out.join("eval_instances.csv"), &per)?;
    write_stamp(
        &a.out,
        "eval",
        a.seed,
        a.clock,
        &json!({ "checkpoint": a.checkpoint, "dataset": a.dataset, "steps": a.steps, "node_budget": a.node_budget, "model": ck.model.config() }),
    )?;
    eprintln!("solved {}/{} ({:.3})", row.solved, row.instances, row.solved_fraction);
    Ok(row)
}

fn load_model(path: &Option<PathBuf>) -> Result<Model> {
    let path = path.as_ref().context("the neural solver needs --checkpoint")?;
    Ok(Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?.model)
}

fn solver<'m>(kind: SolverArg, limits: &SolverArgs, model: Option<&'m Model>) -> Solver<'m> {
    match kind {
        SolverArg::Querysat => Solver::QuerySat {
            model: model.expect("model loaded for the neural solver"),
            steps: limits.steps,
        },
        SolverArg::Gsat => Solver::Gsat(GsatBudget {
            max_flips: limits.max_flips,
            max_tries: limits.max_tries,
        }),
        SolverArg::Dpll => Solver::Dpll {
            decision_budget: limits.decision_budget,
        },
    }
}

pub fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let formula = read_dimacs(&a.formula).context("solve")?;
    let model = match a.solver {
        SolverArg::Querysat => Some(load_model(&a.limits.checkpoint)?),
        _ => None,
    };
    let s = solver(a.solver, &a.limits, model.as_ref());
    let graph = FactorGraph::new(&formula);
    let (record, assignment) = solve_one(&s, &formula, &graph, 0, a.seed, Clock::Wall);
    let mut out = std::io::stdout().lock();
    let verdict = match record.status {
        BenchStatus::Sat => "SATISFIABLE",
        BenchStatus::Unsat => "UNSATISFIABLE",
        _ => "UNKNOWN",
    };
    writeln!(out, "s {verdict}")?;
    if let Some(bits) = &assignment {
        let lits: Vec<String> = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| if b { format!("{}", i + 1) } else { format!("-{}", i + 1) })
            .collect();
        writeln!(out, "v {} 0", lits.join(" "))?;
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let solution = json!({ "status": record.status, "work": record.work, "seconds": record.seconds, "assignment": assignment });
        fs::write(dir.join("solution.json"), serde_json::to_string_pretty(&solution)? + "\n")?;
        write_stamp(
            dir,
            "solve",
            a.seed,
            Clock::Wall,
            &json!({ "formula": a.formula, "solver": format!("{:?}", a.solver).to_lowercase() }),
        )?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let data = Dataset::load(&a.dataset).context("bench: loading the dataset")?;
    let model = if a.solvers.contains(&SolverArg::Querysat) {
        Some(load_model(&a.limits.checkpoint).context("bench")?)
    } else {
        None
    };
    let solvers: Vec<Solver<'_>> = a.solvers.iter().map(|&k| solver(k, &a.limits, model.as_ref())).collect();
    let records = run_bench(&solvers, &data.formulas, a.seed, a.clock);
    let points = cactus(&records);
    create_dir(&a.out)?;
    write_csv(&a.out.join("records.csv"), &records)?;
    write_csv(&a.out.join("cactus.csv"), &points)?;
    fs::write(a.out.join("cactus.json"), serde_json::to_string_pretty(&cactus_json(&points))? + "\n")?;
    write_stamp(
        &a.out,
        "bench",
        a.seed,
        a.clock,
        &json!({
            "dataset": a.dataset,
            "solvers": solvers.iter().map(Solver::name).collect::<Vec<_>>(),
            "checkpoint": a.limits.checkpoint,
            "steps": a.limits.steps,
            "max_flips": a.limits.max_flips,
            "max_tries": a.limits.max_tries,
            "decision_budget": a.limits.decision_budget,
        }),
    )?;
    for s in &solvers {
        let name = s.name();
        let solved = records.iter().filter(|r| r.solver == name && r.status.solved()).count();
        eprintln!("{name}: solved {solved}/{}", data.len());
    }
    Ok(())
}

/// Percentages read column 0 of the query; `_mean` fields average all columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub iteration: u64,
    pub checkpoint: String,
    pub instances: usize,
    pub query_logit_match: f64,
    pub query_sat_clause_fraction: f64,
    pub consecutive_query_match: f64,
    pub query_logit_match_mean: f64,
    pub query_sat_clause_fraction_mean: f64,
    pub consecutive_query_match_mean: f64,
    pub solved_fraction: f64,
}

impl ProbeRecord {
    fn new(iteration: u64, checkpoint: String, s: ProbeSummary) -> Self {
        ProbeRecord {
            iteration,
            checkpoint,
            instances: s.instances,
            query_logit_match: s.query_logit_match,
            query_sat_clause_fraction: s.query_sat_clause_fraction,
            consecutive_query_match: s.consecutive_query_match,
            query_logit_match_mean: s.query_logit_match_mean,
            query_sat_clause_fraction_mean: s.query_sat_clause_fraction_mean,
            consecutive_query_match_mean: s.consecutive_query_match_mean,
            solved_fraction: s.solved_fraction,
        }
    }
}

fn checkpoint_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "qsc"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("probe: no checkpoints found");
    }
    Ok(files)
}

/// Probes every checkpoint, ordered by training iteration, and writes
/// `probe.csv` with `probe_meta.json` describing the conventions used.
pub fn cmd_probe(a: &ProbeArgs) -> Result<Vec<ProbeRecord>> {
    let data = Dataset::load(&a.dataset).context("probe: loading the dataset")?;
    let graphs = data.graphs();
    let mut records = Vec::new();
    for file in checkpoint_files(&a.checkpoints)? {
        let ck = Checkpoint::load(&file).with_context(|| format!("probe: loading {}", file.display()))?;
        let (per, solved) = probe(&ck.model, &graphs, a.steps, a.node_budget, a.seed).with_context(|| format!("probe: {}", file.display()))?;
        let name = file.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        records.push(ProbeRecord::new(ck.iteration, name, summarize(&per, solved)));
    }
    records.sort_by_key(|r| r.iteration);
    create_dir(&a.out)?;
    write_csv(&a.out.join("probe.csv"), &records)?;
    let meta = json!({
        "query_column": 0,
        "mean_columns": "fields ending in _mean average over all query columns",
        "averaging": "per instance, then across instances",
        "step": "last step each instance ran (its exit step if solved)",
        "consecutive": "last two steps; instances that ran one step are excluded",
        "discretization": "post-sigmoid values rounded, 0.5 maps to 1",
        "steps": a.steps,
    });
    fs::write(a.out.join("probe_meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    write_stamp(
        &a.out,
        "probe",
        a.seed,
        Clock::Frozen,
        &json!({ "checkpoints": a.checkpoints, "dataset": a.dataset, "steps": a.steps, "node_budget": a.node_budget }),
    )?;
    Ok(records)
}

fn clause_key(f: &CnfFormula) -> Vec<Vec<(usize, bool)>> {
    f.clauses()
        .iter()
        .map(|c| {
            let mut k: Vec<(usize, bool)> = c.iter().map(|l| (l.var(), l.is_negated())).collect();
            k.sort_unstable();
            k
        })
        .collect()
}

pub fn cmd_theorem(t: &TheoremCommand) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match t {
        TheoremCommand::Demo { formula, h } => {
            let f = read_dimacs(formula).context("theorem demo")?;
            let query = build_identifying_query(f.num_vars(), *h);
            for (i, (pair, x)) in query.pairs.iter().zip(&query.x).enumerate() {
                writeln!(out, "x{} = {} (primes {}, {})", i + 1, x, pair.a, pair.b)?;
            }
            let losses = rational_clause_losses(&f, &query).context("theorem demo: encoding")?;
            let decoded = decode_formula(&losses, &query).context("theorem demo: decoding")?;
            for (loss, clause) in losses.iter().zip(decoded.clauses()) {
                let lits: Vec<String> = clause.iter().map(|l| l.to_string()).collect();
                writeln!(out, "clause {}: 1 - V = {} -> {}", loss.clause + 1, loss.falsity(), lits.join(" "))?;
            }
            let ok = clause_key(&decoded) == clause_key(&f);
            writeln!(out, "round trip: {}", if ok { "exact" } else { "MISMATCH" })?;
            if !ok {
                bail!("theorem demo: decoded formula differs from the input");
            }
        }
        TheoremCommand::Verify1 { formula } => {
            let f = read_dimacs(formula).context("theorem verify1")?;
            if f.num_vars() > 24 {
                bail!("theorem verify1: {} variables is too many for exhaustive checking (limit 24)", f.num_vars());
            }
            let report = verify_theorem1_exhaustive(&f);
            writeln!(
                out,
                "checked {} clause evaluations, {} violations",
                report.clauses_checked,
                report.violations.len()
            )?;
            if !report.holds() {
                bail!("theorem verify1: loss disagrees with Boolean evaluation");
            }
        }
    }
    Ok(())
}
