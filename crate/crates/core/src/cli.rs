//! Command-line harness: problem loading, training and evaluation runs,
//! one-off column simulation, and flowsheet export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, Checkpoint, SacAgent, Trainer, TrainingLogRow};
use crate::column::{solve_column, ColumnSpec};
use crate::economics::{EconomicParams, ProductPricing};
use crate::env::{ActionBounds, DistillEnv, ProblemSpec, TreeEnv};
use crate::flowsheet::{FlowNode, Flowsheet, LeafLabel};
use crate::thermo::{Component, Stream, ATM};

const EXIT_OK: i32 = 0;
const EXIT_INVALID: i32 = 1;
const EXIT_UNWRITABLE: i32 = 2;
const EXIT_UNCONVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("column did not converge: {0}")]
    Unconverged(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Unwritable { .. } => EXIT_UNWRITABLE,
            CliError::Unconverged(_) => EXIT_UNCONVERGED,
        }
    }
}

/// The single-document problem configuration. Units: mol/s, K, Pa,
/// $/tonne. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub components: Vec<Component>,
    pub feed: Stream,
    pub pricing: ProductPricing,
    #[serde(default)]
    pub economics: EconomicParams,
    #[serde(default)]
    pub action_bounds: ActionBounds,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub agent: AgentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub max_columns: usize,
    pub fail_penalty: f64,
    pub reward_scale: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection { max_columns: 12, fail_penalty: 0.1, reward_scale: 1e7 }
    }
}

/// A parsed and validated problem plus its agent configuration.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub spec: ProblemSpec,
    pub agent: AgentConfig,
}

/// Parse and validate a problem configuration file.
pub fn load_problem(path: &Path) -> Result<LoadedProblem, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let file: ProblemFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let spec = ProblemSpec {
        components: file.components,
        feed: file.feed,
        pricing: file.pricing,
        economics: file.economics,
        action_bounds: file.action_bounds,
        max_columns: file.env.max_columns,
        fail_penalty: file.env.fail_penalty,
        reward_scale: file.env.reward_scale,
    };
    spec.validate()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let violations = file.agent.invariant_violations();
    if !violations.is_empty() {
        return Err(CliError::Invalid(format!(
            "{}: {}",
            path.display(),
            violations.join("; ")
        )));
    }
    Ok(LoadedProblem { spec, agent: file.agent })
}

#[derive(Parser, Debug)]
#[command(
    name = "distilltrain",
    about = "Reinforcement-learning synthesis of distillation trains over a multicomponent feed",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an agent and write logs, best flowsheets and checkpoints.
    Train(TrainArgs),
    /// Run one deterministic episode from a checkpoint and report it.
    Evaluate(EvaluateArgs),
    /// Simulate a single column on the problem feed.
    Simulate(SimulateArgs),
    /// Render a flowsheet JSON export as a DOT block-flow diagram.
    ExportBfd(ExportArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Problem configuration file.
    #[arg(long)]
    problem: PathBuf,
    /// Episodes to run in this invocation.
    #[arg(long)]
    episodes: usize,
    /// Seeds; one run per seed. Multiple seeds write to out/seed-<s>/.
    #[arg(long, value_delimiter = ',', required = true)]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Write checkpoint.json every N episodes (and at the end).
    #[arg(long, default_value_t = 200)]
    checkpoint_every: usize,
    /// Print a console progress row every N episodes (0 silences).
    #[arg(long, default_value_t = 50)]
    log_every: usize,
    /// Resume from a checkpoint file (single seed only).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional JSON report destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    pressure_atm: f64,
    #[arg(long)]
    stages: usize,
    #[arg(long)]
    reflux: f64,
    #[arg(long)]
    boilup: f64,
    /// Also print a machine-readable JSON block.
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Flowsheet JSON produced by train/evaluate.
    #[arg(long)]
    flowsheet: PathBuf,
    /// DOT destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    run_with_args(std::env::args().collect())
}

/// Entry point with explicit arguments, for tests.
pub fn run_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::ExportBfd(args) => cmd_export_bfd(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Optional cap on internal parallelism. The solvers and updates run on
/// one thread, so any positive cap is honored; the value is echoed into
/// run_meta.json for the record.
fn threads_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("DISTILL_GYM_THREADS") {
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                CliError::Invalid(format!(
                    "DISTILL_GYM_THREADS must be a positive integer, got {v:?}"
                ))
            })?;
            if n == 0 {
                return Err(CliError::Invalid(
                    "DISTILL_GYM_THREADS must be a positive integer".into(),
                ));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Unwritable {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Unwritable {
        path: path.to_path_buf(),
        source,
    })
}

/// Full state of an interruptible run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub agent: Checkpoint,
    pub episodes_done: usize,
    pub best_return: Option<f64>,
    pub best_flowsheet: Option<Flowsheet>,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    version: String,
    problem: String,
    seed: u64,
    episodes: usize,
    checkpoint_every: usize,
    threads_cap: Option<usize>,
    env: EnvSectionEcho,
    agent: &'a AgentConfig,
}

#[derive(Debug, Serialize)]
struct EnvSectionEcho {
    max_columns: usize,
    fail_penalty: f64,
    reward_scale: f64,
}

pub const CSV_HEADER: &str = "episode,steps,columns_placed,failures,return,revenue_usd_per_yr,tac_usd_per_yr,best_return_so_far,alpha,wall_ms";

pub fn csv_row(row: &TrainingLogRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        row.episode,
        row.steps,
        row.columns_placed,
        row.failures,
        row.episode_return,
        row.revenue_usd_per_yr,
        row.tac_usd_per_yr,
        row.best_return_so_far,
        row.alpha,
        row.wall_ms
    )
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let loaded = load_problem(&args.problem)?;
    let cap = threads_cap()?;
    if args.seed.is_empty() {
        return Err(CliError::Invalid("at least one seed is required".into()));
    }
    if args.resume.is_some() && args.seed.len() != 1 {
        return Err(CliError::Invalid("--resume requires a single seed".into()));
    }
    let multi = args.seed.len() > 1;
    for &seed in &args.seed {
        let out_dir = if multi {
            args.out.join(format!("seed-{seed}"))
        } else {
            args.out.clone()
        };
        train_one_seed(&args, &loaded, seed, &out_dir, cap)?;
    }
    Ok(())
}

fn train_one_seed(
    args: &TrainArgs,
    loaded: &LoadedProblem,
    seed: u64,
    out_dir: &Path,
    cap: Option<usize>,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|source| CliError::Unwritable {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let env = DistillEnv::new(loaded.spec.clone(), seed)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut trainer = match &args.resume {
        Some(ckpt_path) => {
            let ckpt = read_checkpoint(ckpt_path)?;
            if ckpt.agent.obs_dim != loaded.spec.observation_len() {
                return Err(CliError::Invalid(format!(
                    "checkpoint observation length {} does not match problem ({})",
                    ckpt.agent.obs_dim,
                    loaded.spec.observation_len()
                )));
            }
            Trainer::resume(
                env,
                SacAgent::from_checkpoint(ckpt.agent),
                ckpt.episodes_done,
                ckpt.best_return,
                ckpt.best_flowsheet,
            )
        }
        None => {
            let agent = SacAgent::new(loaded.spec.observation_len(), loaded.agent.clone(), seed)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            Trainer::new(env, agent)
        }
    };

    let meta = RunMeta {
        version: format!("distilltrain-{}", env!("CARGO_PKG_VERSION")),
        problem: args.problem.display().to_string(),
        seed,
        episodes: args.episodes,
        checkpoint_every: args.checkpoint_every,
        threads_cap: cap,
        env: EnvSectionEcho {
            max_columns: loaded.spec.max_columns,
            fail_penalty: loaded.spec.fail_penalty,
            reward_scale: loaded.spec.reward_scale,
        },
        agent: &loaded.agent,
    };
    write_file(
        &out_dir.join("run_meta.json"),
        &serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;

    let log_path = out_dir.join("train_log.csv");
    let append = args.resume.is_some() && log_path.exists();
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(&log_path)
        .map_err(|source| CliError::Unwritable { path: log_path.clone(), source })?;
    if !append {
        writeln!(log, "{CSV_HEADER}").map_err(|source| CliError::Unwritable {
            path: log_path.clone(),
            source,
        })?;
    }

    let mut best_so_far = trainer.best_return;
    for _ in 0..args.episodes {
        let row = trainer.run_episode();
        writeln!(log, "{}", csv_row(&row)).map_err(|source| CliError::Unwritable {
            path: log_path.clone(),
            source,
        })?;
        if args.log_every > 0 && row.episode % args.log_every == 0 {
            println!(
                "seed {seed} episode {} return {:.4} best {:.4} alpha {:.4}",
                row.episode, row.episode_return, row.best_return_so_far, row.alpha
            );
        }
        if trainer.last_was_best && trainer.best_return != best_so_far {
            best_so_far = trainer.best_return;
            write_best(&trainer, out_dir)?;
        }
        if args.checkpoint_every > 0 && trainer.episodes_done % args.checkpoint_every == 0 {
            write_checkpoint(&trainer, seed, out_dir)?;
        }
    }
    write_checkpoint(&trainer, seed, out_dir)?;

    let summary = trainer.summary();
    println!(
        "seed {seed}: {} episodes, {} env steps, {} updates ({} skipped), {} failures, best return {}",
        summary.episodes,
        summary.env_steps,
        summary.updates,
        summary.skipped_updates,
        summary.failures,
        summary
            .best_return
            .map(|b| format!("{b:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn write_best(trainer: &Trainer<DistillEnv>, out_dir: &Path) -> Result<(), CliError> {
    if let Some(sheet) = &trainer.best_flowsheet {
        if !sheet.has_open_leaves() {
            let json = sheet.to_json().map_err(|e| CliError::Invalid(e.to_string()))?;
            write_file(&out_dir.join("best.json"), &json)?;
            let dot = sheet.to_dot().map_err(|e| CliError::Invalid(e.to_string()))?;
            write_file(&out_dir.join("best.dot"), &dot)?;
        }
    }
    Ok(())
}

fn write_checkpoint(
    trainer: &Trainer<DistillEnv>,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let ckpt = RunCheckpoint {
        agent: trainer.agent.checkpoint(),
        episodes_done: trainer.episodes_done,
        best_return: trainer.best_return,
        best_flowsheet: trainer.best_flowsheet.clone(),
        seed,
    };
    let json = serde_json::to_string(&ckpt).expect("checkpoint serializes");
    write_file(&out_dir.join("checkpoint.json"), &json)
}

fn read_checkpoint(path: &Path) -> Result<RunCheckpoint, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// One product row of the evaluation report.
#[derive(Debug, Serialize)]
pub struct ProductReport {
    pub component: String,
    pub purity: f64,
    pub recovery: f64,
    pub flow_mol_s: f64,
}

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub episode_return: f64,
    pub columns: Vec<ColumnReport>,
    pub products: Vec<ProductReport>,
    pub total_revenue_usd_per_yr: f64,
    pub total_tac_usd_per_yr: f64,
}

#[derive(Debug, Serialize)]
pub struct ColumnReport {
    pub index: usize,
    pub pressure_atm: f64,
    pub n_stages: usize,
    pub reflux_ratio: f64,
    pub boilup_ratio: f64,
    pub condenser_duty_w: f64,
    pub reboiler_duty_w: f64,
    pub tac_usd_per_yr: f64,
}

/// Purity and per-component recovery over the product leaves of a
/// finished flowsheet. recovery_i = product flow of i / feed flow of i.
pub fn product_report(sheet: &Flowsheet, feed: &Stream) -> Vec<ProductReport> {
    let mut reports = Vec::new();
    for (stream, label) in sheet.leaves() {
        if label != LeafLabel::Product {
            continue;
        }
        let fractions = match stream.mole_fractions() {
            Some(f) => f,
            None => continue,
        };
        let (idx, &purity) = fractions
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .expect("nonempty");
        reports.push(ProductReport {
            component: sheet.component_names[idx].clone(),
            purity,
            recovery: stream.flows[idx] / feed.flows[idx],
            flow_mol_s: stream.total_flow(),
        });
    }
    reports.sort_by(|a, b| a.component.cmp(&b.component));
    reports
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let loaded = load_problem(&args.problem)?;
    let ckpt = read_checkpoint(&args.checkpoint)?;
    if ckpt.agent.obs_dim != loaded.spec.observation_len() {
        return Err(CliError::Invalid(format!(
            "checkpoint observation length {} does not match problem ({})",
            ckpt.agent.obs_dim,
            loaded.spec.observation_len()
        )));
    }
    let env = DistillEnv::new(loaded.spec.clone(), ckpt.seed)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut trainer = Trainer::new(env, SacAgent::from_checkpoint(ckpt.agent));
    let episode_return = trainer.evaluate_episode();
    let sheet = trainer
        .env
        .flowsheet()
        .expect("distill env has a flowsheet")
        .clone();

    let mut columns = Vec::new();
    for node in &sheet.nodes {
        if let FlowNode::Column { index, spec, summary, tac_usd_per_yr, .. } = node {
            columns.push(ColumnReport {
                index: *index,
                pressure_atm: spec.pressure / ATM,
                n_stages: spec.n_stages,
                reflux_ratio: spec.reflux_ratio,
                boilup_ratio: spec.boilup_ratio,
                condenser_duty_w: summary.condenser_duty,
                reboiler_duty_w: summary.reboiler_duty,
                tac_usd_per_yr: *tac_usd_per_yr,
            });
        }
    }
    columns.sort_by_key(|c| c.index);
    let report = EvaluationReport {
        episode_return,
        columns,
        products: product_report(&sheet, &loaded.spec.feed),
        total_revenue_usd_per_yr: sheet.total_revenue_usd_per_yr,
        total_tac_usd_per_yr: sheet.total_tac_usd_per_yr,
    };

    println!("episode return: {:.6}", report.episode_return);
    println!(
        "total revenue: {:.0} $/yr, total TAC: {:.0} $/yr",
        report.total_revenue_usd_per_yr, report.total_tac_usd_per_yr
    );
    for c in &report.columns {
        println!(
            "COL {}: {:.2} atm, N={}, R={:.3}, s={:.3}, Qc={:.0} W, Qr={:.0} W, TAC={:.0} $/yr",
            c.index,
            c.pressure_atm,
            c.n_stages,
            c.reflux_ratio,
            c.boilup_ratio,
            c.condenser_duty_w,
            c.reboiler_duty_w,
            c.tac_usd_per_yr
        );
    }
    for p in &report.products {
        println!(
            "product {}: purity {:.4}, recovery {:.4}, {:.4} mol/s",
            p.component, p.purity, p.recovery, p.flow_mol_s
        );
    }
    if let Some(out) = &args.out {
        write_file(
            out,
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let loaded = load_problem(&args.problem)?;
    let spec = ColumnSpec {
        pressure: args.pressure_atm * ATM,
        n_stages: args.stages,
        reflux_ratio: args.reflux,
        boilup_ratio: args.boilup,
    };
    spec.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    let result = solve_column(&loaded.spec.components, &loaded.spec.feed, &spec);

    println!(
        "{:<12} {:>14} {:>14} {:>14}",
        "component", "feed mol/s", "distillate", "bottoms"
    );
    for (i, c) in loaded.spec.components.iter().enumerate() {
        println!(
            "{:<12} {:>14.6} {:>14.6} {:>14.6}",
            c.name, loaded.spec.feed.flows[i], result.distillate.flows[i], result.bottoms.flows[i]
        );
    }
    if result.converged {
        println!(
            "converged in {} sweeps; condenser {:.2} K / {:.3e} W, reboiler {:.2} K / {:.3e} W",
            result.iterations,
            result.stage_temperatures[0],
            result.condenser_duty,
            result.stage_temperatures.last().unwrap(),
            result.reboiler_duty
        );
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&result).expect("result serializes")
        );
    }
    if !result.converged {
        return Err(CliError::Unconverged(format!(
            "{} sweeps, last max temperature change {:.4} K",
            result.iterations, result.last_temp_change
        )));
    }
    Ok(())
}

fn cmd_export_bfd(args: ExportArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.flowsheet).map_err(|e| {
        CliError::Invalid(format!("cannot read {}: {e}", args.flowsheet.display()))
    })?;
    let sheet = Flowsheet::from_json(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.flowsheet.display())))?;
    let dot = sheet.to_dot().map_err(|e| CliError::Invalid(e.to_string()))?;
    match &args.out {
        Some(path) => write_file(path, &dot)?,
        None => print!("{dot}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problems_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("problems")
    }

    #[test]
    fn btx_problem_file_matches_stated_problem() {
        let loaded = load_problem(&problems_dir().join("btx.json")).unwrap();
        let spec = loaded.spec;
        assert_eq!(spec.components.len(), 3);
        assert_eq!(spec.feed.flows, vec![3.35, 3.35, 3.35]);
        assert_eq!(spec.feed.temperature, 298.15);
        assert_eq!(spec.feed.pressure, 101325.0);
        assert_eq!(spec.pricing.purity_spec, 0.95);
        assert_eq!(spec.pricing.prices, vec![488.0, 488.0, 510.0]);
        assert_eq!(spec.reward_scale, 1e7);
        assert_eq!(spec.max_columns, 12);
    }

    #[test]
    fn hydrocarbon_problem_file_matches_stated_problem() {
        let loaded = load_problem(&problems_dir().join("hydrocarbon.json")).unwrap();
        let spec = loaded.spec;
        assert_eq!(spec.components.len(), 6);
        assert_eq!(
            spec.feed.flows,
            vec![17.0, 1110.0, 1198.0, 516.0, 334.0, 173.0]
        );
        assert_eq!(spec.feed.temperature, 378.15);
        assert!((spec.feed.pressure - 17.4 * ATM).abs() < 1e-6);
        assert_eq!(
            spec.pricing.prices,
            vec![125.0, 204.0, 272.0, 249.0, 545.0, 545.0]
        );
        assert_eq!(spec.reward_scale, 1e9);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let text = fs::read_to_string(problems_dir().join("btx.json"))
            .unwrap()
            .replace("\"env\":", "\"unknown_section\": {}, \"env\":");
        fs::write(&path, text).unwrap();
        let err = load_problem(&path).unwrap_err();
        assert!(err.to_string().contains("unknown_section"), "{err}");
    }

    #[test]
    fn wrong_price_length_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let text = fs::read_to_string(problems_dir().join("btx.json"))
            .unwrap()
            .replace("[488.0, 488.0, 510.0]", "[488.0, 488.0]");
        fs::write(&path, text).unwrap();
        let err = load_problem(&path).unwrap_err();
        assert!(err.to_string().contains("pricing.prices"), "{err}");
    }
}
