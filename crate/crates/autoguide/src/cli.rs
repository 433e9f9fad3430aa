//! Command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use autoguide_core::lm::{ScriptTable, ScriptedBackend};
use autoguide_core::sim::{
    generate_offline_data, generate_tasks, inject_distractor, scripted_table, Distractor, EnvFamily, Task,
};
use autoguide_core::store::build_store;
use autoguide_core::trajectory::pair_dataset;
use autoguide_core::{GuidelineMode, GuidelineStore, LanguageModel, LmError, LmStack, RoleModels};
use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand};

use crate::cassette::{RecordingBackend, ReplayBackend};
use crate::config::{BackendChoice, BackendConfig, Overrides, RunConfig};
use crate::error::CliError;
use crate::files;
use crate::harness::{self, ModeRun, ReportMetadata, RunReport, TranscriptRecord};
use crate::http::HttpBackend;

#[derive(Debug, Parser)]
#[command(name = "autoguide", version, about = "Extract context-aware guidelines and evaluate agents with them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset, evaluation suite, scripted model table and config.
    #[command(args_override_self = true)]
    GenData(GenDataArgs),
    /// Build a guideline store from offline trajectories.
    #[command(args_override_self = true)]
    Extract(RunArgs),
    /// Evaluate guideline modes over a task suite.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Evaluate context-aware guidance for several top-k values.
    #[command(args_override_self = true)]
    AblateK(AblateArgs),
    /// Guideline store utilities.
    #[command(subcommand)]
    Store(StoreCommand),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value = "branch_world")]
    pub family: EnvFamily,
    /// Number of offline tasks.
    #[arg(long, default_value_t = 20)]
    pub tasks: usize,
    /// Number of evaluation tasks (defaults to --tasks).
    #[arg(long)]
    pub eval_tasks: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub perturb_rate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub backend: Option<BackendChoice>,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated guideline modes.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub mode: Option<Vec<GuidelineMode>>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated top-k values.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub k_list: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
pub enum StoreCommand {
    /// Print the keys and guidelines of a store.
    #[command(args_override_self = true)]
    Inspect {
        /// Store file (defaults to the configured store).
        path: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData(args) => gen_data(&args),
        Command::Extract(args) => extract(&resolve(&args, Overrides::default())?),
        Command::Eval(args) => {
            let o = Overrides { modes: args.mode.clone(), k: args.k, ..Overrides::default() };
            eval(&resolve(&args.run, o)?)
        }
        Command::AblateK(args) => {
            let o = Overrides { k_list: args.k_list.clone(), ..Overrides::default() };
            ablate(&resolve(&args.run, o)?)
        }
        Command::Store(StoreCommand::Inspect { path, run }) => {
            let path = match path {
                Some(p) => p,
                None => load_config(&run, Overrides::default())?.store_path(),
            };
            print!("{}", inspect(&files::load_store(&path)?));
            Ok(())
        }
    }
}

fn load_config(args: &RunArgs, extra: Overrides) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(Overrides {
        store: args.store.clone(),
        seed: args.seed,
        jobs: args.jobs,
        backend: args.backend,
        cassette: args.cassette.clone(),
        out_dir: args.out.clone(),
        ..extra
    });
    Ok(config)
}

fn resolve(args: &RunArgs, extra: Overrides) -> Result<RunConfig, CliError> {
    let config = load_config(args, extra)?;
    config.validate()?;
    Ok(config)
}

/// Builds the configured backend, wrapped in a recorder when a cassette is
/// given to a live or scripted backend.
pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn LanguageModel>, CliError> {
    let inner: Box<dyn LanguageModel> = match config.kind {
        BackendChoice::Http => Box::new(HttpBackend::from_env().map_err(|e| match e {
            LmError::Transport(m) => CliError::Config(m),
            other => CliError::Backend(other),
        })?),
        BackendChoice::Scripted => {
            let path = config.script.as_deref().ok_or_else(|| CliError::Config("no script file configured".into()))?;
            let table: ScriptTable = files::read_json(path)?;
            Box::new(ScriptedBackend::new(table))
        }
        BackendChoice::Replay => {
            let path = config.cassette.as_deref().ok_or_else(|| CliError::Config("no cassette configured".into()))?;
            let replay = ReplayBackend::parse(&files::read_text(path)?).map_err(|e| CliError::data(path, e))?;
            return Ok(Box::new(replay));
        }
    };
    match &config.cassette {
        Some(path) => Ok(Box::new(RecordingBackend::open(inner, path).map_err(|e| CliError::data(path, e))?)),
        None => Ok(inner),
    }
}

fn stack<'a>(backend: &'a dyn LanguageModel, config: &'a RunConfig) -> LmStack<'a> {
    LmStack { backend, models: &config.models, sampling: config.sampling }
}

fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let data = generate_offline_data(args.family, args.tasks, args.perturb_rate, args.seed)?;
    let eval_tasks = generate_tasks(args.family, args.eval_tasks.unwrap_or(args.tasks), args.seed.wrapping_add(1))?;
    let models = RoleModels::scripted();
    let all: Vec<Task> = data.tasks.iter().chain(&eval_tasks).cloned().collect();
    let table = scripted_table(&all, &models, Some(&Distractor::default()));

    let out = &args.out;
    files::write_text(&out.join("offline.jsonl"), &files::to_jsonl(&data.trajectories))?;
    files::write_suite(&out.join("train_tasks.json"), &data.tasks)?;
    files::write_suite(&out.join("eval_suite.json"), &eval_tasks)?;
    files::write_json(&out.join("perturbations.json"), &data.perturbations)?;
    files::write_json(&out.join("script.json"), &table)?;
    let config = RunConfig {
        family: args.family,
        dataset: Some("offline.jsonl".into()),
        suite: Some("eval_suite.json".into()),
        store: Some("store.json".into()),
        out_dir: "out".into(),
        seed: args.seed,
        backend: BackendConfig { kind: BackendChoice::Scripted, cassette: None, script: Some("script.json".into()) },
        models,
        ..RunConfig::default()
    };
    files::write_json(&out.join("config.json"), &config)?;
    println!(
        "wrote {} trajectories for {} tasks and {} evaluation tasks to {}",
        data.trajectories.len(),
        data.tasks.len(),
        eval_tasks.len(),
        out.display()
    );
    Ok(())
}

fn extract(config: &RunConfig) -> Result<(), CliError> {
    let dataset = config.dataset.as_deref().ok_or_else(|| CliError::Config("no dataset configured".into()))?;
    let trajectories = files::read_trajectories(dataset)?;
    let store_path = config.store_path();
    if trajectories.is_empty() {
        log::warn!("{} holds no trajectories; writing an empty store", dataset.display());
        files::save_store(&store_path, &GuidelineStore::new())?;
        println!("keys: 0, guidelines: 0");
        return Ok(());
    }
    let templates = files::load_templates(config.templates_dir.as_deref())?;
    let backend = build_backend(&config.backend)?;
    let lm = stack(&*backend, config);
    let pairs = pair_dataset(&trajectories, config.deviation_mode);
    if pairs.is_empty() {
        log::warn!("{} yields no contrastive pairs; writing an empty store", dataset.display());
    }
    let outcome = build_store(&pairs, &templates, &lm, config.match_mode)?;
    files::save_store(&store_path, &outcome.store)?;
    println!(
        "pairs: {}, skipped: {}, duplicates: {}, keys: {}, guidelines: {}",
        pairs.len(),
        outcome.skipped.len(),
        outcome.duplicates,
        outcome.store.key_count(),
        outcome.store.guideline_count()
    );
    Ok(())
}

fn eval_inputs(config: &RunConfig, needs_store: bool) -> Result<(Vec<Task>, GuidelineStore), CliError> {
    let suite = config.suite.as_deref().ok_or_else(|| CliError::Config("no evaluation suite configured".into()))?;
    let tasks = files::read_suite(suite)?;
    let mut store = if needs_store { files::load_store(&config.store_path())? } else { GuidelineStore::new() };
    if config.distractor {
        store = inject_distractor(&store, &Distractor::default());
    }
    Ok((tasks, store))
}

fn metadata(config: &RunConfig, needs_store: bool) -> ReportMetadata {
    let timestamp = config.timestamp.clone().or_else(|| {
        (config.backend.kind == BackendChoice::Http).then(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or_default();
            secs.to_string()
        })
    });
    ReportMetadata {
        seed: config.seed,
        k: config.agent.k,
        models: config.models.clone(),
        store_path: needs_store.then(|| config.store_path().display().to_string()),
        timestamp,
        backend: config.backend.kind.to_string(),
        family: config.family,
        distractor: config.distractor,
    }
}

fn write_outputs(
    config: &RunConfig,
    stem: &str,
    runs: &[ModeRun],
    label: impl Fn(&ModeRun) -> String,
    needs_store: bool,
) -> Result<RunReport, CliError> {
    let report = RunReport { rows: runs.iter().map(|r| r.row.clone()).collect(), metadata: metadata(config, needs_store) };
    let dir = &config.out_dir;
    for run in runs {
        let records: Vec<TranscriptRecord> = run.results.iter().map(TranscriptRecord::from).collect();
        files::write_text(&dir.join("transcripts").join(format!("{}.jsonl", label(run))), &files::to_jsonl(&records))?;
    }
    files::write_text(&dir.join(format!("{stem}.json")), &report.to_json())?;
    files::write_text(&dir.join(format!("{stem}.txt")), &report.to_table())?;
    print!("{}", report.to_table());
    Ok(report)
}

fn eval(config: &RunConfig) -> Result<(), CliError> {
    let needs_store = config.modes.iter().any(|m| *m != GuidelineMode::None);
    let (tasks, store) = eval_inputs(config, needs_store)?;
    let templates = files::load_templates(config.templates_dir.as_deref())?;
    let backend = build_backend(&config.backend)?;
    let lm = stack(&*backend, config);
    let runs = harness::evaluate_modes(&tasks, &store, &config.modes, &config.agent, &templates, &lm, config.jobs)?;
    write_outputs(config, "report", &runs, |r| r.row.mode.to_string(), needs_store)?;
    Ok(())
}

fn ablate(config: &RunConfig) -> Result<(), CliError> {
    if config.k_list.is_empty() {
        return Err(CliError::Config("k_list must not be empty".into()));
    }
    let needs_store = config.k_list.iter().any(|&k| k > 0);
    let (tasks, store) = eval_inputs(config, needs_store)?;
    let templates = files::load_templates(config.templates_dir.as_deref())?;
    let backend = build_backend(&config.backend)?;
    let lm = stack(&*backend, config);
    let runs = harness::ablate_k(&tasks, &store, &config.k_list, &config.agent, &templates, &lm, config.jobs)?;
    write_outputs(config, "ablate_k", &runs, |r| format!("k{}", r.row.k), needs_store)?;
    Ok(())
}

/// Human-readable store listing.
pub fn inspect(store: &GuidelineStore) -> String {
    let mut out = format!("{} keys, {} guidelines\n", store.key_count(), store.guideline_count());
    for entry in store.entries() {
        out.push_str(&format!("\n{} [{}]\n", entry.context.raw(), entry.context.canonical()));
        for g in &entry.guidelines {
            out.push_str(&format!("  - {} (pair {}, step {})\n", g.text, g.source_pair, g.deviation));
        }
    }
    out
}

