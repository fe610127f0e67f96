//! The `agentsim` command line.
//!
//! Every subcommand reads one JSON experiment file, applies flag overrides,
//! runs one harness and writes an output bundle: `events.jsonl`,
//! `metrics.csv`, `summary.txt` and, last, `manifest.json`.
//!
//! Exit codes: 0 success, 1 config or usage error, 2 runtime failure
//! (including any failed trial; the bundle is still written).

mod bundle;
mod load;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use agentsim_core::backends::CompletionBackend;
use agentsim_core::EpisodeLog;
use agentsim_runners::ablation::AblationError;
use agentsim_runners::transfer::TransferError;
use agentsim_runners::trials::TrialRow;
use agentsim_runners::{
    run_env_trials, run_memory_transfer, run_multiworld, run_tariff_ablation, BackendKind, EnvSpec,
    ExperimentConfig, Roster, TTest, TTestError, TrialTable,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use bundle::{
    inventory, sha256_hex, write_bundle, BundleContents, FileEntry, RunManifest, BUNDLE_FILES, EVENTS_FILE,
    MANIFEST_FILE, METRICS_FILE, SUMMARY_FILE,
};
pub use load::{load_config, parse_config, ConfigError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Bundle directory when neither `--out` nor `output_dir` is set.
pub const DEFAULT_OUT_DIR: &str = "agentsim-out";

#[derive(Debug, Parser)]
#[command(name = "agentsim", version, about = "Run agent simulation experiments from a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One episode of the `env` world.
    Run(RunArgs),
    /// `trials` episodes of the `env` world over consecutive seeds.
    Trials(RunArgs),
    /// Source world, then the questionnaire with carried and with fresh memories.
    Transfer(RunArgs),
    /// One roster cycling through the `multiworld` schedule.
    Multiworld(RunArgs),
    /// Cumulative tariff ablation over the market world.
    Ablation(RunArgs),
    /// Recompute `env` metrics from a saved events file.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment file (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Base seed; overrides `seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Trial count; overrides `trials`. Ignored by `run`, `transfer` and `multiworld`.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    /// Bundle directory; overrides `output_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Completion backend; overrides `backend.kind`.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: RunArgs,
    /// `events.jsonl` from an earlier `run` or `trials` bundle.
    #[arg(long, value_name = "PATH")]
    events: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Replay,
    Remote,
}

impl From<BackendArg> for BackendKind {
    fn from(arg: BackendArg) -> Self {
        match arg {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Replay => BackendKind::Replay,
            BackendArg::Remote => BackendKind::Remote,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Result of a finished harness, before it is written out.
struct Report {
    contents: BundleContents,
    /// Non-empty when the bundle is written but the run counts as failed.
    problems: Vec<String>,
}

/// An experiment file with flag overrides applied.
struct Prepared {
    runner: &'static str,
    config: ExperimentConfig,
    config_path: PathBuf,
    config_sha256: String,
    base_dir: PathBuf,
    out: PathBuf,
    started_at: String,
}

impl Prepared {
    fn load(runner: &'static str, args: &RunArgs) -> Result<Self, Failure> {
        let started_at = bundle::timestamp();
        let (mut config, raw) = load_config(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(trials) = args.trials {
            if trials == 0 {
                return Err(Failure::Config("--trials must be at least 1".into()));
            }
            config.trials = trials;
        }
        if let Some(kind) = args.backend {
            config.backend.kind = kind.into();
        }
        let base_dir = match args.config.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => dir.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let out = match (&args.out, &config.output_dir) {
            (Some(out), _) => out.clone(),
            (None, Some(dir)) => base_dir.join(dir),
            (None, None) => PathBuf::from(DEFAULT_OUT_DIR),
        };
        Ok(Prepared {
            runner,
            config,
            config_path: args.config.clone(),
            config_sha256: sha256_hex(&raw),
            base_dir,
            out,
            started_at,
        })
    }

    fn config_error(&self, field: &str, message: impl Into<String>) -> Failure {
        Failure::Config(ConfigError::new(&self.config_path, Some(field), message).to_string())
    }

    fn backend(&self) -> Result<Arc<dyn CompletionBackend>, Failure> {
        self.config.backend.build(&self.base_dir).map_err(|e| self.config_error("backend", e.to_string()))
    }

    fn env(&self) -> Result<&EnvSpec, Failure> {
        let env = self.config.env.as_ref().ok_or_else(|| self.config_error("env", "required by this subcommand"))?;
        self.check_world("env", env)?;
        Ok(env)
    }

    /// Builds the world once so invalid parameters surface as config errors.
    fn check_world(&self, field: &str, env: &EnvSpec) -> Result<(), Failure> {
        env.build().map(drop).map_err(|e| self.config_error(field, e.to_string()))
    }

    fn manifest(&self) -> RunManifest {
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            runner: self.runner.to_string(),
            config_path: self.config_path.clone(),
            config_sha256: self.config_sha256.clone(),
            config: serde_json::to_value(&self.config).expect("configs serialize"),
            seed: self.config.seed,
            started_at: self.started_at.clone(),
            finished_at: String::new(),
            files: Vec::new(),
        }
    }
}

/// Parse `args` (program name first), run the subcommand and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(Failure::Config(message)) => {
            eprintln!("config error: {message}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(message)) => {
            eprintln!("error: {message}");
            EXIT_RUNTIME
        }
    }
}

fn execute(command: Command) -> Result<i32, Failure> {
    let (prepared, report) = match &command {
        Command::Run(args) => episodes(Prepared::load("run", args)?, 1)?,
        Command::Trials(args) => {
            let prepared = Prepared::load("trials", args)?;
            let trials = prepared.config.trials;
            episodes(prepared, trials)?
        }
        Command::Transfer(args) => transfer(Prepared::load("transfer", args)?)?,
        Command::Multiworld(args) => multiworld(Prepared::load("multiworld", args)?)?,
        Command::Ablation(args) => ablation(Prepared::load("ablation", args)?)?,
        Command::Score(args) => score(Prepared::load("score", &args.common)?, &args.events)?,
    };
    write_bundle(&prepared.out, &report.contents, prepared.manifest())
        .map_err(|e| Failure::Runtime(format!("writing bundle to {}: {e}", prepared.out.display())))?;
    print!("{}", report.contents.summary);
    println!("bundle: {}", prepared.out.display());
    for problem in &report.problems {
        eprintln!("error: {problem}");
    }
    Ok(if report.problems.is_empty() { EXIT_OK } else { EXIT_RUNTIME })
}

fn episodes(prepared: Prepared, trials: usize) -> Result<(Prepared, Report), Failure> {
    let env = prepared.env()?;
    let backend = prepared.backend()?;
    let config = &prepared.config;
    let (table, logs) =
        run_env_trials(env, &config.agents, backend, config.max_steps(), trials, config.seed).map_err(runtime)?;
    let events = logs.iter().flatten().map(EpisodeLog::to_jsonl).collect();
    let summary = trials_summary(&prepared, env, &table);
    let report = Report { contents: BundleContents { events, metrics: table.to_csv(), summary }, problems: failures(&table) };
    Ok((prepared, report))
}

fn failures(table: &TrialTable) -> Vec<String> {
    table
        .rows
        .iter()
        .filter_map(|row| row.outcome.as_ref().err().map(|e| format!("trial {} (seed {}) failed: {e}", row.trial, row.seed)))
        .collect()
}

fn trials_summary(prepared: &Prepared, env: &EnvSpec, table: &TrialTable) -> String {
    let mut out = format!(
        "runner: {}\nworld: {}\nagents: {}\nseed: {}\ntrials: {} ({} ok, {} failed)\n",
        prepared.runner,
        env.world_tag(),
        env.population(),
        prepared.config.seed,
        table.rows.len(),
        table.rows.len() - table.failures(),
        table.failures(),
    );
    let (means, stddevs) = (table.mean(), table.stddev());
    if !means.is_empty() {
        let width = means.keys().map(String::len).max().unwrap_or(0).max("metric".len());
        out.push_str(&format!("\n{:<width$}  {:>14}  {:>14}\n", "metric", "mean", "stddev"));
        for (name, mean) in &means {
            out.push_str(&format!("{name:<width$}  {mean:>14.6}  {:>14.6}\n", stddevs[name]));
        }
    }
    out
}

fn tagged(log: &EpisodeLog, key: &str, value: &str) -> String {
    let records = log.records.iter().map(|r| r.clone().with(key, value)).collect();
    EpisodeLog { records, ..log.clone() }.to_jsonl()
}

fn t_test_line(name: &str, test: &Result<TTest, TTestError>) -> String {
    match test {
        Ok(t) => format!("{name}: t = {:.6}, p = {:.6}, df = {}\n", t.t, t.p, t.df),
        Err(e) => format!("{name}: {e}\n"),
    }
}

fn transfer(prepared: Prepared) -> Result<(Prepared, Report), Failure> {
    let plan = prepared.config.transfer.as_ref().ok_or_else(|| prepared.config_error("transfer", "required by this subcommand"))?;
    prepared.check_world("transfer.source", &plan.source)?;
    let roster = Roster::build(&prepared.config.agents, plan.source.population(), prepared.backend()?);
    let report = run_memory_transfer(plan, &roster, prepared.config.seed).map_err(|e| match e {
        TransferError::Instrument(m) => prepared.config_error("transfer.instrument", m),
        other => runtime(other),
    })?;
    let events = [("source", &report.source_log), ("carry", &report.carry_log), ("fresh", &report.fresh_log)]
        .iter()
        .map(|(phase, log)| tagged(log, "phase", phase))
        .collect();
    let summary = format!(
        "runner: transfer\nsource world: {}\nagents: {}\nseed: {}\ncarry memory: {}\nbias differences: {}\nsubscale differences: {}\n{}{}",
        plan.source.world_tag(),
        roster.len(),
        prepared.config.seed,
        plan.carry_memory,
        report.bias_differences.len(),
        report.subscale_differences.len(),
        t_test_line("bias t-test", &report.bias_test),
        t_test_line("subscale t-test", &report.subscale_test),
    );
    let report = Report { contents: BundleContents { events, metrics: report.to_csv(), summary }, problems: Vec::new() };
    Ok((prepared, report))
}

fn multiworld(prepared: Prepared) -> Result<(Prepared, Report), Failure> {
    let schedule =
        prepared.config.multiworld.as_ref().ok_or_else(|| prepared.config_error("multiworld", "required by this subcommand"))?;
    if schedule.worlds.len() < 2 {
        return Err(prepared.config_error("multiworld.worlds", "needs at least two worlds"));
    }
    let population = schedule.worlds[0].population();
    for (i, world) in schedule.worlds.iter().enumerate() {
        let field = format!("multiworld.worlds[{i}]");
        if world.population() != population {
            return Err(prepared.config_error(
                &field,
                format!("has {} agents but worlds[0] has {population}", world.population()),
            ));
        }
        prepared.check_world(&field, world)?;
    }
    let roster = Roster::build(&prepared.config.agents, population, prepared.backend()?);
    let log = run_multiworld(schedule, &mut roster.policies(), prepared.config.seed).map_err(runtime)?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["world_index", "world", "metric", "value"]).expect("in-memory write");
    for (i, world) in schedule.worlds.iter().enumerate() {
        for (name, value) in world.metrics(&log.world_records(i)) {
            csv.write_record([i.to_string(), world.world_tag().to_string(), name, value.to_string()])
                .expect("in-memory write");
        }
    }
    let metrics = String::from_utf8(csv.into_inner().expect("in-memory flush")).expect("csv is utf-8");
    let summary = format!(
        "runner: multiworld\nagents: {population}\nseed: {}\ncycles: {}\nsteps per phase: {}\nphases: {}\nsequence: {}\n",
        prepared.config.seed,
        schedule.cycles,
        schedule.steps_per_phase,
        log.phases.len(),
        log.world_tags().join(" "),
    );
    let report = Report { contents: BundleContents { events: log.to_jsonl(), metrics, summary }, problems: Vec::new() };
    Ok((prepared, report))
}

fn ablation(prepared: Prepared) -> Result<(Prepared, Report), Failure> {
    let spec = prepared.config.ablation.as_ref().ok_or_else(|| prepared.config_error("ablation", "required by this subcommand"))?;
    let plan = spec.plan(&prepared.config);
    for &setting in &plan.settings {
        prepared.check_world("ablation.market", &EnvSpec::Market(plan.market_for(setting)))?;
    }
    let table = run_tariff_ablation(&plan, prepared.backend()?).map_err(|e| match e {
        AblationError::Level(_) | AblationError::NoSettings | AblationError::MissingInput(..) | AblationError::NoAgents => {
            prepared.config_error("ablation", e.to_string())
        }
        other => runtime(other),
    })?;
    let events = table
        .rows
        .iter()
        .flat_map(|row| row.logs.iter().map(|log| tagged(log, "setting", &row.setting.label())))
        .collect();
    let summary = format!(
        "runner: ablation\nagents: {}\nseed: {}\ntrials per setting: {}\n\n{}",
        plan.market.n_agents,
        prepared.config.seed,
        plan.trials,
        table.render()
    );
    let report = Report { contents: BundleContents { events, metrics: table.to_csv(), summary }, problems: Vec::new() };
    Ok((prepared, report))
}

/// Splits concatenated episode logs at their summary lines.
fn split_episodes(text: &str) -> Result<Vec<EpisodeLog>, String> {
    let mut logs = Vec::new();
    let mut segment = String::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        segment.push_str(line);
        segment.push('\n');
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", idx + 1))?;
        if value.get("summary").is_some() {
            logs.push(EpisodeLog::from_jsonl(&segment).map_err(|e| format!("episode ending at line {}: {e}", idx + 1))?);
            segment.clear();
        }
    }
    if !segment.is_empty() {
        return Err("records after the last summary line".into());
    }
    Ok(logs)
}

fn score(prepared: Prepared, events_path: &Path) -> Result<(Prepared, Report), Failure> {
    let env = prepared.env()?;
    let text = std::fs::read_to_string(events_path)
        .map_err(|e| Failure::Config(format!("{}: cannot read: {e}", events_path.display())))?;
    let logs = split_episodes(&text).map_err(|e| Failure::Config(format!("{}: {e}", events_path.display())))?;
    if logs.is_empty() {
        return Err(Failure::Config(format!("{}: no episodes", events_path.display())));
    }
    let rows = logs
        .iter()
        .enumerate()
        .map(|(trial, log)| TrialRow { trial, seed: log.seed, outcome: Ok(env.metrics(&log.records)) })
        .collect();
    let table = TrialTable { rows };
    let mut summary = trials_summary(&prepared, env, &table);
    summary.push_str(&format!("source: {}\n", events_path.display()));
    let report = Report { contents: BundleContents { events: text, metrics: table.to_csv(), summary }, problems: Vec::new() };
    Ok((prepared, report))
}

