use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};

use statepredict::evaluate::{evaluate, evaluate_table, EvalError, EvalReport, MatchCriterion};
use statepredict::predictor::{predict_world_state, prediction_json, PredictError};
use statepredict::resources::{
    envelope, envelope_csv, ProfileTable, ResourceError, DEFAULT_THRESHOLD,
};
use statepredict::scenario::{Scenario, ScenarioConfig, ScenarioError};
use statepredict::worldstore::StoreError;
use statepredict::{seeded_rng, ParameterSet, StateId, TransitionStore, WorldState};

/// Learns how a statechart-driven robot program moves between world states
/// and forecasts its CPU and memory demand.
#[derive(Debug, Parser)]
#[command(name = "statepredict", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run simulated episodes and print their transition traces as JSON lines.
    Simulate(SimulateArgs),
    /// Run training episodes and add the observed transitions to a store file.
    Train(TrainArgs),
    /// Forecast world states and the resource envelope from a given state.
    Predict(PredictArgs),
    /// Measure prediction precision on fresh episodes.
    Evaluate(EvaluateArgs),
    /// Write one envelope CSV per world state in a store.
    ExportProfiles(ExportArgs),
}

#[derive(Debug, Args)]
struct ScenarioOpts {
    /// Scenario configuration (JSON); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed; overrides the seed in the configuration.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Inject failure events with the configured per-substate probability.
    #[arg(long)]
    failures: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioOpts,
    /// Number of episodes to run.
    #[arg(long, value_name = "N", default_value_t = 1)]
    episodes: usize,
    /// Store to learn into; loaded first if it exists, saved afterwards.
    #[arg(long, value_name = "PATH")]
    db: Option<PathBuf>,
    /// Trace output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    scenario: ScenarioOpts,
    /// Number of training episodes.
    #[arg(long, value_name = "N", default_value_t = 500)]
    episodes: usize,
    /// Store file; extended if it exists, created otherwise.
    #[arg(long, value_name = "PATH")]
    db: PathBuf,
}

#[derive(Debug, Args)]
struct EnvelopeOpts {
    /// Resource profile table (JSON); built-in example table when omitted.
    #[arg(long, value_name = "PATH")]
    profiles: Option<PathBuf>,
    /// Number of steps to predict.
    #[arg(long, value_name = "N", default_value_t = 3)]
    horizon: usize,
    /// Probability mass the envelope has to cover.
    #[arg(long, value_name = "F", default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Trained store file.
    #[arg(long, value_name = "PATH")]
    db: PathBuf,
    /// Statechart state to predict from, e.g. root/PickTask/VisualServo.
    #[arg(long, value_name = "STATE")]
    state: StateId,
    /// State parameter of the queried world state (repeatable).
    #[arg(long, value_name = "KEY=VALUE")]
    phi: Vec<String>,
    /// Environment parameter of the queried world state (repeatable).
    #[arg(long, value_name = "KEY=VALUE")]
    psi: Vec<String>,
    #[command(flatten)]
    envelope: EnvelopeOpts,
    /// Print the predicted distributions as JSON instead of the envelope CSV.
    #[arg(long)]
    json: bool,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    S,
    W,
    Both,
}

impl CriterionArg {
    fn criteria(self) -> &'static [MatchCriterion] {
        match self {
            CriterionArg::S => &[MatchCriterion::SMatch],
            CriterionArg::W => &[MatchCriterion::WMatch],
            CriterionArg::Both => &MatchCriterion::BOTH,
        }
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    scenario: ScenarioOpts,
    /// Trained store file; it is not modified.
    #[arg(long, value_name = "PATH")]
    db: PathBuf,
    /// Number of evaluation episodes per failure setting.
    #[arg(long, value_name = "N", default_value_t = 100)]
    episodes: usize,
    /// Prediction horizon; the configured one when omitted.
    #[arg(long, value_name = "N")]
    horizon: Option<usize>,
    /// Match criterion used for scoring.
    #[arg(long, value_enum, default_value_t = CriterionArg::Both)]
    criterion: CriterionArg,
    /// Evaluate both without and with failures (ignores --failures).
    #[arg(long)]
    table: bool,
    /// Write the JSON report instead of the CSV table.
    #[arg(long)]
    json: bool,
    /// Report file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Trained store file.
    #[arg(long, value_name = "PATH")]
    db: PathBuf,
    #[command(flatten)]
    envelope: EnvelopeOpts,
    /// Output directory; created if missing.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Invalid {
        category: &'static str,
        message: String,
    },
}

impl CliError {
    fn invalid(category: &'static str, message: impl fmt::Display) -> Self {
        CliError::Invalid {
            category,
            message: message.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::Invalid { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "error:io: {m}"),
            CliError::Invalid { category, message } => write!(f, "error:{category}: {message}"),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::IoFailure { .. } => CliError::Io(e.to_string()),
            _ => CliError::invalid("store", e),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::IoFailure { .. } => CliError::Io(e.to_string()),
            ScenarioError::Store(inner) => inner.into(),
            _ => CliError::invalid("config", e),
        }
    }
}

impl From<ResourceError> for CliError {
    fn from(e: ResourceError) -> Self {
        match e {
            ResourceError::IoFailure { .. } => CliError::Io(e.to_string()),
            _ => CliError::invalid("profiles", e),
        }
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        CliError::invalid("predict", e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::IoFailure { .. } => CliError::Io(e.to_string()),
            EvalError::Scenario(inner) => inner.into(),
            EvalError::Predict(inner) => inner.into(),
            _ => CliError::invalid("evaluate", e),
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(opts: &ScenarioOpts) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.failures_enabled = opts.failures;
    Ok(cfg)
}

fn load_profiles(path: Option<&Path>) -> Result<ProfileTable, CliError> {
    Ok(match path {
        Some(p) => ProfileTable::load(p)?,
        None => ProfileTable::pick_and_place_example(),
    })
}

fn load_or_new(path: &Path) -> Result<TransitionStore, CliError> {
    if path.exists() {
        info!("extending store {}", path.display());
        Ok(TransitionStore::load(path)?)
    } else {
        Ok(TransitionStore::new())
    }
}

fn check_envelope_opts(opts: &EnvelopeOpts) -> Result<(), CliError> {
    if opts.horizon < 1 {
        return Err(CliError::invalid("usage", "--horizon must be at least 1"));
    }
    if !(opts.threshold > 0.0 && opts.threshold <= 1.0) {
        return Err(CliError::invalid("usage", "--threshold must lie in (0, 1]"));
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.scenario)?;
    let mut rng = seeded_rng(cfg.seed, 0);
    let mut store = match &args.db {
        Some(path) => load_or_new(path)?,
        None => TransitionStore::new(),
    };
    let scenario = Scenario::new(cfg)?;
    let mut text = String::new();
    for ep in 0..args.episodes {
        let trace = scenario.run_episode(ep as u64, &mut store, &mut rng, None)?;
        debug!("episode {ep}: {:?}", trace.outcome);
        text.push_str(&trace.to_jsonl());
    }
    if let Some(path) = &args.db {
        store.save(path)?;
    }
    write_output(args.out.as_deref(), &text)
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.scenario)?;
    let mut store = load_or_new(&args.db)?;
    let mut rng = seeded_rng(cfg.seed, 0);
    let outcomes = Scenario::new(cfg)?.train(&mut store, &mut rng, args.episodes)?;
    info!(
        "{} episodes, {} world states, {} transitions",
        outcomes.len(),
        store.len(),
        store.total_count()
    );
    store.save(&args.db)?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<(), CliError> {
    check_envelope_opts(&args.envelope)?;
    let parse = |items: &[String]| {
        ParameterSet::from_assignments(items).map_err(|e| CliError::invalid("usage", e))
    };
    let ws = WorldState::new(args.state.clone(), parse(&args.phi)?, parse(&args.psi)?);
    let store = TransitionStore::load(&args.db)?;
    let profiles = load_profiles(args.envelope.profiles.as_deref())?;
    let (steps, fallback) = predict_world_state(&store, &ws, args.envelope.horizon)?;
    if fallback {
        eprintln!(
            "warning:fallback: world state {} with the given parameters was never observed; \
             using the uniform distribution",
            args.state
        );
    }
    let text = if args.json {
        let mut s = serde_json::to_string_pretty(&prediction_json(&steps, &store))
            .expect("JSON values serialize");
        s.push('\n');
        s
    } else {
        envelope_csv(&envelope(
            &steps,
            &store,
            &profiles,
            args.envelope.threshold,
        )?)
    };
    write_output(args.out.as_deref(), &text)
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.scenario)?;
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    let store = TransitionStore::load(&args.db)?;
    let criteria = args.criterion.criteria();
    let report: EvalReport = if args.table {
        evaluate_table(&cfg, &store, args.episodes, criteria, cfg.seed)?
    } else {
        let mut copy = store.clone();
        let mut rng = seeded_rng(cfg.seed, 1 + cfg.failures_enabled as u64);
        evaluate(
            &cfg,
            &mut copy,
            args.episodes,
            criteria,
            cfg.failures_enabled,
            &mut rng,
        )?
    };
    for row in &report.rows {
        info!(
            "{} failures={}: {}/{} correct",
            row.criterion.token(),
            row.failures_enabled,
            row.predictions_correct,
            row.predictions_total
        );
    }
    let text = if args.json {
        report.to_json()
    } else {
        report.to_csv()
    };
    write_output(args.out.as_deref(), &text)
}

fn export_profiles(args: ExportArgs) -> Result<(), CliError> {
    check_envelope_opts(&args.envelope)?;
    let store = TransitionStore::load(&args.db)?;
    let profiles = load_profiles(args.envelope.profiles.as_deref())?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let mut index = String::from("world_state_id,state,file\n");
    for (i, ws) in store.world_states().iter().enumerate() {
        let (steps, _) = predict_world_state(&store, ws, args.envelope.horizon)?;
        let env = envelope(&steps, &store, &profiles, args.envelope.threshold)?;
        let name = format!("ws_{i:05}.csv");
        write_output(Some(&args.out.join(&name)), &envelope_csv(&env))?;
        index.push_str(&format!("{i},{},{name}\n", ws.state));
    }
    write_output(Some(&args.out.join("index.csv")), &index)
}

fn init_logging() -> Result<(), CliError> {
    let level = std::env::var("STATEPREDICT_LOG").unwrap_or_else(|_| "off".into());
    let filter = match level.as_str() {
        "off" => log::LevelFilter::Off,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => {
            return Err(CliError::invalid(
                "usage",
                format!("STATEPREDICT_LOG must be off, info or debug, not `{other}`"),
            ))
        }
    };
    env_logger::Builder::new().filter_level(filter).init();
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_logging()?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::ExportProfiles(a) => export_profiles(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error:usage: {first} (see --help)");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
