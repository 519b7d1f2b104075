//! `operon`: generate operator-learning datasets, train and compare models,
//! export predicted solution fields.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or validation
//! errors.

mod config;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use operon_core::dataset::{Dataset, FunctionDrawer, Problem};
use operon_core::model::{ModelKind, OperatorModel};
use operon_core::train::{self, CompareConfig};
use operon_core::Error;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "operon", version, about = "Multi-input operator learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    Gen(GenArgs),
    /// Train one model on a dataset.
    Train(TrainArgs),
    /// Train all three model kinds over several seeds and report.
    Compare(CompareArgs),
    /// Evaluate a checkpoint on a fresh input pair and export fields.
    Eval(EvalArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file (gen) or directory (other commands).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = ["diffusion", "advdiff"])]
    problem: Option<String>,
    #[arg(long)]
    functions: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    data: PathBuf,
    /// Number of enhanced-DeepONet branches; must match the dataset's input
    /// functions.
    #[arg(long)]
    branches: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, value_parser = ["fnn", "deeponet", "edeeponet"])]
    model: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    train: TrainFlags,
    /// Seeds per model kind.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = ["diffusion", "advdiff"])]
    problem: Option<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Usage(_)
            | Error::Parameter(_)
            | Error::Spec(_)
            | Error::Search { .. }
            | Error::Format(_)
            | Error::Json(_) => Self::usage(e),
            _ => Self::runtime(e),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn init_workers(jobs: Option<usize>) -> CliResult<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::usage("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::runtime)?;
    }
    Ok(())
}

fn apply_train_flags(config: &mut RunConfig, flags: &TrainFlags) {
    if let Some(b) = flags.branches {
        config.branches = b;
    }
    if let Some(e) = flags.epochs {
        config.train.epochs = e;
    }
    if let Some(lr) = flags.lr {
        config.train.lr = lr;
    }
    if let Some(b) = flags.batch {
        config.train.batch_size = Some(b);
    }
}

fn write_config(path: &Path, config: &RunConfig) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(config).map_err(Failure::runtime)?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn output_dir(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("operon-out"));
    fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.is_file() {
        return Err(Failure::usage(format!("dataset {} does not exist", path.display())));
    }
    Ok(Dataset::load(path)?)
}

fn check_branches(config: &RunConfig) -> CliResult<()> {
    if config.branches != 2 {
        return Err(Failure::usage(format!(
            "dataset records carry 2 input functions; --branches {} is not supported",
            config.branches
        )));
    }
    Ok(())
}

fn compare_config(config: &RunConfig) -> CompareConfig {
    CompareConfig {
        n_seeds: config.seeds,
        train_fraction: config.train_fraction,
        split_seed: config.split_seed,
        seed: config.seed,
        branches: config.branches,
        train: config.train,
        reference: config.reference.clone(),
    }
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let mut config = load_config(&args.common)?;
    init_workers(args.common.jobs)?;
    if let Some(p) = &args.problem {
        config.problem = Problem::parse(p)?;
    }
    if let Some(n) = args.functions {
        config.functions = n;
    }
    if let Some(p) = args.queries {
        config.queries = p;
    }
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("dataset.bin"));
    let dataset = Dataset::generate(config.problem, config.functions, config.queries, config.seed, config.generation)?;
    dataset
        .save(&out)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", out.display())))?;
    let mut config_path = out.clone().into_os_string();
    config_path.push(".config.json");
    write_config(Path::new(&config_path), &config)?;
    println!("records {}", dataset.len());
    println!("digest {}", dataset.digest());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let mut config = load_config(&args.common)?;
    init_workers(args.common.jobs)?;
    apply_train_flags(&mut config, &args.train);
    if let Some(m) = &args.model {
        config.model = ModelKind::parse(m)?;
    }
    config.train.seed = config.seed;
    check_branches(&config)?;
    config.train.validate()?;
    let dataset = load_dataset(&args.train.data)?;
    let dir = output_dir(&config)?;
    write_config(&dir.join("config.json"), &config)?;

    let specs = train::comparison_specs(&dataset, &compare_config(&config))?;
    let mut spec = specs
        .into_iter()
        .find(|s| s.kind == config.model)
        .expect("one spec per kind");
    spec.seed = config.seed;
    let split = dataset.split(config.train_fraction, config.split_seed)?;
    let mut model = OperatorModel::build(spec)?;
    log::info!("training {} with {} parameters", config.model, model.parameter_count());
    let outcome = train::train(&mut model, &dataset, &split, &config.train)?;
    train::write_run_artifacts(&dir, &outcome)?;
    let m = &outcome.metrics;
    println!(
        "best train MSE {:e} (epoch {}), best test MSE {:e} (epoch {})",
        m.best_train_mse, m.best_train_epoch, m.best_test_mse, m.best_test_epoch
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let mut config = load_config(&args.common)?;
    init_workers(args.common.jobs)?;
    apply_train_flags(&mut config, &args.train);
    if let Some(k) = args.seeds {
        config.seeds = k;
    }
    check_branches(&config)?;
    config.train.validate()?;
    if config.seeds == 0 {
        return Err(Failure::usage("--seeds must be >= 1"));
    }
    let dataset = load_dataset(&args.train.data)?;
    let dir = output_dir(&config)?;
    write_config(&dir.join("config.json"), &config)?;
    let outcome = train::compare(&dataset, &compare_config(&config))?;
    train::write_comparison(&dir, &outcome)?;
    print!("{}", outcome.report.table());
    if !outcome.report.complete {
        return Err(Failure::runtime("comparison incomplete: at least one run failed"));
    }
    Ok(())
}

fn write_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> operon_core::Result<()>) -> CliResult<()> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    fs::write(path, bytes).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let mut config = load_config(&args.common)?;
    init_workers(args.common.jobs)?;
    if let Some(p) = &args.problem {
        config.problem = Problem::parse(p)?;
    }
    if !args.checkpoint.is_file() {
        return Err(Failure::usage(format!("checkpoint {} does not exist", args.checkpoint.display())));
    }
    let model = OperatorModel::load(&args.checkpoint)?;
    let sensors = config.generation.sensor_count;
    if model.spec().n_branches() != 2 || model.spec().sensor_counts.iter().any(|&m| m != sensors) {
        return Err(Failure::usage(format!(
            "checkpoint expects sensors {:?}, configuration generates two functions of {sensors} sensors",
            model.spec().sensor_counts
        )));
    }
    let dir = output_dir(&config)?;
    write_config(&dir.join("config.json"), &config)?;
    let drawn = FunctionDrawer::new(config.problem, config.generation)?.draw(config.seed)?;
    let evaluation = train::evaluate_field(&model, &drawn.pair, &drawn.field)?;
    for (name, field) in [
        ("truth", &evaluation.truth),
        ("prediction", &evaluation.prediction),
        ("error", &evaluation.error),
    ] {
        write_file(&dir.join(format!("{name}.txt")), |w| train::write_field_text(field, w))?;
        write_file(&dir.join(format!("{name}.pgm")), |w| train::write_pgm(field, w))?;
    }
    println!("max error {:e}, mean error {:e}", evaluation.max_error, evaluation.mean_error);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OPERON_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
