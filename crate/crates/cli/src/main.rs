//! `varsample`: generate synthetic populations and run sampling-design
//! comparisons.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use varsample::dataset::{self, DatasetError};
use varsample::experiment::{Experiment, ExperimentError, ModelKind};
use varsample::samplers::SamplerKind;
use varsample::synthetic::{self, DEFAULT_COMPONENTS, DEFAULT_GRID_SIDE};
use varsample::Population;

use config::{Format, PartialConfig, RunConfig, SEED_ENV, SYNTH_INPUT};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or input data; exit status 2.
    #[error("{0}")]
    Config(String),
    /// Failure while computing or writing results; exit status 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Infeasible { .. } | ExperimentError::BadFractions { .. } | ExperimentError::Dataset(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "varsample", version, about = "Model-assisted sampling design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Gaussian-mixture population on a square lattice as CSV.
    Synth(SynthArgs),
    /// Run the sampling comparison and write the report.
    Run(RunArgs),
    /// Check a configuration and its input data without running anything.
    Validate(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_GRID_SIDE)]
    grid_side: usize,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum ModelChoice {
    Rls,
    Mlp,
    Both,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat TOML file with any of the settings below; flags take priority.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file, or `synth` for a generated population.
    #[arg(long)]
    input: Option<String>,
    /// Comma-separated feature columns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,
    /// Comma-separated list of srs, lpm, bmvi, or `all`.
    #[arg(long)]
    samplers: Option<String>,
    /// Comma-separated prior/sample/test shares, e.g. `0.1/0.6/0.3,0.2/0.5/0.3`.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<String>>,
    #[arg(long)]
    reps: Option<usize>,
    /// Run seed; falls back to the config file, then VARSAMPLE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; defaults to the number of cores. Results do not
    /// depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    rls_alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    rls_betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    mlp_alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    mlp_betas: Option<Vec<f64>>,
    /// Hidden units of the MLP.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Seed of the generated population when the input is `synth`.
    #[arg(long)]
    synth_seed: Option<u64>,
    #[arg(long)]
    grid_side: Option<usize>,
    #[arg(long)]
    components: Option<usize>,
}

fn parse_samplers(text: &str) -> Result<Vec<SamplerKind>, CliError> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(SamplerKind::ALL.to_vec());
    }
    let mut out: Vec<SamplerKind> = Vec::new();
    for part in text.split(',') {
        let s: SamplerKind = part.parse().map_err(CliError::Config)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => PartialConfig::load(path)?,
            None => PartialConfig::default(),
        };
        let flags = PartialConfig {
            input: self.input.clone(),
            features: self.features.clone(),
            target: self.target.clone(),
            models: self.model.map(|m| match m {
                ModelChoice::Rls => vec![ModelKind::Rls],
                ModelChoice::Mlp => vec![ModelKind::Mlp],
                ModelChoice::Both => vec![ModelKind::Rls, ModelKind::Mlp],
            }),
            samplers: self.samplers.as_deref().map(parse_samplers).transpose()?,
            fractions: self.fractions.clone(),
            reps: self.reps,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            rls_alphas: self.rls_alphas.clone(),
            rls_betas: self.rls_betas.clone(),
            mlp_alphas: self.mlp_alphas.clone(),
            mlp_betas: self.mlp_betas.clone(),
            hidden: self.hidden,
            cv_folds: self.cv_folds,
            synth_seed: self.synth_seed,
            grid_side: self.grid_side,
            components: self.components,
        };
        file.overlay(flags).resolve(std::env::var(SEED_ENV).ok())
    }
}

fn load_population(cfg: &RunConfig) -> Result<Population, CliError> {
    if cfg.input == SYNTH_INPUT {
        let spec = synthetic::random_spec_with(cfg.synth_seed, cfg.components, cfg.grid_side);
        return synthetic::generate_population(&spec).map_err(|e| CliError::Config(e.to_string()));
    }
    Ok(dataset::load_csv(&cfg.input, &cfg.features, &cfg.target)?)
}

/// Data-dependent checks shared by `validate` and `run`.
fn check_against_data(cfg: &RunConfig, pop: &Population) -> Result<(), CliError> {
    for f in cfg.fraction_vectors()? {
        f.check_feasible(pop.len(), pop.dim())?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = synthetic::random_spec_with(args.seed, args.components, args.grid_side);
    let pop = synthetic::generate_population(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    dataset::save_csv(&pop, &args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!("wrote {} points to {}", pop.len(), args.out.display());
    Ok(())
}

fn cmd_validate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let pop = load_population(&cfg)?;
    check_against_data(&cfg, &pop)?;
    print!("{}", cfg.to_toml());
    for f in cfg.fraction_vectors()? {
        let (p, s, t) = f.sizes(pop.len());
        println!("# {f}: prior {p}, sample {s}, test {t}");
    }
    Ok(())
}

fn write_outputs(cfg: &RunConfig, report: &varsample::experiment::ExperimentReport) -> Result<Vec<PathBuf>, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("cannot write to {}: {e}", cfg.out.display()));
    std::fs::create_dir_all(&cfg.out).map_err(io)?;
    let config_path = cfg.out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(io)?;
    let report_path = match cfg.format {
        Format::Csv => cfg.out.join("report.csv"),
        Format::Json => cfg.out.join("report.json"),
    };
    let file = std::fs::File::create(&report_path).map_err(io)?;
    let file = std::io::BufWriter::new(file);
    match cfg.format {
        Format::Csv => report.write_csv(file)?,
        Format::Json => report.write_json(file)?,
    }
    let mut written = vec![config_path, report_path];
    written.extend(report.write_plot_files(&cfg.out)?);
    Ok(written)
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let pop = load_population(&cfg)?;
    check_against_data(&cfg, &pop)?;
    let fractions = cfg.fraction_vectors()?;
    let specs = cfg.model_specs()?;
    let exp = Experiment::new(&pop)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = pool.install(|| exp.run_grid(&specs, &fractions, &cfg.samplers, cfg.reps, cfg.seed))?;

    for path in write_outputs(&cfg, &report)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

