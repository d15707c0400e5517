use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use banditfield::bandit::{cycle_sequence, default_block_order, repeat_sequence};
use banditfield::dataset::ExportFilter;
use banditfield::sim::{self, CohortSpec, StudyOptions, UserModel};
use banditfield::stats::{
    algorithm_comparisons, enjoyment_summary, render_comparisons, render_drift_report, render_summary,
    stratified_report, AnalysisOptions, DiffTestOptions,
};
use banditfield::{Algorithm, Catalog, ExperimentConfig, TrajectoryDataset};
use banditfield_server::{router, AppState, FileStore, SystemClock, OPERATOR_TOKEN_ENV};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "banditfield", version, about = "Run and analyse bandit field studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the participant and operator HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Catalog JSON; a synthetic catalog is used when omitted.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
    /// Simulate a cohort of synthetic participants and write a dataset.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// `policy=count,...` or a JSON cohort file.
        #[arg(long)]
        cohort: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Test for preference drift and summarize enjoyment and memory.
    Analyze {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        n_perm: usize,
        #[arg(long, default_value_t = 5_000)]
        n_boot: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        stratify: Option<Stratify>,
        #[arg(long, default_value = "cycle")]
        group_a: Algorithm,
        #[arg(long, default_value = "repeat")]
        group_b: Algorithm,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export completed sessions straight from a data directory.
    Export {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FilterArg::Passed)]
        filter: FilterArg,
        /// Output path; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the CYCLE and REPEAT sequences.
    Sequences {
        #[arg(short = 'T', long = "T", default_value_t = 50)]
        horizon: usize,
        #[arg(short = 'K', long = "K", default_value_t = 5)]
        arms: usize,
    },
    /// Family-wise false rejection rate under static users.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "cycle=40,repeat=38")]
        cohort: String,
        #[arg(long, default_value_t = 200)]
        datasets: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        n_perm: usize,
        #[arg(long, default_value_t = 200)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rejection rates of satiating users over a grid of strengths.
    Power {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated satiation strengths.
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<f64>,
        #[arg(long, default_value = "cycle=40,repeat=38")]
        cohort: String,
        #[arg(long, default_value_t = 200)]
        datasets: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        n_perm: usize,
        #[arg(long, default_value_t = 200)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stratify {
    HeavyLight,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Passed,
    All,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let config = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn load_catalog(path: Option<&Path>, config: &ExperimentConfig) -> Result<Catalog> {
    match path {
        Some(p) => Ok(Catalog::load(p).with_context(|| format!("loading catalog {}", p.display()))?),
        None => Ok(Catalog::synthetic(config, config.horizon as usize)),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn study_options(cohort: &str, datasets: usize, alpha: f64, n_perm: usize, n_boot: usize, seed: u64) -> Result<StudyOptions> {
    Ok(StudyOptions {
        n_datasets: datasets,
        cohort: CohortSpec::parse_arg(cohort)?,
        analysis: AnalysisOptions { alpha, n_perm, n_boot, ..AnalysisOptions::default() },
        seed,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, catalog, listen, data_dir } => {
            let config = load_config(config.as_deref())?;
            if catalog.is_none() {
                eprintln!("no --catalog given; serving a synthetic catalog");
            }
            let catalog = load_catalog(catalog.as_deref(), &config)?;
            let token = std::env::var(OPERATOR_TOKEN_ENV).ok();
            if token.is_none() {
                eprintln!("{OPERATOR_TOKEN_ENV} is not set; /export is disabled");
            }
            let state = AppState::open(config, catalog, &data_dir, Box::new(SystemClock), token)?;
            eprintln!("loaded {} sessions from {}", state.session_count(), data_dir.display());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Simulate { model, cohort, seed, out, config, catalog } => {
            let config = load_config(config.as_deref())?;
            let catalog = load_catalog(catalog.as_deref(), &config)?;
            let model = UserModel::load(&model)?;
            let spec = CohortSpec::parse_arg(&cohort)?;
            let dataset = sim::simulate_cohort(&config, &catalog, &model, &spec, seed)?;
            dataset.save(&out)?;
            println!("wrote {} participants to {}", dataset.participants.len(), out.display());
        }
        Command::Analyze { dataset, alpha, n_perm, n_boot, level, seed, stratify, group_a, group_b, out } => {
            let data = TrajectoryDataset::load(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            data.validate()?;
            let opts = AnalysisOptions {
                alpha,
                n_perm,
                n_boot,
                level,
                seed,
                group_a,
                group_b,
                stratify: stratify.is_some(),
            };
            let drift = stratified_report(&data, &opts)?;
            println!("{}", render_drift_report(&drift));
            let summary = enjoyment_summary(&data);
            println!("{}", render_summary(&summary));
            let comparisons = if data.group(Algorithm::SelfSelected).iter().any(|p| p.survey.is_some()) {
                let c = algorithm_comparisons(&data, &DiffTestOptions { n_perm, n_boot, level }, seed)?;
                println!("{}", render_comparisons(&c, alpha));
                Some(c)
            } else {
                None
            };
            if let Some(out) = out {
                write_json(&out, &json!({ "drift": drift, "summary": summary, "comparisons": comparisons }))?;
            }
        }
        Command::Export { data_dir, config, filter, out } => {
            let config = load_config(config.as_deref())?;
            if !data_dir.join("sessions").is_dir() {
                bail!("no session store under {}", data_dir.display());
            }
            let stored = FileStore::open(&data_dir)?.load_all()?;
            let filter = match filter {
                FilterArg::Passed => ExportFilter::Passed,
                FilterArg::All => ExportFilter::All,
            };
            let dataset = TrajectoryDataset::from_sessions(&config, stored.iter().map(|s| &s.session), filter);
            dataset.save(&out)?;
            println!("exported {} participants to {}", dataset.participants.len(), out.display());
        }
        Command::Sequences { horizon, arms } => {
            let fmt = |seq: Vec<banditfield::ArmId>| seq.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
            println!("CYCLE  {}", fmt(cycle_sequence(horizon, arms)?));
            println!("REPEAT {}", fmt(repeat_sequence(horizon, arms, &default_block_order(arms))?));
        }
        Command::Calibrate { model, cohort, datasets, alpha, n_perm, n_boot, seed, config } => {
            let config = load_config(config.as_deref())?;
            let catalog = load_catalog(None, &config)?;
            let model = UserModel::load(&model)?;
            let opts = study_options(&cohort, datasets, alpha, n_perm, n_boot, seed)?;
            let out = sim::calibration_study(&config, &catalog, &model, &opts)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Power { model, gamma, cohort, datasets, alpha, n_perm, n_boot, seed, config } => {
            let config = load_config(config.as_deref())?;
            let catalog = load_catalog(None, &config)?;
            let model = UserModel::load(&model)?;
            let opts = study_options(&cohort, datasets, alpha, n_perm, n_boot, seed)?;
            let curve = sim::power_study(&config, &catalog, &model, &gamma, &opts)?;
            println!("{}", serde_json::to_string_pretty(&curve)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
