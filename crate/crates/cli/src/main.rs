use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gridpipe::agent::{self, Agent, AgentConfig, Mode, Policy};
use gridpipe::environment::{EnvironmentConfig, LearningJob};
use gridpipe::neuralnet::Manifest;
use gridpipe::pipeline::{to_dot, PipelineDocument};
use gridpipe::primitives::Catalog;
use gridpipe::search::{self, SearchConfig};
use gridpipe::tabular::{load_csv, split_train_test, Table};
use gridpipe::Scalar;

const TRAIN_FRACTION: f64 = 0.8;

#[derive(Parser)]
#[command(name = "gridpipe", version, about = "Grid-based pipeline synthesis with a dueling Q-network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent on every CSV file in a directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        episodes: usize,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// JSON with optional "environment", "agent" and "search" objects.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Disable the hierarchical step and act over the enumerated table.
        #[arg(long)]
        flat: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "target")]
        target: String,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
    },
    /// Search pipelines for one dataset and write the ranked results.
    Search {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "target")]
        target: String,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: SearchArgs,
    },
    /// Search, refit on the training split and report test accuracy.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "target")]
        target: String,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMode::Vanilla)]
        mode: EvalMode,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[command(flatten)]
        run: SearchArgs,
    },
    /// Summarize a pipeline JSON file.
    Inspect {
        #[arg(long)]
        pipeline: PathBuf,
        /// Also write a Graphviz rendering.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct SearchArgs {
    /// Search episodes.
    #[arg(long, default_value_t = 5000)]
    episodes: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Vanilla,
    Ensemble,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    environment: EnvironmentConfig,
    agent: AgentConfig,
    search: SearchConfig,
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let catalog = Arc::new(Catalog::standard());
    match cli.command {
        Command::Train {
            corpus,
            episodes,
            out,
            config,
            flat,
            seed,
            target,
            precision,
        } => {
            let config = match config {
                Some(p) => read_config(&p)?,
                None => RunConfig::default(),
            };
            config.agent.validate().map_err(|e| Failure::Usage(e.into()))?;
            config.environment.validate().map_err(|e| Failure::Usage(e.into()))?;
            let mode = if flat { Mode::Flat } else { Mode::Hierarchical };
            let jobs = load_corpus(&corpus, &target, seed)?;
            match precision {
                Precision::F32 => train::<f32>(&config, mode, jobs, episodes, seed, &out, catalog)?,
                Precision::F64 => train::<f64>(&config, mode, jobs, episodes, seed, &out, catalog)?,
            }
            Ok(())
        }
        Command::Search {
            data,
            target,
            ckpt,
            k,
            beta,
            out,
            run,
        } => {
            let cfg = search_config(k, beta, &run)?;
            let (train, _) = load_split(&data, &target, run.seed)?;
            let ranked = with_policy(&ckpt, &catalog, |p| run_search(p, &train, &data, &catalog, &cfg))?;
            search::write_results(&out, &ranked, &catalog).context("writing search results")?;
            print!("{}", search::scores_csv(&ranked).context("formatting scores")?);
            Ok(())
        }
        Command::Eval {
            data,
            target,
            ckpt,
            mode,
            k,
            beta,
            run,
        } => {
            let cfg = search_config(k, beta, &run)?;
            let (train, test) = load_split(&data, &target, run.seed)?;
            let ranked = with_policy(&ckpt, &catalog, |p| run_search(p, &train, &data, &catalog, &cfg))?;
            let eval = match mode {
                EvalMode::Vanilla => search::predict_vanilla(&ranked, &catalog, &train, &test, run.seed),
                EvalMode::Ensemble => search::predict_ensemble(&ranked, &catalog, &train, &test, run.seed),
            }
            .context("refitting ranked pipelines")?;
            let used: Vec<String> = eval.used.iter().map(|i| i.to_string()).collect();
            println!("pipelines: {}", used.join(","));
            println!("accuracy: {:.6}", eval.accuracy);
            Ok(())
        }
        Command::Inspect { pipeline, dot } => {
            let text = fs::read_to_string(&pipeline).with_context(|| format!("reading {}", pipeline.display()))?;
            let doc = PipelineDocument::from_json(&text).context("parsing pipeline JSON")?;
            let dag = doc.to_dag(&catalog).context("rebuilding pipeline")?;
            println!("grid: {} rows, {} inputs per cell", doc.rows, doc.n_in);
            println!("vertices: {} (including the raw data)", dag.n_vertices());
            println!("edges: {}", dag.n_edges());
            match &doc.final_rule {
                Some(rule) => println!("final: {}", serde_json::to_string(rule).expect("rule serializes")),
                None => println!("final: none (no estimator)"),
            }
            for v in &doc.vertices {
                println!("  cell {:>2} ({},{}) {:<24} <- {:?}", v.cell, v.row, v.column, v.name, v.inputs);
            }
            if let Some(path) = dot {
                fs::write(&path, to_dot(&dag, &catalog)).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
    }
}

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Usage)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Usage)
}

fn search_config(k: usize, beta: f64, run: &SearchArgs) -> Result<SearchConfig, Failure> {
    let cfg = SearchConfig {
        k,
        beta,
        episodes: run.episodes,
        epsilon: run.epsilon,
        seed: run.seed,
        ..SearchConfig::default()
    };
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    Ok(cfg)
}

/// Stratified train/test split of one CSV file.
fn load_split(path: &Path, target: &str, seed: u64) -> anyhow::Result<(Table, Table)> {
    let table = load_csv(path, target).with_context(|| format!("loading {}", path.display()))?;
    split_train_test(&table, TRAIN_FRACTION, seed).with_context(|| format!("splitting {}", path.display()))
}

fn load_corpus(dir: &Path, target: &str, seed: u64) -> anyhow::Result<Vec<Arc<LearningJob>>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading corpus {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no CSV files in {}", dir.display());
    }
    let mut jobs = Vec::new();
    for f in files {
        let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let loaded = load_split(&f, target, seed).and_then(|(train, _)| Ok(LearningJob::classification(&name, train)?));
        match loaded {
            Ok(job) => jobs.push(Arc::new(job)),
            Err(e) => log::warn!("skipping {}: {e:#}", f.display()),
        }
    }
    if jobs.is_empty() {
        bail!("no usable dataset in {}", dir.display());
    }
    Ok(jobs)
}

fn train<T: Scalar>(
    config: &RunConfig,
    mode: Mode,
    jobs: Vec<Arc<LearningJob>>,
    episodes: usize,
    seed: u64,
    out: &Path,
    catalog: Arc<Catalog>,
) -> anyhow::Result<()> {
    let mut agent = Agent::<T>::new(config.agent.clone(), config.environment.clone(), Arc::clone(&catalog), mode, seed)?;
    let logs = agent.train_corpus(&jobs, episodes, |l| {
        if (l.episode + 1) % 100 == 0 {
            log::info!("episode {} reward {:.3} epsilon {:.3}", l.episode + 1, l.total_reward, l.epsilon);
        }
    })?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    agent.policy().save(out, &catalog)?;
    agent::write_metrics(&out.join("metrics.csv"), &logs)?;
    let mean = if logs.is_empty() {
        0.0
    } else {
        logs.iter().map(|l| l.total_reward).sum::<f64>() / logs.len() as f64
    };
    println!("episodes: {}", logs.len());
    println!("mean reward: {mean:.6}");
    println!("checkpoint: {}", out.display());
    Ok(())
}

/// Loads the checkpoint at its stored precision and runs `f` on it.
fn with_policy<R>(
    dir: &Path,
    catalog: &Catalog,
    f: impl FnOnce(PolicyRef<'_>) -> anyhow::Result<R>,
) -> anyhow::Result<R> {
    let manifest = Manifest::read(dir).with_context(|| format!("reading checkpoint {}", dir.display()))?;
    if manifest.dtype == f64::DTYPE {
        let p = Policy::<f64>::load(dir, catalog)?;
        f(PolicyRef::F64(&p))
    } else {
        let p = Policy::<f32>::load(dir, catalog)?;
        f(PolicyRef::F32(&p))
    }
}

enum PolicyRef<'a> {
    F32(&'a Policy<f32>),
    F64(&'a Policy<f64>),
}

fn run_search(
    policy: PolicyRef<'_>,
    train: &Table,
    path: &Path,
    catalog: &Arc<Catalog>,
    cfg: &SearchConfig,
) -> anyhow::Result<Vec<search::ScoredPipeline>> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let job = Arc::new(LearningJob::classification(name, train.clone())?);
    let ranked = match policy {
        PolicyRef::F32(p) => search::search(job, p, Arc::clone(catalog), cfg)?,
        PolicyRef::F64(p) => search::search(job, p, Arc::clone(catalog), cfg)?,
    };
    Ok(ranked)
}
