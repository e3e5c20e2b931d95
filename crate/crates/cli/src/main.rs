//! `ivec`: pipeline orchestration and benchmarking from the command line.
//!
//! Each pipeline stage is a subcommand operating on a working directory;
//! `run-all` executes every stage in order. Configuration comes from an
//! optional JSON file (`--config`), with individual flags overriding the
//! file values.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ivec_core::bench::{benchmark, BenchmarkConfig};
use ivec_core::pipeline::{run_stage, PipelineConfig, STAGES};
use ivec_core::tvm::{MaxPrinciple, TvmMethod};

#[derive(Parser)]
#[command(name = "ivec", about = "i-vector speaker verification pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and trial list.
    Synth(StageArgs),
    /// Train the universal background model.
    #[command(name = "train-ubm")]
    TrainUbm(StageArgs),
    /// Compute Baum-Welch sufficient statistics.
    Stats(StageArgs),
    /// MAP-adapt supervectors from the statistics.
    Supervectors(StageArgs),
    /// Train the total variability model.
    #[command(name = "train-tvm")]
    TrainTvm(StageArgs),
    /// Extract i-vectors for every utterance.
    Extract(StageArgs),
    /// Fit the whitening/length-norm post-processor and the PLDA model.
    #[command(name = "train-backend")]
    TrainBackend(StageArgs),
    /// Score the trial list.
    Score(StageArgs),
    /// Compute EER, minDCF and the DET curve from the scores.
    Evaluate(StageArgs),
    /// Run every stage in order.
    #[command(name = "run-all")]
    RunAll(StageArgs),
    /// Compare per-iteration TVM training times across methods.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Working directory holding the pipeline artifacts.
    #[arg(long, default_value = "workdir")]
    workdir: PathBuf,
    /// JSON pipeline configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Require bit-reproducible artifacts (always honored; recorded in the
    /// manifests).
    #[arg(long)]
    reproducible: bool,
    /// TVM method: fefa, pca, ppca, fa, ppls, sppca.
    #[arg(long)]
    method: Option<String>,
    /// Maximization principle for the TVM M-step.
    #[arg(long, value_parser = ["1", "2"])]
    max_principle: Option<String>,
    /// MAP relevance factor r.
    #[arg(long)]
    relevance_factor: Option<f64>,
    /// TVM training iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Supervision weight for ppls/sppca.
    #[arg(long)]
    beta: Option<f64>,
}

impl StageArgs {
    fn build_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut config: PipelineConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.synth.seed = seed;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        if self.reproducible {
            config.reproducible = true;
        }
        if let Some(method) = &self.method {
            config.tvm.method = parse_method(method)?;
        }
        if let Some(mp) = &self.max_principle {
            config.tvm.max_principle = if mp == "1" {
                MaxPrinciple::One
            } else {
                MaxPrinciple::Two
            };
        }
        if let Some(r) = self.relevance_factor {
            config.relevance_factor = r;
        }
        if let Some(iters) = self.iterations {
            config.tvm.iterations = iters;
        }
        if let Some(beta) = self.beta {
            config.tvm.beta = beta;
        }
        Ok(config)
    }
}

fn parse_method(name: &str) -> anyhow::Result<TvmMethod> {
    match TvmMethod::parse(name) {
        Some(m) => Ok(m),
        None => bail!("unknown method '{name}': expected fefa, pca, ppca, fa, ppls or sppca"),
    }
}

#[derive(Args)]
struct BenchmarkArgs {
    /// JSON benchmark configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods to time.
    #[arg(long, default_value = "fefa,ppca,fa")]
    methods: String,
    /// Training utterances.
    #[arg(long)]
    u: Option<usize>,
    /// UBM components.
    #[arg(long)]
    c: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    f: Option<usize>,
    /// i-vector dimension.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run_benchmark(args: &BenchmarkArgs) -> anyhow::Result<()> {
    let mut config: BenchmarkConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => BenchmarkConfig::default(),
    };
    macro_rules! maybe {
        ($field:ident) => {
            if let Some(v) = args.$field {
                config.$field = v;
            }
        };
    }
    maybe!(u);
    maybe!(c);
    maybe!(f);
    maybe!(d);
    maybe!(iterations);
    maybe!(repetitions);
    maybe!(seed);
    maybe!(threads);

    let methods: Vec<TvmMethod> = args
        .methods
        .split(',')
        .map(|m| parse_method(m.trim()))
        .collect::<anyhow::Result<_>>()?;
    let report = benchmark(&methods, &config)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.output {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    for slow in &methods {
        for fast in &methods {
            if slow != fast {
                if let Some(s) = report.speedup(*slow, *fast) {
                    if s > 1.0 {
                        eprintln!(
                            "{} is {s:.1}x faster per iteration than {}",
                            fast.name(),
                            slow.name()
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn run_pipeline_stage(stage: &str, args: &StageArgs) -> anyhow::Result<()> {
    let config = args.build_config()?;
    if stage == "run-all" {
        for s in STAGES {
            eprintln!("[{s}]");
            run_stage(s, &config, &args.workdir)?;
        }
    } else {
        run_stage(stage, &config, &args.workdir)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(a) => run_pipeline_stage("synth", a),
        Command::TrainUbm(a) => run_pipeline_stage("train-ubm", a),
        Command::Stats(a) => run_pipeline_stage("stats", a),
        Command::Supervectors(a) => run_pipeline_stage("supervectors", a),
        Command::TrainTvm(a) => run_pipeline_stage("train-tvm", a),
        Command::Extract(a) => run_pipeline_stage("extract", a),
        Command::TrainBackend(a) => run_pipeline_stage("train-backend", a),
        Command::Score(a) => run_pipeline_stage("score", a),
        Command::Evaluate(a) => run_pipeline_stage("evaluate", a),
        Command::RunAll(a) => run_pipeline_stage("run-all", a),
        Command::Benchmark(a) => run_benchmark(a),
    }
}
