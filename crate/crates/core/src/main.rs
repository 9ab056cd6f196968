use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tlcsp::bench::{parse_strategies, run_benchmark, run_cell, save_summary, summarize, BenchConfig, Strategy};
use tlcsp::data::{load_corpus, save_corpus, subject_file_name, SynthConfig, SyntheticCorpus};
use tlcsp::{Error, Result};

#[derive(Parser)]
#[command(name = "tlcsp", version, about = "CSP transfer-learning benchmark for two-class EEG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, one EEGX file per subject.
    Gen(GenArgs),
    /// Run the full benchmark and write per-cell accuracies.
    Run(RunArgs),
    /// Evaluate one strategy for one target subject and m.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 9)]
    subjects: usize,
    #[arg(long, default_value_t = 22)]
    channels: usize,
    #[arg(long, default_value_t = 250)]
    samples: usize,
    #[arg(long, default_value_t = 72)]
    epochs_per_class: usize,
    #[arg(long, default_value_t = 2.0)]
    sigma_hi: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_lo: f64,
    /// Rotation scale between subjects (radians).
    #[arg(long, default_value_t = 0.2)]
    divergence: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long, default_value_t = 40)]
    pool: usize,
    #[arg(long, default_value_t = 3)]
    filters: usize,
    #[arg(long, default_value_t = 0.5)]
    cm1_lambda: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Spacing of m; IA warm-starts along this grid, so `eval` must match `run`.
    #[arg(long, default_value_t = 2)]
    m_step: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated strategy ids, or `all`.
    #[arg(long, default_value = "all")]
    strategies: String,
    #[arg(long, default_value_t = 40)]
    m_max: usize,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Subject id of the target.
    #[arg(long)]
    target: String,
    #[arg(long)]
    strategy: String,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    rep: usize,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

impl ProtocolArgs {
    fn config(&self) -> BenchConfig {
        BenchConfig {
            pool_size: self.pool,
            m_step: self.m_step,
            m_max: self.pool,
            filters_per_class: self.filters,
            cm1_lambda: self.cm1_lambda,
            base_seed: self.seed,
            ..BenchConfig::default()
        }
    }
}

fn gen(args: GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_subjects: args.subjects,
        channels: args.channels,
        samples: args.samples,
        epochs_per_class: args.epochs_per_class,
        sigma_hi: args.sigma_hi,
        sigma_lo: args.sigma_lo,
        divergence: args.divergence,
        noise_floor: args.noise,
        seed: args.seed,
    };
    let corpus = SyntheticCorpus::generate(&cfg)?;
    save_corpus(&corpus.subjects, &args.out)?;
    for s in &corpus.subjects {
        eprintln!("wrote {}", args.out.join(subject_file_name(s.subject_id())).display());
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = BenchConfig {
        m_max: args.m_max,
        repetitions: args.reps,
        strategies: parse_strategies(&args.strategies)?,
        workers: args.workers,
        ..args.protocol.config()
    };
    cfg.validate()?;
    let datasets = load_corpus(&args.data)?;
    let table = run_benchmark(&datasets, &cfg)?;
    table.save_csv(&args.out)?;
    for (id, n) in &table.test_sizes {
        eprintln!("{id}: {n} test epochs");
    }
    if let Some(path) = &args.summary {
        save_summary(&summarize(&table), path)?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let strategy: Strategy = args.strategy.parse()?;
    let cfg = args.protocol.config();
    let datasets = load_corpus(&args.data)?;
    let target = datasets
        .iter()
        .position(|d| d.subject_id() == args.target)
        .ok_or_else(|| Error::Config(format!("no subject {:?} in {}", args.target, args.data.display())))?;
    let acc = run_cell(&datasets, target, args.rep, args.m, strategy, &cfg)?;
    println!("{acc:.6}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
