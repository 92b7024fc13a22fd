//! `rba`: replay a login dataset through the risk engine, compare score
//! files and plan shards.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rba_core::replay::{
    compare, load_dataset, load_scores, replay, replayable_len, shard, write_scores, ColumnMapping,
    DatasetRow, ReplayOptions,
};
use rba_core::RiskConfig;

#[derive(Parser)]
#[command(name = "rba", version, about = "Risk score replay and comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score successful logins against all earlier ones and write a CSV.
    Replay(ReplayArgs),
    /// Compare two score files row by row; exits 1 on any difference.
    Compare(CompareArgs),
    /// Print contiguous shard windows over the replayable rows.
    Shard(ShardArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Login dataset (CSV).
    #[arg(long)]
    dataset: PathBuf,
    /// Column mapping (TOML); defaults match the public dataset headers.
    #[arg(long)]
    columns: Option<PathBuf>,
}

impl DatasetArgs {
    fn load(&self) -> Result<Vec<DatasetRow>> {
        let mapping = match &self.columns {
            Some(p) => ColumnMapping::load(p).with_context(|| format!("loading column mapping {}", p.display()))?,
            None => ColumnMapping::default(),
        };
        load_dataset(&self.dataset, &mapping).with_context(|| format!("loading dataset {}", self.dataset.display()))
    }
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// First position in the sequence of successful rows.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Number of positions to score; all remaining when omitted.
    #[arg(long)]
    count: Option<usize>,
    /// Risk configuration (TOML): weights, smoothing, thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also score round-trip time.
    #[arg(long)]
    rtt: bool,
    /// Cap each user's history at this many logins (uncapped by default).
    #[arg(long)]
    cap: Option<usize>,
    /// Split the window into this many shards replayed in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    shards: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Largest allowed absolute difference.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct ShardArgs {
    /// Number of shards.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Dataset to count replayable rows in.
    #[arg(long, required_unless_present = "rows", conflicts_with = "rows")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    columns: Option<PathBuf>,
    /// Number of replayable rows, instead of a dataset.
    #[arg(long)]
    rows: Option<usize>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_replay(args: &ReplayArgs) -> Result<()> {
    let config: RiskConfig = match &args.config {
        Some(p) => RiskConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RiskConfig::default(),
    };
    let rows = args.data.load()?;
    let options = ReplayOptions { include_rtt: args.rtt, history_cap: args.cap };
    let engine = options.engine(config);
    let count = args.count.unwrap_or(usize::MAX);
    let scored = if args.shards > 1 {
        // Shards split the requested window; each replays its own prefix.
        let end = args.start.saturating_add(count).min(replayable_len(&rows));
        let ranges = shard(end.saturating_sub(args.start), args.shards as usize);
        let outputs: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = ranges
                .iter()
                .map(|r| {
                    let (rows, engine, options) = (&rows, &engine, &options);
                    s.spawn(move || replay(rows, args.start + r.start, r.len(), engine, options))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("shard thread panicked")).collect()
        });
        let mut all = Vec::new();
        for out in outputs {
            all.extend(out?);
        }
        all
    } else {
        replay(&rows, args.start, count, &engine, &options)?
    };
    let mut out = output(args.out.as_deref())?;
    write_scores(&mut out, &scored)?;
    out.flush()?;
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<bool> {
    if args.tol.is_nan() || args.tol < 0.0 {
        bail!("--tol must be a non-negative number");
    }
    let a = load_scores(&args.a).with_context(|| format!("reading {}", args.a.display()))?;
    let b = load_scores(&args.b).with_context(|| format!("reading {}", args.b.display()))?;
    let report = compare(&a, &b, args.tol);
    println!("{report}");
    Ok(report.passed())
}

fn run_shard(args: &ShardArgs) -> Result<()> {
    let len = match (&args.dataset, args.rows) {
        (_, Some(n)) => n,
        (Some(path), None) => replayable_len(&DatasetArgs { dataset: path.clone(), columns: args.columns.clone() }.load()?),
        (None, None) => unreachable!("clap requires one of --dataset and --rows"),
    };
    println!("shard,start,count");
    for (i, r) in shard(len, args.n as usize).iter().enumerate() {
        println!("{i},{},{}", r.start, r.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Replay(a) => run_replay(a).map(|()| true),
        Command::Compare(a) => run_compare(a),
        Command::Shard(a) => run_shard(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
