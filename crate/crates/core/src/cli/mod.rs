//! Command-line front end. Every command writes CSV or JSON to `--out`
//! (stdout when omitted, except `gen`, which needs a directory).

mod approx;
mod bench;
mod gen;
mod ksweep;
mod train;
mod wl;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use approx::{approx_study, default_k_list, run_approx, ApproxArgs, ApproxRow, APPROX_HEADER};
pub use bench::{bench_csv, run_bench, BenchArgs, BenchCell, BenchRecord, Method, Setting, Timing, BENCH_HEADER, OOM_MARKER};
pub use gen::{generate, CENTER_RADIUS, run_gen, DataKind, GenArgs};
pub use ksweep::{ksweep, run_ksweep, KsweepArgs, KsweepRow, KSWEEP_HEADER};
pub use train::{fit, load_dataset, FitOutcome, run_train, split_dataset, TrainArgs};
pub use wl::{run_wl, WlArgs};

use crate::error::{Error, Result};

pub const DEFAULT_MEM_CEILING: u64 = 8 << 30;

#[derive(Parser, Debug)]
#[command(name = "kmip", version, about = "k-MIP attention experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed for all sampled data and weights.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for the kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Simulated device memory; runs needing more are reported, not executed.
    #[arg(long, global = true, default_value_t = DEFAULT_MEM_CEILING)]
    pub mem_ceiling_bytes: u64,
    /// Output file (or directory for `gen`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Time forward/backward passes and record peak workspace.
    Bench(BenchArgs),
    /// Compare k-MIP to full attention on random inputs.
    Approx(ApproxArgs),
    /// Train GPS with k-MIP attention for several k and seeds.
    Ksweep(KsweepArgs),
    /// Write synthetic labelled k-NN point-cloud graphs.
    Gen(GenArgs),
    /// Test whether a refinement scheme tells two graphs apart.
    Wl(WlArgs),
    /// Train a GPS model for node classification.
    Train(TrainArgs),
}

impl GlobalArgs {
    pub fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

/// Writes `text` to `out`, or to stdout when `out` is `None`.
pub(crate) fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Serializes CSV rows with the given header to a string.
pub(crate) fn csv_string<R: serde::Serialize>(header: &[&str], rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Runs a parsed command inside a pool with the requested thread count.
pub fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads())
        .build()
        .map_err(|e| Error::Validation(format!("cannot start thread pool: {e}")))?;
    let g = cli.global.clone();
    pool.install(|| match cli.command {
        Command::Bench(a) => run_bench(&g, &a),
        Command::Approx(a) => run_approx(&g, &a),
        Command::Ksweep(a) => run_ksweep(&g, &a),
        Command::Gen(a) => run_gen(&g, &a),
        Command::Wl(a) => run_wl(&g, &a),
        Command::Train(a) => run_train(&g, &a),
    })
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 for usage or validation errors, 1 otherwise.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}
