use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use super::train::{fit, load_dataset, resolve_config};
use super::{csv_string, emit, GlobalArgs};
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gps::TrainConfig;
use crate::stats::mean_std;

pub const KSWEEP_HEADER: [&str; 4] = ["k", "seed", "metric", "epoch_s"];

#[derive(Args, Debug, Clone)]
pub struct KsweepArgs {
    /// Directory of graph JSON files (as written by `gen`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub k_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KsweepRow {
    pub k: usize,
    pub seed: u64,
    /// Test node accuracy; `NaN` if training diverged.
    pub metric: f64,
    /// Mean wall time per epoch.
    pub epoch_s: f64,
}

/// Trains a k-MIP model per `(k, seed)` on `graphs`, varying only `k` and the seed.
pub fn ksweep(graphs: &[Graph], base: &TrainConfig, ks: &[usize], seeds: &[u64]) -> Result<Vec<KsweepRow>> {
    let mut rows = Vec::with_capacity(ks.len() * seeds.len());
    for &k in ks {
        for &seed in seeds {
            let cfg = TrainConfig { k, seed, attention: AttentionKind::Kmip, ..base.clone() };
            let mut times = Vec::new();
            let metric = match fit(graphs, &cfg, |r| times.push(r.epoch_seconds)) {
                Ok(o) => o.test_acc,
                Err(Error::NonFinite(msg)) => {
                    eprintln!("k={k} seed={seed} diverged: {msg}");
                    f64::NAN
                }
                Err(e) => return Err(e),
            };
            let epoch_s = mean_std(&times).0;
            eprintln!("k={k} seed={seed} metric={metric:.4} epoch_s={epoch_s:.3}");
            rows.push(KsweepRow { k, seed, metric, epoch_s });
        }
    }
    Ok(rows)
}

pub fn run_ksweep(g: &GlobalArgs, a: &KsweepArgs) -> Result<()> {
    if a.k_list.is_empty() || a.k_list.contains(&0) || a.seeds.is_empty() {
        return Err(Error::Validation("k-list must hold positive values and seeds must be non-empty".into()));
    }
    let base = resolve_config(g.seed, a.config.as_deref(), &a.set, a.epochs)?;
    let graphs = load_dataset(&a.data)?;
    let rows = ksweep(&graphs, &base, &a.k_list, &a.seeds)?;
    emit(g.out.as_deref(), &csv_string(&KSWEEP_HEADER, &rows)?)
}
