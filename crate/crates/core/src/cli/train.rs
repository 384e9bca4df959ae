use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use super::GlobalArgs;
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::gps::{evaluate, train, GpsModel, TrainConfig, TrainLog, LOG_HEADER};
use crate::graph::Graph;
use crate::rng::Rng;

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Directory of graph JSON files (as written by `gen`).
    #[arg(long)]
    pub data: PathBuf,
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override `key=value`; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set epochs=N`.
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Graphs from every `*.json` file in `dir`, in file-name order.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Graph>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no .json graphs in {}", dir.display())));
    }
    paths.iter().map(Graph::load).collect()
}

/// Shuffles with `seed` and splits into train, validation and test sets.
/// Sizes round to the nearest graph; train always gets at least one.
pub fn split_dataset(graphs: &[Graph], train_fraction: f64, val_fraction: f64, seed: u64) -> (Vec<Graph>, Vec<Graph>, Vec<Graph>) {
    let n = graphs.len();
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).derive(2).shuffle(&mut order);
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1.min(n), n);
    let n_val = ((val_fraction * n as f64).round() as usize).min(n - n_train);
    let pick = |ids: &[usize]| ids.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    (
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    )
}

/// Result of [`fit`].
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: GpsModel,
    pub log: TrainLog,
    /// Node accuracy on the held-out test graphs (`NaN` if there are none).
    pub test_acc: f64,
}

/// Splits `graphs`, builds a model sized to them, trains it and scores the test split.
pub fn fit(graphs: &[Graph], cfg: &TrainConfig, on_epoch: impl FnMut(&crate::gps::EpochRecord)) -> Result<FitOutcome> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::Validation("empty dataset".into()))?;
    let mut classes = 0;
    for (i, g) in graphs.iter().enumerate() {
        let y = g
            .node_labels()
            .ok_or_else(|| Error::Validation(format!("graph {i} has no node labels")))?;
        classes = classes.max(y.iter().max().map_or(0, |m| m + 1));
    }
    let config = cfg.model_config(first.feature_dim(), first.edge_feature_dim(), classes)?;
    let mut model = GpsModel::new(config, &mut Rng::new(cfg.seed))?;
    let (train_set, val_set, test_set) = split_dataset(graphs, cfg.train_fraction, cfg.val_fraction, cfg.seed);
    let log = train(&mut model, &train_set, &val_set, cfg, on_epoch)?;
    let test_acc = evaluate(&model, &test_set, cfg.attention)?;
    Ok(FitOutcome { model, log, test_acc })
}

/// Config from the global seed, then the file, then `--set` and `--epochs`.
pub(crate) fn resolve_config(
    seed: u64,
    file: Option<&Path>,
    sets: &[String],
    epochs: Option<usize>,
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig { seed, ..TrainConfig::default() };
    if let Some(p) = file {
        cfg.apply_kv(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?;
    }
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("--set expects key=value, got '{s}'")))?;
        cfg.set(k, v)?;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_train(g: &GlobalArgs, a: &TrainArgs) -> Result<()> {
    let cfg = resolve_config(g.seed, a.config.as_deref(), &a.set, a.epochs)?;
    let graphs = load_dataset(&a.data)?;
    let kind = match cfg.attention {
        AttentionKind::Full => "full",
        AttentionKind::Kmip => "kmip",
    };
    let outcome = fit(&graphs, &cfg, |r| {
        eprintln!(
            "epoch {:>4}  loss {:.4}  train {:.4}  val {:.4}  {:.2}s",
            r.epoch, r.loss, r.train_acc, r.val_acc, r.epoch_seconds
        )
    })?;
    eprintln!("{kind}: test accuracy {:.4}", outcome.test_acc);
    match &g.out {
        Some(path) => outcome.log.write_csv(path),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(LOG_HEADER)?;
            for r in &outcome.log.records {
                w.write_record([
                    r.epoch.to_string(),
                    r.loss.to_string(),
                    r.train_acc.to_string(),
                    r.val_acc.to_string(),
                    r.epoch_seconds.to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}
