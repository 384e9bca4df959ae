//! Node classification training: weighted cross-entropy, AdamW, warmup then
//! cosine learning-rate decay, one graph per optimizer step.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::model::{model_backward, model_forward_tape, GpsModel, ModelConfig, PeKind};
use super::nn::Params;
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::workspace::Workspace;

pub const LOG_HEADER: [&str; 5] = ["epoch", "loss", "train_acc", "val_acc", "epoch_seconds"];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub attention: AttentionKind,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub k: usize,
    pub mlp_ratio: usize,
    pub pe: PeKind,
    pub layer_norm: bool,
    pub dropout: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            weight_decay: 1e-5,
            warmup_epochs: 5,
            seed: 0,
            attention: AttentionKind::Kmip,
            hidden: 16,
            layers: 4,
            heads: 2,
            k: 10,
            mlp_ratio: 2,
            pe: PeKind::None,
            layer_norm: true,
            dropout: 0.0,
            train_fraction: 0.8,
            val_fraction: 0.1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Validation(format!("bad value '{value}' for '{key}'")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 16] = [
        "epochs",
        "lr",
        "weight_decay",
        "warmup_epochs",
        "seed",
        "attention",
        "hidden",
        "layers",
        "heads",
        "k",
        "mlp_ratio",
        "pe",
        "layer_norm",
        "dropout",
        "train_fraction",
        "val_fraction",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "attention" => self.attention = value.parse().map_err(|e: Error| Error::Validation(e.to_string()))?,
            "hidden" => self.hidden = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "mlp_ratio" => self.mlp_ratio = parse(key, value)?,
            "pe" => self.pe = value.parse().map_err(|e: Error| Error::Validation(e.to_string()))?,
            "layer_norm" => self.layer_norm = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            other => {
                return Err(Error::Validation(format!(
                    "unknown config key '{other}'; known keys: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("line {}: expected key = value", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let attention = match self.attention {
            AttentionKind::Full => "full",
            AttentionKind::Kmip => "kmip",
        };
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "warmup_epochs = {}", self.warmup_epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "attention = {attention}");
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "heads = {}", self.heads);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "mlp_ratio = {}", self.mlp_ratio);
        let _ = writeln!(s, "pe = {}", self.pe);
        let _ = writeln!(s, "layer_norm = {}", self.layer_norm);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "train_fraction = {}", self.train_fraction);
        let _ = writeln!(s, "val_fraction = {}", self.val_fraction);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Validation("lr and weight_decay must be finite and >= 0".into()));
        }
        if self.hidden % self.heads.max(1) != 0 {
            return Err(Error::Validation(format!(
                "hidden ({}) must be divisible by heads ({})",
                self.hidden, self.heads
            )));
        }
        let f = (self.train_fraction, self.val_fraction);
        if !(f.0 > 0.0 && f.1 >= 0.0 && f.0 + f.1 <= 1.0) {
            return Err(Error::Validation("need train_fraction > 0 and train + val fractions <= 1".into()));
        }
        Ok(())
    }

    /// Model shape for data with the given widths; per-head width is `hidden / heads`.
    pub fn model_config(&self, d_in: usize, d_edge_in: usize, classes: usize) -> Result<ModelConfig> {
        self.validate()?;
        let c = ModelConfig {
            d_in,
            d_edge_in,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            d_k: self.hidden / self.heads.max(1),
            d_v: self.hidden / self.heads.max(1),
            k: self.k,
            mlp_hidden: self.hidden * self.mlp_ratio,
            classes,
            pe: self.pe,
            layer_norm: self.layer_norm,
            dropout: self.dropout,
        };
        c.validate().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(c)
    }
}

/// Class-weighted mean cross-entropy over all nodes and its gradient.
///
/// Class `c` gets weight `(N - n_c) / N`, so rare classes count more. When
/// every node has the same label the weights vanish and the plain mean is used.
pub fn weighted_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, classes) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape("weighted_cross_entropy", format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Validation(format!("label {bad} out of range for {classes} classes")));
    }
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    let mut w: Vec<f64> = counts.iter().map(|&c| (n - c) as f64 / n.max(1) as f64).collect();
    let mut total: f64 = labels.iter().map(|&y| w[y]).sum();
    if total <= 0.0 {
        w.fill(1.0);
        total = n as f64;
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, classes);
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let scale = w[y] / total;
        loss += scale * (z.ln() + max - row[y]);
        for (c, gv) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (row[c] - max).exp() / z;
            *gv = scale * (p - if c == y { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, grad))
}

/// Row argmax, lowest index on ties.
pub fn predictions(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
        })
        .collect()
}

/// AdamW with decoupled weight decay.
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new<P: Params>(params: &P, weight_decay: f64) -> Self {
        let zeros: Vec<Matrix> = params.matrices().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .matrices_mut()
            .into_iter()
            .zip(grads.matrices())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for (((pv, &gv), mv), vv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                *pv -= lr * self.weight_decay * *pv;
                *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Linear warmup over `warmup` steps, then cosine decay to zero at `total`.
pub fn lr_at(base: f64, step: usize, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1);
    let progress = ((step - warmup) as f64 / span as f64).min(1.0);
    base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    /// `NaN` without validation graphs.
    pub val_acc: f64,
    pub epoch_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
        w.write_record(LOG_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.train_acc.to_string(),
                r.val_acc.to_string(),
                r.epoch_seconds.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn labels(g: &Graph, i: usize) -> Result<&[usize]> {
    g.node_labels()
        .ok_or_else(|| Error::Validation(format!("graph {i} has no node labels")))
}

/// Node accuracy over all graphs, without dropout.
pub fn evaluate(model: &GpsModel, graphs: &[Graph], kind: AttentionKind) -> Result<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for (i, g) in graphs.iter().enumerate() {
        let y = labels(g, i)?;
        let input = model.prepare_input(g)?;
        let (logits, _) = model_forward_tape(&input, g, model, kind, &Workspace::new(), None)?;
        correct += predictions(&logits).iter().zip(y).filter(|(p, y)| p == y).count();
        total += y.len();
    }
    Ok(if total == 0 { f64::NAN } else { correct as f64 / total as f64 })
}

/// Loss and parameter gradients for one graph (no dropout).
pub fn loss_and_grad(model: &GpsModel, g: &Graph, kind: AttentionKind) -> Result<(f64, GpsModel)> {
    let y = labels(g, 0)?;
    let input = model.prepare_input(g)?;
    let (logits, tape) = model_forward_tape(&input, g, model, kind, &Workspace::new(), None)?;
    let (loss, grad_logits) = weighted_cross_entropy(&logits, y)?;
    Ok((loss, model_backward(&tape, g, model, &grad_logits)?))
}

/// Trains in place. `on_epoch` sees each record as it is produced.
pub fn train(
    model: &mut GpsModel,
    train_set: &[Graph],
    val_set: &[Graph],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    let inputs = train_set
        .iter()
        .enumerate()
        .map(|(i, g)| Ok((model.prepare_input(g)?, labels(g, i)?)))
        .collect::<Result<Vec<_>>>()?;
    let steps_per_epoch = train_set.len();
    let total = cfg.epochs * steps_per_epoch;
    let warmup = cfg.warmup_epochs * steps_per_epoch;
    let mut opt = AdamW::new(model, cfg.weight_decay);
    let mut rng = Rng::new(cfg.seed).derive(1);
    let mut order: Vec<usize> = (0..steps_per_epoch).collect();
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        rng.shuffle(&mut order);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for &gi in &order {
            let (input, y) = &inputs[gi];
            let g = &train_set[gi];
            let drop_rng = (cfg.dropout > 0.0).then_some(&mut rng);
            let (logits, tape) = model_forward_tape(input, g, model, cfg.attention, &Workspace::new(), drop_rng)?;
            let (loss, grad_logits) = weighted_cross_entropy(&logits, y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss {loss} at epoch {epoch}, graph {gi}, step {step}")));
            }
            let grads = model_backward(&tape, g, model, &grad_logits)?;
            drop(tape);
            opt.step(model, &grads, lr_at(cfg.lr, step, warmup, total));
            step += 1;
            loss_sum += loss;
            correct += predictions(&logits).iter().zip(y.iter()).filter(|(p, y)| p == y).count();
            seen += y.len();
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / steps_per_epoch.max(1) as f64,
            train_acc: if seen == 0 { f64::NAN } else { correct as f64 / seen as f64 },
            val_acc: evaluate(model, val_set, cfg.attention)?,
            epoch_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(log)
}
