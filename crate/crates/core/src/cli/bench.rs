use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use super::{emit, GlobalArgs};
use crate::attention::memory::AttentionShape;
use crate::attention::{
    full_attention_backward, full_attention_forward, kmip_attention_backward, kmip_attention_forward_with,
    AttentionParams, TopKSelector,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mipkernel::TileConfig;
use crate::rng::Rng;
use crate::stats::mean_std;
use crate::workspace::Workspace;

pub const BENCH_HEADER: [&str; 13] = [
    "method",
    "N",
    "k",
    "dK",
    "setting",
    "forward_s_mean",
    "forward_s_std",
    "backward_s_mean",
    "backward_s_std",
    "total_s_mean",
    "total_s_std",
    "peak_bytes",
    "repeats",
];

/// Written in every timing column of a run that would exceed the memory ceiling.
pub const OOM_MARKER: &str = "OOM-simulated";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Full,
    KmipNaive,
    KmipTiled,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Full => "full",
            Method::KmipNaive => "kmip_naive",
            Method::KmipTiled => "kmip_tiled",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Method::Full),
            "kmip_naive" => Ok(Method::KmipNaive),
            "kmip_tiled" => Ok(Method::KmipTiled),
            _ => Err(format!("unknown method '{s}' (full, kmip_naive, kmip_tiled)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Setting {
    /// Forward only.
    Inference,
    /// Forward then backward.
    Training,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Inference => "inference",
            Setting::Training => "training",
        })
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "inference" => Ok(Setting::Inference),
            "training" => Ok(Setting::Training),
            _ => Err(format!("unknown setting '{s}' (inference, training)")),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Token counts, comma separated.
    #[arg(long = "n", value_delimiter = ',', default_value = "1024,2048,4096")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub k: Vec<usize>,
    /// Per-head query/key width.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub dk: Vec<usize>,
    /// Model width (default: d_K). Value width equals d_K.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, value_delimiter = ',', default_value = "full,kmip_naive,kmip_tiled")]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "inference,training")]
    pub settings: Vec<Setting>,
    /// Timed trials per cell, after one warmup.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = TileConfig::default().query_tile)]
    pub query_tile: usize,
    #[arg(long, default_value_t = TileConfig::default().key_tile)]
    pub key_tile: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Timing {
    Measured { mean: f64, std: f64 },
    OomSimulated,
}

impl Timing {
    fn from_samples(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Timing::Measured { mean, std }
    }

    fn cells(&self) -> [String; 2] {
        match *self {
            Timing::Measured { mean, std } => [mean.to_string(), std.to_string()],
            Timing::OomSimulated => [OOM_MARKER.into(), OOM_MARKER.into()],
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match *self {
            Timing::Measured { mean, .. } => Some(mean),
            Timing::OomSimulated => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub d_k: usize,
    pub setting: Setting,
    pub forward: Timing,
    /// Zero in the inference setting.
    pub backward: Timing,
    pub total: Timing,
    /// Measured peak, or the predicted requirement for simulated OOM rows.
    pub peak_bytes: u64,
    pub repeats: usize,
}

impl BenchRecord {
    pub fn cells(&self) -> Vec<String> {
        let mut out = vec![
            self.method.to_string(),
            self.n.to_string(),
            self.k.to_string(),
            self.d_k.to_string(),
            self.setting.to_string(),
        ];
        out.extend(self.forward.cells());
        out.extend(self.backward.cells());
        out.extend(self.total.cells());
        out.push(self.peak_bytes.to_string());
        out.push(self.repeats.to_string());
        out
    }

    pub fn is_oom(&self) -> bool {
        self.forward == Timing::OomSimulated
    }
}

/// One benchmark cell.
#[derive(Clone, Copy, Debug)]
pub struct BenchCell {
    pub method: Method,
    pub setting: Setting,
    pub n: usize,
    pub k: usize,
    pub d_k: usize,
    pub d: usize,
    pub heads: usize,
    pub repeats: usize,
    pub tiles: TileConfig,
}

impl BenchCell {
    fn shape(&self) -> AttentionShape {
        AttentionShape { n: self.n, d_model: self.d, heads: self.heads, d_k: self.d_k, d_v: self.d_k, k: self.k }
    }

    /// Predicted peak workspace in bytes.
    pub fn required_bytes(&self, threads: usize) -> u64 {
        let backward = self.setting == Setting::Training;
        let shape = self.shape();
        match self.method {
            Method::Full => shape.full_peak_bytes::<f64>(backward),
            Method::KmipNaive => shape.kmip_peak_bytes::<f64>(TopKSelector::Dense, threads, backward),
            Method::KmipTiled => shape.kmip_peak_bytes::<f64>(TopKSelector::Tiled(self.tiles), threads, backward),
        }
    }

    fn trial(&self, x: &Matrix, p: &AttentionParams, grad: &Matrix, ws: &Workspace) -> Result<(f64, f64)> {
        let start = Instant::now();
        let (y, tape) = match self.method {
            Method::Full => full_attention_forward(x, p, ws)?,
            Method::KmipNaive => kmip_attention_forward_with(x, p, TopKSelector::Dense, ws)?,
            Method::KmipTiled => kmip_attention_forward_with(x, p, TopKSelector::Tiled(self.tiles), ws)?,
        };
        let fwd = start.elapsed().as_secs_f64();
        let mut bwd = 0.0;
        if self.setting == Setting::Training {
            let start = Instant::now();
            let grads = match self.method {
                Method::Full => full_attention_backward(&tape, x, p, grad)?,
                _ => kmip_attention_backward(&tape, x, p, grad)?,
            };
            bwd = start.elapsed().as_secs_f64();
            drop(grads);
        }
        drop((y, tape));
        Ok((fwd, bwd))
    }

    /// Runs one warmup and `repeats` timed trials, or reports a simulated OOM.
    pub fn run(&self, seed: u64, threads: usize, ceiling: u64) -> Result<BenchRecord> {
        let oom = |peak| BenchRecord {
            method: self.method,
            n: self.n,
            k: self.k,
            d_k: self.d_k,
            setting: self.setting,
            forward: Timing::OomSimulated,
            backward: Timing::OomSimulated,
            total: Timing::OomSimulated,
            peak_bytes: peak,
            repeats: self.repeats,
        };
        let required = self.required_bytes(threads);
        if required > ceiling {
            return Ok(oom(required));
        }
        let mut rng = Rng::new(seed);
        let p = AttentionParams::random(self.d, self.heads, self.d_k, self.d_k, self.k, &mut rng);
        let x = Matrix::random_normal(self.n, self.d, &mut rng);
        let grad = Matrix::random_normal(self.n, self.d, &mut rng);
        let ws = Workspace::with_ceiling(ceiling);
        let (mut fwd, mut bwd, mut tot) = (Vec::new(), Vec::new(), Vec::new());
        let mut peak = 0;
        for rep in 0..=self.repeats {
            ws.reset_peak();
            let (f, b) = match self.trial(&x, &p, &grad, &ws) {
                Err(Error::MemoryCeiling { .. }) => return Ok(oom(required)),
                other => other?,
            };
            peak = peak.max(ws.peak_bytes());
            if rep > 0 {
                fwd.push(f);
                bwd.push(b);
                tot.push(f + b);
            }
        }
        Ok(BenchRecord {
            method: self.method,
            n: self.n,
            k: self.k,
            d_k: self.d_k,
            setting: self.setting,
            forward: Timing::from_samples(&fwd),
            backward: Timing::from_samples(&bwd),
            total: Timing::from_samples(&tot),
            peak_bytes: peak,
            repeats: self.repeats,
        })
    }
}

#[derive(Serialize)]
struct BenchMeta {
    seed: u64,
    threads: usize,
    mem_ceiling_bytes: u64,
    query_tile: usize,
    key_tile: usize,
    heads: usize,
    d_model: Option<usize>,
}

pub fn bench_csv(records: &[BenchRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCH_HEADER)?;
    for r in records {
        w.write_record(r.cells())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn run_bench(g: &GlobalArgs, a: &BenchArgs) -> Result<()> {
    let tiles = TileConfig::new(a.query_tile, a.key_tile).map_err(|e| Error::Validation(e.to_string()))?;
    let (methods, settings) = (&a.methods, &a.settings);
    let all_positive = a.n.iter().chain(&a.k).chain(&a.dk).all(|&v| v > 0);
    if !all_positive || a.heads == 0 || a.d == Some(0) || a.n.is_empty() || a.k.is_empty() || a.dk.is_empty() {
        return Err(Error::Validation("grid values must be positive and non-empty".into()));
    }
    let threads = g.threads();
    let mut records = Vec::new();
    for &n in &a.n {
        for &k in &a.k {
            for &d_k in &a.dk {
                for &setting in settings {
                    for &method in methods {
                        let cell = BenchCell {
                            method,
                            setting,
                            n,
                            k,
                            d_k,
                            d: a.d.unwrap_or(d_k),
                            heads: a.heads,
                            repeats: a.repeats,
                            tiles,
                        };
                        let r = cell.run(g.seed, threads, g.mem_ceiling_bytes)?;
                        eprintln!(
                            "{method} N={n} k={k} dK={d_k} {setting}: {}",
                            r.total.mean().map_or(OOM_MARKER.to_string(), |t| format!("{t:.4}s"))
                        );
                        records.push(r);
                    }
                }
            }
        }
    }
    emit(g.out.as_deref(), &bench_csv(&records)?)?;
    if let Some(out) = &g.out {
        let meta = BenchMeta {
            seed: g.seed,
            threads,
            mem_ceiling_bytes: g.mem_ceiling_bytes,
            query_tile: tiles.query_tile,
            key_tile: tiles.key_tile,
            heads: a.heads,
            d_model: a.d,
        };
        let path = out.with_extension("meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
