use std::fmt;
use std::fs;
use std::str::FromStr;

use clap::Args;

use super::GlobalArgs;
use crate::error::{Error, Result};
use crate::graph::{knn_graph, Graph};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Radius of the circle carrying the cluster centres.
pub const CENTER_RADIUS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    /// Gaussian blobs with centres evenly spaced on a circle; label = blob.
    Clusters,
    /// Noisy concentric rings of radius `1 + label`; label = ring.
    Rings,
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataKind::Clusters => "clusters",
            DataKind::Rings => "rings",
        })
    }
}

impl FromStr for DataKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clusters" => Ok(DataKind::Clusters),
            "rings" => Ok(DataKind::Rings),
            _ => Err(format!("unknown data kind '{s}' (clusters, rings)")),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(long, default_value = "clusters")]
    pub kind: DataKind,
    /// Points per graph.
    #[arg(long = "n", default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub num_graphs: usize,
    /// In-degree of every node.
    #[arg(long, default_value_t = 10)]
    pub knn_k: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Point dimension, 2 or 3.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
}

fn sample_cloud(kind: DataKind, n: usize, classes: usize, sigma: f64, dim: usize, rng: &mut Rng) -> (Matrix, Vec<usize>) {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    rng.shuffle(&mut labels);
    let mut pts = Matrix::zeros(n, dim);
    for (i, &c) in labels.iter().enumerate() {
        let row = pts.row_mut(i);
        match kind {
            DataKind::Clusters => {
                let angle = std::f64::consts::TAU * c as f64 / classes as f64;
                row[0] = CENTER_RADIUS * angle.cos();
                row[1] = CENTER_RADIUS * angle.sin();
            }
            DataKind::Rings => {
                let angle = std::f64::consts::TAU * rng.uniform();
                let r = 1.0 + c as f64;
                row[0] = r * angle.cos();
                row[1] = r * angle.sin();
            }
        }
        for x in row.iter_mut() {
            *x += sigma * rng.normal();
        }
    }
    (pts, labels)
}

/// Labelled k-NN point-cloud graphs. Graph `i` uses its own random stream,
/// so the output only depends on the arguments and `seed`.
pub fn generate(a: &GenArgs, seed: u64) -> Result<Vec<Graph>> {
    if !(2..=3).contains(&a.dim) {
        return Err(Error::Validation(format!("dim must be 2 or 3, got {}", a.dim)));
    }
    if a.classes == 0 || a.n == 0 || !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(Error::Validation("need n > 0, classes > 0 and a finite sigma >= 0".into()));
    }
    if a.knn_k == 0 || a.knn_k >= a.n {
        return Err(Error::Validation(format!("knn_k = {} must lie in 1..{}", a.knn_k, a.n)));
    }
    let base = Rng::new(seed);
    (0..a.num_graphs)
        .map(|i| {
            let mut rng = base.derive(i as u64);
            let (pts, labels) = sample_cloud(a.kind, a.n, a.classes, a.sigma, a.dim, &mut rng);
            knn_graph(&pts, a.knn_k)?.with_labels(labels)
        })
        .collect()
}

pub fn run_gen(g: &GlobalArgs, a: &GenArgs) -> Result<()> {
    let dir = g
        .out
        .as_ref()
        .ok_or_else(|| Error::Validation("gen needs --out <directory>".into()))?;
    let graphs = generate(a, g.seed)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, graph) in graphs.iter().enumerate() {
        graph.save(dir.join(format!("graph_{i:03}.json")))?;
    }
    eprintln!("wrote {} graphs to {}", graphs.len(), dir.display());
    Ok(())
}
