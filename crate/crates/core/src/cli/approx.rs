use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use super::{csv_string, emit, GlobalArgs};
use crate::attention::{cumulative_topk_weight, full_attend, kmip_attend};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::{matmul, Matrix};
use crate::mipkernel::TileConfig;
use crate::rng::Rng;
use crate::stats::mean_std;

pub const APPROX_HEADER: [&str; 5] = ["k", "l2_mean", "l2_std", "cum_weight_mean", "cum_weight_std"];

#[derive(Args, Debug, Clone)]
pub struct ApproxArgs {
    /// Token count (ignored with --graph).
    #[arg(long = "n", default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub dk: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    /// Values of k (default: powers of two below N, then N).
    #[arg(long, value_delimiter = ',')]
    pub k_list: Vec<usize>,
    /// Independent random draws pooled into each row.
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    /// Project this graph's node features instead of sampling Q, K, V directly.
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproxRow {
    pub k: usize,
    pub l2_mean: f64,
    pub l2_std: f64,
    pub cum_weight_mean: f64,
    pub cum_weight_std: f64,
}

/// Powers of two below `n`, followed by `n`.
pub fn default_k_list(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2)).take_while(|&k| k < n).collect();
    ks.push(n);
    ks
}

/// Row-wise L2 distance between k-MIP and full attention outputs, and the
/// all-key softmax mass of the top-k keys, pooled over rows, heads and draws.
///
/// Without `graph`, `Q`, `K` and `V` are standard normal `n x d_k`. With a
/// graph they are its node features times random normal projections.
pub fn approx_study(
    n: usize,
    d_k: usize,
    heads: usize,
    ks: &[usize],
    instances: usize,
    graph: Option<&Graph>,
    seed: u64,
) -> Result<Vec<ApproxRow>> {
    let n = graph.map_or(n, Graph::num_nodes);
    if n == 0 || d_k == 0 || heads == 0 || instances == 0 {
        return Err(Error::Validation("n, dk, heads and instances must be positive".into()));
    }
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::Validation(format!("k = {bad} must lie in 1..={n}")));
    }
    let mut rng = Rng::new(seed);
    let mut l2: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
    let mut mass: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
    for _ in 0..instances * heads {
        let (q, key, v) = match graph {
            None => (
                Matrix::random_normal(n, d_k, &mut rng),
                Matrix::random_normal(n, d_k, &mut rng),
                Matrix::random_normal(n, d_k, &mut rng),
            ),
            Some(g) => {
                let x = g.node_features();
                let mut proj = || matmul(x, &Matrix::random_normal(x.cols(), d_k, &mut rng));
                (proj()?, proj()?, proj()?)
            }
        };
        let full = full_attend(&q, &key, &v)?;
        let cum = cumulative_topk_weight(&q, &key, ks)?;
        for (c, &k) in ks.iter().enumerate() {
            let approx = kmip_attend(&q, &key, &v, k, TileConfig::default())?;
            for i in 0..n {
                let d2: f64 = approx.row(i).iter().zip(full.row(i)).map(|(a, b)| (a - b) * (a - b)).sum();
                l2[c].push(d2.sqrt());
                mass[c].push(cum.get(i, c));
            }
        }
    }
    Ok(ks
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let (l2_mean, l2_std) = mean_std(&l2[c]);
            let (cum_weight_mean, cum_weight_std) = mean_std(&mass[c]);
            ApproxRow { k, l2_mean, l2_std, cum_weight_mean, cum_weight_std }
        })
        .collect())
}

pub fn run_approx(g: &GlobalArgs, a: &ApproxArgs) -> Result<()> {
    let graph = a.graph.as_ref().map(Graph::load).transpose()?;
    let n = graph.as_ref().map_or(a.n, Graph::num_nodes);
    let ks = if a.k_list.is_empty() { default_k_list(n) } else { a.k_list.clone() };
    let rows = approx_study(n, a.dk, a.heads, &ks, a.instances, graph.as_ref(), g.seed)?;
    emit(g.out.as_deref(), &csv_string(&APPROX_HEADER, &rows)?)
}
