#![allow(dead_code)]

use kmip::graph::Graph;
use kmip::matrix::Matrix;
use kmip::rng::Rng;

/// Erdős–Rényi graph, undirected, constant features.
pub fn random_graph(n: usize, p: f64, rng: &mut Rng) -> Graph {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.bernoulli(p) {
                pairs.push((i, j));
            }
        }
    }
    Graph::undirected(n, &pairs).unwrap()
}

/// Random graph with Gaussian node and edge features.
pub fn featured_graph(n: usize, p: f64, d: usize, d_edge: usize, rng: &mut Rng) -> Graph {
    let g = random_graph(n, p, rng);
    let x = Matrix::random_normal(n, d, rng);
    let e = Matrix::random_normal(g.num_edges(), d_edge, rng);
    g.with_node_features(x).unwrap().with_edge_features(e).unwrap()
}

/// Central differences of `f` with respect to every entry of `m`.
pub fn finite_diff(m: &mut Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            m.set(i, j, v + h);
            let up = f(m);
            m.set(i, j, v - h);
            let down = f(m);
            m.set(i, j, v);
            out.set(i, j, (up - down) / (2.0 * h));
        }
    }
    out
}

/// `|a - b| / max(|a|, |b|)` in the Frobenius norm; zero when both vanish.
pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Sorted rows, for comparing row multisets.
pub fn sorted_rows(m: &Matrix) -> Vec<Vec<f64>> {
    let mut rows = m.to_rows();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

pub fn max_row_set_diff(a: &Matrix, b: &Matrix) -> f64 {
    let (ra, rb) = (sorted_rows(a), sorted_rows(b));
    assert_eq!(ra.len(), rb.len());
    ra.iter()
        .zip(&rb)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
