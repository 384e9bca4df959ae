//! Laplacian eigenvector encodings and random-walk return probabilities.

use crate::graph::Graph;
use crate::matrix::{matmul, Matrix};

/// Off-diagonal Frobenius norm at which the Jacobi iteration stops.
pub const JACOBI_TOL: f64 = 1e-10;
const SIGN_TOL: f64 = 1e-10;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching unit eigenvectors
/// as columns. Equal eigenvalues keep the order in which the iteration left them.
pub fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "jacobi_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
        }
        s.sqrt()
    };
    let scale = m.frobenius_norm().max(1.0);
    for _sweep in 0..100 {
        if off(&m) <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    (values, vectors)
}

/// Combinatorial Laplacian `D - A` of the symmetrized graph.
pub fn laplacian(g: &Graph) -> Matrix {
    let a = g.undirected_adjacency();
    let n = g.num_nodes();
    Matrix::from_fn(n, n, |i, j| {
        let deg: f64 = if i == j { a.row(i).iter().sum() } else { 0.0 };
        deg - a.get(i, j)
    })
}

/// Flips `v` so that its first entry of largest magnitude is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().position(|x| x.abs() >= max - SIGN_TOL) {
        if v[first] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Laplacian eigenvalues (ascending) and sign-canonical eigenvectors as columns.
pub fn laplacian_spectrum(g: &Graph) -> (Vec<f64>, Matrix) {
    let (values, mut vectors) = jacobi_eigen(&laplacian(g));
    let n = g.num_nodes();
    for c in 0..n {
        let mut col: Vec<f64> = (0..n).map(|r| vectors.get(r, c)).collect();
        canonical_sign(&mut col);
        for (r, x) in col.into_iter().enumerate() {
            vectors.set(r, c, x);
        }
    }
    (values, vectors)
}

/// Eigenvectors for the `m` smallest Laplacian eigenvalues, `N x m`,
/// zero-padded on the right when `N < m`.
pub fn laplacian_pe(g: &Graph, m: usize) -> Matrix {
    let n = g.num_nodes();
    let (_, vectors) = laplacian_spectrum(g);
    Matrix::from_fn(n, m, |r, c| if c < n { vectors.get(r, c) } else { 0.0 })
}

/// Row-stochastic walk matrix `D^-1 A` over out-edges; nodes without
/// out-edges get a zero row.
pub fn walk_matrix(g: &Graph) -> Matrix {
    let mut p = g.adjacency();
    for i in 0..p.rows() {
        let deg: f64 = p.row(i).iter().sum();
        if deg > 0.0 {
            p.row_mut(i).iter_mut().for_each(|x| *x /= deg);
        }
    }
    p
}

/// `N x m`; column `t - 1` holds the `t`-step return probabilities.
pub fn rwse(g: &Graph, m: usize) -> Matrix {
    let n = g.num_nodes();
    let p = walk_matrix(g);
    let mut out = Matrix::zeros(n, m);
    let mut power = Matrix::identity(n);
    for t in 0..m {
        power = matmul(&power, &p).expect("square");
        for i in 0..n {
            out.set(i, t, power.get(i, i));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn k2_spectrum() {
        let g = Graph::undirected(2, &[(0, 1)]).unwrap();
        assert_eq!(laplacian(&g).to_rows(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let (vals, _) = laplacian_spectrum(&g);
        assert!(close(&vals, &[0.0, 2.0], 1e-12));
    }

    #[test]
    fn c6_and_two_triangles() {
        let (vals, _) = laplacian_spectrum(&Graph::cycle(6));
        assert!(close(&vals, &[0.0, 1.0, 1.0, 3.0, 3.0, 4.0], 1e-8));
        let two = Graph::cycle(3).disjoint_union(&Graph::cycle(3)).unwrap();
        let (vals, _) = laplacian_spectrum(&two);
        assert!(close(&vals, &[0.0, 0.0, 3.0, 3.0, 3.0, 3.0], 1e-8));
    }

    #[test]
    fn eigenvectors_reconstruct_the_laplacian() {
        let g = Graph::undirected(5, &[(0, 1), (1, 2), (2, 0), (3, 4), (1, 3)]).unwrap();
        let (vals, vecs) = laplacian_spectrum(&g);
        let l = laplacian(&g);
        let lv = matmul(&l, &vecs).unwrap();
        for c in 0..5 {
            for r in 0..5 {
                assert!((lv.get(r, c) - vals[c] * vecs.get(r, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pe_is_padded_and_sign_canonical() {
        let g = Graph::undirected(2, &[(0, 1)]).unwrap();
        let pe = laplacian_pe(&g, 4);
        assert_eq!(pe.shape(), (2, 4));
        assert_eq!(&pe.row(0)[2..], &[0.0, 0.0]);
        let col: Vec<f64> = (0..2).map(|r| pe.get(r, 1)).collect();
        assert!(col[0] > 0.0 && (col[0] + col[1]).abs() < 1e-12);
    }

    #[test]
    fn rwse_small_chains() {
        let c3 = rwse(&Graph::cycle(3), 2);
        for i in 0..3 {
            assert!(c3.get(i, 0).abs() < 1e-15);
            assert!((c3.get(i, 1) - 0.5).abs() < 1e-15);
        }
        let k2 = rwse(&Graph::undirected(2, &[(0, 1)]).unwrap(), 4);
        assert_eq!(k2.row(0), &[0.0, 1.0, 0.0, 1.0]);
        let looped = rwse(&Graph::from_edges(1, vec![(0, 0)]).unwrap(), 3);
        assert_eq!(looped.row(0), &[1.0, 1.0, 1.0]);
        let isolated = rwse(&Graph::from_edges(2, vec![(0, 1)]).unwrap(), 2);
        assert_eq!(isolated.row(1), &[0.0, 0.0]);
    }
}
