mod common;

use kmip::matrix::Matrix;
use kmip::mipkernel::{gather_rows, rowwise_topk, rowwise_topk_dense, topk_backward, IndexMatrix, TileConfig};
use kmip::rng::Rng;
use kmip::stats::poly_fit;
use kmip::workspace::Workspace;
use proptest::prelude::*;

use common::finite_diff;

/// All scores by plain loops, stable sort descending (index order among ties), truncate.
fn oracle(q: &Matrix, key: &Matrix, k: usize) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let mut idx = Vec::new();
    let mut val = Vec::new();
    for i in 0..q.rows() {
        let mut row: Vec<(f64, usize)> = (0..key.rows())
            .map(|j| {
                let mut s = 0.0;
                for t in 0..q.cols() {
                    s += q.get(i, t) * key.get(j, t);
                }
                (s, j)
            })
            .collect();
        row.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        row.truncate(k);
        idx.push(row.iter().map(|p| p.1).collect());
        val.push(row.iter().map(|p| p.0).collect());
    }
    (idx, val)
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

/// Integer-valued inputs so exact ties are common.
fn small_int_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.below(3) as f64 - 1.0)
}

#[test]
fn small_worked_example() {
    let q = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let key = Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0], [1.0, 1.0]]).unwrap();
    let ws = Workspace::new();
    let r = rowwise_topk(&q, &key, 2, TileConfig::default(), &ws).unwrap();
    assert_eq!(r.indices.to_rows(), vec![vec![0, 2], vec![1, 2]]);
    assert_eq!(r.values.to_rows(), vec![vec![2.0, 1.0], vec![3.0, 1.0]]);
}

#[test]
fn k_equal_m_is_a_full_argsort() {
    let mut rng = Rng::new(3);
    let q: Matrix = Matrix::random_normal(9, 4, &mut rng);
    let key = Matrix::random_normal(13, 4, &mut rng);
    let r = rowwise_topk(&q, &key, 13, TileConfig::new(4, 5).unwrap(), &Workspace::new()).unwrap();
    let (idx, val) = oracle(&q, &key, 13);
    assert_eq!(r.indices.to_rows(), idx);
    assert_eq!(r.values.to_rows(), val);
}

#[test]
fn ties_follow_the_index_rule_across_configs() {
    let mut rng = Rng::new(4);
    for _ in 0..30 {
        let (n, m) = (1 + rng.below(20), 1 + rng.below(40));
        let q = small_int_matrix(n, 3, &mut rng);
        let key = small_int_matrix(m, 3, &mut rng);
        let k = 1 + rng.below(m);
        let (idx, val) = oracle(&q, &key, k);
        for (qt, kt) in [(1, 1), (7, 13), (64, 1024)] {
            let r = rowwise_topk(&q, &key, k, TileConfig::new(qt, kt).unwrap(), &Workspace::new()).unwrap();
            assert_eq!(r.indices.to_rows(), idx);
            assert_eq!(r.values.to_rows(), val);
        }
        let d = rowwise_topk_dense(&q, &key, k, &Workspace::new()).unwrap();
        assert_eq!(d.indices.to_rows(), idx);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_equals_oracle(
        n in 1usize..96,
        m in 1usize..96,
        d in 1usize..12,
        kf in 0.0f64..1.0,
        seed in any::<u64>(),
        qt in prop::sample::select(vec![1usize, 7, 64]),
        kt in prop::sample::select(vec![1usize, 13, 1024]),
        threads in prop::sample::select(vec![1usize, 4]),
    ) {
        let mut rng = Rng::new(seed);
        let q: Matrix = Matrix::random_normal(n, d, &mut rng);
        let key = Matrix::random_normal(m, d, &mut rng);
        let k = 1 + ((m - 1) as f64 * kf) as usize;
        let r = in_pool(threads, || rowwise_topk(&q, &key, k, TileConfig::new(qt, kt).unwrap(), &Workspace::new()).unwrap());
        let (idx, val) = oracle(&q, &key, k);
        prop_assert_eq!(r.indices.to_rows(), idx);
        prop_assert_eq!(r.values.to_rows(), val);
    }

    #[test]
    fn workspace_returns_to_baseline(n in 1usize..64, m in 1usize..64, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let q: Matrix = Matrix::random_normal(n, 3, &mut rng);
        let key = Matrix::random_normal(m, 3, &mut rng);
        let ws = Workspace::new();
        let before = ws.live_bytes();
        {
            let r = rowwise_topk(&q, &key, 1 + rng.below(m), TileConfig::new(5, 9).unwrap(), &ws).unwrap();
            prop_assert!(ws.live_bytes() >= r.byte_len());
        }
        prop_assert_eq!(ws.live_bytes(), before);
    }

    #[test]
    fn gather_matches_loop(m in 1usize..20, n in 1usize..10, k in 1usize..5, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let src: Matrix = Matrix::random_normal(m, 3, &mut rng);
        let idx: Vec<usize> = (0..n * k).map(|_| rng.below(m)).collect();
        let im = IndexMatrix::new(n, k, idx.clone()).unwrap();
        let out = gather_rows(&src, &im).unwrap();
        for (r, &i) in idx.iter().enumerate() {
            prop_assert_eq!(out.row(r), src.row(i));
        }
    }
}

#[test]
fn oracle_suite_over_500_instances() {
    let mut rng = Rng::new(2024);
    let configs = [TileConfig::new(1, 1).unwrap(), TileConfig::new(7, 13).unwrap(), TileConfig::default()];
    for inst in 0..500 {
        let n = 1 + rng.below(if inst % 25 == 0 { 512 } else { 64 });
        let m = 1 + rng.below(if inst % 25 == 1 { 512 } else { 64 });
        let d = 1 + rng.below(32);
        let k = 1 + rng.below(m.min(40));
        let q: Matrix = Matrix::random_normal(n, d, &mut rng);
        let key = Matrix::random_normal(m, d, &mut rng);
        let (idx, val) = oracle(&q, &key, k);
        let cfg = configs[inst % 3];
        let threads = if inst % 2 == 0 { 1 } else { 4 };
        let r = in_pool(threads, || rowwise_topk(&q, &key, k, cfg, &Workspace::new()).unwrap());
        assert_eq!(r.indices.to_rows(), idx, "instance {inst}");
        assert_eq!(r.values.to_rows(), val, "instance {inst}");
    }
}

#[test]
fn permuting_queries_and_keys() {
    let mut rng = Rng::new(8);
    let (n, m, k) = (30, 40, 5);
    let q: Matrix = Matrix::random_normal(n, 4, &mut rng);
    let key = Matrix::random_normal(m, 4, &mut rng);
    let cfg = TileConfig::new(8, 16).unwrap();
    let base = rowwise_topk(&q, &key, k, cfg, &Workspace::new()).unwrap();

    let pq = rng.permutation(n);
    let r = rowwise_topk(&q.permute_rows(&pq), &key, k, cfg, &Workspace::new()).unwrap();
    for i in 0..n {
        assert_eq!(r.indices.row(i), base.indices.row(pq[i]));
    }

    // new key row j holds old key pk[j], so old index i maps to inv[i]
    let pk = rng.permutation(m);
    let mut inv = vec![0; m];
    for (j, &old) in pk.iter().enumerate() {
        inv[old] = j;
    }
    let r = rowwise_topk(&q, &key.permute_rows(&pk), k, cfg, &Workspace::new()).unwrap();
    for i in 0..n {
        let mapped: Vec<usize> = base.indices.row(i).iter().map(|&j| inv[j]).collect();
        assert_eq!(r.indices.row(i), mapped.as_slice());
    }
}

#[test]
fn backward_zero_and_finite_differences() {
    let mut rng = Rng::new(12);
    let (n, m, k) = (6, 9, 3);
    let q: Matrix = Matrix::random_normal(n, 4, &mut rng);
    let key = Matrix::random_normal(m, 4, &mut rng);
    let cfg = TileConfig::default();
    let topk = rowwise_topk(&q, &key, k, cfg, &Workspace::new()).unwrap();
    let (gq, gk) = topk_backward(&q, &key, &topk, &Matrix::zeros(n, k)).unwrap();
    assert_eq!(gq.max_abs(), 0.0);
    assert_eq!(gk.max_abs(), 0.0);

    let c = Matrix::random_normal(n, k, &mut rng);
    let (gq, gk) = topk_backward(&q, &key, &topk, &c).unwrap();
    // f evaluates the same index set, so it is smooth in q and key
    let f = |q: &Matrix, key: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..k {
                let idx = topk.indices.get(i, j);
                s += c.get(i, j) * q.row(i).iter().zip(key.row(idx)).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        s
    };
    let fq = finite_diff(&mut q.clone(), 1e-5, |qq| f(qq, &key));
    let fk = finite_diff(&mut key.clone(), 1e-5, |kk| f(&q, kk));
    assert!(common::rel_err(&gq, &fq) < 1e-6);
    assert!(common::rel_err(&gk, &fk) < 1e-6);
}

#[test]
fn peak_workspace_is_linear_in_n() {
    let cfg = TileConfig::default();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut rng = Rng::new(5);
    for p in 10..=13 {
        let n = 1usize << p;
        let q: Matrix = Matrix::random_normal(n, 10, &mut rng);
        let ws = Workspace::new();
        in_pool(1, || rowwise_topk(&q, &q, 10, cfg, &ws).unwrap());
        xs.push(n as f64);
        ys.push(ws.peak_bytes() as f64);
        assert!((ws.peak_bytes() as f64) < (n * n * 8) as f64 / 2.0);
    }
    assert!(poly_fit(&xs, &ys, 1).unwrap().r_squared > 0.99);
}
