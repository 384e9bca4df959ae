//! Row-wise top-k maximum inner product search over a lazily evaluated score matrix.
//!
//! The score matrix `S = Q K^T` is never stored. Query rows are processed in
//! blocks of `query_tile`; for each block the scores against one tile of
//! `key_tile` keys are computed into a small scratch buffer and folded into a
//! bounded per-row candidate set. Blocks run in parallel on the current rayon
//! pool and write disjoint slices of the output, so the result does not depend
//! on the tile sizes or the thread count.
//!
//! Ordering is by score, descending, with ties resolved towards the lower key
//! index. Scores are sequential dot products, bit-identical to `matmul(q, key^T)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{matmul_nt, Matrix, Scalar};
use crate::workspace::{Allocation, Workspace};

/// Row-major matrix of key indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<usize>,
}

impl IndexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<usize>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("IndexMatrix::new", format!("{} entries for {rows}x{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("IndexMatrix::from_rows", "ragged rows"));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<usize>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Per-row top-k key indices and their raw inner products.
#[derive(Debug)]
pub struct TopKResult<T = f64> {
    pub indices: IndexMatrix,
    pub values: Matrix<T>,
    _mem: Option<Allocation>,
}

impl<T: Scalar> Clone for TopKResult<T> {
    /// Clones are not tracked by the workspace that produced the original.
    fn clone(&self) -> Self {
        Self { indices: self.indices.clone(), values: self.values.clone(), _mem: None }
    }
}

impl<T: Scalar> PartialEq for TopKResult<T> {
    fn eq(&self, other: &Self) -> bool {
        self.indices == other.indices && self.values == other.values
    }
}

impl<T: Scalar> TopKResult<T> {
    pub fn k(&self) -> usize {
        self.indices.cols()
    }

    pub fn num_queries(&self) -> usize {
        self.indices.rows()
    }

    /// Bytes this result accounts for: the index and value matrices.
    pub fn byte_len(&self) -> u64 {
        (self.indices.data.len() * (std::mem::size_of::<usize>() + std::mem::size_of::<T>())) as u64
    }
}

/// Tile sizes for [`rowwise_topk`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileConfig {
    pub query_tile: usize,
    pub key_tile: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self { query_tile: 64, key_tile: 1024 }
    }
}

impl TileConfig {
    pub fn new(query_tile: usize, key_tile: usize) -> Result<Self> {
        let cfg = Self { query_tile, key_tile };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.query_tile == 0 || self.key_tile == 0 {
            return Err(Error::Parameter(format!("tile sizes must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

/// `a` ranks strictly before `b`: higher score, or equal score and lower index.
#[inline]
fn ranks_before<T: Scalar>(a: (T, usize), b: (T, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

#[inline]
fn rank_order<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Heap entry whose maximum is the worst-ranked candidate.
struct Worst<T>(T, usize);

impl<T: Scalar> PartialEq for Worst<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Worst<T> {}
impl<T: Scalar> PartialOrd for Worst<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Worst<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&(self.0, self.1), &(other.0, other.1))
    }
}

/// Bounded best-k set for one query row.
enum Candidates<T> {
    Heap(BinaryHeap<Worst<T>>),
    Sorted(Vec<(T, usize)>),
}

impl<T: Scalar> Candidates<T> {
    fn new(k: usize, use_heap: bool) -> Self {
        if use_heap {
            Candidates::Heap(BinaryHeap::with_capacity(k + 1))
        } else {
            Candidates::Sorted(Vec::with_capacity(2 * k))
        }
    }

    /// Folds the scores of one key tile (keys `offset..offset + scores.len()`).
    fn absorb(&mut self, k: usize, offset: usize, scores: &[T], merge_buf: &mut Vec<(T, usize)>) {
        match self {
            Candidates::Heap(heap) => {
                for (j, &s) in scores.iter().enumerate() {
                    let cand = (s, offset + j);
                    if heap.len() < k {
                        heap.push(Worst(cand.0, cand.1));
                    } else {
                        let worst = heap.peek().expect("heap holds k >= 1 entries");
                        if ranks_before(cand, (worst.0, worst.1)) {
                            heap.pop();
                            heap.push(Worst(cand.0, cand.1));
                        }
                    }
                }
            }
            Candidates::Sorted(best) => {
                merge_buf.clear();
                merge_buf.extend(scores.iter().enumerate().map(|(j, &s)| (s, offset + j)));
                merge_buf.sort_unstable_by(rank_order);
                merge_buf.truncate(k);
                let mut merged = Vec::with_capacity((best.len() + merge_buf.len()).min(k));
                let (mut a, mut b) = (0, 0);
                while merged.len() < k && (a < best.len() || b < merge_buf.len()) {
                    let take_a = b >= merge_buf.len()
                        || (a < best.len() && ranks_before(best[a], merge_buf[b]));
                    if take_a {
                        merged.push(best[a]);
                        a += 1;
                    } else {
                        merged.push(merge_buf[b]);
                        b += 1;
                    }
                }
                *best = merged;
            }
        }
    }

    fn into_sorted(self) -> Vec<(T, usize)> {
        match self {
            Candidates::Heap(heap) => {
                // ascending Worst order is best-first
                heap.into_sorted_vec().into_iter().map(|w| (w.0, w.1)).collect()
            }
            Candidates::Sorted(best) => best,
        }
    }
}

fn check_topk_args<T: Scalar>(q: &Matrix<T>, key: &Matrix<T>, k: usize) -> Result<()> {
    if q.cols() != key.cols() {
        return Err(Error::shape(
            "rowwise_topk",
            format!("query dim {} vs key dim {}", q.cols(), key.cols()),
        ));
    }
    if k == 0 || k > key.rows() {
        return Err(Error::Parameter(format!("k = {k} must lie in 1..={}", key.rows())));
    }
    Ok(())
}

/// Exact top-k keys by inner product for every query row, without ever
/// holding more than one `query_tile x key_tile` block of scores per worker.
pub fn rowwise_topk<T: Scalar>(
    q: &Matrix<T>,
    key: &Matrix<T>,
    k: usize,
    cfg: TileConfig,
    ws: &Workspace,
) -> Result<TopKResult<T>> {
    check_topk_args(q, key, k)?;
    cfg.validate()?;
    let (n, m, dim) = (q.rows(), key.rows(), q.cols());

    let out_mem = ws.alloc((n * k * (std::mem::size_of::<usize>() + std::mem::size_of::<T>())) as u64)?;
    let mut indices = vec![0usize; n * k];
    let mut values = vec![T::zero(); n * k];

    // keys transposed so that one query row against a key tile is a run of axpys
    let _kt_mem = ws.alloc_elems::<T>(m * dim)?;
    let key_t = key.transpose();

    let qt = cfg.query_tile.min(n.max(1));
    let kt = cfg.key_tile.min(m);
    let use_heap = k < cfg.key_tile;

    indices
        .par_chunks_mut(qt * k)
        .zip(values.par_chunks_mut(qt * k))
        .enumerate()
        .try_for_each(|(block, (idx_out, val_out))| -> Result<()> {
            let r0 = block * qt;
            let rows = idx_out.len() / k;
            let cand_elems = rows * k * if use_heap { 1 } else { 2 };
            let _scratch = ws.alloc(
                (rows * kt * std::mem::size_of::<T>()
                    + (cand_elems + kt) * std::mem::size_of::<(T, usize)>()) as u64,
            )?;
            let mut tile = vec![T::zero(); rows * kt];
            let mut merge_buf = Vec::with_capacity(if use_heap { 0 } else { kt });
            let mut cands: Vec<Candidates<T>> = (0..rows).map(|_| Candidates::new(k, use_heap)).collect();

            let mut j0 = 0;
            while j0 < m {
                let width = kt.min(m - j0);
                for r in 0..rows {
                    let s = &mut tile[r * kt..r * kt + width];
                    s.fill(T::zero());
                    for (t, &qv) in q.row(r0 + r).iter().enumerate() {
                        let krow = &key_t.row(t)[j0..j0 + width];
                        for (sv, &kv) in s.iter_mut().zip(krow) {
                            *sv += qv * kv;
                        }
                    }
                    cands[r].absorb(k, j0, s, &mut merge_buf);
                }
                j0 += width;
            }

            for (r, c) in cands.into_iter().enumerate() {
                for (j, (v, i)) in c.into_sorted().into_iter().enumerate() {
                    idx_out[r * k + j] = i;
                    val_out[r * k + j] = v;
                }
            }
            Ok(())
        })?;

    Ok(TopKResult {
        indices: IndexMatrix { rows: n, cols: k, data: indices },
        values: Matrix::new(n, k, values)?,
        _mem: Some(out_mem),
    })
}

/// Dense baseline: materializes all `N x M` scores, then selects per row.
///
/// Same ordering and the same bits as [`rowwise_topk`]; memory is quadratic.
pub fn rowwise_topk_dense<T: Scalar>(
    q: &Matrix<T>,
    key: &Matrix<T>,
    k: usize,
    ws: &Workspace,
) -> Result<TopKResult<T>> {
    check_topk_args(q, key, k)?;
    let (n, m) = (q.rows(), key.rows());
    let _scores_mem = ws.alloc_elems::<T>(n * m)?;
    let _kt_mem = ws.alloc_elems::<T>(m * key.cols())?;
    let scores = matmul_nt(q, key)?;
    let out_mem = ws.alloc((n * k * (std::mem::size_of::<usize>() + std::mem::size_of::<T>())) as u64)?;
    let _row_mem = ws.alloc_elems::<(T, usize)>(m)?;
    let mut indices = Vec::with_capacity(n * k);
    let mut values = Vec::with_capacity(n * k);
    let mut row: Vec<(T, usize)> = Vec::with_capacity(m);
    for i in 0..n {
        row.clear();
        row.extend(scores.row(i).iter().copied().zip(0..m));
        if k < m {
            row.select_nth_unstable_by(k - 1, rank_order);
        }
        row[..k].sort_unstable_by(rank_order);
        for &(v, j) in &row[..k] {
            indices.push(j);
            values.push(v);
        }
    }
    Ok(TopKResult {
        indices: IndexMatrix { rows: n, cols: k, data: indices },
        values: Matrix::new(n, k, values)?,
        _mem: Some(out_mem),
    })
}

/// Gathers `source` rows by index: row `i * k + j` of the output is
/// `source[indices[i][j]]`.
pub fn gather_rows<T: Scalar>(source: &Matrix<T>, indices: &IndexMatrix) -> Result<Matrix<T>> {
    let m = source.rows();
    if let Some(&bad) = indices.data.iter().find(|&&i| i >= m) {
        return Err(Error::Validation(format!("gather index {bad} out of range for {m} rows")));
    }
    let dv = source.cols();
    let mut data = Vec::with_capacity(indices.data.len() * dv);
    for &i in &indices.data {
        data.extend_from_slice(source.row(i));
    }
    Matrix::new(indices.data.len(), dv, data)
}

/// Gradients of the selected inner products `values[i][j] = q_i . key_{idx[i][j]}`
/// with respect to `q` and `key`. Reuses the stored indices; cost is `O(N k d)`.
pub fn topk_backward<T: Scalar>(
    q: &Matrix<T>,
    key: &Matrix<T>,
    topk: &TopKResult<T>,
    grad_values: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, k) = (topk.indices.rows, topk.indices.cols);
    if q.rows() != n || q.cols() != key.cols() {
        return Err(Error::shape(
            "topk_backward",
            format!("q {:?}, key {:?}, top-k {n}x{k}", q.shape(), key.shape()),
        ));
    }
    if grad_values.shape() != (n, k) {
        return Err(Error::shape(
            "topk_backward",
            format!("grad_values {:?} vs top-k {n}x{k}", grad_values.shape()),
        ));
    }
    let m = key.rows();
    if topk.indices.data.iter().any(|&i| i >= m) {
        return Err(Error::shape("topk_backward", "top-k indices exceed the key count"));
    }
    let mut grad_q = Matrix::zeros(n, q.cols());
    let mut grad_key = Matrix::zeros(m, key.cols());
    for i in 0..n {
        let qi = q.row(i);
        for j in 0..k {
            let g = grad_values.get(i, j);
            if g == T::zero() {
                continue;
            }
            let idx = topk.indices.get(i, j);
            for (gq, &kv) in grad_q.row_mut(i).iter_mut().zip(key.row(idx)) {
                *gq += g * kv;
            }
            for (gk, &qv) in grad_key.row_mut(idx).iter_mut().zip(qi) {
                *gk += g * qv;
            }
        }
    }
    Ok((grad_q, grad_key))
}

/// Dense `T_k`: keeps the k largest entries of each row, sets the rest to `-inf`.
pub fn topk_mask_dense<T: Scalar>(scores: &Matrix<T>, k: usize) -> Result<Matrix<T>> {
    let m = scores.cols();
    if k == 0 || k > m {
        return Err(Error::Parameter(format!("k = {k} must lie in 1..={m}")));
    }
    let mut out = Matrix::filled(scores.rows(), m, T::neg_infinity());
    let mut row: Vec<(T, usize)> = Vec::with_capacity(m);
    for i in 0..scores.rows() {
        row.clear();
        row.extend(scores.row(i).iter().copied().zip(0..m));
        row.sort_unstable_by(rank_order);
        for &(v, j) in &row[..k] {
            out.set(i, j, v);
        }
    }
    Ok(out)
}
