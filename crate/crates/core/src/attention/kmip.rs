//! k-MIP self-attention: each query attends to its k highest-inner-product keys.

use super::full::{add_projected, project_back};
use super::{check_grad, check_input, fingerprint, sqrt_dk, AttentionKind, AttentionParams, AttentionTape, HeadTape};
use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_nt, matmul_tn, softmax_backward_in_place, softmax_in_place, softmax_rows, Matrix, Scalar};
use crate::mipkernel::{gather_rows, rowwise_topk, rowwise_topk_dense, topk_backward, topk_mask_dense, TileConfig, TopKResult};
use crate::workspace::{Allocation, Workspace};

/// How the per-row top-k keys are found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopKSelector {
    /// Tiled kernel, linear memory.
    Tiled(TileConfig),
    /// Materialize the dense score matrix, then select. Quadratic memory.
    Dense,
}

struct KmipHead<T> {
    topk: TopKResult<T>,
    probs: Matrix<T>,
    out: Matrix<T>,
}

fn kmip_head<T: Scalar>(
    q: &Matrix<T>,
    key: &Matrix<T>,
    v: &Matrix<T>,
    k: usize,
    selector: TopKSelector,
    ws: &Workspace,
    keep: &mut Vec<Allocation>,
) -> Result<KmipHead<T>> {
    let n = q.rows();
    let topk = match selector {
        TopKSelector::Tiled(cfg) => rowwise_topk(q, key, k, cfg, ws)?,
        TopKSelector::Dense => rowwise_topk_dense(q, key, k, ws)?,
    };
    keep.push(ws.alloc_elems::<T>(n * k)?);
    let scale = sqrt_dk::<T>(q.cols());
    let mut probs = topk.values.map(|e| e / scale);
    for i in 0..n {
        softmax_in_place(probs.row_mut(i))?;
    }

    let dv = v.cols();
    let gathered_mem = ws.alloc_elems::<T>(n * k * dv)?;
    let gathered = gather_rows(v, &topk.indices)?;
    keep.push(ws.alloc_elems::<T>(n * dv)?);
    let mut out = Matrix::zeros(n, dv);
    for i in 0..n {
        let o = out.row_mut(i);
        for (j, &a) in probs.row(i).iter().enumerate() {
            for (ov, &gv) in o.iter_mut().zip(gathered.row(i * k + j)) {
                *ov += a * gv;
            }
        }
    }
    drop(gathered);
    drop(gathered_mem);
    Ok(KmipHead { topk, probs, out })
}

/// Single-head k-MIP attention on projected `q`, `key`, `v` (untracked).
pub fn kmip_attend<T: Scalar>(
    q: &Matrix<T>,
    key: &Matrix<T>,
    v: &Matrix<T>,
    k: usize,
    cfg: TileConfig,
) -> Result<Matrix<T>> {
    let mut keep = Vec::new();
    let k = k.min(key.rows());
    Ok(kmip_head(q, key, v, k, TopKSelector::Tiled(cfg), &Workspace::new(), &mut keep)?.out)
}

/// Multi-head k-MIP self-attention using the tiled top-k kernel.
pub fn kmip_attention_forward<T: Scalar>(
    x: &Matrix<T>,
    p: &AttentionParams<T>,
    cfg: TileConfig,
    ws: &Workspace,
) -> Result<(Matrix<T>, AttentionTape<T>)> {
    kmip_attention_forward_with(x, p, TopKSelector::Tiled(cfg), ws)
}

/// [`kmip_attention_forward`] with an explicit top-k strategy.
pub fn kmip_attention_forward_with<T: Scalar>(
    x: &Matrix<T>,
    p: &AttentionParams<T>,
    selector: TopKSelector,
    ws: &Workspace,
) -> Result<(Matrix<T>, AttentionTape<T>)> {
    check_input("kmip_attention_forward", x, p)?;
    let n = x.rows();
    let k = p.k.min(n);
    let mut keep = vec![ws.alloc_elems::<T>(n * p.d_model)?];
    let mut y = Matrix::zeros(n, p.d_model);
    let mut heads = Vec::with_capacity(p.num_heads());
    for hp in &p.heads {
        keep.push(ws.alloc_elems::<T>(n * (2 * p.d_k + p.d_v))?);
        let q = matmul(x, &hp.w_q)?;
        let key = matmul(x, &hp.w_k)?;
        let v = matmul(x, &hp.w_v)?;
        if n == 0 {
            heads.push(HeadTape { q, key, v, probs: Matrix::zeros(0, 0), topk: None, out: Matrix::zeros(0, p.d_v) });
            continue;
        }
        let h = kmip_head(&q, &key, &v, k, selector, ws, &mut keep)?;
        add_projected(&mut y, &h.out, &hp.w_o, ws)?;
        heads.push(HeadTape { q, key, v, probs: h.probs, topk: Some(h.topk), out: h.out });
    }
    let tape = AttentionTape {
        kind: AttentionKind::Kmip,
        n,
        k_eff: k,
        heads,
        fingerprint: fingerprint(AttentionKind::Kmip, x, p),
        ws: ws.clone(),
        _mem: keep,
    };
    Ok((y, tape))
}

/// Gradient of the k-MIP forward map with the selected index sets held fixed.
///
/// The map is piecewise smooth; the result is the true gradient wherever the
/// selection is locally stable. No pass over all `N x N` pairs is made.
pub fn kmip_attention_backward<T: Scalar>(
    tape: &AttentionTape<T>,
    x: &Matrix<T>,
    p: &AttentionParams<T>,
    grad_y: &Matrix<T>,
) -> Result<(Matrix<T>, AttentionParams<T>)> {
    check_input("kmip_attention_backward", x, p)?;
    check_grad("kmip_attention_backward", x, grad_y)?;
    tape.check(AttentionKind::Kmip, x, p)?;
    let ws = &tape.ws;
    let (n, k) = (x.rows(), tape.k_eff);
    let _gx_mem = ws.alloc_elems::<T>(n * p.d_model)?;
    let mut grad_x = Matrix::zeros(n, p.d_model);
    let mut grads = p.zeros_like();
    if n == 0 {
        return Ok((grad_x, grads));
    }
    let scale = sqrt_dk::<T>(p.d_k);
    for ((hp, ht), g) in p.heads.iter().zip(&tape.heads).zip(grads.heads.iter_mut()) {
        let topk = ht
            .topk
            .as_ref()
            .ok_or_else(|| Error::Contract("k-MIP tape without top-k indices".into()))?;
        g.w_o = matmul_tn(&ht.out, grad_y)?;
        let _go_mem = ws.alloc_elems::<T>(n * p.d_v)?;
        let grad_out = matmul_nt(grad_y, &hp.w_o)?;

        let _ga_mem = ws.alloc_elems::<T>(n * k)?;
        let _gv_mem = ws.alloc_elems::<T>(n * p.d_v)?;
        let mut grad_e = Matrix::zeros(n, k);
        let mut grad_v = Matrix::zeros(n, p.d_v);
        for i in 0..n {
            let go = grad_out.row(i);
            for j in 0..k {
                let idx = topk.indices.get(i, j);
                let a = ht.probs.get(i, j);
                let mut s = T::zero();
                for (&gov, &vv) in go.iter().zip(ht.v.row(idx)) {
                    s += gov * vv;
                }
                grad_e.set(i, j, s);
                for (gv, &gov) in grad_v.row_mut(idx).iter_mut().zip(go) {
                    *gv += a * gov;
                }
            }
            softmax_backward_in_place(ht.probs.row(i), grad_e.row_mut(i));
        }
        for e in grad_e.as_mut_slice() {
            *e = *e / scale;
        }
        let _gqk_mem = ws.alloc_elems::<T>(2 * n * p.d_k)?;
        let (grad_q, grad_k) = topk_backward(&ht.q, &ht.key, topk, &grad_e)?;
        project_back(x, hp, &grad_q, &grad_k, &grad_v, &mut grad_x, g, ws)?;
    }
    Ok((grad_x, grads))
}

/// `softmax(T_k(lambda * z))` row-wise. As `lambda` grows this approaches the
/// one-hot row argmax, provided each row has a unique maximum.
pub fn scaled_hardmax_limit_check<T: Scalar>(z: &Matrix<T>, k: usize, lambda: T) -> Result<Matrix<T>> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    softmax_rows(&topk_mask_dense(&z.scale(lambda), k)?)
}

/// Share of all-key softmax mass held by each query's top-k keys.
///
/// Output is `N x ks.len()`; entry `(i, c)` is
/// `sum_{j <= ks[c]} softmax_{all keys}(q_i . key_{sigma_i(j)} / sqrt(d_K))` where
/// `sigma_i` orders keys by descending inner product. The denominator is
/// summed in the same order, so `k = M` yields exactly one.
pub fn cumulative_topk_weight<T: Scalar>(q: &Matrix<T>, key: &Matrix<T>, ks: &[usize]) -> Result<Matrix<T>> {
    let m = key.rows();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > m) {
        return Err(Error::Parameter(format!("k = {bad} must lie in 1..={m}")));
    }
    let scores = matmul_nt(q, key)?;
    let scale = sqrt_dk::<T>(q.cols());
    let mut out = Matrix::zeros(q.rows(), ks.len());
    let mut row: Vec<(T, usize)> = Vec::with_capacity(m);
    let mut prefix = vec![T::zero(); m + 1];
    for i in 0..q.rows() {
        row.clear();
        row.extend(scores.row(i).iter().map(|&s| s / scale).zip(0..m));
        row.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let max = row[0].0;
        for (j, &(s, _)) in row.iter().enumerate() {
            prefix[j + 1] = prefix[j] + (s - max).exp();
        }
        for (c, &k) in ks.iter().enumerate() {
            out.set(i, c, prefix[k] / prefix[m]);
        }
    }
    Ok(out)
}
