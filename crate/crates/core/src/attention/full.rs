//! Dense multi-head self-attention. Quadratic memory; the baseline and oracle.

use super::{check_grad, check_input, fingerprint, sqrt_dk, AttentionKind, AttentionParams, AttentionTape, HeadTape};
use crate::error::Result;
use crate::matrix::{matmul, matmul_nt, matmul_tn, softmax_backward_in_place, softmax_in_place, Matrix, Scalar};
use crate::workspace::{Allocation, Workspace};

/// Single-head dense attention on already projected `q`, `key`, `v`.
/// Returns the head output and the `N x M` probabilities.
pub(super) fn full_head<T: Scalar>(
    q: &Matrix<T>,
    key: &Matrix<T>,
    v: &Matrix<T>,
    ws: &Workspace,
    keep: &mut Vec<Allocation>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, m) = (q.rows(), key.rows());
    let key_t_mem = ws.alloc_elems::<T>(m * key.cols())?;
    keep.push(ws.alloc_elems::<T>(n * m)?);
    let mut scores = matmul_nt(q, key)?;
    drop(key_t_mem);
    let scale = sqrt_dk::<T>(q.cols());
    for s in scores.as_mut_slice() {
        *s = *s / scale;
    }
    for i in 0..n {
        softmax_in_place(scores.row_mut(i))?;
    }
    keep.push(ws.alloc_elems::<T>(n * v.cols())?);
    let out = matmul(&scores, v)?;
    Ok((out, scores))
}

/// `softmax(q key^T / sqrt(d_K)) v` for one head, untracked.
pub fn full_attend<T: Scalar>(q: &Matrix<T>, key: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>> {
    let mut keep = Vec::new();
    Ok(full_head(q, key, v, &Workspace::new(), &mut keep)?.0)
}

pub(super) fn add_projected<T: Scalar>(
    y: &mut Matrix<T>,
    out: &Matrix<T>,
    w_o: &Matrix<T>,
    ws: &Workspace,
) -> Result<()> {
    let _tmp = ws.alloc_elems::<T>(y.len())?;
    y.add_assign(&matmul(out, w_o)?)
}

/// `y = sum_h softmax(X W_Q^h (X W_K^h)^T / sqrt(d_K)) X W_V^h W_O^h`.
pub fn full_attention_forward<T: Scalar>(
    x: &Matrix<T>,
    p: &AttentionParams<T>,
    ws: &Workspace,
) -> Result<(Matrix<T>, AttentionTape<T>)> {
    check_input("full_attention_forward", x, p)?;
    let n = x.rows();
    let mut keep = vec![ws.alloc_elems::<T>(n * p.d_model)?];
    let mut y = Matrix::zeros(n, p.d_model);
    let mut heads = Vec::with_capacity(p.num_heads());
    for hp in &p.heads {
        keep.push(ws.alloc_elems::<T>(n * (2 * p.d_k + p.d_v))?);
        let q = matmul(x, &hp.w_q)?;
        let key = matmul(x, &hp.w_k)?;
        let v = matmul(x, &hp.w_v)?;
        let (out, probs) = if n == 0 {
            (Matrix::zeros(0, p.d_v), Matrix::zeros(0, 0))
        } else {
            full_head(&q, &key, &v, ws, &mut keep)?
        };
        add_projected(&mut y, &out, &hp.w_o, ws)?;
        heads.push(HeadTape { q, key, v, probs, topk: None, out });
    }
    let tape = AttentionTape {
        kind: AttentionKind::Full,
        n,
        k_eff: n,
        heads,
        fingerprint: fingerprint(AttentionKind::Full, x, p),
        ws: ws.clone(),
        _mem: keep,
    };
    Ok((y, tape))
}

/// Accumulates the input-projection gradients of one head into `grad_x` and `g`.
pub(super) fn project_back<T: Scalar>(
    x: &Matrix<T>,
    hp: &super::HeadParams<T>,
    grad_q: &Matrix<T>,
    grad_k: &Matrix<T>,
    grad_v: &Matrix<T>,
    grad_x: &mut Matrix<T>,
    g: &mut super::HeadParams<T>,
    ws: &Workspace,
) -> Result<()> {
    g.w_q = matmul_tn(x, grad_q)?;
    g.w_k = matmul_tn(x, grad_k)?;
    g.w_v = matmul_tn(x, grad_v)?;
    for (grad, w) in [(grad_q, &hp.w_q), (grad_k, &hp.w_k), (grad_v, &hp.w_v)] {
        let _tmp = ws.alloc_elems::<T>(grad_x.len())?;
        grad_x.add_assign(&matmul_nt(grad, w)?)?;
    }
    Ok(())
}

/// Exact gradient of [`full_attention_forward`] with respect to `x` and all weights.
pub fn full_attention_backward<T: Scalar>(
    tape: &AttentionTape<T>,
    x: &Matrix<T>,
    p: &AttentionParams<T>,
    grad_y: &Matrix<T>,
) -> Result<(Matrix<T>, AttentionParams<T>)> {
    check_input("full_attention_backward", x, p)?;
    check_grad("full_attention_backward", x, grad_y)?;
    tape.check(AttentionKind::Full, x, p)?;
    let ws = &tape.ws;
    let n = x.rows();
    let _gx_mem = ws.alloc_elems::<T>(n * p.d_model)?;
    let mut grad_x = Matrix::zeros(n, p.d_model);
    let mut grads = p.zeros_like();
    let scale = sqrt_dk::<T>(p.d_k);
    for ((hp, ht), g) in p.heads.iter().zip(&tape.heads).zip(grads.heads.iter_mut()) {
        g.w_o = matmul_tn(&ht.out, grad_y)?;
        let _go_mem = ws.alloc_elems::<T>(n * p.d_v)?;
        let grad_out = matmul_nt(grad_y, &hp.w_o)?;

        let v_t_mem = ws.alloc_elems::<T>(n * p.d_v)?;
        let _ga_mem = ws.alloc_elems::<T>(n * n)?;
        let mut grad_s = matmul_nt(&grad_out, &ht.v)?;
        drop(v_t_mem);
        let _gv_mem = ws.alloc_elems::<T>(n * p.d_v)?;
        let grad_v = matmul_tn(&ht.probs, &grad_out)?;
        for i in 0..n {
            softmax_backward_in_place(ht.probs.row(i), grad_s.row_mut(i));
        }
        for s in grad_s.as_mut_slice() {
            *s = *s / scale;
        }
        let _gqk_mem = ws.alloc_elems::<T>(2 * n * p.d_k)?;
        let grad_q = matmul(&grad_s, &ht.key)?;
        let grad_k = matmul_tn(&grad_s, &ht.q)?;
        drop(grad_s);
        drop(_ga_mem);
        project_back(x, hp, &grad_q, &grad_k, &grad_v, &mut grad_x, g, ws)?;
    }
    Ok((grad_x, grads))
}
