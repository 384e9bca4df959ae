//! Gated graph convolution updating node and edge features.
//!
//! For an edge `m = (j -> i)`:
//! `e_hat_m = e_m W3 + x_i W4 + x_j W5`, `eta_m = sigmoid(e_hat_m)`,
//! and the node update is `h_i = x_i W1 + sum_{m into i} eta_m * (x_j W2)`.
//! Sums run over in-edges only, without degree normalization.

use super::nn::{sigmoid, Params};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::rng::Rng;

/// Five `d x d` weights, no biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MpnnParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
    pub w4: Matrix,
    pub w5: Matrix,
}

impl MpnnParams {
    pub fn random(d: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (d.max(1) as f64).sqrt();
        let mut w = || Matrix::random_normal(d, d, rng).scale(s);
        Self { w1: w(), w2: w(), w3: w(), w4: w(), w5: w() }
    }

    pub fn zeros(d: usize) -> Self {
        let w = || Matrix::zeros(d, d);
        Self { w1: w(), w2: w(), w3: w(), w4: w(), w5: w() }
    }

    pub fn dim(&self) -> usize {
        self.w1.rows()
    }
}

impl Params for MpnnParams {
    fn matrices(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.w2, &self.w3, &self.w4, &self.w5]
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.w2, &mut self.w3, &mut self.w4, &mut self.w5]
    }
}

pub(crate) struct MpnnTape {
    eta: Matrix,
    msg_src: Matrix,
}

/// Node update `h` and pre-activation edge features `e_hat`, without residuals.
pub(crate) fn mpnn_update(x: &Matrix, g: &Graph, e: &Matrix, p: &MpnnParams) -> Result<(Matrix, Matrix, MpnnTape)> {
    let d = p.dim();
    if x.shape() != (g.num_nodes(), d) {
        return Err(Error::shape("mpnn_forward", format!("x is {:?}, expected ({}, {d})", x.shape(), g.num_nodes())));
    }
    if e.shape() != (g.num_edges(), d) {
        return Err(Error::shape("mpnn_forward", format!("e is {:?}, expected ({}, {d})", e.shape(), g.num_edges())));
    }
    let mut e_hat = matmul(e, &p.w3)?;
    let at_dst = matmul(x, &p.w4)?;
    let at_src = matmul(x, &p.w5)?;
    let msg_src = matmul(x, &p.w2)?;
    let mut h = matmul(x, &p.w1)?;
    let mut eta = Matrix::zeros(g.num_edges(), d);
    for (m, &(src, dst)) in g.edges().iter().enumerate() {
        let (ad, as_, ms) = (at_dst.row(dst), at_src.row(src), msg_src.row(src));
        let eh = e_hat.row_mut(m);
        let et = eta.row_mut(m);
        for c in 0..d {
            eh[c] += ad[c] + as_[c];
            et[c] = sigmoid(eh[c]);
        }
        for (hv, (&gate, &mv)) in h.row_mut(dst).iter_mut().zip(et.iter().zip(ms)) {
            *hv += gate * mv;
        }
    }
    Ok((h, e_hat, MpnnTape { eta, msg_src }))
}

/// Backward of [`mpnn_update`]. Accumulates into `g`, `grad_x` and `grad_e`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mpnn_update_backward(
    x: &Matrix,
    graph: &Graph,
    e: &Matrix,
    p: &MpnnParams,
    tape: &MpnnTape,
    grad_h: &Matrix,
    grad_e_hat: &Matrix,
    g: &mut MpnnParams,
    grad_x: &mut Matrix,
    grad_e: &mut Matrix,
) -> Result<()> {
    let d = p.dim();
    let n = graph.num_nodes();
    let mut g_pre = grad_e_hat.clone();
    let mut g_msg_src = Matrix::zeros(n, d);
    for (m, &(src, dst)) in graph.edges().iter().enumerate() {
        let gh = grad_h.row(dst);
        let et = tape.eta.row(m);
        let ms = tape.msg_src.row(src);
        let gp = g_pre.row_mut(m);
        for c in 0..d {
            gp[c] += gh[c] * ms[c] * et[c] * (1.0 - et[c]);
        }
        for (gm, (&ghv, &gate)) in g_msg_src.row_mut(src).iter_mut().zip(gh.iter().zip(et)) {
            *gm += ghv * gate;
        }
    }
    let mut g_dst = Matrix::zeros(n, d);
    let mut g_src = Matrix::zeros(n, d);
    for (m, &(src, dst)) in graph.edges().iter().enumerate() {
        for (a, &b) in g_dst.row_mut(dst).iter_mut().zip(g_pre.row(m)) {
            *a += b;
        }
        for (a, &b) in g_src.row_mut(src).iter_mut().zip(g_pre.row(m)) {
            *a += b;
        }
    }
    for (w, gw, gy) in [
        (&p.w1, &mut g.w1, grad_h),
        (&p.w2, &mut g.w2, &g_msg_src),
        (&p.w4, &mut g.w4, &g_dst),
        (&p.w5, &mut g.w5, &g_src),
    ] {
        gw.add_assign(&matmul_tn(x, gy)?)?;
        grad_x.add_assign(&matmul_nt(gy, w)?)?;
    }
    g.w3.add_assign(&matmul_tn(e, &g_pre)?)?;
    grad_e.add_assign(&matmul_nt(&g_pre, &p.w3)?)?;
    Ok(())
}

/// One message-passing step with residuals: returns `(x + h, e + e_hat)`.
pub fn mpnn_forward(x: &Matrix, g: &Graph, e: &Matrix, p: &MpnnParams) -> Result<(Matrix, Matrix)> {
    let (h, e_hat, _) = mpnn_update(x, g, e, p)?;
    Ok((x.add(&h)?, e.add(&e_hat)?))
}
