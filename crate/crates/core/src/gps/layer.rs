//! One GPS layer: a local MPNN path and a global attention path over the same
//! input, summed, then a row-wise two-layer MLP, each with a residual.

use super::mpnn::{mpnn_update, mpnn_update_backward, MpnnParams, MpnnTape};
use super::nn::{apply_mask, dropout_mask, relu, relu_backward, LayerNorm, LayerNormTape, Linear, Params};
use crate::attention::{
    full_attention_backward, full_attention_forward, kmip_attention_backward, kmip_attention_forward,
    AttentionKind, AttentionParams, AttentionTape,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::mipkernel::TileConfig;
use crate::rng::Rng;
use crate::workspace::Workspace;

/// Shape of a layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerShape {
    /// Node and edge hidden width.
    pub d: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub k: usize,
    /// MLP hidden width.
    pub mlp_hidden: usize,
    pub layer_norm: bool,
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpsLayerParams {
    pub mpnn: MpnnParams,
    pub attn: AttentionParams,
    pub mlp1: Linear,
    pub mlp2: Linear,
    /// After the MPNN residual, the attention residual and the MLP residual.
    pub norms: Option<[LayerNorm; 3]>,
    pub dropout: f64,
}

impl GpsLayerParams {
    pub fn random(s: &LayerShape, rng: &mut Rng) -> Self {
        Self {
            mpnn: MpnnParams::random(s.d, rng),
            attn: AttentionParams::random(s.d, s.heads, s.d_k, s.d_v, s.k, rng),
            mlp1: Linear::random(s.d, s.mlp_hidden, rng),
            mlp2: Linear::random(s.mlp_hidden, s.d, rng),
            norms: s.layer_norm.then(|| [LayerNorm::new(s.d), LayerNorm::new(s.d), LayerNorm::new(s.d)]),
            dropout: s.dropout,
        }
    }

    /// All weights zero; layer norms, if any, at identity gain.
    pub fn zeros(s: &LayerShape) -> Self {
        Self {
            mpnn: MpnnParams::zeros(s.d),
            attn: AttentionParams::zeros(s.d, s.heads, s.d_k, s.d_v, s.k),
            mlp1: Linear::zeros(s.d, s.mlp_hidden),
            mlp2: Linear::zeros(s.mlp_hidden, s.d),
            norms: s.layer_norm.then(|| [LayerNorm::new(s.d), LayerNorm::new(s.d), LayerNorm::new(s.d)]),
            dropout: s.dropout,
        }
    }

    pub fn dim(&self) -> usize {
        self.mpnn.dim()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero_out();
        g
    }
}

impl Params for AttentionParams {
    fn matrices(&self) -> Vec<&Matrix> {
        AttentionParams::matrices(self)
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        AttentionParams::matrices_mut(self)
    }
}

impl Params for GpsLayerParams {
    fn matrices(&self) -> Vec<&Matrix> {
        let mut out = self.mpnn.matrices();
        out.extend(Params::matrices(&self.attn));
        out.extend(self.mlp1.matrices());
        out.extend(self.mlp2.matrices());
        for ln in self.norms.iter().flatten() {
            out.extend(ln.matrices());
        }
        out
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.mpnn.matrices_mut();
        out.extend(Params::matrices_mut(&mut self.attn));
        out.extend(self.mlp1.matrices_mut());
        out.extend(self.mlp2.matrices_mut());
        for ln in self.norms.iter_mut().flatten() {
            out.extend(ln.matrices_mut());
        }
        out
    }
}

/// Forward state of one layer kept for the backward pass.
pub struct LayerTape {
    x: Matrix,
    e: Matrix,
    mpnn: MpnnTape,
    attn: AttentionTape,
    hsum: Matrix,
    mlp_pre: Matrix,
    mlp_act: Matrix,
    norms: [Option<LayerNormTape>; 3],
    masks: [Option<Matrix>; 3],
}

fn norm(ln: Option<&LayerNorm>, x: Matrix) -> (Matrix, Option<LayerNormTape>) {
    match ln {
        Some(ln) => {
            let (y, t) = ln.forward(&x);
            (y, Some(t))
        }
        None => (x, None),
    }
}

fn norm_backward(ln: Option<&LayerNorm>, tape: &Option<LayerNormTape>, gy: &Matrix, g: Option<&mut LayerNorm>) -> Matrix {
    match (ln, tape, g) {
        (Some(ln), Some(t), Some(g)) => ln.backward(t, gy, g),
        _ => gy.clone(),
    }
}

fn attn_forward(
    kind: AttentionKind,
    x: &Matrix,
    p: &AttentionParams,
    ws: &Workspace,
) -> Result<(Matrix, AttentionTape)> {
    match kind {
        AttentionKind::Full => full_attention_forward(x, p, ws),
        AttentionKind::Kmip => kmip_attention_forward(x, p, TileConfig::default(), ws),
    }
}

/// Forward pass with optional dropout (active only when `rng` is given).
#[allow(clippy::too_many_arguments)]
pub fn gps_layer_forward_train(
    x: &Matrix,
    e: &Matrix,
    g: &Graph,
    p: &GpsLayerParams,
    kind: AttentionKind,
    ws: &Workspace,
    mut rng: Option<&mut Rng>,
) -> Result<(Matrix, Matrix, LayerTape)> {
    let (n, d) = x.shape();
    let ln = |i: usize| p.norms.as_ref().map(|a| &a[i]);
    let mut masks: [Option<Matrix>; 3] = [None, None, None];
    for m in masks.iter_mut() {
        *m = dropout_mask(n, d, p.dropout, rng.as_deref_mut())?;
    }

    let (h, e_hat, mpnn_tape) = mpnn_update(x, g, e, &p.mpnn)?;
    let (x_m, t1) = norm(ln(0), x.add(&apply_mask(h, masks[0].as_ref())?)?);

    let (a, attn_tape) = attn_forward(kind, x, &p.attn, ws)?;
    let (x_t, t2) = norm(ln(1), x.add(&apply_mask(a, masks[1].as_ref())?)?);

    let hsum = x_m.add(&x_t)?;
    let mlp_pre = p.mlp1.forward(&hsum)?;
    let mlp_act = relu(&mlp_pre);
    let m = apply_mask(p.mlp2.forward(&mlp_act)?, masks[2].as_ref())?;
    let (out, t3) = norm(ln(2), hsum.add(&m)?);

    let e_out = e.add(&e_hat)?;
    if !out.is_finite() || !e_out.is_finite() {
        return Err(Error::NonFinite("GPS layer output".into()));
    }
    let tape = LayerTape {
        x: x.clone(),
        e: e.clone(),
        mpnn: mpnn_tape,
        attn: attn_tape,
        hsum,
        mlp_pre,
        mlp_act,
        norms: [t1, t2, t3],
        masks,
    };
    Ok((out, e_out, tape))
}

/// `X_M = MPNN(x, e) + x`, `X_T = Attn(x) + x`, `x' = MLP(X_M + X_T) + X_M + X_T`,
/// each residual sum followed by layer norm when enabled; `e' = e + e_hat`.
pub fn gps_layer_forward(
    x: &Matrix,
    e: &Matrix,
    g: &Graph,
    p: &GpsLayerParams,
    kind: AttentionKind,
    ws: &Workspace,
) -> Result<(Matrix, Matrix, LayerTape)> {
    gps_layer_forward_train(x, e, g, p, kind, ws, None)
}

/// Returns `(grad_x, grad_e, grad_params)`.
pub fn gps_layer_backward(
    tape: &LayerTape,
    g: &Graph,
    p: &GpsLayerParams,
    grad_out: &Matrix,
    grad_e_out: &Matrix,
) -> Result<(Matrix, Matrix, GpsLayerParams)> {
    let mut grads = p.zeros_like();
    let ln = |i: usize| p.norms.as_ref().map(|a| &a[i]);
    let mask = |i: usize, m: Matrix| apply_mask(m, tape.masks[i].as_ref());

    let gs3 = {
        let gn = grads.norms.as_mut().map(|a| &mut a[2]);
        norm_backward(ln(2), &tape.norms[2], grad_out, gn)
    };
    let mut g_hsum = gs3.clone();
    let g_act = p.mlp2.backward(&tape.mlp_act, &mask(2, gs3)?, &mut grads.mlp2)?;
    let g_pre = relu_backward(&tape.mlp_pre, &g_act);
    g_hsum.add_assign(&p.mlp1.backward(&tape.hsum, &g_pre, &mut grads.mlp1)?)?;

    let gs2 = {
        let gn = grads.norms.as_mut().map(|a| &mut a[1]);
        norm_backward(ln(1), &tape.norms[1], &g_hsum, gn)
    };
    let mut grad_x = gs2.clone();
    let g_a = mask(1, gs2)?;
    let (gx_attn, g_attn) = match tape.attn.kind {
        AttentionKind::Full => full_attention_backward(&tape.attn, &tape.x, &p.attn, &g_a)?,
        AttentionKind::Kmip => kmip_attention_backward(&tape.attn, &tape.x, &p.attn, &g_a)?,
    };
    grad_x.add_assign(&gx_attn)?;
    grads.attn = g_attn;

    let gs1 = {
        let gn = grads.norms.as_mut().map(|a| &mut a[0]);
        norm_backward(ln(0), &tape.norms[0], &g_hsum, gn)
    };
    grad_x.add_assign(&gs1)?;
    let g_h = mask(0, gs1)?;
    let mut grad_e = grad_e_out.clone();
    mpnn_update_backward(
        &tape.x,
        g,
        &tape.e,
        &p.mpnn,
        &tape.mpnn,
        &g_h,
        grad_e_out,
        &mut grads.mpnn,
        &mut grad_x,
        &mut grad_e,
    )?;
    Ok((grad_x, grad_e, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(layer_norm: bool) -> LayerShape {
        LayerShape { d: 4, heads: 2, d_k: 2, d_v: 2, k: 3, mlp_hidden: 8, layer_norm, dropout: 0.0 }
    }

    #[test]
    fn zero_weights_double_the_input() {
        let mut rng = Rng::new(3);
        let g = Graph::cycle(5);
        let x = Matrix::random_normal(5, 4, &mut rng);
        let e = Matrix::random_normal(g.num_edges(), 4, &mut rng);
        let p = GpsLayerParams::zeros(&shape(false));
        for kind in [AttentionKind::Full, AttentionKind::Kmip] {
            let (y, e2, _) = gps_layer_forward(&x, &e, &g, &p, kind, &Workspace::new()).unwrap();
            assert!(y.max_abs_diff(&x.scale(2.0)).unwrap() < 1e-15);
            assert_eq!(e2, e);
        }
    }

    #[test]
    fn kmip_with_k_at_least_n_matches_full() {
        let mut rng = Rng::new(4);
        let g = Graph::undirected(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]).unwrap();
        let mut s = shape(true);
        s.k = 10;
        let p = GpsLayerParams::random(&s, &mut rng);
        let x = Matrix::random_normal(6, 4, &mut rng);
        let e = Matrix::random_normal(g.num_edges(), 4, &mut rng);
        let ws = Workspace::new();
        let (a, ea, _) = gps_layer_forward(&x, &e, &g, &p, AttentionKind::Full, &ws).unwrap();
        let (b, eb, _) = gps_layer_forward(&x, &e, &g, &p, AttentionKind::Kmip, &ws).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
        assert_eq!(ea, eb);
    }

    #[test]
    fn params_round_trip_in_fixed_order() {
        let mut rng = Rng::new(5);
        let p = GpsLayerParams::random(&shape(true), &mut rng);
        let counts: Vec<usize> = p.matrices().iter().map(|m| m.len()).collect();
        let mut q = p.zeros_like();
        for (dst, src) in q.matrices_mut().into_iter().zip(p.matrices()) {
            *dst = src.clone();
        }
        assert_eq!(p, q);
        assert_eq!(counts.iter().sum::<usize>(), p.num_params());
    }
}
