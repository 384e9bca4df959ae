//! Stacked GPS layers with input encoders and a node classification head.

use std::fmt;
use std::str::FromStr;

use super::layer::{gps_layer_backward, gps_layer_forward_train, GpsLayerParams, LayerShape, LayerTape};
use super::nn::{relu, relu_backward, Linear, Params};
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::wl::{laplacian_pe, rwse};
use crate::workspace::Workspace;

/// Positional or structural encoding appended to the node features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeKind {
    None,
    LapPe(usize),
    Rwse(usize),
}

impl PeKind {
    pub fn dim(&self) -> usize {
        match *self {
            PeKind::None => 0,
            PeKind::LapPe(m) | PeKind::Rwse(m) => m,
        }
    }

    pub fn encode(&self, g: &Graph) -> Option<Matrix> {
        match *self {
            PeKind::None => None,
            PeKind::LapPe(m) => Some(laplacian_pe(g, m)),
            PeKind::Rwse(m) => Some(rwse(g, m)),
        }
    }
}

impl fmt::Display for PeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeKind::None => write!(f, "none"),
            PeKind::LapPe(m) => write!(f, "lap_pe:{m}"),
            PeKind::Rwse(m) => write!(f, "rwse:{m}"),
        }
    }
}

impl FromStr for PeKind {
    type Err = Error;

    /// `none`, `lap_pe:M` or `rwse:M`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("unknown encoding '{s}', expected none, lap_pe:M or rwse:M"));
        if s == "none" {
            return Ok(PeKind::None);
        }
        let (name, m) = s.split_once(':').ok_or_else(bad)?;
        let m: usize = m.parse().map_err(|_| bad())?;
        if m == 0 {
            return Err(bad());
        }
        match name {
            "lap_pe" => Ok(PeKind::LapPe(m)),
            "rwse" => Ok(PeKind::Rwse(m)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Raw node feature width, excluding any encoding.
    pub d_in: usize,
    pub d_edge_in: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub k: usize,
    pub mlp_hidden: usize,
    pub classes: usize,
    pub pe: PeKind,
    pub layer_norm: bool,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("d_k", self.d_k),
            ("d_v", self.d_v),
            ("k", self.k),
            ("mlp_hidden", self.mlp_hidden),
            ("classes", self.classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Parameter(format!("{name} must be >= 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    fn layer_shape(&self) -> LayerShape {
        LayerShape {
            d: self.hidden,
            heads: self.heads,
            d_k: self.d_k,
            d_v: self.d_v,
            k: self.k,
            mlp_hidden: self.mlp_hidden,
            layer_norm: self.layer_norm,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpsModel {
    pub config: ModelConfig,
    /// `(d_in + pe_dim) -> hidden`
    pub node_encoder: Linear,
    /// `d_edge_in -> hidden`
    pub edge_encoder: Linear,
    pub layers: Vec<GpsLayerParams>,
    /// `hidden -> hidden`, followed by ReLU.
    pub head1: Linear,
    /// `hidden -> classes`
    pub head2: Linear,
}

impl GpsModel {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let shape = config.layer_shape();
        Ok(Self {
            node_encoder: Linear::random(config.d_in + config.pe.dim(), d, rng),
            edge_encoder: Linear::random(config.d_edge_in, d, rng),
            layers: (0..config.layers).map(|_| GpsLayerParams::random(&shape, rng)).collect(),
            head1: Linear::random(d, d, rng),
            head2: Linear::random(d, config.classes, rng),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero_out();
        g
    }

    /// Node features with the configured encoding appended.
    pub fn prepare_input(&self, g: &Graph) -> Result<Matrix> {
        if g.feature_dim() != self.config.d_in {
            return Err(Error::Validation(format!(
                "graph has {} node features, model expects {}",
                g.feature_dim(),
                self.config.d_in
            )));
        }
        if g.edge_feature_dim() != self.config.d_edge_in {
            return Err(Error::Validation(format!(
                "graph has {} edge features, model expects {}",
                g.edge_feature_dim(),
                self.config.d_edge_in
            )));
        }
        match self.config.pe.encode(g) {
            Some(pe) => g.node_features().hcat(&pe),
            None => Ok(g.node_features().clone()),
        }
    }
}

impl Params for GpsModel {
    fn matrices(&self) -> Vec<&Matrix> {
        let mut out = self.node_encoder.matrices();
        out.extend(self.edge_encoder.matrices());
        for l in &self.layers {
            out.extend(l.matrices());
        }
        out.extend(self.head1.matrices());
        out.extend(self.head2.matrices());
        out
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.node_encoder.matrices_mut();
        out.extend(self.edge_encoder.matrices_mut());
        for l in &mut self.layers {
            out.extend(l.matrices_mut());
        }
        out.extend(self.head1.matrices_mut());
        out.extend(self.head2.matrices_mut());
        out
    }
}

pub struct ModelTape {
    input: Matrix,
    layers: Vec<LayerTape>,
    last: Matrix,
    head_pre: Matrix,
    head_act: Matrix,
}

/// Forward pass on prepared input (see [`GpsModel::prepare_input`]).
/// Dropout is active only when `rng` is given.
pub fn model_forward_tape(
    input: &Matrix,
    g: &Graph,
    model: &GpsModel,
    kind: AttentionKind,
    ws: &Workspace,
    mut rng: Option<&mut Rng>,
) -> Result<(Matrix, ModelTape)> {
    let mut x = model.node_encoder.forward(input)?;
    let mut e = model.edge_encoder.forward(g.edge_features())?;
    let mut tapes = Vec::with_capacity(model.layers.len());
    for lp in &model.layers {
        let (x2, e2, t) = gps_layer_forward_train(&x, &e, g, lp, kind, ws, rng.as_deref_mut())?;
        x = x2;
        e = e2;
        tapes.push(t);
    }
    let head_pre = model.head1.forward(&x)?;
    let head_act = relu(&head_pre);
    let logits = model.head2.forward(&head_act)?;
    Ok((logits, ModelTape { input: input.clone(), layers: tapes, last: x, head_pre, head_act }))
}

/// Per-node class logits, `N x classes`.
pub fn model_forward(g: &Graph, model: &GpsModel, kind: AttentionKind, ws: &Workspace) -> Result<Matrix> {
    let input = model.prepare_input(g)?;
    Ok(model_forward_tape(&input, g, model, kind, ws, None)?.0)
}

/// Gradients of all parameters given the gradient of the logits.
pub fn model_backward(tape: &ModelTape, g: &Graph, model: &GpsModel, grad_logits: &Matrix) -> Result<GpsModel> {
    let mut grads = model.zeros_like();
    let g_act = model.head2.backward(&tape.head_act, grad_logits, &mut grads.head2)?;
    let g_pre = relu_backward(&tape.head_pre, &g_act);
    let mut gx = model.head1.backward(&tape.last, &g_pre, &mut grads.head1)?;
    let mut ge = Matrix::zeros(g.num_edges(), model.config.hidden);
    for ((lp, lt), lg) in model.layers.iter().zip(&tape.layers).zip(grads.layers.iter_mut()).rev() {
        let (gx2, ge2, grad) = gps_layer_backward(lt, g, lp, &gx, &ge)?;
        *lg = grad;
        gx = gx2;
        ge = ge2;
    }
    model.edge_encoder.backward(g.edge_features(), &ge, &mut grads.edge_encoder)?;
    model.node_encoder.backward(&tape.input, &gx, &mut grads.node_encoder)?;
    Ok(grads)
}
