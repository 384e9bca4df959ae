//! Multi-head self-attention: the dense reference and k-MIP attention.
//!
//! Both variants share parameters and produce a tape for their backward pass.
//! k-MIP attention selects keys by raw inner product and applies the
//! `1/sqrt(d_K)` scaling only inside the softmax; a positive scale does not
//! change the selected set.

mod full;
mod kmip;
pub mod memory;

use std::hash::{DefaultHasher, Hash, Hasher};

pub use full::{full_attend, full_attention_backward, full_attention_forward};
pub use kmip::{
    cumulative_topk_weight, kmip_attend, kmip_attention_backward, kmip_attention_forward,
    kmip_attention_forward_with, scaled_hardmax_limit_check, TopKSelector,
};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Scalar};
use crate::mipkernel::TopKResult;
use crate::rng::Rng;
use crate::workspace::{Allocation, Workspace};

/// Which global attention a layer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    Full,
    Kmip,
}

impl std::str::FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AttentionKind::Full),
            "kmip" => Ok(AttentionKind::Kmip),
            other => Err(Error::Parameter(format!("unknown attention kind '{other}'"))),
        }
    }
}

/// Projection weights of one head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T = f64> {
    /// `d x d_K`
    pub w_q: Matrix<T>,
    /// `d x d_K`
    pub w_k: Matrix<T>,
    /// `d x d_V`
    pub w_v: Matrix<T>,
    /// `d_V x d`
    pub w_o: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T = f64> {
    pub d_model: usize,
    pub d_k: usize,
    pub d_v: usize,
    /// Keys per query for k-MIP attention; clamped to `N` when applied.
    pub k: usize,
    pub heads: Vec<HeadParams<T>>,
}

impl<T: Scalar> AttentionParams<T> {
    /// Gaussian init scaled by `1/sqrt(fan_in)`.
    pub fn random(d_model: usize, heads: usize, d_k: usize, d_v: usize, k: usize, rng: &mut Rng) -> Self {
        let s_in = T::from_f64_lossy(1.0 / (d_model.max(1) as f64).sqrt());
        let s_v = T::from_f64_lossy(1.0 / (d_v.max(1) as f64).sqrt());
        let heads = (0..heads)
            .map(|_| HeadParams {
                w_q: Matrix::random_normal(d_model, d_k, rng).scale(s_in),
                w_k: Matrix::random_normal(d_model, d_k, rng).scale(s_in),
                w_v: Matrix::random_normal(d_model, d_v, rng).scale(s_in),
                w_o: Matrix::random_normal(d_v, d_model, rng).scale(s_v),
            })
            .collect();
        Self { d_model, d_k, d_v, k, heads }
    }

    pub fn zeros(d_model: usize, heads: usize, d_k: usize, d_v: usize, k: usize) -> Self {
        let heads = (0..heads)
            .map(|_| HeadParams {
                w_q: Matrix::zeros(d_model, d_k),
                w_k: Matrix::zeros(d_model, d_k),
                w_v: Matrix::zeros(d_model, d_v),
                w_o: Matrix::zeros(d_v, d_model),
            })
            .collect();
        Self { d_model, d_k, d_v, k, heads }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_model, self.heads.len(), self.d_k, self.d_v, self.k)
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("attention k must be >= 1".into()));
        }
        if self.d_k == 0 {
            return Err(Error::Parameter("d_K must be >= 1".into()));
        }
        let (d, dk, dv) = (self.d_model, self.d_k, self.d_v);
        for (h, hp) in self.heads.iter().enumerate() {
            let ok = hp.w_q.shape() == (d, dk)
                && hp.w_k.shape() == (d, dk)
                && hp.w_v.shape() == (d, dv)
                && hp.w_o.shape() == (dv, d);
            if !ok {
                return Err(Error::shape("AttentionParams", format!("head {h} weights inconsistent with d={d}, d_K={dk}, d_V={dv}")));
            }
        }
        Ok(())
    }

    /// All weight matrices in a fixed order (per head: Q, K, V, O).
    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        self.heads.iter().flat_map(|h| [&h.w_q, &h.w_k, &h.w_v, &h.w_o]).collect()
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.heads
            .iter_mut()
            .flat_map(|h| [&mut h.w_q, &mut h.w_k, &mut h.w_v, &mut h.w_o])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    fn fingerprint(&self, hasher: &mut DefaultHasher) {
        for m in self.matrices() {
            hash_matrix(m, hasher);
        }
    }
}

fn hash_matrix<T: Scalar>(m: &Matrix<T>, hasher: &mut DefaultHasher) {
    m.shape().hash(hasher);
    for v in m.as_slice() {
        v.to_f64_lossy().to_bits().hash(hasher);
    }
}

pub(crate) fn fingerprint<T: Scalar>(kind: AttentionKind, x: &Matrix<T>, p: &AttentionParams<T>) -> u64 {
    let mut h = DefaultHasher::new();
    kind.hash(&mut h);
    hash_matrix(x, &mut h);
    p.fingerprint(&mut h);
    h.finish()
}

/// Per-head forward state kept for the backward pass.
#[derive(Debug)]
pub struct HeadTape<T = f64> {
    pub q: Matrix<T>,
    pub key: Matrix<T>,
    pub v: Matrix<T>,
    /// Attention probabilities: `N x k'` for k-MIP, `N x N` for full attention.
    pub probs: Matrix<T>,
    /// Present for k-MIP attention only.
    pub topk: Option<TopKResult<T>>,
    /// Head output before the output projection, `N x d_V`.
    pub out: Matrix<T>,
}

/// Cache from a forward call. Holds the workspace accounting of what it keeps alive.
#[derive(Debug)]
pub struct AttentionTape<T = f64> {
    pub kind: AttentionKind,
    pub n: usize,
    /// Effective keys per query (`min(k, N)`), or `N` for full attention.
    pub k_eff: usize,
    pub heads: Vec<HeadTape<T>>,
    fingerprint: u64,
    ws: Workspace,
    _mem: Vec<Allocation>,
}

impl<T: Scalar> AttentionTape<T> {
    fn check(&self, kind: AttentionKind, x: &Matrix<T>, p: &AttentionParams<T>) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Contract(format!("tape from {:?} attention used for {kind:?}", self.kind)));
        }
        if self.n != x.rows() || self.heads.len() != p.num_heads() {
            return Err(Error::Contract("tape shape does not match the inputs".into()));
        }
        if self.fingerprint != fingerprint(kind, x, p) {
            return Err(Error::Contract("tape was recorded for different inputs or weights".into()));
        }
        Ok(())
    }
}

pub(crate) fn sqrt_dk<T: Scalar>(d_k: usize) -> T {
    T::from_f64_lossy(d_k as f64).sqrt()
}

fn check_input<T: Scalar>(op: &'static str, x: &Matrix<T>, p: &AttentionParams<T>) -> Result<()> {
    p.validate()?;
    if x.cols() != p.d_model {
        return Err(Error::shape(op, format!("input has {} columns, d_model is {}", x.cols(), p.d_model)));
    }
    Ok(())
}

fn check_grad<T: Scalar>(op: &'static str, x: &Matrix<T>, grad_y: &Matrix<T>) -> Result<()> {
    if grad_y.shape() != x.shape() {
        return Err(Error::shape(op, format!("grad_y {:?} vs x {:?}", grad_y.shape(), x.shape())));
    }
    Ok(())
}
