//! Small dense building blocks shared by the GPS layer and model.

use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::rng::Rng;

pub const LN_EPS: f64 = 1e-5;

/// Fixed-order access to every trainable matrix of a parameter set.
pub trait Params {
    fn matrices(&self) -> Vec<&Matrix>;
    fn matrices_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    /// Sets every entry to zero.
    fn zero_out(&mut self) {
        for m in self.matrices_mut() {
            m.fill(0.0);
        }
    }

    /// `self += s * other`, matrix by matrix.
    fn axpy_params(&mut self, s: f64, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        for (a, b) in self.matrices_mut().into_iter().zip(other.matrices()) {
            a.axpy(s, b)?;
        }
        Ok(())
    }
}

/// Affine map `x W + b` with `W: d_in x d_out` and `b: 1 x d_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

impl Linear {
    /// Gaussian weights scaled by `1/sqrt(d_in)`, zero bias.
    pub fn random(d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (d_in.max(1) as f64).sqrt();
        Self { w: Matrix::random_normal(d_in, d_out, rng).scale(s), b: Matrix::zeros(1, d_out) }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self { w: Matrix::zeros(d_in, d_out), b: Matrix::zeros(1, d_out) }
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = matmul(x, &self.w)?;
        add_row(&mut y, &self.b);
        Ok(y)
    }

    /// Accumulates weight gradients into `g` and returns the input gradient.
    pub fn backward(&self, x: &Matrix, grad_y: &Matrix, g: &mut Linear) -> Result<Matrix> {
        g.w.add_assign(&matmul_tn(x, grad_y)?)?;
        g.b.add_assign(&grad_y.col_sums())?;
        matmul_nt(grad_y, &self.w)
    }
}

impl Params for Linear {
    fn matrices(&self) -> Vec<&Matrix> {
        vec![&self.w, &self.b]
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Adds the `1 x cols` row `b` to every row of `m`.
pub fn add_row(m: &mut Matrix, b: &Matrix) {
    let b = b.as_slice();
    for i in 0..m.rows() {
        for (v, &bv) in m.row_mut(i).iter_mut().zip(b) {
            *v += bv;
        }
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation.
pub fn relu_backward(pre: &Matrix, grad: &Matrix) -> Matrix {
    Matrix::from_fn(pre.rows(), pre.cols(), |i, j| if pre.get(i, j) > 0.0 { grad.get(i, j) } else { 0.0 })
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise layer norm with gain and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub shift: Matrix,
}

pub struct LayerNormTape {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self { gain: Matrix::filled(1, d, 1.0), shift: Matrix::zeros(1, d) }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LayerNormTape) {
        let (n, d) = x.shape();
        let mut xhat = Matrix::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for (h, &v) in xhat.row_mut(i).iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let mut y = Matrix::from_fn(n, d, |i, j| xhat.get(i, j) * self.gain.get(0, j));
        add_row(&mut y, &self.shift);
        (y, LayerNormTape { xhat, inv_std })
    }

    pub fn backward(&self, tape: &LayerNormTape, grad_y: &Matrix, g: &mut LayerNorm) -> Matrix {
        let (n, d) = grad_y.shape();
        let mut grad_x = Matrix::zeros(n, d);
        for i in 0..n {
            let xh = tape.xhat.row(i);
            let gy = grad_y.row(i);
            let gxh: Vec<f64> = gy.iter().zip(self.gain.as_slice()).map(|(a, b)| a * b).collect();
            for j in 0..d {
                let cur = g.gain.get(0, j);
                g.gain.set(0, j, cur + gy[j] * xh[j]);
                let cur = g.shift.get(0, j);
                g.shift.set(0, j, cur + gy[j]);
            }
            let mean_g = gxh.iter().sum::<f64>() / d as f64;
            let mean_gx = gxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            for (j, v) in grad_x.row_mut(i).iter_mut().enumerate() {
                *v = tape.inv_std[i] * (gxh[j] - mean_g - xh[j] * mean_gx);
            }
        }
        grad_x
    }
}

impl Params for LayerNorm {
    fn matrices(&self) -> Vec<&Matrix> {
        vec![&self.gain, &self.shift]
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.gain, &mut self.shift]
    }
}

/// Inverted dropout mask (entries 0 or `1/(1-rate)`), or `None` when inactive.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: Option<&mut Rng>) -> Result<Option<Matrix>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            Ok(Some(Matrix::from_fn(rows, cols, |_, _| if rng.bernoulli(rate) { 0.0 } else { keep })))
        }
        _ => Ok(None),
    }
}

pub fn apply_mask(x: Matrix, mask: Option<&Matrix>) -> Result<Matrix> {
    match mask {
        Some(m) => x.hadamard(m),
        None => Ok(x),
    }
}
