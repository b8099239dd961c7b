//! Dense row-major tensors of rank 0 to 3.
//!
//! Everything here is a pure value computation. Gradient tracking lives in
//! [`crate::autodiff`], which records these operations on a tape.

use std::fmt;

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 3;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > MAX_RANK {
            return Err(Error::contract(format!(
                "rank {} exceeds maximum of {MAX_RANK}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::contract(format!(
                "shape {shape:?} has a zero dimension"
            )));
        }
        if numel(&shape) != data.len() {
            return Err(Error::contract(format!(
                "shape {shape:?} needs {} values, got {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.len() <= MAX_RANK && shape.iter().all(|&d| d > 0));
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty());
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Build a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Tensor {
            shape: vec![rows.len(), cols],
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        let cols = self.shape[1];
        self.data[r * cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, c)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::contract(format!(
                "{op} expects a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.require_matrix("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (m, n) = self.require_matrix("softmax_rows")?;
        let mut out = self.data.clone();
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    pub fn activate(&self, act: Activation) -> Tensor {
        self.map(|v| act.apply(v))
    }

    /// Normalize each row to zero mean and unit variance, then scale and shift.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        Ok(layer_norm_rows(self, gain, bias, eps)?.0)
    }
}

/// Pointwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer norm over rows. Also returns the normalized values and per-row
/// inverse standard deviations, which the backward pass reuses.
pub(crate) fn layer_norm_rows(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let (m, n) = x.require_matrix("layer_norm")?;
    if n < 2 {
        return Err(Error::contract("layer_norm needs at least 2 features"));
    }
    if eps <= 0.0 {
        return Err(Error::contract("layer_norm eps must be positive"));
    }
    if gain.len() != n || gain.shape.len() != 1 {
        return Err(Error::shape("layer_norm gain", &x.shape, &gain.shape));
    }
    if bias.len() != n || bias.shape.len() != 1 {
        return Err(Error::shape("layer_norm bias", &x.shape, &bias.shape));
    }
    let mut xhat = vec![0.0; m * n];
    let mut out = vec![0.0; m * n];
    let mut inv_std = Vec::with_capacity(m);
    for i in 0..m {
        let row = &x.data[i * n..(i + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std.push(inv);
        for j in 0..n {
            let h = (row[j] - mean) * inv;
            xhat[i * n + j] = h;
            out[i * n + j] = h * gain.data[j] + bias.data[j];
        }
    }
    let shape = x.shape.clone();
    Ok((
        Tensor {
            shape: shape.clone(),
            data: out,
        },
        Tensor { shape, data: xhat },
        inv_std,
    ))
}
