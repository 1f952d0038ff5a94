//! Dense row-major `f64` matrices and the handful of differentiable ops the
//! network needs, with hand-written backward passes.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Mismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
}

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.data.chunks(self.cols.max(1))).finish()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != rows * cols {
            return Err(ShapeError::DataLength { rows, cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; meant for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, k: f64) -> Matrix {
        self.map(|v| v * k)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, ShapeError> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, ShapeError> {
        self.zip(other, "sub", |a, b| a - b)
    }

    fn zip(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, ShapeError> {
        if self.shape() != other.shape() {
            return Err(ShapeError::Mismatch { op, left: self.shape(), right: other.shape() });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// Adds `bias` (1 x cols) to every row.
    pub fn add_row_vector(&self, bias: &Matrix) -> Result<Matrix, ShapeError> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(ShapeError::Mismatch { op: "add_row_vector", left: self.shape(), right: bias.shape() });
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (v, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        Ok(out)
    }

    /// Column sums as a 1 x cols matrix.
    pub fn sum_rows(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, ShapeError> {
    if a.cols != b.rows {
        return Err(ShapeError::Mismatch { op: "matmul", left: a.shape(), right: b.shape() });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &av) in a.row(i).iter().enumerate() {
            // Exact zeros contribute nothing; observations are mostly zero.
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(b.row(k)) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Gradients of `a·b` with respect to `a` and `b`, given the upstream gradient.
pub fn matmul_backward(a: &Matrix, b: &Matrix, grad_out: &Matrix) -> Result<(Matrix, Matrix), ShapeError> {
    let ga = matmul(grad_out, &b.transpose())?;
    let gb = matmul(&a.transpose(), grad_out)?;
    Ok((ga, gb))
}

pub fn relu(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Subgradient 0 at the kink.
pub fn relu_backward(input: &Matrix, grad_out: &Matrix) -> Matrix {
    let data = input
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Matrix { rows: input.rows, cols: input.cols, data }
}

pub fn softmax_slice(row: &[f64], temperature: f64, out: &mut [f64]) {
    assert!(temperature > 0.0, "softmax temperature must be positive");
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = ((v - max) / temperature).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax_rows(m: &Matrix, temperature: f64) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        let (src, dst) = (m.row(r), &mut out.data[r * m.cols..(r + 1) * m.cols]);
        softmax_slice(src, temperature, dst);
    }
    out
}

/// Row-wise cross-entropy `−Σ target·ln softmax(logits/T)` summed over rows,
/// and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &Matrix, temperature: f64) -> Result<(f64, Matrix), ShapeError> {
    if logits.shape() != targets.shape() {
        return Err(ShapeError::Mismatch { op: "softmax_cross_entropy", left: logits.shape(), right: targets.shape() });
    }
    let probs = softmax_rows(logits, temperature);
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let p = probs.row(r);
        let t = targets.row(r);
        let mass: f64 = t.iter().sum();
        for c in 0..logits.cols {
            if t[c] != 0.0 {
                loss -= t[c] * p[c].ln();
            }
            grad.data[r * logits.cols + c] = (mass * p[c] - t[c]) / temperature;
        }
    }
    Ok((loss, grad))
}

/// Plain SGD with global gradient-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub clip_norm: f64,
}

impl Default for Sgd {
    fn default() -> Self {
        Self { lr: 1e-3, clip_norm: 5.0 }
    }
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt()
}

/// Factor that scales `grads` down to at most `clip_norm`.
pub fn clip_factor(grads: &[Matrix], clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm && norm > 0.0 {
        clip_norm / norm
    } else {
        1.0
    }
}

impl Sgd {
    pub fn step(&self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<(), ShapeError> {
        if params.len() != grads.len() {
            return Err(ShapeError::Mismatch { op: "sgd", left: (params.len(), 0), right: (grads.len(), 0) });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(ShapeError::Mismatch { op: "sgd", left: p.shape(), right: g.shape() });
            }
        }
        let k = self.lr * clip_factor(grads, self.clip_norm);
        for (p, g) in params.iter_mut().zip(grads) {
            for (v, d) in p.data.iter_mut().zip(&g.data) {
                *v -= k * d;
            }
        }
        Ok(())
    }
}
