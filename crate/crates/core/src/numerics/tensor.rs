//! Dense row-major `f64` tensors and the forward kernels used by the tape.
//!
//! Everything in the model is a matrix (rank 2); scalars are `[1]`. Matrix
//! kernels reject other ranks with a dimension error naming both shapes.

use crate::error::{GmemError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn fmt_shape(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join("x"))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(GmemError::dim(
                "Tensor::new",
                format!("dimensions must be positive, got {}", fmt_shape(&shape)),
            ));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(GmemError::dim(
                "Tensor::new",
                format!("shape {} needs {} values, got {}", fmt_shape(&shape), n, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GmemError::dim("Tensor::from_rows", "ragged rows"));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(GmemError::dim(
                "reshape",
                format!("{} -> {}", fmt_shape(&self.shape), fmt_shape(shape)),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(GmemError::dim(
                op,
                format!("expected a matrix, got {}", fmt_shape(&self.shape)),
            ));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    fn require_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(GmemError::dim(
                op,
                format!("{} vs {}", fmt_shape(&self.shape), fmt_shape(&other.shape)),
            ));
        }
        Ok(())
    }

    /// `self · other` for `[m×k]·[k×n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(GmemError::dim(
                "matmul",
                format!("{} x {}", fmt_shape(&self.shape), fmt_shape(&other.shape)),
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self · otherᵀ` for `[m×k]·[n×k]ᵀ`.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.require_matrix("matmul_t")?;
        let (n, k2) = other.require_matrix("matmul_t")?;
        if k != k2 {
            return Err(GmemError::dim(
                "matmul_t",
                format!("{} x {}ᵀ", fmt_shape(&self.shape), fmt_shape(&other.shape)),
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `selfᵀ · other` for `[k×m]ᵀ·[k×n]`.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = self.require_matrix("t_matmul")?;
        let (k2, n) = other.require_matrix("t_matmul")?;
        if k != k2 {
            return Err(GmemError::dim(
                "t_matmul",
                format!("{}ᵀ x {}", fmt_shape(&self.shape), fmt_shape(&other.shape)),
            ));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.require_matrix("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.require_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
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

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.require_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn require_row_vector(&self, row: &Tensor, op: &'static str) -> Result<usize> {
        let (_, n) = self.require_matrix(op)?;
        if row.numel() != n || row.shape.len() > 2 || (row.shape.len() == 2 && row.shape[0] != 1) {
            return Err(GmemError::dim(
                op,
                format!("row {} does not broadcast over {}", fmt_shape(&row.shape), fmt_shape(&self.shape)),
            ));
        }
        Ok(n)
    }

    /// Adds a `[1×n]` row to every row of `[m×n]`.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let n = self.require_row_vector(row, "add_row")?;
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(n) {
            for (o, b) in chunk.iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Multiplies every row of `[m×n]` elementwise by a `[1×n]` row.
    pub fn mul_row(&self, row: &Tensor) -> Result<Tensor> {
        let n = self.require_row_vector(row, "mul_row")?;
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(n) {
            for (o, b) in chunk.iter_mut().zip(&row.data) {
                *o *= b;
            }
        }
        Ok(out)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid_scalar)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| v.max(0.0))
    }

    /// Row-wise softmax, stabilized by subtracting each row's max.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (_, n) = self.require_matrix("softmax_rows")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            softmax_in_place(row);
        }
        Ok(out)
    }

    pub fn log_softmax_rows(&self) -> Result<Tensor> {
        let (_, n) = self.require_matrix("log_softmax_rows")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(out)
    }

    /// Softmax over the causal prefix of each row of a square score matrix;
    /// entries above the diagonal come out as exactly zero.
    pub fn causal_softmax_rows(&self) -> Result<Tensor> {
        let (m, n) = self.require_matrix("causal_softmax_rows")?;
        if m != n {
            return Err(GmemError::dim(
                "causal_softmax_rows",
                format!("expected square scores, got {}", fmt_shape(&self.shape)),
            ));
        }
        let mut out = self.clone();
        for (i, row) in out.data.chunks_mut(n).enumerate() {
            softmax_in_place(&mut row[..=i]);
            row[i + 1..].iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(out)
    }

    /// Normalizes each row to zero mean and unit variance (population
    /// variance, `eps` added inside the square root). No affine part.
    pub fn layernorm_rows(&self, eps: f64) -> Result<Tensor> {
        let (_, n) = self.require_matrix("layernorm_rows")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            let (mean, inv_std) = row_moments(row, eps);
            for v in row.iter_mut() {
                *v = (*v - mean) * inv_std;
            }
        }
        Ok(out)
    }

    pub fn concat_last_dim(&self, other: &Tensor) -> Result<Tensor> {
        let (m, a) = self.require_matrix("concat_last_dim")?;
        let (m2, b) = other.require_matrix("concat_last_dim")?;
        if m != m2 {
            return Err(GmemError::dim(
                "concat_last_dim",
                format!("{} with {}", fmt_shape(&self.shape), fmt_shape(&other.shape)),
            ));
        }
        let mut out = Vec::with_capacity(m * (a + b));
        for i in 0..m {
            out.extend_from_slice(&self.data[i * a..(i + 1) * a]);
            out.extend_from_slice(&other.data[i * b..(i + 1) * b]);
        }
        Tensor::new(vec![m, a + b], out)
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        let (m, n) = self.require_matrix("slice_cols")?;
        if len == 0 || start + len > n {
            return Err(GmemError::dim(
                "slice_cols",
                format!("columns {}..{} of {}", start, start + len, fmt_shape(&self.shape)),
            ));
        }
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&self.data[i * n + start..i * n + start + len]);
        }
        Tensor::new(vec![m, len], out)
    }

    /// Rows of `self` selected by `ids` (embedding lookup).
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor> {
        let (m, n) = self.require_matrix("gather_rows")?;
        if ids.is_empty() {
            return Err(GmemError::dim("gather_rows", "no rows requested"));
        }
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            if id >= m {
                return Err(GmemError::dim(
                    "gather_rows",
                    format!("row {} out of range for {}", id, fmt_shape(&self.shape)),
                ));
            }
            out.extend_from_slice(&self.data[id * n..(id + 1) * n]);
        }
        Tensor::new(vec![ids.len(), n], out)
    }

    /// Column means of a matrix, as a `[1×n]` row.
    pub fn mean_rows(&self) -> Result<Tensor> {
        let (m, n) = self.require_matrix("mean_rows")?;
        let mut out = vec![0.0; n];
        for row in self.data.chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= m as f64);
        Tensor::new(vec![1, n], out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn argmax_row(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        best
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub(crate) fn row_moments(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}
