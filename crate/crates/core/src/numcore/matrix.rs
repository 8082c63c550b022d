//! Dense row-major f64 matrices and the handful of operations the
//! classifiers need. Every constructor and every operation rejects
//! non-finite values, so NaN/Inf cannot propagate silently.

use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logs, so a saturated
/// softmax cannot drive the loss to infinity.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "Matrix::new",
                left: format!("{rows}x{cols}"),
                right: format!("{} values", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Matrix::new".to_string(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape {
                op: "Matrix::from_rows",
                left: format!("{r} rows"),
                right: "ragged row lengths".to_string(),
            });
        }
        Self::new(r, c, rows.concat())
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

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// New matrix made of the given rows of `self`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stack `self` on top of `other` (column counts must match).
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "vstack",
                left: self.shape_str(),
                right: other.shape_str(),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn mul_elem(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with("mul_elem", other, |a, b| a * b)
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Matrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape_str(),
                right: other.shape_str(),
            });
        }
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix::new(self.rows, self.cols, data)
    }

    /// In-place `self += other`, shapes already validated by the caller.
    pub(crate) fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Standard matrix product. The inner loop runs over contiguous rows of `b`
/// and skips zero entries of `a`, which makes products against sparse
/// normalized adjacencies cheap without changing the result.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape_str(),
            right: b.shape_str(),
        });
    }
    let mut out = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("matmul {} x {}", a.shape_str(), b.shape_str()),
        });
    }
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        data: out,
    })
}

/// Elementwise max(0, x).
pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Row-wise softmax, stabilized by subtracting each row's max before
/// exponentiation. Every output row sums to 1.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows, x.cols);
    for i in 0..x.rows {
        let row = x.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..x.cols {
            let e = (row[j] - max).exp();
            out.data[i * x.cols + j] = e;
            sum += e;
        }
        for j in 0..x.cols {
            out.data[i * x.cols + j] /= sum;
        }
    }
    out
}

/// Mean over all rows of −ln(probs[row, label]), with probabilities clamped
/// below at [`LOG_CLAMP`] before the log.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != probs.rows {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: probs.shape_str(),
            right: format!("{} labels", labels.len()),
        });
    }
    let rows: Vec<usize> = (0..probs.rows).collect();
    cross_entropy_rows(probs, &rows, labels)
}

/// Cross-entropy restricted to a subset of rows; `labels[i]` pairs with
/// `rows[i]`.
pub fn cross_entropy_rows(probs: &Matrix, rows: &[usize], labels: &[usize]) -> Result<f64> {
    assert_eq!(rows.len(), labels.len());
    if rows.is_empty() {
        return Err(Error::Config(
            "cross_entropy over an empty row set".to_string(),
        ));
    }
    let mut total = 0.0;
    for (&r, &label) in rows.iter().zip(labels) {
        if label >= probs.cols {
            return Err(Error::LabelOutOfRange {
                label,
                classes: probs.cols,
            });
        }
        total -= probs.get(r, label).max(LOG_CLAMP).ln();
    }
    Ok(total / rows.len() as f64)
}
