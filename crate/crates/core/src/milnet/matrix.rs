use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Also serves as the bag feature matrix: one row
/// per instance, one column per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// A bag's instances: `rows` = instance count, `cols` = feature dimension.
pub type FeatureMatrix<T> = Matrix<T>;

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix, rejecting empty shapes, a length mismatch, or any
    /// non-finite entry.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is not finite",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Gathers the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Shape("cannot select zero rows".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Shape(format!(
                    "row {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    /// `self · rhs (+ bias broadcast over rows)`.
    pub fn matmul_bias(&self, rhs: &Matrix<T>, bias: Option<&[T]>) -> Matrix<T> {
        debug_assert_eq!(self.cols, rhs.rows);
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            if let Some(b) = bias {
                dst.copy_from_slice(b);
            }
            for (k, &x) in self.row(i).iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                for (d, &w) in dst.iter_mut().zip(rhs.row(k)) {
                    *d = *d + x * w;
                }
            }
        }
        out
    }
}

/// `v · m` for a row vector `v` (len = m.rows).
pub(crate) fn vec_mat<T: Scalar>(v: &[T], m: &Matrix<T>, bias: Option<&[T]>) -> Vec<T> {
    let mut out = match bias {
        Some(b) => b.to_vec(),
        None => vec![T::zero(); m.cols()],
    };
    for (k, &x) in v.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(m.row(k)) {
            *o = *o + x * w;
        }
    }
    out
}

/// `m · v` for a column vector `v` (len = m.cols).
pub(crate) fn mat_vec<T: Scalar>(m: &Matrix<T>, v: &[T]) -> Vec<T> {
    (0..m.rows())
        .map(|i| m.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect()
}

/// `m += a ⊗ b`.
pub(crate) fn add_outer<T: Scalar>(m: &mut Matrix<T>, a: &[T], b: &[T]) {
    for (i, &x) in a.iter().enumerate() {
        if x == T::zero() {
            continue;
        }
        for (dst, &y) in m.row_mut(i).iter_mut().zip(b) {
            *dst = *dst + x * y;
        }
    }
}
