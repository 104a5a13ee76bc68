//! Small dense row-major matrices and the jittered Cholesky factorization.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Build from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn mean_diag(&self) -> T {
        let d = self.diag();
        d.iter().copied().sum::<T>() / T::lit(d.len().max(1) as f64)
    }

    /// Replace both triangles by their average.
    pub fn symmetrize(&mut self) {
        let two = T::lit(2.0);
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) / two;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Largest |K - K^T| entry (primal part).
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                m = m.max((self[(i, j)] - self[(j, i)]).re().abs());
            }
        }
        m
    }

    pub fn add_diag(&self, v: T) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += v;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Generic product, used where the scalar carries tangents.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in matmul");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = out[(i, j)] + a * rhs[(k, j)];
                    out[(i, j)] = v;
                }
            }
        }
        out
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(|v| v.re())
    }
}

impl Matrix<f64> {
    pub fn cast<T: Scalar>(&self) -> Matrix<T> {
        self.map(T::lit)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// `A B` for f64 matrices.
pub fn matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(a.cols, b.rows, "shape mismatch in matmul");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut c = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: slices are sized m*k, k*n, m*n with row-major strides.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.data.as_ptr(), k as isize, 1,
                b.data.as_ptr(), n as isize, 1,
                0.0, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
    Matrix::from_vec(m, n, c)
}

/// `A B^T` for f64 matrices.
pub fn matmul_abt(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(a.cols, b.cols, "shape mismatch in matmul_abt");
    let (m, k, n) = (a.rows, a.cols, b.rows);
    let mut c = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: B^T is read through swapped strides of the k-column row-major B.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.data.as_ptr(), k as isize, 1,
                b.data.as_ptr(), 1, k as isize,
                0.0, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
    Matrix::from_vec(m, n, c)
}

/// Lower Cholesky factor together with the jitter that was needed.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    pub l: Matrix<T>,
    pub jitter: f64,
}

fn cholesky_raw<T: Scalar>(k: &Matrix<T>) -> Option<Matrix<T>> {
    let n = k.rows;
    let mut l = Matrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = k[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d.re() > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = k[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Cholesky with the relative jitter policy: plain first, then
/// `1e-8 * mean diagonal`, growing tenfold for up to three retries.
pub fn cholesky<T: Scalar>(k: &Matrix<T>) -> Result<Cholesky<T>> {
    if k.rows != k.cols {
        return Err(Error::InvalidInput(format!("cholesky of {}x{} matrix", k.rows, k.cols)));
    }
    if let Some(l) = cholesky_raw(k) {
        return Ok(Cholesky { l, jitter: 0.0 });
    }
    let base = k.mean_diag().re().abs().max(f64::MIN_POSITIVE) * 1e-8;
    let mut jitter = base;
    for _ in 0..=3 {
        if let Some(l) = cholesky_raw(&k.add_diag(T::lit(jitter))) {
            return Ok(Cholesky { l, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::DegenerateKernel(format!(
        "Cholesky failed on {}x{} kernel after jitter up to {:.3e}",
        k.rows, k.cols, jitter / 10.0
    )))
}

impl<T: Scalar> Cholesky<T> {
    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solve `L x = b`.
    pub fn forward_solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for p in 0..i {
                s -= self.l[(i, p)] * x[p];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solve `(L L^T) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = self.forward_solve(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in i + 1..n {
                s -= self.l[(p, i)] * x[p];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<T>() * two
    }
}
