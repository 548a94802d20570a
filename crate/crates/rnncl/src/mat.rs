//! Dense row-major `f64` matrices and the handful of BLAS-like kernels the
//! rest of the crate is built on. Everything here is deliberately plain:
//! flat `Vec<f64>` storage, explicit loops arranged so the inner trip is
//! over contiguous memory (the training loops live or die on these kernels).

use crate::error::{Error, Result};

/// Row-major dense matrix. A column vector is an `n x 1` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Mat { rows, cols, data: vec![v; rows * cols] }
    }

    /// Build from row-major data; length must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "from_vec: {} values for {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn eye(n: usize) -> Self {
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Column vector from a slice.
    pub fn col_from(v: &[f64]) -> Self {
        Mat { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale_inplace(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `A * B` into a fresh matrix.
    pub fn matmul(&self, b: &Mat) -> Result<Mat> {
        if self.cols != b.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut c = Mat::zeros(self.rows, b.cols);
        gemm_nn(1.0, self, b, &mut c);
        Ok(c)
    }
}

// ── kernels ──────────────────────────────────────────────────────────────
//
// Raw-slice variants exist so callers holding bare gradient buffers (the
// tape's backward pass) can run the same kernels without wrapping or
// copying. The `Mat` versions just delegate.

/// `C += alpha * A * B` where `a` is `m x k`, `b` is `k x n`, row-major.
/// Inner loop runs along rows of B and C so it vectorizes; this is the hot
/// path of every forward and backward pass.
pub fn gemm_nn_raw(alpha: f64, a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let s = alpha * aik;
            if s == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += s * bj;
            }
        }
    }
}

/// `C += alpha * A * B^T` where `a` is `m x k`, `b` is `n x k`.
pub fn gemm_nt_raw(alpha: f64, a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cj) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *cj += alpha * acc;
        }
    }
}

/// `C += alpha * A^T * B` where `a` is `k x m`, `b` is `k x n`.
pub fn gemm_tn_raw(alpha: f64, a: &[f64], k: usize, m: usize, b: &[f64], n: usize, c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &aki) in arow.iter().enumerate() {
            let s = alpha * aki;
            if s == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += s * bj;
            }
        }
    }
}

/// `C += alpha * A * B`.
pub fn gemm_nn(alpha: f64, a: &Mat, b: &Mat, c: &mut Mat) {
    debug_assert_eq!(b.rows, a.cols);
    debug_assert_eq!((c.rows, c.cols), (a.rows, b.cols));
    gemm_nn_raw(alpha, &a.data, a.rows, a.cols, &b.data, b.cols, &mut c.data);
}

/// `C += alpha * A * B^T`.
pub fn gemm_nt(alpha: f64, a: &Mat, b: &Mat, c: &mut Mat) {
    debug_assert_eq!(b.cols, a.cols);
    debug_assert_eq!((c.rows, c.cols), (a.rows, b.rows));
    gemm_nt_raw(alpha, &a.data, a.rows, a.cols, &b.data, b.rows, &mut c.data);
}

/// `C += alpha * A^T * B`.
pub fn gemm_tn(alpha: f64, a: &Mat, b: &Mat, c: &mut Mat) {
    debug_assert_eq!(b.rows, a.rows);
    debug_assert_eq!((c.rows, c.cols), (a.cols, b.cols));
    gemm_tn_raw(alpha, &a.data, a.rows, a.cols, &b.data, b.cols, &mut c.data);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_small_oracle() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = m(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_mismatch_rejected() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 2);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn gemm_transposed_variants_agree_with_explicit_transpose() {
        let a = m(3, 2, &[1.0, -2.0, 0.5, 4.0, -1.0, 3.0]);
        let b = m(3, 2, &[2.0, 1.0, -3.0, 0.5, 1.5, -2.0]);

        let mut c_nt = Mat::zeros(3, 3);
        gemm_nt(2.0, &a, &b, &mut c_nt);
        let mut c_ref = Mat::zeros(3, 3);
        gemm_nn(2.0, &a, &b.transpose(), &mut c_ref);
        assert_eq!(c_nt.data, c_ref.data);

        let mut c_tn = Mat::zeros(2, 2);
        gemm_tn(-1.0, &a, &b, &mut c_tn);
        let mut c_ref2 = Mat::zeros(2, 2);
        gemm_nn(-1.0, &a.transpose(), &b, &mut c_ref2);
        assert_eq!(c_tn.data, c_ref2.data);
    }

    #[test]
    fn transpose_involution() {
        let a = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn eye_is_matmul_identity() {
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let i = Mat::eye(2);
        assert_eq!(a.matmul(&i).unwrap(), a);
        assert_eq!(i.matmul(&a).unwrap(), a);
    }
}
