//! Small dense decompositions: Householder QR and a cyclic Jacobi
//! eigensolver for symmetric matrices. Hand-rolled rather than pulled from a
//! BLAS-backed crate so results are bit-reproducible across machines and the
//! crate stays self-contained; the matrices involved are at most a few
//! hundred square, where these routines are perfectly adequate.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Thin QR factorization `A = Q R` with `Q` having orthonormal columns and
/// `R` upper triangular with non-negative diagonal (signs are fixed up after
/// the Householder sweep so the factorization is unique for full-rank input).
///
/// Requires `rows >= cols`.
pub fn qr_thin(a: &Mat) -> Result<(Mat, Mat)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Shape(format!("qr_thin: {}x{} has more columns than rows", m, n)));
    }
    let mut r = a.clone();
    // Householder vectors, one per eliminated column.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n.min(m.saturating_sub(1)).max(0) {
        if k >= n {
            break;
        }
        // Reflect column k below the diagonal onto e1.
        let mut v: Vec<f64> = (k..m).map(|i| r.at(i, k)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            vs.push(Vec::new());
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * norm;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            vs.push(Vec::new());
            continue;
        }
        for x in &mut v {
            *x /= vnorm;
        }
        // R[k.., k..] -= 2 v (v^T R)
        for j in k..n {
            let mut dot = 0.0;
            for (off, vi) in v.iter().enumerate() {
                dot += vi * r.at(k + off, j);
            }
            for (off, vi) in v.iter().enumerate() {
                *r.at_mut(k + off, j) -= 2.0 * vi * dot;
            }
        }
        vs.push(v);
    }

    // Accumulate Q by applying the reflectors to the first n columns of I.
    let mut q = Mat::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for (k, v) in vs.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for j in 0..n {
            let mut dot = 0.0;
            for (off, vi) in v.iter().enumerate() {
                dot += vi * q.at(k + off, j);
            }
            for (off, vi) in v.iter().enumerate() {
                *q.at_mut(k + off, j) -= 2.0 * vi * dot;
            }
        }
    }

    // Zero the strictly-lower part of R (it holds roundoff residue) and make
    // the diagonal non-negative.
    let mut r_thin = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            *r_thin.at_mut(i, j) = r.at(i, j);
        }
    }
    for k in 0..n {
        if r_thin.at(k, k) < 0.0 {
            for j in k..n {
                *r_thin.at_mut(k, j) = -r_thin.at(k, j);
            }
            for i in 0..m {
                *q.at_mut(i, k) = -q.at(i, k);
            }
        }
    }
    Ok((q, r_thin))
}

/// Extend a matrix with orthonormal columns to a full orthogonal basis of
/// R^n: returns `n x (n - m)` columns orthonormal to each other and to the
/// columns of `u`.
pub fn orthonormal_complement(u: &Mat) -> Result<Mat> {
    let (n, m) = u.shape();
    if m > n {
        return Err(Error::Shape(format!("complement of {}x{}: too many columns", n, m)));
    }
    if m == n {
        return Ok(Mat::zeros(n, 0));
    }
    // Project the identity columns away from col(u), then orthonormalize the
    // residuals by QR, keeping the n-m with the largest pivots. Two passes of
    // classical Gram-Schmidt against u keep the complement orthogonal to u to
    // machine precision.
    let mut resid = Mat::eye(n);
    for _ in 0..2 {
        for j in 0..n {
            for c in 0..m {
                let mut dot = 0.0;
                for i in 0..n {
                    dot += u.at(i, c) * resid.at(i, j);
                }
                for i in 0..n {
                    *resid.at_mut(i, j) -= dot * u.at(i, c);
                }
            }
        }
    }
    // Greedy column-pivoted Gram-Schmidt on the residuals.
    let mut picked: Vec<Vec<f64>> = Vec::with_capacity(n - m);
    let mut cols: Vec<Vec<f64>> =
        (0..n).map(|j| (0..n).map(|i| resid.at(i, j)).collect()).collect();
    while picked.len() < n - m {
        // Pick the column with the largest remaining norm.
        let (best, norm) = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.iter().map(|x| x * x).sum::<f64>().sqrt()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::Invalid("degenerate basis completion".into()))?;
        if norm < 1e-12 {
            return Err(Error::Invalid("basis completion lost rank".into()));
        }
        let mut v = cols.swap_remove(best);
        for x in &mut v {
            *x /= norm;
        }
        for c in &mut cols {
            let dot: f64 = v.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= dot * vi;
            }
        }
        picked.push(v);
    }
    Ok(Mat::from_fn(n, n - m, |i, j| picked[j][i]))
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns. Symmetry is taken on trust (the upper triangle is used).
pub fn symmetric_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::Shape(format!("symmetric_eigen: {}x{} not square", a.rows, a.cols)));
    }
    if !a.all_finite() {
        return Err(Error::NonFinite("symmetric_eigen input".into()));
    }
    let mut w = a.clone();
    // Symmetrize defensively; callers pass sample covariances that are
    // symmetric up to roundoff.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (w.at(i, j) + w.at(j, i));
            *w.at_mut(i, j) = s;
            *w.at_mut(j, i) = s;
        }
    }
    let mut v = Mat::eye(n);
    let scale = 1.0 + w.frob_norm();

    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += w.at(i, j) * w.at(i, j);
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.at(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (w.at(q, q) - w.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows and columns p, q of w.
                for k in 0..n {
                    let wkp = w.at(k, p);
                    let wkq = w.at(k, q);
                    *w.at_mut(k, p) = c * wkp - s * wkq;
                    *w.at_mut(k, q) = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w.at(p, k);
                    let wqk = w.at(q, k);
                    *w.at_mut(p, k) = c * wpk - s * wqk;
                    *w.at_mut(q, k) = s * wpk + c * wqk;
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    *v.at_mut(k, p) = c * vkp - s * vkq;
                    *v.at_mut(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w.at(j, j).total_cmp(&w.at(i, i)));
    let vals: Vec<f64> = order.iter().map(|&i| w.at(i, i)).collect();
    let vecs = Mat::from_fn(n, n, |i, j| v.at(i, order[j]));
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = substream(seed, "linalg-test", 0);
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        for &(m, n) in &[(5usize, 5usize), (8, 3), (12, 12), (3, 1)] {
            let a = random_mat(m, n, 7 + (m * 100 + n) as u64);
            let (q, r) = qr_thin(&a).unwrap();
            // Q^T Q = I
            let mut qtq = Mat::zeros(n, n);
            crate::mat::gemm_tn(1.0, &q, &q, &mut qtq);
            assert!(max_abs_diff(&qtq, &Mat::eye(n)) < 1e-10, "QtQ off for {}x{}", m, n);
            // QR = A
            let qr = q.matmul(&r).unwrap();
            assert!(max_abs_diff(&qr, &a) < 1e-10);
            // R upper triangular with non-negative diagonal
            for i in 0..n {
                assert!(r.at(i, i) >= 0.0);
                for j in 0..i {
                    assert_eq!(r.at(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_one_by_one_gives_sign() {
        let a = Mat::from_vec(1, 1, vec![-2.5]).unwrap();
        let (q, r) = qr_thin(&a).unwrap();
        assert_eq!(q.data, vec![-1.0]);
        assert_eq!(r.data, vec![2.5]);
    }

    #[test]
    fn complement_completes_orthogonal_basis() {
        let a = random_mat(6, 2, 42);
        let (u, _) = qr_thin(&a).unwrap();
        let w = orthonormal_complement(&u).unwrap();
        assert_eq!(w.shape(), (6, 4));
        // [u | w] orthogonal
        let full = Mat::from_fn(6, 6, |i, j| if j < 2 { u.at(i, j) } else { w.at(i, j - 2) });
        let mut g = Mat::zeros(6, 6);
        crate::mat::gemm_tn(1.0, &full, &full, &mut g);
        assert!(max_abs_diff(&g, &Mat::eye(6)) < 1e-10);
    }

    #[test]
    fn jacobi_two_by_two_oracle() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let a = Mat::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        let s = 1.0 / 2.0f64.sqrt();
        // First eigenvector is ±[1,1]/sqrt(2).
        assert!((vecs.at(0, 0).abs() - s).abs() < 1e-12);
        assert!((vecs.at(1, 0).abs() - s).abs() < 1e-12);
        assert!((vecs.at(0, 0) - vecs.at(1, 0)).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        let n = 24;
        let g = random_mat(n, n, 99);
        let mut a = Mat::zeros(n, n);
        crate::mat::gemm_tn(1.0, &g, &g, &mut a); // SPD-ish, symmetric
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        // V diag(vals) V^T == A
        let mut vd = vecs.clone();
        for j in 0..n {
            for i in 0..n {
                *vd.at_mut(i, j) = vecs.at(i, j) * vals[j];
            }
        }
        let mut rec = Mat::zeros(n, n);
        crate::mat::gemm_nt(1.0, &vd, &vecs, &mut rec);
        assert!(max_abs_diff(&rec, &a) < 1e-9 * (1.0 + a.frob_norm()));
        // Descending order.
        for w in vals.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }
}
