//! Diagnostics over trained models: per-timestep intrinsic dimensionality
//! of the hidden state, summary statistics of diagonal Fisher importances,
//! and a subspace-overlap similarity between task heads.

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::mat::Mat;
use crate::params::Layout;

/// Smallest number of principal components explaining `threshold` of the
/// variance of `h` (rows = observations, columns = units). All-constant
/// data has dimension 0. The cumulative comparison carries a 1e-12 slack so
/// an exact-rank spectrum is not undercounted through rounding.
pub fn pca_intrinsic_dim(h: &Mat, threshold: f64) -> Result<usize> {
    if h.rows < 2 {
        return Err(Error::Invalid(format!("pca over {} observations", h.rows)));
    }
    if !(0.0..=1.0).contains(&threshold) || threshold == 0.0 {
        return Err(Error::Config(format!("variance threshold {} outside (0, 1]", threshold)));
    }
    let (n, d) = h.shape();
    // Center columns.
    let mut c = h.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| h.at(i, j)).sum::<f64>() / n as f64;
        for i in 0..n {
            *c.at_mut(i, j) -= mean;
        }
    }
    // Eigenvalues of the sample covariance. When observations are fewer
    // than units, the N x N Gram matrix carries the same nonzero spectrum
    // for a fraction of the work.
    let evals = if n < d {
        let mut g = Mat::zeros(n, n);
        crate::mat::gemm_nt_raw(1.0 / (n as f64 - 1.0), &c.data, n, d, &c.data, n, &mut g.data);
        symmetric_eigen(&g)?.0
    } else {
        let mut cov = Mat::zeros(d, d);
        crate::mat::gemm_tn_raw(1.0 / (n as f64 - 1.0), &c.data, n, d, &c.data, d, &mut cov.data);
        symmetric_eigen(&cov)?.0
    };
    let total: f64 = evals.iter().map(|&v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Ok(0);
    }
    let mut cum = 0.0;
    for (i, &v) in evals.iter().enumerate() {
        cum += v.max(0.0);
        if cum / total >= threshold - 1e-12 {
            return Ok(i + 1);
        }
    }
    Ok(evals.len())
}

/// Summary of a diagonal Fisher restricted to one named parameter view.
#[derive(Debug, Clone)]
pub struct FisherStats {
    pub mean: f64,
    pub max: f64,
    /// `(bin_upper_edge, count)` over uniform bins spanning `[0, max]`.
    pub histogram: Vec<(f64, usize)>,
}

pub fn fisher_stats(fisher: &[f64], layout: &Layout, view: &str, n_bins: usize) -> Result<FisherStats> {
    let idx = layout
        .index_of(view)
        .ok_or_else(|| Error::Invalid(format!("no view named {:?}", view)))?;
    let off = layout.offset(idx);
    let len = layout.view_len(idx);
    if off + len > fisher.len() {
        return Err(Error::Shape(format!(
            "view {:?} spans {}..{} but fisher has {} entries (shared prefix only)",
            view,
            off,
            off + len,
            fisher.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let seg = &fisher[off..off + len];
    let max = seg.iter().cloned().fold(0.0f64, f64::max);
    let mean = seg.iter().sum::<f64>() / len as f64;
    let mut histogram: Vec<(f64, usize)> = (0..n_bins)
        .map(|b| (max * (b + 1) as f64 / n_bins as f64, 0))
        .collect();
    for &v in seg {
        let b = if max == 0.0 {
            0
        } else {
            (((v / max) * n_bins as f64) as usize).min(n_bins - 1)
        };
        histogram[b].1 += 1;
    }
    Ok(FisherStats { mean, max, histogram })
}

/// Orthonormal basis (rows) of the row space of `a`, keeping right-singular
/// vectors whose singular value is at least `rank_threshold · σ_max`.
fn right_singular_basis(a: &Mat, rank_threshold: f64) -> Result<Mat> {
    let (m, n) = a.shape();
    // Right-singular vectors via the small m x m Gram AAᵀ: σ² are its
    // eigenvalues and v_i = Aᵀ u_i / σ_i.
    let mut gram = Mat::zeros(m, m);
    crate::mat::gemm_nt_raw(1.0, &a.data, m, n, &a.data, m, &mut gram.data);
    let (evals, evecs) = symmetric_eigen(&gram)?;
    let sigma_max = evals.first().map(|&v| v.max(0.0).sqrt()).unwrap_or(0.0);
    if sigma_max == 0.0 {
        return Ok(Mat::zeros(0, n));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut kept = 0;
    for (i, &ev) in evals.iter().enumerate() {
        let sigma = ev.max(0.0).sqrt();
        if sigma <= 0.0 || sigma < rank_threshold * sigma_max {
            continue;
        }
        // v = Aᵀ u / σ, one row of the basis.
        let mut v = vec![0.0; n];
        for r in 0..m {
            let u_r = evecs.at(r, i);
            if u_r == 0.0 {
                continue;
            }
            for (c, vc) in v.iter_mut().enumerate() {
                *vc += a.at(r, c) * u_r;
            }
        }
        for vc in v.iter_mut() {
            *vc /= sigma;
        }
        rows.extend_from_slice(&v);
        kept += 1;
    }
    Mat::from_vec(kept, n, rows)
}

/// Subspace-overlap similarity between two task heads:
/// `‖U_k U_lᵀ‖_F` with `U` the thresholded right-singular bases. Identical
/// heads of effective rank `r` score `√r`; heads reading orthogonal
/// subspaces score 0.
pub fn head_subspace_similarity(head_k: &Mat, head_l: &Mat, rank_threshold: f64) -> Result<f64> {
    if head_k.cols != head_l.cols {
        return Err(Error::Shape(format!(
            "heads over different unit counts: {} vs {}",
            head_k.cols, head_l.cols
        )));
    }
    if !(0.0..=1.0).contains(&rank_threshold) {
        return Err(Error::Config(format!("rank threshold {} outside [0, 1]", rank_threshold)));
    }
    let uk = right_singular_basis(head_k, rank_threshold)?;
    let ul = right_singular_basis(head_l, rank_threshold)?;
    if uk.rows == 0 || ul.rows == 0 {
        return Ok(0.0);
    }
    let mut m = Mat::zeros(uk.rows, ul.rows);
    crate::mat::gemm_nt_raw(1.0, &uk.data, uk.rows, uk.cols, &ul.data, ul.rows, &mut m.data);
    Ok(m.frob_norm())
}
