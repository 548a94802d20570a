//! Orthogonal initialization and the orthogonality penalty's plain (non-tape)
//! evaluator. The differentiable penalty lives on the tape
//! (`Tape::orth_penalty`); the evaluator here exists for analysis code and
//! tests that only need the number.

use crate::error::Result;
use crate::linalg::qr_thin;
use crate::mat::{gemm_tn, Mat};
use crate::rng::normal;
use rand::Rng;

/// Draw a `rows x cols` matrix with orthonormal columns (rows, if the matrix
/// is wide) via QR of a standard-normal draw. The sign ambiguity is fixed by
/// requiring a positive R diagonal, so the draw is a deterministic function
/// of the generator state. A square result satisfies `W^T W = I` to well
/// below 1e-10.
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Mat> {
    let transpose = rows < cols;
    let (m, n) = if transpose { (cols, rows) } else { (rows, cols) };
    let g = Mat::from_fn(m, n, |_, _| normal(rng));
    let (q, _r) = qr_thin(&g)?;
    Ok(if transpose { q.transpose() } else { q })
}

/// `||W^T W - I||_F^2` of a square matrix, without gradients.
pub fn orth_penalty_value(w: &Mat) -> f64 {
    let n = w.rows;
    debug_assert_eq!(w.cols, n);
    let mut gram = Mat::zeros(n, n);
    gemm_tn(1.0, w, w, &mut gram);
    for i in 0..n {
        *gram.at_mut(i, i) -= 1.0;
    }
    gram.data.iter().map(|x| x * x).sum()
}
