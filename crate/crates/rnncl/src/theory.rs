//! Constructive results about what a linear-algebraic view of the recurrent
//! weight matrix can and cannot store: block-structured recurrences over
//! orthogonal subspaces, the retention/interference measures attached to
//! them, and an exact hand-built queue network for the copy problem.

use crate::data::{CopyConfig, Sample, Variant};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::ortho::orthogonal_init;
use crate::rng::substream;

/// Orthonormal basis for one task's subspace, columns of `u` (n_h x p_k).
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub u: Mat,
}

impl SubspaceBasis {
    pub fn new(u: Mat) -> Result<Self> {
        let (n, p) = u.shape();
        if p > n {
            return Err(Error::Shape(format!("{} basis vectors in {} dimensions", p, n)));
        }
        // UᵀU = I to tight tolerance, or the retention algebra below lies.
        let mut g = Mat::zeros(p, p);
        crate::mat::gemm_tn_raw(1.0, &u.data, n, p, &u.data, p, &mut g.data);
        for i in 0..p {
            for j in 0..p {
                let want = if i == j { 1.0 } else { 0.0 };
                if (g.at(i, j) - want).abs() > 1e-10 {
                    return Err(Error::Invalid("basis columns are not orthonormal".into()));
                }
            }
        }
        Ok(Self { u })
    }

    pub fn dim(&self) -> usize {
        self.u.cols
    }
}

/// Split the columns of one random orthogonal matrix into per-task bases.
/// Requires `Σ dims ≤ n_h`; the resulting bases are mutually orthogonal.
pub fn random_orthogonal_bases(
    n_h: usize,
    dims: &[usize],
    rng: &mut impl rand::Rng,
) -> Result<Vec<SubspaceBasis>> {
    let total: usize = dims.iter().sum();
    if total > n_h {
        return Err(Error::Invalid(format!(
            "{} basis vectors requested in {} dimensions",
            total, n_h
        )));
    }
    let q = orthogonal_init(n_h, n_h, rng)?;
    let mut out = Vec::with_capacity(dims.len());
    let mut col = 0;
    for &p in dims {
        let u = Mat::from_fn(n_h, p, |i, j| q.at(i, col + j));
        col += p;
        out.push(SubspaceBasis::new(u)?);
    }
    Ok(out)
}

/// Assemble `W = Ū Q Ūᵀ` from per-task diagonal blocks `Q_kk` and optional
/// off-diagonal couplings `(to, from, Q_to_from)`; directions outside the
/// listed subspaces carry zeros. Errors when the subspaces cannot coexist
/// (`Σ p_k > n_h`) or the bases are not mutually orthogonal.
pub fn build_subspace_rnn(
    bases: &[SubspaceBasis],
    diag_blocks: &[Mat],
    off_blocks: &[(usize, usize, Mat)],
) -> Result<Mat> {
    if bases.is_empty() {
        return Err(Error::Invalid("no subspaces given".into()));
    }
    let n_h = bases[0].u.rows;
    let total: usize = bases.iter().map(|b| b.dim()).sum();
    if total > n_h {
        return Err(Error::Invalid(format!(
            "subspace dimensions sum to {} > {} hidden units",
            total, n_h
        )));
    }
    if diag_blocks.len() != bases.len() {
        return Err(Error::Shape(format!(
            "{} diagonal blocks for {} subspaces",
            diag_blocks.len(),
            bases.len()
        )));
    }
    for (k, b) in bases.iter().enumerate() {
        if b.u.rows != n_h {
            return Err(Error::Shape("bases live in different spaces".into()));
        }
        for l in 0..k {
            let mut g = Mat::zeros(bases[l].dim(), b.dim());
            crate::mat::gemm_tn_raw(1.0, &bases[l].u.data, n_h, bases[l].dim(), &b.u.data, b.dim(), &mut g.data);
            if g.frob_norm() > 1e-10 {
                return Err(Error::Invalid(format!("subspaces {} and {} overlap", l, k)));
            }
        }
    }

    let mut w = Mat::zeros(n_h, n_h);
    let mut add_block = |to: usize, from: usize, q: &Mat| -> Result<()> {
        let (pt, pf) = (bases[to].dim(), bases[from].dim());
        if q.shape() != (pt, pf) {
            return Err(Error::Shape(format!(
                "block {}<-{} is {:?}, expected ({}, {})",
                to,
                from,
                q.shape(),
                pt,
                pf
            )));
        }
        // W += U_to Q U_fromᵀ
        let uq = bases[to].u.matmul(q)?; // n_h x pf
        crate::mat::gemm_nt_raw(1.0, &uq.data, n_h, pf, &bases[from].u.data, n_h, &mut w.data);
        Ok(())
    };
    for (k, q) in diag_blocks.iter().enumerate() {
        add_block(k, k, q)?;
    }
    for (to, from, q) in off_blocks {
        if *to >= bases.len() || *from >= bases.len() {
            return Err(Error::Invalid(format!("block {}<-{} out of range", to, from)));
        }
        add_block(*to, *from, q)?;
    }
    Ok(w)
}

/// How much one application of `w` leaks task-`k` activity out of its own
/// subspace: `‖(I − U Uᵀ) W U‖_F`. Exactly zero for block-respecting maps.
pub fn subspace_retention_error(w: &Mat, basis: &SubspaceBasis) -> Result<f64> {
    let (n, p) = basis.u.shape();
    if w.shape() != (n, n) {
        return Err(Error::Shape(format!("w is {:?}, basis lives in {}", w.shape(), n)));
    }
    let wu = w.matmul(&basis.u)?; // n x p
    // (I − UUᵀ) W U = WU − U (Uᵀ W U)
    let mut utwu = Mat::zeros(p, p);
    crate::mat::gemm_tn_raw(1.0, &basis.u.data, n, p, &wu.data, p, &mut utwu.data);
    let back = basis.u.matmul(&utwu)?;
    let mut resid = wu;
    for (r, b) in resid.data.iter_mut().zip(back.data.iter()) {
        *r -= b;
    }
    Ok(resid.frob_norm())
}

/// Coupling strength pushed from subspace `from` into subspace `to` by one
/// application of `w`: `‖U_toᵀ W U_from‖_F`. A single off-block `Q = δ·I`
/// yields exactly `δ·√p`.
pub fn interference_measure(w: &Mat, from: &SubspaceBasis, to: &SubspaceBasis) -> Result<f64> {
    let n = from.u.rows;
    if w.shape() != (n, n) || to.u.rows != n {
        return Err(Error::Shape("dimension mismatch in interference measure".into()));
    }
    let wu = w.matmul(&from.u)?;
    let mut m = Mat::zeros(to.dim(), from.dim());
    crate::mat::gemm_tn_raw(1.0, &to.u.data, n, to.dim(), &wu.data, from.dim(), &mut m.data);
    Ok(m.frob_norm())
}

/// Outcome of [`interference_experiment`].
#[derive(Debug, Clone)]
pub struct InterferenceReport {
    /// Whether all requested subspaces fit disjointly (`Σ p_k ≤ n_h`).
    pub feasible: bool,
    /// Most subspace dimensions any disjoint assignment can hold: `n_h`.
    pub orthogonal_capacity: usize,
    /// Per-task retention error of the assembled recurrence.
    pub retention_errors: Vec<f64>,
    /// Largest pairwise basis overlap `‖U_kᵀ U_l‖_F` over `k ≠ l`.
    pub max_pairwise_overlap: f64,
    /// Per-task deviation `‖U_kᵀ W U_k − Q_kk‖_F` of the realized in-block
    /// dynamics from the intended identity block. Zero when feasible;
    /// over capacity, shared directions are double-counted and distort it.
    pub block_distortions: Vec<f64>,
}

/// Try to give each of `k` tasks its own `p_list[k]`-dimensional invariant
/// subspace of an `n_h`-unit linear recurrence. Under capacity this
/// succeeds exactly (retention errors at numerical zero, overlaps zero).
/// Over capacity no disjoint assignment exists; the report instead
/// quantifies the unavoidable sharing of a best-effort construction that
/// cycles tasks through one orthonormal pool of `n_h` directions.
pub fn interference_experiment(p_list: &[usize], n_h: usize, seed: u64) -> Result<InterferenceReport> {
    if p_list.is_empty() {
        return Err(Error::Invalid("no tasks".into()));
    }
    let mut rng = substream(seed, "theory", 0);
    let total: usize = p_list.iter().sum();
    let feasible = total <= n_h;

    let bases: Vec<SubspaceBasis> = if feasible {
        random_orthogonal_bases(n_h, p_list, &mut rng)?
    } else {
        // Round-robin over a shared pool: task k takes the next p_k pool
        // vectors, wrapping. Tasks whose windows wrap onto each other
        // share directions; the overlap of a shared j-vector set is √j.
        let pool = orthogonal_init(n_h, n_h, &mut rng)?;
        let mut bases = Vec::with_capacity(p_list.len());
        let mut next = 0usize;
        for &p in p_list {
            if p > n_h {
                return Err(Error::Invalid(format!("task subspace {} exceeds {} units", p, n_h)));
            }
            let u = Mat::from_fn(n_h, p, |i, j| pool.at(i, (next + j) % n_h));
            next = (next + p) % n_h;
            bases.push(SubspaceBasis::new(u)?);
        }
        bases
    };

    let w = if feasible {
        let diag: Vec<Mat> = bases.iter().map(|b| Mat::eye(b.dim())).collect();
        build_subspace_rnn(&bases, &diag, &[])?
    } else {
        // Sum of projectors onto (overlapping) task subspaces.
        let mut w = Mat::zeros(n_h, n_h);
        for b in &bases {
            crate::mat::gemm_nt_raw(1.0, &b.u.data, n_h, b.dim(), &b.u.data, n_h, &mut w.data);
        }
        w
    };

    let retention_errors = bases
        .iter()
        .map(|b| subspace_retention_error(&w, b))
        .collect::<Result<Vec<_>>>()?;
    let block_distortions = bases
        .iter()
        .map(|b| {
            let p = b.dim();
            let wu = w.matmul(&b.u)?;
            let mut inblock = Mat::zeros(p, p);
            crate::mat::gemm_tn_raw(1.0, &b.u.data, n_h, p, &wu.data, p, &mut inblock.data);
            for i in 0..p {
                *inblock.at_mut(i, i) -= 1.0;
            }
            Ok(inblock.frob_norm())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_pairwise_overlap = 0.0f64;
    for k in 0..bases.len() {
        for l in 0..k {
            let mut g = Mat::zeros(bases[k].dim(), bases[l].dim());
            crate::mat::gemm_tn_raw(
                1.0,
                &bases[k].u.data,
                n_h,
                bases[k].dim(),
                &bases[l].u.data,
                bases[l].dim(),
                &mut g.data,
            );
            max_pairwise_overlap = max_pairwise_overlap.max(g.frob_norm());
        }
    }
    Ok(InterferenceReport {
        feasible,
        orthogonal_capacity: n_h,
        retention_errors,
        max_pairwise_overlap,
        block_distortions,
    })
}

/// Hand-built linear (identity-activation) recurrent network that solves
/// the basic copy problem exactly in `(p+1)·f_out + 1` hidden units: `p+1`
/// feature slots cycled by a permutation plus one stop flag. Each input row
/// is written into slot 0 and returns there exactly at its recall step; the
/// readout emits logit `+1` for a stored 1 and `−1` otherwise.
#[derive(Debug, Clone)]
pub struct QueueRnn {
    pub p: usize,
    pub f_out: usize,
    pub w_xh: Mat,
    pub w_hh: Mat,
    pub w_hy: Mat,
}

pub fn build_queue_copy_rnn(p: usize, f_out: usize) -> Result<QueueRnn> {
    if p == 0 || f_out == 0 {
        return Err(Error::Invalid("queue needs p >= 1 and f_out >= 1".into()));
    }
    let slots = p + 1;
    let n_h = slots * f_out + 1;
    let f_in = f_out + 1;
    let flag = n_h - 1;

    // Inputs write into slot 0; the stop channel sets the flag.
    let mut w_xh = Mat::zeros(n_h, f_in);
    for j in 0..f_out {
        *w_xh.at_mut(j, j) = 1.0;
    }
    *w_xh.at_mut(flag, f_in - 1) = 1.0;

    // Cyclic shift slot s → slot s+1 (mod p+1); the flag holds itself.
    // A permutation matrix, so it is exactly orthogonal.
    let mut w_hh = Mat::zeros(n_h, n_h);
    for s in 0..slots {
        let t = (s + 1) % slots;
        for j in 0..f_out {
            *w_hh.at_mut(t * f_out + j, s * f_out + j) = 1.0;
        }
    }
    *w_hh.at_mut(flag, flag) = 1.0;

    // Read slot 0 with gain 2 and subtract the flag: logits land at ±1
    // during recall, on the correct side of a 0.5 sigmoid threshold.
    let mut w_hy = Mat::zeros(f_out, n_h);
    for j in 0..f_out {
        *w_hy.at_mut(j, j) = 2.0;
        *w_hy.at_mut(j, flag) = -1.0;
    }

    Ok(QueueRnn { p, f_out, w_xh, w_hh, w_hy })
}

impl QueueRnn {
    /// Exact linear simulation `h ← W_hh h + W_xh x_t`, `y_t = W_hy h`;
    /// all arithmetic stays on small integers, so the result is exact.
    pub fn simulate(&self, x: &Mat) -> Result<Mat> {
        let n_h = self.w_hh.rows;
        let (t_len, f_in) = x.shape();
        if f_in != self.f_out + 1 {
            return Err(Error::Shape(format!(
                "input has {} features, queue expects {}",
                f_in,
                self.f_out + 1
            )));
        }
        let mut h = vec![0.0; n_h];
        let mut logits = Mat::zeros(t_len, self.f_out);
        let mut next = vec![0.0; n_h];
        for t in 0..t_len {
            for (i, nv) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &hj) in h.iter().enumerate() {
                    let w = self.w_hh.at(i, j);
                    if w != 0.0 {
                        acc += w * hj;
                    }
                }
                for j in 0..f_in {
                    let w = self.w_xh.at(i, j);
                    if w != 0.0 {
                        acc += w * x.at(t, j);
                    }
                }
                *nv = acc;
            }
            std::mem::swap(&mut h, &mut next);
            for o in 0..self.f_out {
                let mut acc = 0.0;
                for (j, &hj) in h.iter().enumerate() {
                    let w = self.w_hy.at(o, j);
                    if w != 0.0 {
                        acc += w * hj;
                    }
                }
                *logits.at_mut(t, o) = acc;
            }
        }
        Ok(logits)
    }

    /// Fraction of recall-window bits recovered over a fresh batch of
    /// basic copy samples. The construction is exact, so this is 1.0.
    pub fn bit_accuracy(&self, n_samples: usize, seed: u64) -> Result<f64> {
        let cfg = CopyConfig {
            variant: Variant::Basic,
            p: self.p,
            i: self.p,
            f_in: self.f_out + 1,
            r: 0,
        };
        let suite = crate::data::make_task_suite(cfg, 1, seed)?;
        let mut rng = substream(seed, "test", 900);
        let samples: Vec<Sample> = crate::data::gen_batch(&suite[0], &mut rng, n_samples);
        let mut correct = 0usize;
        let mut total = 0usize;
        for s in &samples {
            let logits = self.simulate(&s.x)?;
            let (c, t) = crate::data::bit_counts(&logits, &s.y, &s.w, 0.5)?;
            correct += c;
            total += t;
        }
        if total == 0 {
            return Err(Error::Invalid("no weighted bits".into()));
        }
        Ok(correct as f64 / total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ortho::orth_penalty_value;
    use crate::rng::substream;

    fn bases_for(n_h: usize, dims: &[usize], seed: u64) -> Vec<SubspaceBasis> {
        let mut rng = substream(seed, "init", 7);
        random_orthogonal_bases(n_h, dims, &mut rng).unwrap()
    }

    #[test]
    fn non_orthonormal_basis_is_rejected() {
        let u = Mat::filled(4, 2, 0.5);
        assert!(SubspaceBasis::new(u).is_err());
    }

    #[test]
    fn block_diagonal_recurrence_retains_every_subspace() {
        let bases = bases_for(16, &[4, 4, 4, 4], 11);
        let mut rng = substream(11, "init", 8);
        let diag: Vec<Mat> = bases
            .iter()
            .map(|b| crate::ortho::orthogonal_init(b.dim(), b.dim(), &mut rng).unwrap())
            .collect();
        let w = build_subspace_rnn(&bases, &diag, &[]).unwrap();
        // Repeated application stays in-subspace: error of W^50 per task.
        let mut wp = w.clone();
        for _ in 1..50 {
            wp = wp.matmul(&w).unwrap();
        }
        for b in &bases {
            assert!(subspace_retention_error(&w, b).unwrap() <= 1e-10);
            assert!(subspace_retention_error(&wp, b).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn overcommitted_capacity_is_rejected() {
        let bases = bases_for(8, &[4, 4], 3);
        let diag: Vec<Mat> = bases.iter().map(|b| Mat::eye(b.dim())).collect();
        // Shrink the ambient claim by duplicating a basis: 4+4+4 > 8.
        let mut all = bases.clone();
        all.push(bases[0].clone());
        let mut diag3 = diag.clone();
        diag3.push(Mat::eye(4));
        assert!(build_subspace_rnn(&all, &diag3, &[]).is_err());
    }

    #[test]
    fn single_off_block_interferes_by_delta_sqrt_p() {
        let delta = 0.37;
        let p1 = 5;
        let bases = bases_for(12, &[p1, 5], 21);
        let diag = vec![Mat::eye(p1), Mat::eye(5)];
        let off = vec![(1usize, 0usize, {
            let mut q = Mat::eye(p1);
            q.scale_inplace(delta);
            q
        })];
        let w = build_subspace_rnn(&bases, &diag, &off).unwrap();
        let meas = interference_measure(&w, &bases[0], &bases[1]).unwrap();
        assert!((meas - delta * (p1 as f64).sqrt()).abs() < 1e-10, "{}", meas);
        // No coupling in the reverse direction.
        assert!(interference_measure(&w, &bases[1], &bases[0]).unwrap() < 1e-10);
    }

    #[test]
    fn dense_random_recurrence_leaks() {
        let mut rng = substream(31, "init", 2);
        let w = Mat::from_fn(10, 10, |_, _| crate::rng::normal(&mut rng));
        let bases = bases_for(10, &[3], 31);
        assert!(subspace_retention_error(&w, &bases[0]).unwrap() > 1e-3);
        // The full space is always retained.
        let full = bases_for(10, &[10], 32).remove(0);
        assert!(subspace_retention_error(&w, &full).unwrap() < 1e-9);
    }

    #[test]
    fn experiment_under_capacity_is_clean() {
        let rep = interference_experiment(&[2, 2], 4, 5).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.orthogonal_capacity, 4);
        assert!(rep.retention_errors.iter().all(|&e| e <= 1e-10));
        assert!(rep.max_pairwise_overlap < 1e-10);
        assert!(rep.block_distortions.iter().all(|&e| e <= 1e-10));
    }

    #[test]
    fn experiment_over_capacity_reports_sqrt_shared_overlap() {
        // Two 3-dimensional subspaces in 4 units must share at least two
        // directions; the round-robin pool shares exactly two, overlap √2.
        // Each shared direction is double-counted by the summed projectors,
        // so both in-block maps deviate from identity by √2 as well.
        let rep = interference_experiment(&[3, 3], 4, 5).unwrap();
        assert!(!rep.feasible);
        assert!(rep.max_pairwise_overlap > 0.0);
        assert!((rep.max_pairwise_overlap - 2.0f64.sqrt()).abs() < 1e-10);
        assert!(rep.block_distortions.iter().all(|&e| (e - 2.0f64.sqrt()).abs() < 1e-10));
    }

    #[test]
    fn queue_recurrence_is_a_permutation_hence_orthogonal() {
        let q = build_queue_copy_rnn(3, 7).unwrap();
        assert_eq!(q.w_hh.rows, 4 * 7 + 1);
        assert_eq!(orth_penalty_value(&q.w_hh), 0.0);
    }

    #[test]
    fn queue_solves_short_copies_exactly() {
        for p in [1, 2, 3] {
            let q = build_queue_copy_rnn(p, 7).unwrap();
            assert_eq!(q.bit_accuracy(20, 40 + p as u64).unwrap(), 1.0, "p = {}", p);
        }
    }

    #[test]
    fn queue_logits_are_exactly_plus_minus_one_on_recall() {
        let p = 4;
        let q = build_queue_copy_rnn(p, 7).unwrap();
        let cfg = CopyConfig { variant: Variant::Basic, p, i: p, f_in: 8, r: 0 };
        let suite = crate::data::make_task_suite(cfg, 1, 77).unwrap();
        let mut rng = substream(77, "test", 1);
        let s = crate::data::gen_batch(&suite[0], &mut rng, 1).remove(0);
        let logits = q.simulate(&s.x).unwrap();
        for t in 0..s.x.rows {
            for o in 0..7 {
                if s.w.at(t, o) == 1.0 {
                    let want = if s.y.at(t, o) == 1.0 { 1.0 } else { -1.0 };
                    assert_eq!(logits.at(t, o), want, "t={} o={}", t, o);
                }
            }
        }
    }
}
