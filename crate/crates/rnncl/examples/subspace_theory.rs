//! The linear picture of interference: tasks that live in orthogonal
//! hidden subspaces coexist exactly; past capacity, overlap — and with
//! it interference — is forced. Plus a hand-built queue network that
//! solves the copy task perfectly with zero training.
//!
//!     cargo run --example subspace_theory

use rnncl::mat::Mat;
use rnncl::rng::substream;
use rnncl::theory::{
    build_queue_copy_rnn, build_subspace_rnn, interference_experiment, interference_measure,
    random_orthogonal_bases, subspace_retention_error,
};

fn main() {
    // Four 8-dimensional tasks in 32 hidden units: they all fit.
    let report = interference_experiment(&[8, 8, 8, 8], 32, 7).unwrap();
    println!("K=4, p=8, n_h=32 (feasible):");
    println!("  orthogonal capacity  : {}", report.orthogonal_capacity);
    println!("  worst retention error: {:.2e}", report.retention_errors.iter().cloned().fold(0.0, f64::max));
    println!("  max pairwise overlap : {:.2e}", report.max_pairwise_overlap);

    // Two 3-dimensional tasks in 4 units: 6 > 4, overlap is unavoidable.
    let forced = interference_experiment(&[3, 3], 4, 7).unwrap();
    println!("\nK=2, p=3, n_h=4 (over capacity):");
    println!("  feasible             : {}", forced.feasible);
    println!("  max pairwise overlap : {:.4}  (sqrt(2) = {:.4})", forced.max_pairwise_overlap, 2f64.sqrt());

    // Couple two subspaces explicitly: a delta off-block from task 1 into
    // task 2 bleeds exactly delta * sqrt(p1) of activity across.
    let mut rng = substream(7, "theory", 99);
    let bases = random_orthogonal_bases(16, &[4, 4], &mut rng).unwrap();
    let delta = 0.05;
    let w = build_subspace_rnn(&bases, &[Mat::eye(4), Mat::eye(4)], &[(1, 0, Mat::eye(4).map(|v| v * delta))]).unwrap();
    println!("\ndelta = {} off-diagonal block feeding task 1 into task 2, p1 = 4:", delta);
    println!("  interference 1 -> 2      : {:.6} (delta * sqrt(p1) = {:.6})", interference_measure(&w, &bases[0], &bases[1]).unwrap(), delta * 2.0);
    println!("  task 1 leakage (retention error): {:.6} (same activity, seen from inside)", subspace_retention_error(&w, &bases[0]).unwrap());
    println!("  task 2 retention error   : {:.2e} (nothing feeds back)", subspace_retention_error(&w, &bases[1]).unwrap());

    // The constructive upper bound: a cyclic queue in (p+1) * F_out + 1
    // units copies any pattern exactly.
    println!("\nhand-built queue networks, 100 random patterns each:");
    for p in [1, 4, 8] {
        let queue = build_queue_copy_rnn(p, 7).unwrap();
        println!(
            "  p = {}: {} hidden units, bit accuracy {}",
            p,
            (p + 1) * 7 + 1,
            queue.bit_accuracy(100, 7).unwrap()
        );
    }
}
