//! Reverse-mode gradients on the tape, cross-checked against central
//! finite differences.
//!
//!     cargo run --example tape_gradients

use rnncl::fdcheck::finite_diff_check;
use rnncl::mat::Mat;
use rnncl::tape::Tape;

fn main() {
    // A toy composite: sum(tanh(Wx)^2) plus a weighted sigmoid
    // cross-entropy on the same logits, differentiated with respect to
    // all 8 entries of W.
    let x = Mat::from_vec(4, 1, vec![0.3, -0.7, 1.1, 0.25]).unwrap();
    let targets = Mat::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
    let ones = Mat::filled(2, 1, 1.0);
    let w0: Vec<f64> = vec![0.4, -0.2, 0.1, 0.9, -0.5, 0.3, 0.8, -0.1];

    let eval = |w_flat: &[f64]| {
        let mut tape = Tape::new();
        let w = tape.leaf(Mat::from_vec(2, 4, w_flat.to_vec()).unwrap());
        let xc = tape.leaf(x.clone());
        let h = tape.matmul(w, xc).unwrap();
        let t = tape.tanh(h);
        let sq = tape.mul_elem(t, t).unwrap();
        let quad = tape.sum(sq);
        let bce = tape.bce_with_logits(h, &targets, &ones).unwrap();
        let z = tape.add(quad, bce).unwrap();
        (tape, w, z)
    };

    let (tape, w, z) = eval(&w0);
    println!("loss at w0: {:.6}", tape.scalar(z).unwrap());
    let grads = tape.backward(z).unwrap();
    let analytic = grads.wrt(w).unwrap().to_vec();
    let rounded: Vec<f64> = analytic.iter().map(|g| (g * 1e4).round() / 1e4).collect();
    println!("analytic dL/dW: {:?}", rounded);

    let rel_err = finite_diff_check(
        |w_flat: &[f64]| {
            let (tape, _, z) = eval(w_flat);
            tape.scalar(z)
        },
        &w0,
        1e-5,
        &analytic,
    )
    .unwrap();
    println!("max relative error vs central differences: {:.3e}", rel_err);
    assert!(rel_err < 1e-6);
    println!("tape gradients agree with finite differences");
}
