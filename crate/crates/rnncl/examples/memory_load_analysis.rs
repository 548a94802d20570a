//! Two lenses on "how much does the network remember": the intrinsic
//! dimensionality of the hidden state when the stop bit arrives, and the
//! Fisher importance of the recurrent weights. Both track the pattern
//! length p — the actual memory load — and stay flat as the padding i
//! stretches time without adding content.
//!
//!     cargo run --release --example memory_load_analysis

use rnncl::analysis::fisher_stats;
use rnncl::data::Variant;
use rnncl::harness::analyze::{analyze_pca, fresh_fisher, PCA_THRESHOLD};
use rnncl::harness::{run_experiment_full, ExperimentConfig};

fn probe(variant: Variant, p: usize, i: usize) -> (usize, f64) {
    let cfg = ExperimentConfig {
        k_tasks: 1,
        variant,
        p,
        i,
        n_h: 32,
        batch: 32,
        iters: 500,
        eval_samples: 300,
        ..ExperimentConfig::default()
    };
    let pca = analyze_pca(&cfg, PCA_THRESHOLD).unwrap();
    let out = run_experiment_full(&cfg).unwrap();
    let fisher = fresh_fisher(&out.model, 0, &cfg).unwrap();
    let stats = fisher_stats(&fisher, &out.model.arch.layout(), "w_hh", 10).unwrap();
    (pca.dim_at_stop, stats.mean)
}

fn main() {
    println!("growing the pattern (basic, i = p):");
    for p in [2, 4, 6] {
        let (dim, fisher) = probe(Variant::Basic, p, p);
        println!("  p = {}: intrinsic dim at stop {}  mean w_hh Fisher {:.4}", p, dim, fisher);
    }
    println!("\ngrowing only the wait (padded, p = 3):");
    for i in [3, 6, 9] {
        let (dim, fisher) = probe(Variant::Padded, 3, i);
        println!("  i = {}: intrinsic dim at stop {}  mean w_hh Fisher {:.4}", i, dim, fisher);
    }
    println!("\nload follows what must be stored, not how long it is held");
}
