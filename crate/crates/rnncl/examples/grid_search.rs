//! Hyperparameter grids straight from the config format: pipe-separated
//! values become axes, the product is searched on one seed, and the
//! winner is re-run on the rest to expose seed fragility.
//!
//!     cargo run --release --example grid_search

use rnncl::harness::grid::grid_search;
use rnncl::harness::ConfigMap;

fn main() {
    let base = ConfigMap::parse(
        "method = ewc\n\
         variant = permuted\n\
         k_tasks = 2\n\
         p = 3\n\
         i = 3\n\
         n_h = 32\n\
         batch = 16\n\
         iters = 200\n\
         eval_samples = 200\n\
         seed = 1\n\
         lambda_ewc = 10|100|1000\n\
         lr = 0.001|0.003\n",
    )
    .unwrap();

    let outcome = grid_search(&base, None, &[1, 2, 3]).unwrap();
    println!("{} configurations searched on seed 1:", outcome.ranked.len());
    for c in &outcome.ranked {
        println!(
            "  final {:.4}  during {:.4}  lambda_ewc={:<5} lr={}",
            c.final_acc, c.during, c.overrides["lambda_ewc"], c.overrides["lr"]
        );
    }
    println!("\nwinner re-run on seeds 1..3:");
    for s in &outcome.per_seed {
        println!("  seed {}: final {:.4}", s.seed, s.final_acc);
    }
    println!(
        "mean {:.4}, variance {:.2e} - a fragile winner shows up here",
        outcome.final_mean, outcome.final_variance
    );
}
