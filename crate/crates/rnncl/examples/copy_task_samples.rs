//! What the four copy-task variants actually ask the network to do:
//! prints one sample per variant as input / target / loss-weight grids.
//!
//!     cargo run --example copy_task_samples

use rnncl::data::{gen_batch, make_task_suite, CopyConfig, Variant};
use rnncl::rng::substream;

fn render(name: &str, x: &rnncl::mat::Mat, y: &rnncl::mat::Mat, w: &rnncl::mat::Mat) {
    println!("\n=== {} ===", name);
    println!("input ({} steps x {} features, last column = stop bit):", x.rows, x.cols);
    for t in 0..x.rows {
        let row: String = (0..x.cols).map(|f| if x.at(t, f) > 0.5 { '#' } else { '.' }).collect();
        let tgt: String = (0..y.cols).map(|f| if y.at(t, f) > 0.5 { '#' } else { '.' }).collect();
        let weighted = if (0..w.cols).any(|f| w.at(t, f) > 0.0) { "scored" } else { "" };
        println!("  t={:2}  {}   target {}   {}", t, row, tgt, weighted);
    }
}

fn main() {
    let base = CopyConfig { variant: Variant::Basic, p: 4, i: 4, f_in: 6, r: 0 };
    let configs = [
        ("basic: replay the pattern after the stop bit", base),
        ("padded: same pattern, longer wait (i = 7)", CopyConfig { variant: Variant::Padded, i: 7, ..base }),
        ("permuted: output rows arrive in a task-specific order", CopyConfig { variant: Variant::Permuted, ..base }),
        ("patman: r = 2 XOR manipulations applied to the pattern", CopyConfig { variant: Variant::PatMan, r: 2, ..base }),
    ];

    for (label, cfg) in configs {
        // Two tasks share geometry but differ in permutation/manipulation.
        let suite = make_task_suite(cfg, 2, 42).unwrap();
        let mut rng = substream(42, "demo", 0);
        let sample = &gen_batch(&suite[1], &mut rng, 1)[0];
        render(label, &sample.x, &sample.y, &sample.w);
    }

    let cfg = CopyConfig { variant: Variant::Permuted, p: 4, i: 4, f_in: 6, r: 0 };
    let suite = make_task_suite(cfg, 3, 42).unwrap();
    println!("\npermutations drawn for 3 permuted tasks (seed 42):");
    for spec in &suite {
        println!("  task {}: {:?}", spec.task_id, spec.out_perm.as_ref().unwrap());
    }
}
