//! Catastrophic forgetting and one cure: sequential permuted copy tasks
//! trained plainly versus with an elastic quadratic penalty around the
//! previous tasks' weights.
//!
//!     cargo run --release --example continual_ewc

use rnncl::harness::{during_final_metrics, run_experiment, ExperimentConfig, MethodConfig};

fn show(record: &rnncl::harness::RunRecord) {
    println!("\n{} accuracy matrix A[task][after]:", record.method);
    for k in 0..record.k_tasks {
        let row: Vec<String> = (0..record.k_tasks)
            .map(|j| match record.a(k, j) {
                Ok(a) => format!("{:.3}", a),
                Err(_) => "  .  ".into(),
            })
            .collect();
        println!("  task {}: [{}]", k, row.join(", "));
    }
    let (during, fin) = during_final_metrics(record).unwrap();
    println!("  during {:.4} -> final {:.4}  ({:.0}s)", during, fin, record.wall_s);
}

fn main() {
    let base = ExperimentConfig {
        k_tasks: 3,
        p: 4,
        i: 4,
        n_h: 64,
        batch: 32,
        iters: 600,
        eval_samples: 400,
        ..ExperimentConfig::default()
    };

    for method in [MethodConfig::Finetune, MethodConfig::Ewc { lambda: 500.0 }] {
        let cfg = ExperimentConfig { method, ..base.clone() };
        let record = run_experiment(&cfg).unwrap();
        show(&record);
    }
    println!("\nthe penalty trades a little plasticity for most of the retention");
}
