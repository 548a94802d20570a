//! A chunked hypernetwork emits every weight of the main RNN from a
//! per-task embedding: task identity becomes a handful of trainable
//! numbers instead of a whole parameter vector.
//!
//!     cargo run --release --example hypernet_weights

use rnncl::harness::{during_final_metrics, run_experiment, ExperimentConfig, MethodConfig};
use rnncl::harness::config::HnetHypers;
use rnncl::hnet::{HnetConfig, Hypernet};
use rnncl::model::{RnnArch, RnnKind};
use rnncl::rng::substream;

fn main() {
    let arch = RnnArch { kind: RnnKind::Vanilla, n_in: 8, n_h: 64, f_out: 7, n_heads: 1, n_z: 0 };
    let target = arch.layout().total_len();

    let cfg = HnetConfig {
        chunk_out: 150,
        task_emb_dim: 16,
        chunk_emb_dim: 16,
        hidden: vec![32, 32],
        emb_std: 1.0,
        out_scale: 0.1,
        beta: 1.0,
    };
    let mut rng = substream(1, "init", 1);
    let hnet = Hypernet::new(cfg, target, 3, &mut rng).unwrap();
    println!("main network parameters : {}", target);
    println!("hypernet parameters     : {}", hnet.params.len());
    println!("compression ratio       : {:.3}", hnet.compression_ratio());

    // Same generator, different task embeddings, different weights.
    let w0 = hnet.generate_eval(0).unwrap();
    let w1 = hnet.generate_eval(1).unwrap();
    let diff: f64 = w0.iter().zip(&w1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    println!("|psi(task 0) - psi(task 1)| = {:.4}", diff);

    // The full continual run: the output regularizer pins every previous
    // task's generated weights while the current embedding trains freely.
    let cfg = ExperimentConfig {
        k_tasks: 3,
        p: 4,
        i: 4,
        n_h: 64,
        batch: 32,
        iters: 600,
        eval_samples: 400,
        method: MethodConfig::Hnet(HnetHypers {
            beta: 1.0,
            emb_std: 1.0,
            chunk_out: 150,
            task_emb_dim: 16,
            chunk_emb_dim: 16,
            hidden: vec![32, 32],
            out_scale: 0.1,
            c_subset: 0,
        }),
        ..ExperimentConfig::default()
    };
    let record = run_experiment(&cfg).unwrap();
    let (during, fin) = during_final_metrics(&record).unwrap();
    println!("\n3 permuted tasks through the hypernetwork:");
    for k in 0..3 {
        println!(
            "  task {}: right after {:.3}, at the end {:.3}",
            k,
            record.a(k, k).unwrap(),
            record.a(k, 2).unwrap()
        );
    }
    println!("during {:.4} -> final {:.4}", during, fin);
}
