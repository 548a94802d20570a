//! Train one orthogonally initialized vanilla RNN on a single copy task
//! and watch the recall accuracy climb.
//!
//!     cargo run --release --example train_single_task

use rnncl::data::{gen_batch, make_task_suite, test_set, CopyConfig, Variant};
use rnncl::model::{
    assemble_inputs, assemble_targets, eval_bit_counts, forward_tape, leaves_from, seq_bce_loss,
    ForwardOpts, RnnArch, RnnKind,
};
use rnncl::optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
use rnncl::rng::substream;
use rnncl::tape::Tape;

fn main() {
    let cfg = CopyConfig { variant: Variant::Basic, p: 5, i: 5, f_in: 8, r: 0 };
    let suite = make_task_suite(cfg, 1, 1).unwrap();
    let spec = &suite[0];

    let arch = RnnArch { kind: RnnKind::Vanilla, n_in: 8, n_h: 64, f_out: 7, n_heads: 1, n_z: 0 };
    let mut init_rng = substream(1, "init", 0);
    let mut params = arch.init_params(true, &mut init_rng).unwrap();
    let mut adam = AdamState::new(params.len());
    let adam_cfg = AdamConfig::with_lr(1e-3);

    let mut data_rng = substream(1, "data", 0);
    let held_out = test_set(spec, 1, 500);
    let opts = ForwardOpts { task_id: 0, mask: None };

    for iter in 1..=800 {
        let batch = gen_batch(spec, &mut data_rng, 32);
        let xs = assemble_inputs(&batch, None).unwrap();
        let (ys, ws) = assemble_targets(&batch).unwrap();

        let mut tape = Tape::new();
        let leaves = leaves_from(&mut tape, &params);
        let run = forward_tape(&mut tape, &arch, &leaves, &xs, opts).unwrap();
        let loss = seq_bce_loss(&mut tape, &run.logits, &ys, &ws).unwrap();
        let loss_val = tape.scalar(loss).unwrap();

        let grads = tape.backward(loss).unwrap();
        let mut g: Vec<f64> = Vec::with_capacity(params.len());
        for (idx, leaf) in leaves.iter().enumerate() {
            g.extend(grads.wrt_or_zeros(*leaf, params.layout.view_len(idx)));
        }
        clip_global_norm(&mut [&mut g], Some(100.0));
        adam_step(&mut params, &g, &mut adam, &adam_cfg, None).unwrap();

        if iter % 100 == 0 || iter == 1 {
            let (correct, total) =
                eval_bit_counts(&arch, &params, &held_out, opts, None, 0.5).unwrap();
            println!(
                "iter {:4}  loss {:.4}  held-out bit accuracy {:.4}",
                iter,
                loss_val,
                correct as f64 / total as f64
            );
        }
    }
}
