//! Checkpoint round trip: trained weights to disk and back, bit for bit.
//!
//!     cargo run --example save_restore

use rnncl::checkpoint::Checkpoint;
use rnncl::data::{make_task_suite, test_set, CopyConfig, Variant};
use rnncl::model::{eval_bit_counts, ForwardOpts, RnnArch, RnnKind};
use rnncl::rng::substream;

fn main() {
    let arch = RnnArch { kind: RnnKind::Lstm, n_in: 6, n_h: 24, f_out: 5, n_heads: 1, n_z: 0 };
    let mut rng = substream(4, "init", 0);
    let params = arch.init_params(true, &mut rng).unwrap();

    let mut ckpt = Checkpoint::new();
    ckpt.insert_params("model", &params).unwrap();
    ckpt.insert_vec("meta_seed", &[4.0]).unwrap();
    let path = std::env::temp_dir().join("rnncl_save_restore.ckpt");
    ckpt.save(&path).unwrap();
    println!("wrote {} ({} bytes, {} sections)", path.display(), std::fs::metadata(&path).unwrap().len(), ckpt.names().len());

    let loaded = Checkpoint::load(&path).unwrap();
    let mut restored = params.clone();
    restored.data.iter_mut().for_each(|v| *v = 0.0);
    loaded.extract_params("model", &mut restored).unwrap();
    assert!(params.data.iter().zip(&restored.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    println!("all {} parameters restored bit-identically", restored.len());

    // Identical weights mean identical behavior, untrained or not.
    let cfg = CopyConfig { variant: Variant::Basic, p: 3, i: 3, f_in: 6, r: 0 };
    let suite = make_task_suite(cfg, 1, 4).unwrap();
    let probe = test_set(&suite[0], 4, 50);
    let opts = ForwardOpts { task_id: 0, mask: None };
    let a = eval_bit_counts(&arch, &params, &probe, opts, None, 0.5).unwrap();
    let b = eval_bit_counts(&arch, &restored, &probe, opts, None, 0.5).unwrap();
    println!("bit counts before/after: {:?} / {:?}", a, b);
    assert_eq!(a, b);
    std::fs::remove_file(&path).ok();
}
