//! Per-task random binary masks over the hidden units. Each task trains
//! and evaluates inside its own gated subnetwork; with disjoint masks and
//! per-task heads the subnetworks share nothing, so training one task
//! cannot move another's function at all.

use crate::error::{Error, Result};
use crate::rng::{permutation, substream};

/// Exactly `round(fraction · n_h)` units zeroed, positions uniform per
/// `(master_seed, task_id)`. Returned as gate values (1 keeps, 0 silences).
pub fn generate_mask(n_h: usize, fraction: f64, task_id: usize, master_seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("masked fraction {} outside [0, 1]", fraction)));
    }
    if n_h == 0 {
        return Err(Error::Config("mask over zero units".into()));
    }
    let zeros = (fraction * n_h as f64).round() as usize;
    let mut rng = substream(master_seed, "mask", task_id as u64);
    let order = permutation(&mut rng, n_h);
    let mut mask = vec![1.0; n_h];
    for &i in order.iter().take(zeros) {
        mask[i] = 0.0;
    }
    Ok(mask)
}

/// The per-task mask collection used by a run.
#[derive(Debug, Clone)]
pub struct MaskSet {
    pub masks: Vec<Vec<f64>>,
}

impl MaskSet {
    pub fn generate(n_h: usize, fraction: f64, k_tasks: usize, master_seed: u64) -> Result<Self> {
        let masks = (0..k_tasks)
            .map(|k| generate_mask(n_h, fraction, k, master_seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(MaskSet { masks })
    }

    /// Hand-built masks (tests use this for exact disjoint halves).
    pub fn explicit(masks: Vec<Vec<f64>>) -> Result<Self> {
        for m in &masks {
            if m.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Invalid("masks must be binary".into()));
            }
        }
        Ok(MaskSet { masks })
    }

    pub fn mask(&self, task: usize) -> Result<&[f64]> {
        self.masks
            .get(task)
            .map(|m| m.as_slice())
            .ok_or_else(|| Error::Invalid(format!("no mask for task {}", task)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_extremes() {
        assert!(generate_mask(8, 0.0, 0, 1).unwrap().iter().all(|&v| v == 1.0));
        assert!(generate_mask(8, 1.0, 0, 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_zero_count() {
        // n_h = 10, fraction 0.8 → exactly 2 survivors.
        let m = generate_mask(10, 0.8, 3, 42).unwrap();
        assert_eq!(m.iter().filter(|&&v| v == 1.0).count(), 2);
        // Rounding, not truncation: 0.25·10 → round(2.5) = 3 zeros.
        let m = generate_mask(10, 0.25, 0, 42).unwrap();
        assert_eq!(m.iter().filter(|&&v| v == 0.0).count(), 3);
    }

    #[test]
    fn deterministic_per_seed_and_task() {
        let a = generate_mask(32, 0.5, 2, 7).unwrap();
        let b = generate_mask(32, 0.5, 2, 7).unwrap();
        let c = generate_mask(32, 0.5, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_range_fraction_rejected() {
        assert!(generate_mask(8, 1.5, 0, 1).is_err());
        assert!(generate_mask(8, -0.1, 0, 1).is_err());
    }

    #[test]
    fn explicit_masks_must_be_binary() {
        assert!(MaskSet::explicit(vec![vec![0.5, 1.0]]).is_err());
        let ms = MaskSet::explicit(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(ms.mask(1).unwrap(), &[0.0, 1.0]);
        assert!(ms.mask(2).is_err());
    }
}
