//! Hyperparameter grids over the config format: any value may carry
//! pipe-separated alternatives (`lr=0.001|0.005`); the Cartesian product,
//! optionally subsampled to a cap, is searched on the first seed and the
//! winner re-run on all seeds to expose seed fragility.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

use super::config::{ConfigMap, ExperimentConfig};
use super::experiment::{during_final_metrics, run_experiment, RunRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCandidate {
    /// The axis values this candidate pins, keyed by config name.
    pub overrides: BTreeMap<String, String>,
    pub config_hash: String,
    pub ok: bool,
    pub during: f64,
    pub final_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub ok: bool,
    pub during: f64,
    pub final_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    /// All searched candidates, best final accuracy first.
    pub ranked: Vec<GridCandidate>,
    pub best_overrides: BTreeMap<String, String>,
    /// The winner re-run on every seed.
    pub per_seed: Vec<SeedResult>,
    pub final_mean: f64,
    /// Unbiased variance of the final accuracy across seeds (0 for one).
    pub final_variance: f64,
}

/// Split every pipe-carrying value into a grid axis; returns the override
/// set of each grid point in deterministic (sorted-key, in-order-value)
/// sequence. A gridless config yields the single empty override.
pub fn expand_grid(base: &ConfigMap) -> Result<Vec<BTreeMap<String, String>>> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for (k, v) in base.entries() {
        if v.contains('|') {
            let vals: Vec<String> =
                v.split('|').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if vals.len() < 2 {
                return Err(Error::Config(format!("grid axis {:?} needs two or more values", k)));
            }
            axes.push((k.to_string(), vals));
        }
    }
    let mut points: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
    for (key, vals) in &axes {
        let mut next = Vec::with_capacity(points.len() * vals.len());
        for point in &points {
            for val in vals {
                let mut p = point.clone();
                p.insert(key.clone(), val.clone());
                next.push(p);
            }
        }
        points = next;
    }
    Ok(points)
}

fn config_for(
    base: &ConfigMap,
    overrides: &BTreeMap<String, String>,
    seed: u64,
) -> Result<ExperimentConfig> {
    let mut map = base.clone();
    for (k, v) in overrides {
        map.set_override(&format!("{}={}", k, v))?;
    }
    map.set_override(&format!("seed={}", seed))?;
    ExperimentConfig::from_map(&map)
}

/// Search the (possibly capped) grid on `seeds[0]`, then re-run the best
/// configuration on every seed. Ranking and subsampling are seeded, so
/// the whole procedure reproduces from the base config alone.
pub fn grid_search(base: &ConfigMap, cap: Option<usize>, seeds: &[u64]) -> Result<GridOutcome> {
    if seeds.is_empty() {
        return Err(Error::Config("grid search needs at least one seed".into()));
    }
    let mut points = expand_grid(base)?;
    // Validate every candidate before any training starts.
    for p in &points {
        config_for(base, p, seeds[0])?;
    }
    if let Some(cap) = cap {
        if cap == 0 {
            return Err(Error::Config("grid cap must be positive".into()));
        }
        if points.len() > cap {
            // Seeded partial Fisher–Yates: the kept set depends only on
            // the base config's seed field, not on run order.
            let base_seed = base.get("seed").and_then(|s| s.parse().ok()).unwrap_or(1);
            let mut rng = substream(base_seed, "grid", 0);
            use rand::Rng;
            for i in 0..cap {
                let j = rng.gen_range(i..points.len());
                points.swap(i, j);
            }
            points.truncate(cap);
        }
    }

    let search_seed = seeds[0];
    let mut ranked: Vec<GridCandidate> = points
        .par_iter()
        .map(|overrides| -> Result<GridCandidate> {
            let cfg = config_for(base, overrides, search_seed)?;
            let record = run_experiment(&cfg)?;
            Ok(candidate_from(overrides.clone(), &cfg, &record))
        })
        .collect::<Result<Vec<_>>>()?;
    // Best final first; failures sink; hash breaks ties deterministically.
    ranked.sort_by(|a, b| {
        b.ok.cmp(&a.ok)
            .then(b.final_acc.partial_cmp(&a.final_acc).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.config_hash.cmp(&b.config_hash))
    });

    let best = ranked
        .first()
        .ok_or_else(|| Error::Invalid("empty grid".into()))?
        .clone();
    let per_seed: Vec<SeedResult> = seeds
        .par_iter()
        .map(|&seed| -> Result<SeedResult> {
            if seed == search_seed {
                // The search already ran this exact configuration.
                return Ok(SeedResult {
                    seed,
                    ok: best.ok,
                    during: best.during,
                    final_acc: best.final_acc,
                });
            }
            let cfg = config_for(base, &best.overrides, seed)?;
            let record = run_experiment(&cfg)?;
            let (during, final_acc) = metrics_or_zero(&record);
            Ok(SeedResult { seed, ok: record.is_ok(), during, final_acc })
        })
        .collect::<Result<Vec<_>>>()?;

    let finals: Vec<f64> = per_seed.iter().filter(|s| s.ok).map(|s| s.final_acc).collect();
    let final_mean = if finals.is_empty() {
        0.0
    } else {
        finals.iter().sum::<f64>() / finals.len() as f64
    };
    let final_variance = if finals.len() > 1 {
        finals.iter().map(|f| (f - final_mean).powi(2)).sum::<f64>() / (finals.len() - 1) as f64
    } else {
        0.0
    };

    Ok(GridOutcome {
        best_overrides: best.overrides.clone(),
        ranked,
        per_seed,
        final_mean,
        final_variance,
    })
}

fn metrics_or_zero(record: &RunRecord) -> (f64, f64) {
    during_final_metrics(record).unwrap_or((0.0, 0.0))
}

fn candidate_from(
    overrides: BTreeMap<String, String>,
    cfg: &ExperimentConfig,
    record: &RunRecord,
) -> GridCandidate {
    let (during, final_acc) = metrics_or_zero(record);
    GridCandidate { overrides, config_hash: cfg.config_hash(), ok: record.is_ok(), during, final_acc }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_base(extra: &str) -> ConfigMap {
        let text = format!(
            "method=finetune\nvariant=basic\nk_tasks=1\np=2\ni=2\nf_in=4\nn_h=6\nbatch=2\niters=2\neval_samples=8\nseed=3\n{}\n",
            extra
        );
        ConfigMap::parse(&text).unwrap()
    }

    #[test]
    fn two_by_three_grid_expands_to_six_points() {
        let base = tiny_base("lr=0.001|0.01\nclip=50|100|200");
        let points = expand_grid(&base).unwrap();
        assert_eq!(points.len(), 6);
        for p in &points {
            assert_eq!(p.len(), 2);
            assert!(p.contains_key("lr") && p.contains_key("clip"));
        }
        let distinct: std::collections::BTreeSet<_> = points.iter().collect();
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn gridless_config_is_a_single_point() {
        let base = tiny_base("lr=0.001");
        let points = expand_grid(&base).unwrap();
        assert_eq!(points, vec![BTreeMap::new()]);
    }

    #[test]
    fn one_value_axis_is_rejected() {
        let base = tiny_base("lr=0.001|");
        assert!(expand_grid(&base).is_err());
    }

    #[test]
    fn misplaced_method_key_fails_before_any_run() {
        let base = tiny_base("lambda=1|10");
        assert!(grid_search(&base, None, &[1]).is_err());
    }

    #[test]
    fn capped_search_ranks_candidates_and_reruns_best_on_all_seeds() {
        let base = tiny_base("lr=0.001|0.002\north_reg=0|1");
        let out = grid_search(&base, Some(3), &[1, 2]).unwrap();
        assert_eq!(out.ranked.len(), 3);
        let hashes: std::collections::BTreeSet<_> =
            out.ranked.iter().map(|c| c.config_hash.clone()).collect();
        assert_eq!(hashes.len(), 3);
        for w in out.ranked.windows(2) {
            assert!(w[0].final_acc >= w[1].final_acc || !w[1].ok);
        }
        assert_eq!(out.best_overrides, out.ranked[0].overrides);
        assert_eq!(out.per_seed.len(), 2);
        assert!(out.final_variance >= 0.0);

        let again = grid_search(&base, Some(3), &[1, 2]).unwrap();
        assert_eq!(
            serde_json::to_string(&out).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }
}
