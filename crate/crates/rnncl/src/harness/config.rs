//! Experiment configuration: a flat key=value text format with cosmetic
//! `[section]` headers, command-line overrides, strict unknown-key
//! rejection, and a canonical serialization that feeds the config hash.

use std::collections::BTreeMap;
use std::path::Path;

use crate::cl::replay::Likelihood;
use crate::data::Variant;
use crate::error::{Error, Result};
use crate::model::RnnKind;

/// Raw parsed key=value pairs. Section headers group keys for humans only;
/// key names are global, so overrides can address them without a section.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(Error::Config(format!("line {}: malformed section header", lineno + 1)));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {:?}", lineno + 1, key)));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Apply one `key=value` override (from `--set`).
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {:?} is not key=value", assignment)))?;
        self.entries.insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiHypers {
    pub lambda: f64,
    pub eps: f64,
    pub squared: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnetHypers {
    pub beta: f64,
    pub emb_std: f64,
    pub chunk_out: usize,
    pub task_emb_dim: usize,
    pub chunk_emb_dim: usize,
    pub hidden: Vec<usize>,
    pub out_scale: f64,
    /// Number of previous tasks sampled into the regularizer; 0 = all.
    pub c_subset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayHypers {
    pub n_z: usize,
    pub dec_n_h: usize,
    pub lambda_rec: f64,
    pub lambda_pm: f64,
    pub lambda_distill: f64,
    pub likelihood: Likelihood,
    pub sample_bits: bool,
}

/// Which continual-learning method drives training, with its
/// hyperparameters. Keys not belonging to the chosen method are rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Finetune,
    Scratch,
    Multitask,
    Ewc { lambda: f64 },
    Si(SiHypers),
    Masking { fraction: f64 },
    MaskingSi { fraction: f64, si: SiHypers },
    Hnet(HnetHypers),
    Coreset { n_store: usize, lambda_distill: f64 },
    Replay(ReplayHypers),
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Finetune => "finetune",
            MethodConfig::Scratch => "scratch",
            MethodConfig::Multitask => "multitask",
            MethodConfig::Ewc { .. } => "ewc",
            MethodConfig::Si(_) => "si",
            MethodConfig::Masking { .. } => "masking",
            MethodConfig::MaskingSi { .. } => "masking_si",
            MethodConfig::Hnet(_) => "hnet",
            MethodConfig::Coreset { .. } => "coreset",
            MethodConfig::Replay(_) => "replay",
        }
    }
}

/// Fully validated experiment description. Everything the run touches —
/// data, model, optimizer, method — flows from here plus the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub k_tasks: usize,
    pub variant: Variant,
    pub p: usize,
    pub i: usize,
    pub r: usize,
    pub f_in: usize,
    pub kind: RnnKind,
    pub n_h: usize,
    pub task_input: bool,
    pub lr: f64,
    pub batch: usize,
    pub iters: usize,
    pub clip: Option<f64>,
    pub orth_init: bool,
    pub orth_reg: f64,
    pub eval_samples: usize,
    pub method: MethodConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            k_tasks: 5,
            variant: Variant::Permuted,
            p: 5,
            i: 5,
            r: 1,
            f_in: 8,
            kind: RnnKind::Vanilla,
            n_h: 128,
            task_input: false,
            lr: 1e-3,
            batch: 64,
            iters: 3000,
            clip: Some(100.0),
            orth_init: true,
            orth_reg: 1.0,
            eval_samples: 1000,
            method: MethodConfig::Finetune,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{} = {:?} cannot be parsed", key, value)))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{} = {:?} is not a boolean", key, value))),
    }
}

/// Keys every method accepts.
const COMMON_KEYS: &[&str] = &[
    "seed", "k_tasks", "variant", "p", "i", "r", "f_in", "model", "n_h", "task_input", "lr",
    "batch", "iters", "clip", "orth_init", "orth_reg", "eval_samples", "method",
];

fn method_keys(name: &str) -> Result<&'static [&'static str]> {
    Ok(match name {
        "finetune" | "scratch" | "multitask" => &[],
        "ewc" => &["lambda_ewc"],
        "si" => &["lambda_si", "si_eps", "si_squared"],
        "masking" => &["masked_fraction"],
        "masking_si" => &["masked_fraction", "lambda_si", "si_eps", "si_squared"],
        "hnet" => &[
            "beta", "emb_std", "chunk_out", "task_emb_dim", "chunk_emb_dim", "hnet_hidden",
            "out_scale", "c_subset",
        ],
        "coreset" => &["n_coreset", "lambda_distill"],
        "replay" => &[
            "n_z", "dec_n_h", "lambda_rec", "lambda_pm", "lambda_distill", "likelihood", "tau",
            "sample_bits",
        ],
        other => return Err(Error::Config(format!("unknown method {:?}", other))),
    })
}

impl ExperimentConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let method_name = map.get("method").unwrap_or("finetune");
        let allowed_method = method_keys(method_name)?;
        for key in map.keys() {
            if !COMMON_KEYS.contains(&key) && !allowed_method.contains(&key) {
                // Distinguish a key that exists for some other method from a
                // typo: both are rejected, but the message should say why.
                let known_elsewhere = [
                    "ewc", "si", "masking", "masking_si", "hnet", "coreset", "replay",
                ]
                .iter()
                .any(|m| method_keys(m).map(|ks| ks.contains(&key)).unwrap_or(false));
                return Err(Error::Config(if known_elsewhere {
                    format!("key {:?} does not apply to method {:?}", key, method_name)
                } else {
                    format!("unknown key {:?}", key)
                }));
            }
        }

        let mut cfg = ExperimentConfig::default();
        if let Some(v) = map.get("seed") {
            cfg.seed = parse_as("seed", v)?;
        }
        if let Some(v) = map.get("k_tasks") {
            cfg.k_tasks = parse_as("k_tasks", v)?;
        }
        if let Some(v) = map.get("variant") {
            cfg.variant = Variant::parse(v)?;
        }
        if let Some(v) = map.get("p") {
            cfg.p = parse_as("p", v)?;
        }
        if let Some(v) = map.get("i") {
            cfg.i = parse_as("i", v)?;
        }
        if let Some(v) = map.get("r") {
            cfg.r = parse_as("r", v)?;
        }
        if let Some(v) = map.get("f_in") {
            cfg.f_in = parse_as("f_in", v)?;
        }
        if let Some(v) = map.get("model") {
            cfg.kind = RnnKind::parse(v)?;
        }
        if let Some(v) = map.get("n_h") {
            cfg.n_h = parse_as("n_h", v)?;
        }
        if let Some(v) = map.get("task_input") {
            cfg.task_input = parse_bool("task_input", v)?;
        }
        if let Some(v) = map.get("lr") {
            cfg.lr = parse_as("lr", v)?;
        }
        if let Some(v) = map.get("batch") {
            cfg.batch = parse_as("batch", v)?;
        }
        if let Some(v) = map.get("iters") {
            cfg.iters = parse_as("iters", v)?;
        }
        if let Some(v) = map.get("clip") {
            cfg.clip = if v == "none" { None } else { Some(parse_as("clip", v)?) };
        }
        if let Some(v) = map.get("orth_init") {
            cfg.orth_init = parse_bool("orth_init", v)?;
        }
        if let Some(v) = map.get("orth_reg") {
            cfg.orth_reg = parse_as("orth_reg", v)?;
        }
        if let Some(v) = map.get("eval_samples") {
            cfg.eval_samples = parse_as("eval_samples", v)?;
        }

        cfg.method = match method_name {
            "finetune" => MethodConfig::Finetune,
            "scratch" => MethodConfig::Scratch,
            "multitask" => MethodConfig::Multitask,
            "ewc" => MethodConfig::Ewc {
                lambda: map.get("lambda_ewc").map(|v| parse_as("lambda_ewc", v)).transpose()?.unwrap_or(100.0),
            },
            "si" => MethodConfig::Si(parse_si(map)?),
            "masking" => MethodConfig::Masking { fraction: parse_fraction(map)? },
            "masking_si" => MethodConfig::MaskingSi { fraction: parse_fraction(map)?, si: parse_si(map)? },
            "hnet" => MethodConfig::Hnet(parse_hnet(map)?),
            "coreset" => MethodConfig::Coreset {
                n_store: map.get("n_coreset").map(|v| parse_as("n_coreset", v)).transpose()?.unwrap_or(100),
                lambda_distill: map
                    .get("lambda_distill")
                    .map(|v| parse_as("lambda_distill", v))
                    .transpose()?
                    .unwrap_or(1.0),
            },
            "replay" => MethodConfig::Replay(parse_replay(map)?),
            _ => unreachable!("validated above"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_tasks == 0 {
            return Err(Error::Config("k_tasks must be at least 1".into()));
        }
        if self.batch == 0 || self.iters == 0 {
            return Err(Error::Config("batch and iters must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} out of range", self.lr)));
        }
        if self.orth_reg < 0.0 {
            return Err(Error::Config("orth_reg must be nonnegative".into()));
        }
        if self.eval_samples == 0 {
            return Err(Error::Config("eval_samples must be positive".into()));
        }
        if let Some(c) = self.clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("clip {} out of range", c)));
            }
        }
        match &self.method {
            MethodConfig::Ewc { lambda } if *lambda < 0.0 => {
                return Err(Error::Config("lambda_ewc must be nonnegative".into()));
            }
            MethodConfig::Masking { fraction } | MethodConfig::MaskingSi { fraction, .. }
                if !(0.0..1.0).contains(fraction) =>
            {
                return Err(Error::Config("masked_fraction must lie in [0, 1)".into()));
            }
            MethodConfig::Coreset { n_store, .. } if *n_store == 0 => {
                return Err(Error::Config("n_coreset must be positive".into()));
            }
            MethodConfig::Hnet(h) => {
                if h.chunk_out == 0 || h.task_emb_dim == 0 || h.chunk_emb_dim == 0 {
                    return Err(Error::Config("hypernet dimensions must be positive".into()));
                }
                if h.c_subset >= self.k_tasks && h.c_subset != 0 {
                    return Err(Error::Config(format!(
                        "c_subset {} must be below k_tasks {}",
                        h.c_subset, self.k_tasks
                    )));
                }
            }
            MethodConfig::Replay(r) => {
                if r.n_z == 0 || r.dec_n_h == 0 {
                    return Err(Error::Config("replay latent and decoder sizes must be positive".into()));
                }
            }
            _ => {}
        }
        // Data geometry is validated by the task suite itself; run it here
        // so a bad config fails before any training starts.
        self.copy_config()?.validate()?;
        Ok(())
    }

    pub fn copy_config(&self) -> Result<crate::data::CopyConfig> {
        // `r` counts manipulations, which only the patman variant has; the
        // reporting default of 1 would be rejected by the data layer
        // elsewhere, so it maps to "none" for every other variant.
        let cfg = crate::data::CopyConfig {
            variant: self.variant,
            p: self.p,
            i: self.i,
            f_in: self.f_in,
            r: if self.variant == Variant::PatMan { self.r } else { 0 },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key=value` listing of the full effective configuration,
    /// sorted by key; the config hash is FNV-1a over these lines.
    pub fn canonical_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("batch={}", self.batch),
            format!("clip={}", self.clip.map(|c| c.to_string()).unwrap_or_else(|| "none".into())),
            format!("eval_samples={}", self.eval_samples),
            format!("f_in={}", self.f_in),
            format!("i={}", self.i),
            format!("iters={}", self.iters),
            format!("k_tasks={}", self.k_tasks),
            format!("lr={}", self.lr),
            format!("method={}", self.method.name()),
            format!("model={}", match self.kind {
                RnnKind::Vanilla => "vanilla",
                RnnKind::Lstm => "lstm",
            }),
            format!("n_h={}", self.n_h),
            format!("orth_init={}", self.orth_init),
            format!("orth_reg={}", self.orth_reg),
            format!("p={}", self.p),
            format!("r={}", self.r),
            format!("seed={}", self.seed),
            format!("task_input={}", self.task_input),
            format!("variant={}", self.variant.name()),
        ];
        match &self.method {
            MethodConfig::Finetune | MethodConfig::Scratch | MethodConfig::Multitask => {}
            MethodConfig::Ewc { lambda } => lines.push(format!("lambda_ewc={}", lambda)),
            MethodConfig::Si(si) => push_si(&mut lines, si),
            MethodConfig::Masking { fraction } => lines.push(format!("masked_fraction={}", fraction)),
            MethodConfig::MaskingSi { fraction, si } => {
                lines.push(format!("masked_fraction={}", fraction));
                push_si(&mut lines, si);
            }
            MethodConfig::Hnet(h) => {
                lines.push(format!("beta={}", h.beta));
                lines.push(format!("c_subset={}", h.c_subset));
                lines.push(format!("chunk_emb_dim={}", h.chunk_emb_dim));
                lines.push(format!("chunk_out={}", h.chunk_out));
                lines.push(format!("emb_std={}", h.emb_std));
                lines.push(format!(
                    "hnet_hidden={}",
                    h.hidden.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
                ));
                lines.push(format!("out_scale={}", h.out_scale));
                lines.push(format!("task_emb_dim={}", h.task_emb_dim));
            }
            MethodConfig::Coreset { n_store, lambda_distill } => {
                lines.push(format!("lambda_distill={}", lambda_distill));
                lines.push(format!("n_coreset={}", n_store));
            }
            MethodConfig::Replay(r) => {
                lines.push(format!("dec_n_h={}", r.dec_n_h));
                lines.push(format!("lambda_distill={}", r.lambda_distill));
                lines.push(format!("lambda_pm={}", r.lambda_pm));
                lines.push(format!("lambda_rec={}", r.lambda_rec));
                lines.push(format!("likelihood={}", match r.likelihood {
                    Likelihood::Bernoulli => "bernoulli".to_string(),
                    Likelihood::Gaussian { tau } => format!("gaussian:{}", tau),
                }));
                lines.push(format!("n_z={}", r.n_z));
                lines.push(format!("sample_bits={}", r.sample_bits));
            }
        }
        lines.sort();
        lines
    }

    /// FNV-1a hash of the canonical listing, as fixed-width hex.
    pub fn config_hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for line in self.canonical_lines() {
            for b in line.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= b'\n' as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{:016x}", h)
    }
}

fn push_si(lines: &mut Vec<String>, si: &SiHypers) {
    lines.push(format!("lambda_si={}", si.lambda));
    lines.push(format!("si_eps={}", si.eps));
    lines.push(format!("si_squared={}", si.squared));
}

fn parse_si(map: &ConfigMap) -> Result<SiHypers> {
    Ok(SiHypers {
        lambda: map.get("lambda_si").map(|v| parse_as("lambda_si", v)).transpose()?.unwrap_or(1.0),
        eps: map.get("si_eps").map(|v| parse_as("si_eps", v)).transpose()?.unwrap_or(1e-3),
        squared: map.get("si_squared").map(|v| parse_bool("si_squared", v)).transpose()?.unwrap_or(false),
    })
}

fn parse_fraction(map: &ConfigMap) -> Result<f64> {
    map.get("masked_fraction")
        .map(|v| parse_as("masked_fraction", v))
        .transpose()
        .map(|o| o.unwrap_or(0.8))
}

fn parse_hnet(map: &ConfigMap) -> Result<HnetHypers> {
    let hidden = match map.get("hnet_hidden") {
        Some(v) => v
            .split(',')
            .map(|s| parse_as::<usize>("hnet_hidden", s.trim()))
            .collect::<Result<Vec<_>>>()?,
        None => vec![32, 32],
    };
    if hidden.is_empty() {
        return Err(Error::Config("hnet_hidden needs at least one layer".into()));
    }
    Ok(HnetHypers {
        beta: map.get("beta").map(|v| parse_as("beta", v)).transpose()?.unwrap_or(1.0),
        emb_std: map.get("emb_std").map(|v| parse_as("emb_std", v)).transpose()?.unwrap_or(1.0),
        chunk_out: map.get("chunk_out").map(|v| parse_as("chunk_out", v)).transpose()?.unwrap_or(500),
        task_emb_dim: map.get("task_emb_dim").map(|v| parse_as("task_emb_dim", v)).transpose()?.unwrap_or(16),
        chunk_emb_dim: map.get("chunk_emb_dim").map(|v| parse_as("chunk_emb_dim", v)).transpose()?.unwrap_or(16),
        hidden,
        out_scale: map.get("out_scale").map(|v| parse_as("out_scale", v)).transpose()?.unwrap_or(0.1),
        c_subset: map.get("c_subset").map(|v| parse_as("c_subset", v)).transpose()?.unwrap_or(0),
    })
}

fn parse_replay(map: &ConfigMap) -> Result<ReplayHypers> {
    let likelihood = match map.get("likelihood").unwrap_or("bernoulli") {
        "bernoulli" => Likelihood::Bernoulli,
        "gaussian" => Likelihood::Gaussian {
            tau: map.get("tau").map(|v| parse_as("tau", v)).transpose()?.unwrap_or(1.0),
        },
        other => return Err(Error::Config(format!("unknown likelihood {:?}", other))),
    };
    if map.get("tau").is_some() && matches!(likelihood, Likelihood::Bernoulli) {
        return Err(Error::Config("tau only applies to the gaussian likelihood".into()));
    }
    Ok(ReplayHypers {
        n_z: map.get("n_z").map(|v| parse_as("n_z", v)).transpose()?.unwrap_or(8),
        dec_n_h: map.get("dec_n_h").map(|v| parse_as("dec_n_h", v)).transpose()?.unwrap_or(64),
        lambda_rec: map.get("lambda_rec").map(|v| parse_as("lambda_rec", v)).transpose()?.unwrap_or(1.0),
        lambda_pm: map.get("lambda_pm").map(|v| parse_as("lambda_pm", v)).transpose()?.unwrap_or(1.0),
        lambda_distill: map
            .get("lambda_distill")
            .map(|v| parse_as("lambda_distill", v))
            .transpose()?
            .unwrap_or(1.0),
        likelihood,
        sample_bits: map.get("sample_bits").map(|v| parse_bool("sample_bits", v)).transpose()?.unwrap_or(true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\n# permuted copy, online ewc\n[experiment]\nseed = 7\nk_tasks = 3\n\n[data]\nvariant = permuted\np = 5\ni = 5\n\n[model]\nmodel = vanilla\nn_h = 64\n\n[train]\nlr = 0.001\nbatch = 32\niters = 10\n\n[method]\nmethod = ewc\nlambda_ewc = 250\n";

    #[test]
    fn parses_sections_comments_and_values() {
        let map = ConfigMap::parse(SAMPLE).unwrap();
        let cfg = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.k_tasks, 3);
        assert_eq!(cfg.n_h, 64);
        assert_eq!(cfg.method, MethodConfig::Ewc { lambda: 250.0 });
        // Defaults fill whatever the file leaves unset.
        assert_eq!(cfg.iters, 10);
        assert_eq!(cfg.clip, Some(100.0));
        assert!(cfg.orth_init);
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut map = ConfigMap::parse(SAMPLE).unwrap();
        map.set_override("lambda_ewc=9000").unwrap();
        map.set_override("clip=none").unwrap();
        let cfg = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(cfg.method, MethodConfig::Ewc { lambda: 9000.0 });
        assert_eq!(cfg.clip, None);
    }

    #[test]
    fn unknown_and_misplaced_keys_are_rejected() {
        let mut map = ConfigMap::parse(SAMPLE).unwrap();
        map.set_override("lamda_ewc=5").unwrap(); // typo
        let err = ExperimentConfig::from_map(&map).unwrap_err().to_string();
        assert!(err.contains("unknown key"), "{}", err);

        let mut map = ConfigMap::parse(SAMPLE).unwrap();
        map.set_override("lambda_si=5").unwrap(); // belongs to si, not ewc
        let err = ExperimentConfig::from_map(&map).unwrap_err().to_string();
        assert!(err.contains("does not apply"), "{}", err);

        assert!(ConfigMap::parse("key_without_value\n").is_err());
        assert!(ConfigMap::parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn hash_tracks_content_not_formatting() {
        let a = ExperimentConfig::from_map(&ConfigMap::parse(SAMPLE).unwrap()).unwrap();
        let reordered = SAMPLE.lines().rev().collect::<Vec<_>>().join("\n");
        // Reversing lines scrambles sections but keeps the same assignments.
        let b = ExperimentConfig::from_map(&ConfigMap::parse(&reordered).unwrap()).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());

        let mut map = ConfigMap::parse(SAMPLE).unwrap();
        map.set_override("seed=8").unwrap();
        let c = ExperimentConfig::from_map(&map).unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn method_defaults_cover_every_method() {
        for method in ["finetune", "scratch", "multitask", "ewc", "si", "masking", "masking_si", "hnet", "coreset", "replay"] {
            let mut map = ConfigMap::parse("k_tasks=2\n").unwrap();
            map.set_override(&format!("method={}", method)).unwrap();
            let cfg = ExperimentConfig::from_map(&map).unwrap();
            assert_eq!(cfg.method.name(), method);
            assert!(!cfg.config_hash().is_empty());
        }
    }

    #[test]
    fn bad_values_are_config_errors() {
        for bad in ["k_tasks=0", "lr=-1", "masked_fraction=1.5", "batch=0", "likelihood=poisson"] {
            let mut map = ConfigMap::parse("method=masking\n").unwrap();
            if bad.starts_with("likelihood") {
                map = ConfigMap::parse("method=replay\n").unwrap();
            }
            map.set_override(bad).unwrap();
            assert!(ExperimentConfig::from_map(&map).is_err(), "{} should fail", bad);
        }
    }
}
