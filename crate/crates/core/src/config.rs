//! Flat `key=value` run configuration.
//!
//! One entry per line, `#` starts a comment, keys carry a section prefix
//! (`filter.m=50`). Unknown keys and out-of-range values are rejected with
//! the offending key and line number.
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | 0 |
//! | `synth.c`, `synth.d`, `synth.n` | 10, 16, 2000 |
//! | `synth.imbalance_ratio` | 1 (balanced) |
//! | `synth.class_sizes` | unset (comma list overrides n/ratio) |
//! | `synth.mean_separation`, `synth.within_std` | 4.0, 1.0 |
//! | `filter.m`, `filter.fixed_k`, `filter.retrieval_source` | 50, unset, `target_only` |
//! | `kmeans.c`, `kmeans.max_iter`, `kmeans.tol`, `kmeans.n_init` | number of classes, 300, 1e-6, 10 |
//! | `trainer.batch_size`, `trainer.base_lr`, `trainer.predictor_lr_mult` | 256, 0.05, 10 |
//! | `trainer.ema_momentum`, `trainer.sigma`, `trainer.weight_mode` | 0.996, 0.001, `w_ours_flow` |
//! | `trainer.pretrain_epochs`, `trainer.warmup_epochs`, `trainer.boost_epochs` | 20, 10, 50 |
//! | `trainer.hidden_dims`, `trainer.out_dim` | 64, 32 |
//! | `trainer.eval_every_epoch`, `trainer.audit` | true, false |
//! | `augment.jitter_std`, `augment.dropout_prob` | 0.05, 0.1 |
//! | `metrics.knn_k`, `metrics.silhouette_max_n`, `metrics.structure_labels` | 10, 5000, `truth` |
//! | `select.kmeans`, `select.k_sweep`, `select.batch_size` | false, false, trainer batch size |

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::feature_store::{ClassSizes, SynthConfig};
use crate::rng;
use crate::trainer::TrainerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectOptions {
    /// Compute pseudo-labels with k-means instead of reading them from the dataset.
    pub kmeans: bool,
    /// Also emit the full score curve of every batch.
    pub k_sweep: bool,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub trainer: TrainerConfig,
    pub select: SelectOptions,
    /// Whether `kmeans.c` was given explicitly.
    pub kmeans_c_explicit: bool,
    n: usize,
    imbalance_ratio: f64,
    class_sizes: Option<Vec<usize>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            synth: SynthConfig::default(),
            trainer: TrainerConfig::default(),
            select: SelectOptions { kmeans: false, k_sweep: false, batch_size: None },
            kmeans_c_explicit: false,
            n: 2000,
            imbalance_ratio: 1.0,
            class_sizes: None,
        };
        cfg.finish();
        cfg
    }
}

fn bad(line: usize, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {key}: {msg}"))
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| bad(line, key, format!("cannot parse {v:?}: {e}")))
}

fn positive_f(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(line, key, v)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(bad(line, key, format!("must be > 0, got {x}")));
    }
    Ok(x)
}

fn nonneg_f(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(line, key, v)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(bad(line, key, format!("must be >= 0, got {x}")));
    }
    Ok(x)
}

fn at_least(line: usize, key: &str, v: &str, min: usize) -> Result<usize> {
    let x: usize = num(line, key, v)?;
    if x < min {
        return Err(bad(line, key, format!("must be >= {min}, got {x}")));
    }
    Ok(x)
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(line, key, format!("expected true/false, got {v:?}"))),
    }
}

fn list(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| at_least(line, key, s.trim(), 1)).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key=value, got {content:?}")))?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        cfg.finish();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let t = &mut self.trainer;
        match key {
            "seed" => self.seed = num(line, key, v)?,
            "synth.c" => self.synth.c = at_least(line, key, v, 2)?,
            "synth.d" => self.synth.d = at_least(line, key, v, 1)?,
            "synth.n" => self.n = at_least(line, key, v, 2)?,
            "synth.imbalance_ratio" => {
                let r: f64 = num(line, key, v)?;
                if !(r >= 1.0 && r.is_finite()) {
                    return Err(bad(line, key, format!("must be >= 1, got {r}")));
                }
                self.imbalance_ratio = r;
            }
            "synth.class_sizes" => self.class_sizes = Some(list(line, key, v)?),
            "synth.mean_separation" => self.synth.mean_separation = positive_f(line, key, v)?,
            "synth.within_std" => self.synth.within_std = positive_f(line, key, v)?,
            "filter.m" => t.filter.m = at_least(line, key, v, 1)?,
            "filter.fixed_k" => {
                t.filter.fixed_k = match v {
                    "" | "none" => None,
                    _ => Some(at_least(line, key, v, 1)?),
                }
            }
            "filter.retrieval_source" => t.filter.retrieval_source = v.parse().map_err(|e| bad(line, key, e))?,
            "kmeans.c" => {
                t.kmeans.c = at_least(line, key, v, 2)?;
                self.kmeans_c_explicit = true;
            }
            "kmeans.max_iter" => t.kmeans.max_iter = at_least(line, key, v, 1)?,
            "kmeans.tol" => t.kmeans.tol = positive_f(line, key, v)?,
            "kmeans.n_init" => t.kmeans.n_init = at_least(line, key, v, 1)?,
            "trainer.batch_size" => t.batch_size = at_least(line, key, v, 2)?,
            "trainer.base_lr" => t.base_lr = nonneg_f(line, key, v)?,
            "trainer.predictor_lr_mult" => t.predictor_lr_mult = nonneg_f(line, key, v)?,
            "trainer.ema_momentum" => {
                let m = nonneg_f(line, key, v)?;
                if m > 1.0 {
                    return Err(bad(line, key, format!("must lie in [0, 1], got {m}")));
                }
                t.ema_momentum = m;
            }
            "trainer.pretrain_epochs" => t.pretrain_epochs = num(line, key, v)?,
            "trainer.warmup_epochs" => t.warmup_epochs = num(line, key, v)?,
            "trainer.boost_epochs" => t.boost_epochs = num(line, key, v)?,
            "trainer.sigma" => t.sigma = nonneg_f(line, key, v)?,
            "trainer.weight_mode" => t.weight_mode = v.parse().map_err(|e| bad(line, key, e))?,
            "trainer.hidden_dims" => t.hidden_dims = if v.is_empty() { Vec::new() } else { list(line, key, v)? },
            "trainer.out_dim" => t.out_dim = at_least(line, key, v, 1)?,
            "trainer.eval_every_epoch" => t.eval_every_epoch = boolean(line, key, v)?,
            "trainer.audit" => t.audit = boolean(line, key, v)?,
            "augment.jitter_std" => t.augment.jitter_std = nonneg_f(line, key, v)?,
            "augment.dropout_prob" => {
                let p = nonneg_f(line, key, v)?;
                if p >= 1.0 {
                    return Err(bad(line, key, format!("must lie in [0, 1), got {p}")));
                }
                t.augment.dropout_prob = p;
            }
            "metrics.knn_k" => t.report.knn_k = at_least(line, key, v, 1)?,
            "metrics.structure_labels" => t.report.structure = v.parse().map_err(|e| bad(line, key, e))?,
            "metrics.silhouette_max_n" => t.report.silhouette.max_n = at_least(line, key, v, 3)?,
            "select.kmeans" => self.select.kmeans = boolean(line, key, v)?,
            "select.k_sweep" => self.select.k_sweep = boolean(line, key, v)?,
            "select.batch_size" => self.select.batch_size = Some(at_least(line, key, v, 2)?),
            _ => return Err(Error::Config(format!("line {line}: unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Propagates the root seed and resolves derived fields.
    fn finish(&mut self) {
        self.synth.seed = self.seed;
        self.trainer.seed = self.seed;
        self.trainer.kmeans.seed = rng::derive_seed(self.seed, "kmeans");
        self.trainer.report.silhouette.seed = rng::derive_seed(self.seed, "silhouette");
        self.synth.sizes = match &self.class_sizes {
            Some(v) => ClassSizes::Explicit(v.clone()),
            None if self.imbalance_ratio > 1.0 => ClassSizes::LongTailed { n: self.n, ratio: self.imbalance_ratio },
            None => ClassSizes::Balanced { n: self.n },
        };
        if !self.kmeans_c_explicit {
            self.trainer.kmeans.c = self.synth.c;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.trainer.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.finish();
        self
    }

    /// Uses `classes` for k-means unless `kmeans.c` was set explicitly.
    pub fn adopt_class_count(&mut self, classes: usize) {
        if !self.kmeans_c_explicit && classes >= 2 {
            self.trainer.kmeans.c = classes;
        }
    }
}
