//! Synthetic isotropic Gaussian mixtures, balanced or long-tailed.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{DatasetBundle, FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::rng;

/// How per-class sample counts are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassSizes {
    /// `n` samples split as evenly as possible (earlier classes get the remainder).
    Balanced { n: usize },
    /// `n` samples with geometric decay so that head / tail = `ratio`.
    LongTailed { n: usize, ratio: f64 },
    /// Explicit counts, one per class.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub c: usize,
    pub d: usize,
    pub sizes: ClassSizes,
    pub mean_separation: f64,
    pub within_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            c: 10,
            d: 16,
            sizes: ClassSizes::Balanced { n: 2000 },
            mean_separation: 4.0,
            within_std: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::Config(format!("synth.c must be >= 2, got {}", self.c)));
        }
        if self.d < 1 {
            return Err(Error::Config("synth.d must be >= 1".into()));
        }
        if !(self.mean_separation > 0.0 && self.mean_separation.is_finite()) {
            return Err(Error::Config("synth.mean_separation must be > 0".into()));
        }
        if !(self.within_std > 0.0 && self.within_std.is_finite()) {
            return Err(Error::Config("synth.within_std must be > 0".into()));
        }
        if let ClassSizes::LongTailed { ratio, .. } = self.sizes {
            if !(ratio >= 1.0 && ratio.is_finite()) {
                return Err(Error::Config(format!("synth.imbalance_ratio must be >= 1, got {ratio}")));
            }
        }
        Ok(())
    }

    /// Resolved per-class counts. Fails if any class would get fewer than 2 samples.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let counts = match &self.sizes {
            ClassSizes::Balanced { n } => {
                (0..self.c).map(|k| n / self.c + usize::from(k < n % self.c)).collect()
            }
            ClassSizes::LongTailed { n, ratio } => long_tailed_sizes(*n, self.c, *ratio),
            ClassSizes::Explicit(v) => {
                if v.len() != self.c {
                    return Err(Error::Config(format!("{} class sizes given for c={}", v.len(), self.c)));
                }
                v.clone()
            }
        };
        if let Some((k, &s)) = counts.iter().enumerate().find(|(_, &s)| s < 2) {
            return Err(Error::Config(format!("class {k} would have {s} samples (need >= 2)")));
        }
        Ok(counts)
    }
}

/// Geometric class sizes summing to `n` whose head/tail ratio is `ratio`
/// (exactly so whenever `ratio * tail` is an integer).
///
/// The tail size is fixed first, the head is `round(ratio * tail)`, and the
/// rounding residual is spread over the middle classes.
pub fn long_tailed_sizes(n: usize, c: usize, ratio: f64) -> Vec<usize> {
    if c == 1 {
        return vec![n];
    }
    let rel: Vec<f64> = (0..c).map(|k| ratio.powf(1.0 - k as f64 / (c - 1) as f64)).collect();
    let tail = (n as f64 / rel.iter().sum::<f64>()).round().max(0.0);
    let mut sizes: Vec<usize> = rel.iter().map(|r| (tail * r).round() as usize).collect();
    if c > 2 {
        let mut diff = n as i64 - sizes.iter().sum::<usize>() as i64;
        let mid_total: usize = sizes[1..c - 1].iter().sum();
        if mid_total > 0 {
            let base = diff;
            for s in sizes[1..c - 1].iter_mut() {
                let share = (base as f64 * *s as f64 / mid_total as f64).trunc() as i64;
                *s = (*s as i64 + share).max(0) as usize;
                diff -= share;
            }
        }
        // leftover units go round-robin over the middle classes
        let mut k = 1;
        while diff != 0 {
            let step = diff.signum();
            if step < 0 && sizes[1..c - 1].iter().all(|&s| s == 0) {
                break;
            }
            if step > 0 || sizes[k] > 0 {
                sizes[k] = (sizes[k] as i64 + step) as usize;
                diff -= step;
            }
            k = if k + 1 >= c - 1 { 1 } else { k + 1 };
        }
    }
    sizes
}

fn place_means(c: usize, d: usize, sep: f64, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let mut radius = sep;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(c);
    while means.len() < c {
        let mut placed = false;
        for _ in 0..500 {
            let cand: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..=radius)).collect();
            let ok = means.iter().all(|m| {
                m.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= sep
            });
            if ok {
                means.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            radius *= 1.1;
        }
    }
    means
}

/// Draws a labelled Gaussian mixture. Samples are stored class-contiguously.
pub fn generate_gaussian_mixture(cfg: &SynthConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let counts = cfg.class_counts()?;
    let mut rng = rng::stream(cfg.seed, "synth");
    let means = place_means(cfg.c, cfg.d, cfg.mean_separation, &mut rng);
    let n: usize = counts.iter().sum();
    let mut data = Vec::with_capacity(n * cfg.d);
    let mut labels = Vec::with_capacity(n);
    for (k, (&count, mean)) in counts.iter().zip(&means).enumerate() {
        for _ in 0..count {
            for &mu in mean {
                let z: f64 = rng.sample(StandardNormal);
                data.push(mu + cfg.within_std * z);
            }
            labels.push(k);
        }
    }
    let features = FeatureMatrix::new(n, cfg.d, data)?;
    DatasetBundle::new(features, Some(LabelVector::new(labels, cfg.c)?), None)
}
