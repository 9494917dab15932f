//! Feature-space stand-in for weak image augmentations: Gaussian jitter
//! followed by coordinate dropout.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::feature_store::FeatureMatrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Jitter std as a fraction of each column's standard deviation.
    pub jitter_std: f64,
    pub dropout_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { jitter_std: 0.05, dropout_prob: 0.1 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return Err(Error::Config("augment.jitter_std must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config("augment.dropout_prob must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Augmentation with per-column jitter scales resolved against a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmenter {
    pub noise_scale: Vec<f64>,
    pub dropout_prob: f64,
}

impl Augmenter {
    pub fn for_data(cfg: &AugmentConfig, data: &FeatureMatrix) -> Result<Self> {
        cfg.validate()?;
        let noise_scale = data.column_std().into_iter().map(|s| s * cfg.jitter_std).collect();
        Ok(Self { noise_scale, dropout_prob: cfg.dropout_prob })
    }

    /// Jitter then dropout. Draws nothing from `rng` for disabled stages.
    pub fn apply(&self, x: &FeatureMatrix, rng: &mut Rng) -> Result<FeatureMatrix> {
        if x.d() != self.noise_scale.len() {
            return Err(Error::Shape(format!("augmenter built for d={}, got {}", self.noise_scale.len(), x.d())));
        }
        let jitter = self.noise_scale.iter().any(|&s| s > 0.0);
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(x.d()) {
            for (v, &s) in row.iter_mut().zip(&self.noise_scale) {
                if jitter {
                    let e: f64 = rng.sample(StandardNormal);
                    *v += s * e;
                }
                if self.dropout_prob > 0.0 && rng.random::<f64>() < self.dropout_prob {
                    *v = 0.0;
                }
            }
        }
        FeatureMatrix::new(x.n(), x.d(), data)
    }
}
