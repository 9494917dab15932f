//! Pseudo-label generation: k-means (k-means++ seeding, Lloyd iterations,
//! best of several restarts) and argmax over classifier logits.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::feature_store::{FeatureMatrix, LabelVector};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub c: usize,
    pub max_iter: usize,
    /// Stop when the relative inertia decrease falls to or below this.
    pub tol: f64,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { c: 10, max_iter: 300, tol: 1e-6, n_init: 10, seed: 0 }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::Config(format!("kmeans.c must be >= 2, got {}", self.c)));
        }
        if self.max_iter == 0 || self.n_init == 0 {
            return Err(Error::Config("kmeans.max_iter and kmeans.n_init must be positive".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config("kmeans.tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    /// Row-major `c x d`.
    pub centroids: Vec<f64>,
    pub c: usize,
    pub d: usize,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after seeding and after every Lloyd iteration of the winning restart.
    pub inertia_trace: Vec<f64>,
    /// Index of the winning restart.
    pub restart: usize,
}

impl KMeansModel {
    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k * self.d..(k + 1) * self.d]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (lower index on ties) and the summed squared distance.
fn nearest(x: &FeatureMatrix, centroids: &[f64], c: usize, labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let d = x.d();
    let mut total = 0.0;
    for (i, row) in x.rows().enumerate() {
        let mut best = (0, f64::INFINITY);
        for k in 0..c {
            let dist = sq_dist(row, &centroids[k * d..(k + 1) * d]);
            if dist < best.1 {
                best = (k, dist);
            }
        }
        labels[i] = best.0;
        dists[i] = best.1;
        total += best.1;
    }
    total
}

fn plus_plus_init(x: &FeatureMatrix, c: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let (n, d) = (x.n(), x.d());
    let mut centroids = Vec::with_capacity(c * d);
    centroids.extend_from_slice(x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x.rows().map(|r| sq_dist(r, &centroids[..d])).collect();
    for _ in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can run past the end; land on the last positive weight
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(x.row(pick));
        let new_c = centroids[start..].to_vec();
        for (v, r) in d2.iter_mut().zip(x.rows()) {
            *v = v.min(sq_dist(r, &new_c));
        }
    }
    centroids
}

/// Recomputes centroids as member means; empty clusters take the point
/// farthest from its current centroid (which then moves to that cluster).
fn update_centroids(x: &FeatureMatrix, labels: &mut [usize], dists: &[f64], c: usize, centroids: &mut [f64]) {
    let d = x.d();
    let mut counts = vec![0usize; c];
    let mut sums = vec![0.0; c * d];
    for (i, row) in x.rows().enumerate() {
        let k = labels[i];
        counts[k] += 1;
        sums[k * d..(k + 1) * d].iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    let mut taken = vec![false; x.n()];
    for k in 0..c {
        if counts[k] > 0 {
            let inv = 1.0 / counts[k] as f64;
            centroids[k * d..(k + 1) * d]
                .iter_mut()
                .zip(&sums[k * d..(k + 1) * d])
                .for_each(|(m, s)| *m = s * inv);
        }
    }
    for k in 0..c {
        if counts[k] > 0 {
            continue;
        }
        let far = (0..x.n())
            .filter(|&i| !taken[i] && counts[labels[i]] > 1)
            .fold(None::<(usize, f64)>, |best, i| match best {
                Some((_, bd)) if dists[i] <= bd => best,
                _ => Some((i, dists[i])),
            });
        if let Some((i, _)) = far {
            taken[i] = true;
            counts[labels[i]] -= 1;
            labels[i] = k;
            counts[k] = 1;
            centroids[k * d..(k + 1) * d].copy_from_slice(x.row(i));
        }
    }
}

fn run_once(x: &FeatureMatrix, cfg: &KMeansConfig, restart: usize) -> KMeansModel {
    let mut rng = rng::stream(rng::derive_seed(cfg.seed, "kmeans"), &format!("restart-{restart}"));
    let (n, d, c) = (x.n(), x.d(), cfg.c);
    let mut centroids = plus_plus_init(x, c, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut inertia = nearest(x, &centroids, c, &mut labels, &mut dists);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    let mut next_labels = vec![0usize; n];
    while iterations < cfg.max_iter {
        iterations += 1;
        update_centroids(x, &mut labels, &dists, c, &mut centroids);
        let new_inertia = nearest(x, &centroids, c, &mut next_labels, &mut dists);
        trace.push(new_inertia);
        let stable = next_labels == labels;
        let small = inertia - new_inertia <= cfg.tol * inertia;
        std::mem::swap(&mut labels, &mut next_labels);
        inertia = new_inertia;
        if stable || small {
            break;
        }
    }
    KMeansModel { centroids, c, d, inertia, iterations_run: iterations, inertia_trace: trace, restart }
}

/// Best of `n_init` restarts by inertia (earliest restart on ties).
pub fn kmeans_fit(features: &FeatureMatrix, cfg: &KMeansConfig) -> Result<KMeansModel> {
    cfg.validate()?;
    if features.n() < cfg.c {
        return Err(Error::Config(format!("k-means needs n >= c (n={}, c={})", features.n(), cfg.c)));
    }
    let mut best: Option<KMeansModel> = None;
    for r in 0..cfg.n_init {
        let m = run_once(features, cfg, r);
        if best.as_ref().is_none_or(|b| m.inertia < b.inertia) {
            best = Some(m);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Nearest-centroid labels (Euclidean; ties to the lower index).
pub fn assign(model: &KMeansModel, features: &FeatureMatrix) -> Result<LabelVector> {
    if features.d() != model.d {
        return Err(Error::Shape(format!("features have d={}, model d={}", features.d(), model.d)));
    }
    let mut labels = vec![0usize; features.n()];
    let mut dists = vec![0.0; features.n()];
    nearest(features, &model.centroids, model.c, &mut labels, &mut dists);
    LabelVector::new(labels, model.c)
}

/// Fit and label in one step.
pub fn kmeans_labels(features: &FeatureMatrix, cfg: &KMeansConfig) -> Result<(KMeansModel, LabelVector)> {
    let model = kmeans_fit(features, cfg)?;
    let labels = assign(&model, features)?;
    Ok((model, labels))
}

/// Per-row argmax of an `n x c` logit matrix, ties to the lower index.
pub fn softmax_assign(logits: &FeatureMatrix) -> LabelVector {
    let labels = logits
        .rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
                .0
        })
        .collect();
    LabelVector::new(labels, logits.d()).expect("argmax is within [0, c)")
}
