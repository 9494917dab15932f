//! Adaptive k-NN consistency filtering.
//!
//! For a batch, the `m` nearest within-batch neighbours of every sample are
//! retrieved once. A sample is consistent at `k` when its first `k`
//! neighbours all carry its pseudo-label. The number of consistent samples
//! `n_s(k)` is nonincreasing in `k`, and the chosen `k*` maximises
//! `k * n_s(k) / n_B`. The selected set holds the samples consistent at `k*`.

use std::cmp::Ordering;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::feature_store::{dot, FeatureMatrix, LabelVector};

/// Which branch's features drive neighbour retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RetrievalSource {
    #[default]
    TargetOnly,
    /// Mean of the target and online cosine matrices.
    OnlineTargetHybrid,
}

impl FromStr for RetrievalSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_only" => Ok(Self::TargetOnly),
            "online_target_hybrid" => Ok(Self::OnlineTargetHybrid),
            other => Err(Error::Config(format!("unknown retrieval source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Largest candidate k.
    pub m: usize,
    /// Skips the adaptive search and uses this k.
    pub fixed_k: Option<usize>,
    pub retrieval_source: RetrievalSource,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { m: 50, fixed_k: None, retrieval_source: RetrievalSource::TargetOnly }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("filter.m must be >= 1".into()));
        }
        if let Some(k) = self.fixed_k {
            if k == 0 || k > self.m {
                return Err(Error::Config(format!("filter.fixed_k={k} must lie in [1, {}]", self.m)));
            }
        }
        Ok(())
    }
}

/// A batch slice: target features, optional online features and pseudo-labels.
#[derive(Debug, Clone)]
pub struct BatchView<'a> {
    pub z_t: &'a FeatureMatrix,
    pub z_o: Option<&'a FeatureMatrix>,
    pub labels: &'a LabelVector,
}

impl<'a> BatchView<'a> {
    pub fn new(z_t: &'a FeatureMatrix, z_o: Option<&'a FeatureMatrix>, labels: &'a LabelVector) -> Result<Self> {
        let n = z_t.n();
        if n < 2 {
            return Err(Error::Shape(format!("batch needs at least 2 samples, got {n}")));
        }
        if labels.len() != n {
            return Err(Error::LengthMismatch { left: n, right: labels.len() });
        }
        if !z_t.is_normalized() {
            return Err(Error::Value("target features must be L2-normalized".into()));
        }
        if let Some(z) = z_o {
            if z.n() != n || z.d() != z_t.d() {
                return Err(Error::Shape(format!("online features {}x{} vs target {}x{}", z.n(), z.d(), n, z_t.d())));
            }
            if !z.is_normalized() {
                return Err(Error::Value("online features must be L2-normalized".into()));
            }
        }
        Ok(Self { z_t, z_o, labels })
    }

    pub fn len(&self) -> usize {
        self.z_t.n()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Top-`m` within-batch neighbours per sample, self excluded, sorted by
/// descending similarity with ties broken by ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    m: usize,
    n: usize,
    neighbors: Vec<usize>,
    sims: Vec<f64>,
}

impl NeighborTable {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.m..(i + 1) * self.m]
    }

    pub fn sims(&self, i: usize) -> &[f64] {
        &self.sims[i * self.m..(i + 1) * self.m]
    }
}

/// Cosine similarity matrix of unit-norm rows.
pub fn cosine_matrix(z: &FeatureMatrix) -> Vec<f64> {
    let n = z.n();
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        let ri = z.row(i);
        for j in i..n {
            let v = dot(ri, z.row(j));
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    s
}

/// Descending similarity, ascending index on ties.
#[inline]
pub(crate) fn neighbor_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Retrieves neighbours once for the whole batch. `m` is clamped to `n_B - 1`.
pub fn build_neighbor_table(batch: &BatchView<'_>, cfg: &FilterConfig) -> Result<NeighborTable> {
    cfg.validate()?;
    let n = batch.len();
    let m = if cfg.m > n - 1 {
        warn!("neighbour budget m={} clamped to n_B-1={}", cfg.m, n - 1);
        n - 1
    } else {
        cfg.m
    };
    let sim = match cfg.retrieval_source {
        RetrievalSource::TargetOnly => cosine_matrix(batch.z_t),
        RetrievalSource::OnlineTargetHybrid => {
            let z_o = batch
                .z_o
                .ok_or_else(|| Error::Config("hybrid retrieval requires online features".into()))?;
            let mut s = cosine_matrix(batch.z_t);
            let so = cosine_matrix(z_o);
            s.iter_mut().zip(&so).for_each(|(a, b)| *a = 0.5 * (*a + b));
            s
        }
    };

    let mut neighbors = Vec::with_capacity(n * m);
    let mut sims = Vec::with_capacity(n * m);
    let mut cand: Vec<(usize, f64)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (j, sim[i * n + j])));
        if m < cand.len() {
            cand.select_nth_unstable_by(m - 1, |a, b| neighbor_order(*a, *b));
            cand.truncate(m);
        }
        cand.sort_unstable_by(|a, b| neighbor_order(*a, *b));
        neighbors.extend(cand.iter().map(|c| c.0));
        sims.extend(cand.iter().map(|c| c.1));
    }
    Ok(NeighborTable { m, n, neighbors, sims })
}

/// Per-k consistency counts and scores derived from one neighbour table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCurve {
    /// `counts[k-1] = n_s(k)`.
    pub counts: Vec<usize>,
    /// `numerators[k-1] = k * n_s(k)`; the score is this over `n_B`.
    pub numerators: Vec<usize>,
    /// `scores[k-1] = k * n_s(k) / n_B`.
    pub scores: Vec<f64>,
    pub n_b: usize,
}

/// Number of leading neighbours that share each sample's label.
fn agreement_depths(table: &NeighborTable, labels: &LabelVector) -> Vec<usize> {
    (0..table.n)
        .map(|i| {
            let li = labels.get(i);
            table.neighbors(i).iter().take_while(|&&j| labels.get(j) == li).count()
        })
        .collect()
}

pub fn selection_scores(table: &NeighborTable, labels: &LabelVector) -> Result<ScoreCurve> {
    if labels.len() != table.n {
        return Err(Error::LengthMismatch { left: table.n, right: labels.len() });
    }
    let depths = agreement_depths(table, labels);
    // histogram of depths, then suffix sums give n_s(k) = #{depth >= k}
    let mut hist = vec![0usize; table.m + 1];
    for &d in &depths {
        hist[d] += 1;
    }
    let mut counts = vec![0usize; table.m];
    let mut acc = 0;
    for k in (1..=table.m).rev() {
        acc += hist[k];
        counts[k - 1] = acc;
    }
    let n_b = table.n;
    let numerators: Vec<usize> = counts.iter().enumerate().map(|(i, &c)| (i + 1) * c).collect();
    let scores = numerators.iter().map(|&v| v as f64 / n_b as f64).collect();
    Ok(ScoreCurve { counts, numerators, scores, n_b })
}

/// Arg-max over k of the score, ties toward the larger k. Returns a 1-based k.
pub fn select_adaptive_k(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s < b => {}
            _ => best = Some((i + 1, s)),
        }
    }
    best.map(|b| b.0)
}

/// Same rule on the exact integer numerators `k * n_s(k)`.
fn argmax_numerators(num: &[usize]) -> usize {
    let mut best = (1, num[0]);
    for (i, &v) in num.iter().enumerate().skip(1) {
        if v >= best.1 {
            best = (i + 1, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub curve: ScoreCurve,
    pub k_star: usize,
    pub mask: Vec<bool>,
    /// Batch positions of the selected samples, ascending.
    pub x_h: Vec<usize>,
}

pub fn filter_high_confidence(table: &NeighborTable, labels: &LabelVector, k_star: usize) -> Result<SelectionResult> {
    if k_star == 0 || k_star > table.m {
        return Err(Error::Value(format!("k_star={k_star} outside [1, {}]", table.m)));
    }
    let curve = selection_scores(table, labels)?;
    let depths = agreement_depths(table, labels);
    let mask: Vec<bool> = depths.iter().map(|&d| d >= k_star).collect();
    let x_h: Vec<usize> = mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    debug_assert_eq!(x_h.len(), curve.counts[k_star - 1]);
    Ok(SelectionResult { curve, k_star, mask, x_h })
}

/// Full selection for one batch: retrieval, score curve, k*, and X_h.
pub fn select_batch(batch: &BatchView<'_>, cfg: &FilterConfig) -> Result<SelectionResult> {
    let table = build_neighbor_table(batch, cfg)?;
    let k_star = match cfg.fixed_k {
        Some(k) => k.min(table.m),
        None => {
            let curve = selection_scores(&table, batch.labels)?;
            argmax_numerators(&curve.numerators)
        }
    };
    filter_high_confidence(&table, batch.labels, k_star)
}
