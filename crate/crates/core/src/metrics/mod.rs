//! Clustering evaluation (NMI, Hungarian ACC, ARI) and feature-space
//! structure diagnostics (silhouette, k-NN accuracy, intra/inter-class
//! cosine similarity, class imbalance).

pub mod hungarian;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::feature_store::{dot, FeatureMatrix, LabelVector};
use crate::knn_filter::neighbor_order;
use crate::rng;

/// Counts of (row label, column label) pairs, with labels compacted to
/// consecutive indices in ascending order of their original values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
        }
        let ra = compact(a);
        let rb = compact(b);
        let rows = ra.iter().max().map_or(0, |m| m + 1);
        let cols = rb.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0usize; cols]; rows];
        for (&i, &j) in ra.iter().zip(&rb) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self { counts, row_sums, col_sums, n: a.len() })
    }
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    for &l in labels {
        map.entry(l).or_insert(0);
    }
    for (k, v) in map.values_mut().enumerate() {
        *v = k;
    }
    labels.iter().map(|l| map[l]).collect()
}

fn entropy(sums: &[usize], n: usize) -> f64 {
    let n = n as f64;
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with geometric-mean normalization.
pub fn nmi(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::MetricUndefined("NMI of empty labelings".into()));
    }
    let t = ContingencyTable::new(a.labels(), b.labels())?;
    let ha = entropy(&t.row_sums, t.n);
    let hb = entropy(&t.col_sums, t.n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let n = t.n as f64;
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Clustering accuracy under the best one-to-one cluster-to-class map.
pub fn acc(pred: &LabelVector, truth: &LabelVector) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::MetricUndefined("ACC of empty labelings".into()));
    }
    let t = ContingencyTable::new(pred.labels(), truth.labels())?;
    let (matched, _) = hungarian::max_weight_matching(&t.counts);
    Ok(matched as f64 / t.n as f64)
}

/// Best cluster -> class map (original label values), by Hungarian matching.
/// Clusters left unmatched map to `None`.
pub fn best_label_map(pred: &LabelVector, truth: &LabelVector) -> Result<BTreeMap<usize, Option<usize>>> {
    let t = ContingencyTable::new(pred.labels(), truth.labels())?;
    let pred_vals: Vec<usize> = pred.labels().iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let truth_vals: Vec<usize> =
        truth.labels().iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let (_, assignment) = hungarian::max_weight_matching(&t.counts);
    Ok(pred_vals
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, truth_vals.get(assignment[i]).copied()))
        .collect())
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts.
pub fn ari(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    if a.len() < 2 {
        return Err(Error::MetricUndefined("ARI needs at least 2 samples".into()));
    }
    let t = ContingencyTable::new(a.labels(), b.labels())?;
    let index: f64 = t.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(t.n);
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteOptions {
    /// Above this many samples a seeded uniform subsample of this size is scored.
    pub max_n: usize,
    pub seed: u64,
}

impl Default for SilhouetteOptions {
    fn default() -> Self {
        Self { max_n: 5000, seed: 0 }
    }
}

/// Mean silhouette coefficient with Euclidean distances. Samples in
/// singleton clusters score 0.
pub fn silhouette(features: &FeatureMatrix, labels: &LabelVector, opts: &SilhouetteOptions) -> Result<f64> {
    if features.n() != labels.len() {
        return Err(Error::LengthMismatch { left: features.n(), right: labels.len() });
    }
    let n_all = features.n();
    let idx: Vec<usize> = if n_all > opts.max_n && opts.max_n >= 3 {
        let mut r = rng::stream(opts.seed, "silhouette");
        let mut v = sample(&mut r, n_all, opts.max_n).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n_all).collect()
    };
    let n = idx.len();
    if n < 3 {
        return Err(Error::MetricUndefined(format!("silhouette needs n >= 3, got {n}")));
    }
    let lab = compact(&idx.iter().map(|&i| labels.get(i)).collect::<Vec<_>>());
    let k = lab.iter().max().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::MetricUndefined("silhouette needs at least 2 clusters".into()));
    }
    let mut sizes = vec![0usize; k];
    for &l in &lab {
        sizes[l] += 1;
    }
    let mut sums = vec![0.0; k];
    let mut total = 0.0;
    for (p, &i) in idx.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let ri = features.row(i);
        for (q, &j) in idx.iter().enumerate() {
            if p != q {
                let d: f64 = ri.iter().zip(features.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                sums[lab[q]] += d.sqrt();
            }
        }
        let own = lab[p];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

fn unit_rows(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.is_normalized() {
        Ok(features.clone())
    } else {
        features.l2_normalize()
    }
}

/// Mean fraction of each sample's `k` cosine nearest neighbours that share its label.
pub fn knn_accuracy(features: &FeatureMatrix, labels: &LabelVector, k: usize) -> Result<f64> {
    let n = features.n();
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: n, right: labels.len() });
    }
    if k == 0 || k >= n {
        return Err(Error::Value(format!("k={k} outside [1, {}]", n.saturating_sub(1))));
    }
    let z = unit_rows(features)?;
    let mut cand: Vec<(usize, f64)> = Vec::with_capacity(n - 1);
    let mut total = 0.0;
    for i in 0..n {
        cand.clear();
        let ri = z.row(i);
        cand.extend((0..n).filter(|&j| j != i).map(|j| (j, dot(ri, z.row(j)))));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, |a, b| neighbor_order(*a, *b));
        }
        let same = cand[..k].iter().filter(|c| labels.get(c.0) == labels.get(i)).count();
        total += same as f64 / k as f64;
    }
    Ok(total / n as f64)
}

/// Mean cosine similarity over same-label pairs and over different-label pairs.
pub fn intra_inter_similarity(features: &FeatureMatrix, labels: &LabelVector) -> Result<(f64, f64)> {
    let n = features.n();
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: n, right: labels.len() });
    }
    let z = unit_rows(features)?;
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let s = dot(z.row(i), z.row(j));
            if labels.get(i) == labels.get(j) {
                intra += s;
                n_intra += 1;
            } else {
                inter += s;
                n_inter += 1;
            }
        }
    }
    if n_inter == 0 {
        return Err(Error::MetricUndefined("intra/inter similarity needs at least 2 clusters".into()));
    }
    if n_intra == 0 {
        return Err(Error::MetricUndefined("no class has two members".into()));
    }
    Ok((intra / n_intra as f64, inter / n_inter as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceStats {
    pub ratio: f64,
    pub counts: Vec<usize>,
    /// Classes with no samples (excluded from the minimum).
    pub empty_classes: Vec<usize>,
}

/// Largest over smallest non-empty class count.
pub fn imbalance_ratio(labels: &[usize], num_classes: usize) -> Result<ImbalanceStats> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::Value(format!("label {l} outside [0, {num_classes})")));
        }
        counts[l] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().filter(|&c| c > 0).min();
    let Some(min) = min else {
        return Err(Error::MetricUndefined("all classes are empty".into()));
    };
    let empty_classes: Vec<usize> = (0..num_classes).filter(|&k| counts[k] == 0).collect();
    if !empty_classes.is_empty() {
        warn!("imbalance ratio ignores empty classes {empty_classes:?}");
    }
    Ok(ImbalanceStats { ratio: max as f64 / min as f64, counts, empty_classes })
}

/// Full evaluation report. Undefined entries are NaN and counted in `warnings`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub nmi: f64,
    pub acc: f64,
    pub ari: f64,
    pub silhouette: f64,
    pub knn_acc: f64,
    pub intra_sim: f64,
    pub inter_sim: f64,
    pub imbalance_ratio: f64,
    pub warnings: Vec<String>,
}

/// Labels that silhouette, k-NN accuracy and intra/inter similarity are computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StructureLabels {
    /// Ground truth when available, else the predicted labels.
    #[default]
    Truth,
    Predicted,
}

impl std::str::FromStr for StructureLabels {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truth" => Ok(Self::Truth),
            "predicted" => Ok(Self::Predicted),
            other => Err(Error::Config(format!("unknown structure label source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub knn_k: usize,
    pub silhouette: SilhouetteOptions,
    pub structure: StructureLabels,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { knn_k: 10, silhouette: SilhouetteOptions::default(), structure: StructureLabels::Truth }
    }
}

impl MetricsReport {
    /// Scores `pred` against `truth` (when given) and the geometry of
    /// `features` under the labels chosen by `opts.structure`; features are
    /// L2-normalized first.
    pub fn compute(
        features: &FeatureMatrix,
        pred: &LabelVector,
        truth: Option<&LabelVector>,
        opts: &ReportOptions,
    ) -> Result<Self> {
        if pred.len() != features.n() {
            return Err(Error::LengthMismatch { left: features.n(), right: pred.len() });
        }
        let z = unit_rows(features)?;
        let mut warnings = Vec::new();
        let mut keep = |name: &str, r: Result<f64>| match r {
            Ok(v) => v,
            Err(e) => {
                warn!("{name}: {e}");
                warnings.push(format!("{name}: {e}"));
                f64::NAN
            }
        };
        let (nmi_v, acc_v, ari_v) = match truth {
            Some(t) => (keep("nmi", nmi(pred, t)), keep("acc", acc(pred, t)), keep("ari", ari(pred, t))),
            None => {
                let e = || Err(Error::MetricUndefined("no ground-truth labels".into()));
                (keep("nmi", e()), keep("acc", e()), keep("ari", e()))
            }
        };
        let structure = match opts.structure {
            StructureLabels::Truth => truth.unwrap_or(pred),
            StructureLabels::Predicted => pred,
        };
        let sil = keep("silhouette", silhouette(&z, structure, &opts.silhouette));
        let k = opts.knn_k.min(z.n().saturating_sub(1));
        let knn = keep("knn_acc", knn_accuracy(&z, structure, k));
        let (intra, inter) = match intra_inter_similarity(&z, structure) {
            Ok(v) => v,
            Err(e) => {
                let v = keep("intra_inter", Err(e));
                (v, v)
            }
        };
        let imb = keep("imbalance_ratio", imbalance_ratio(pred.labels(), pred.num_classes()).map(|s| s.ratio));
        Ok(Self {
            nmi: nmi_v,
            acc: acc_v,
            ari: ari_v,
            silhouette: sil,
            knn_acc: knn,
            intra_sim: intra,
            inter_sim: inter,
            imbalance_ratio: imb,
            warnings,
        })
    }

    pub fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("nmi", self.nmi),
            ("acc", self.acc),
            ("ari", self.ari),
            ("silhouette", self.silhouette),
            ("knn_acc", self.knn_acc),
            ("intra_sim", self.intra_sim),
            ("inter_sim", self.inter_sim),
            ("imbalance_ratio", self.imbalance_ratio),
        ]
    }

    /// One `key=value` line per field, then `warnings=<count>`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={}", fmt_value(v));
        }
        let _ = writeln!(s, "warnings={}", self.warnings.len());
        s
    }

    /// Flat JSON object; NaN fields become `null`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (k, v) in self.fields() {
            map.insert(k.into(), serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, Into::into));
        }
        map.insert("warnings".into(), self.warnings.len().into());
        serde_json::Value::Object(map)
    }
}

/// Shortest round-trip decimal, `nan` for NaN.
pub fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}
