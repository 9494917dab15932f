//! Dataset representation: dense feature matrices, label vectors, file I/O
//! and synthetic Gaussian-mixture generation.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset, DataFormat};
pub use synth::{generate_gaussian_mixture, long_tailed_sizes, ClassSizes, SynthConfig};

use crate::error::{Error, Result};

/// Norm below which a row is treated as the zero vector.
pub const ZERO_NORM: f64 = 1e-12;

/// Dense row-major `n x d` matrix of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl FeatureMatrix {
    /// Builds a matrix, checking shape and finiteness. `normalized` starts false.
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!("empty matrix {n}x{d}")));
        }
        if data.len() != n * d {
            return Err(Error::Shape(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, data, normalized: false })
    }

    /// Builds a matrix from row slices.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Shape(format!("row {i} has {} columns, expected {d}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, d, data)
    }

    /// Wraps data already known to be unit-norm per row; checks the claim.
    pub fn new_normalized(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(n, d, data)?;
        for i in 0..n {
            let norm = norm(m.row(i));
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Value(format!("row {i} has norm {norm}, expected 1")));
            }
        }
        m.normalized = true;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Copies the given rows into a new matrix, keeping the normalization flag.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Shape("row selection is empty".into()));
        }
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            if i >= self.n {
                return Err(Error::Shape(format!("row {i} out of range for n={}", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self { n: idx.len(), d: self.d, data, normalized: self.normalized })
    }

    /// Returns a copy with every row scaled to unit Euclidean norm.
    pub fn l2_normalize(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.d).enumerate() {
            let nrm = norm(row);
            if nrm < ZERO_NORM {
                return Err(Error::ZeroVector { row: i });
            }
            row.iter_mut().for_each(|v| *v /= nrm);
        }
        Ok(Self { n: self.n, d: self.d, data, normalized: true })
    }

    /// Per-column standard deviation (population).
    pub fn column_std(&self) -> Vec<f64> {
        let n = self.n as f64;
        let mut mean = vec![0.0; self.d];
        for r in self.rows() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.d];
        for r in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.into_iter().map(|s| (s / n).sqrt()).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Free-function form of [`FeatureMatrix::l2_normalize`].
pub fn l2_normalize(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    m.l2_normalize()
}

/// Integer class id per sample plus the class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Value(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self { labels, num_classes })
    }

    /// Class count inferred as `max + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, num_classes }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self { labels: idx.iter().map(|&i| self.labels[i]).collect(), num_classes: self.num_classes }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Features plus optional ground truth and pseudo-labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub features: FeatureMatrix,
    pub truth: Option<LabelVector>,
    pub pseudo: Option<LabelVector>,
    pub ids: Vec<usize>,
}

impl DatasetBundle {
    pub fn new(
        features: FeatureMatrix,
        truth: Option<LabelVector>,
        pseudo: Option<LabelVector>,
    ) -> Result<Self> {
        let n = features.n();
        for (name, l) in [("truth", &truth), ("pseudo", &pseudo)] {
            if let Some(l) = l {
                if l.len() != n {
                    return Err(Error::Shape(format!("{name} has {} labels, features have {n} rows", l.len())));
                }
            }
        }
        Ok(Self { features, truth, pseudo, ids: (0..n).collect() })
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }
}
