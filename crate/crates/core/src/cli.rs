//! Library side of the `dcboost` command-line tool. Every command is a pure
//! function of its inputs, the configuration and the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::feature_store::{generate_gaussian_mixture, load_dataset, save_dataset, DataFormat, DatasetBundle, FeatureMatrix, LabelVector};
use crate::metrics::{fmt_value, MetricsReport, ReportOptions, StructureLabels};
use crate::pseudo_labeler::kmeans_labels;
use crate::rng;
use crate::trainer::checkpoint::{load_checkpoint, save_checkpoint};
use crate::trainer::{cluster_target, pretrain_baseline, run_boost, selection_report, BatchSelection, BoostOutcome, DualNetworks};

/// Format implied by a file extension: `.csv` is CSV, anything else DCBF.
pub fn format_for(path: &Path, explicit: Option<DataFormat>) -> DataFormat {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
        _ => DataFormat::Dcbf,
    })
}

/// Generates the configured mixture and writes it to `out`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path, format: DataFormat) -> Result<DatasetBundle> {
    let data = generate_gaussian_mixture(&cfg.synth)?;
    save_dataset(&data, out, format)?;
    info!("wrote {} samples x {} dims to {}", data.n(), data.features.d(), out.display());
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectReport {
    pub batches: Vec<BatchSelection>,
    /// Pseudo-labels came from a k-means pass rather than the dataset.
    pub used_kmeans: bool,
}

impl SelectReport {
    pub fn kstar_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for b in &self.batches {
            *h.entry(b.record.k_star).or_insert(0) += 1;
        }
        h
    }

    pub fn xh_frac(&self) -> f64 {
        let n: usize = self.batches.iter().map(|b| b.record.n_b).sum();
        let s: usize = self.batches.iter().map(|b| b.record.x_h_len).sum();
        s as f64 / n as f64
    }

    /// Truth purity over all selected samples; NaN without truth or selections.
    pub fn precision(&self) -> f64 {
        let (mut hit, mut tot) = (0.0, 0usize);
        for b in &self.batches {
            if let Some(p) = b.record.purity {
                hit += p * b.record.x_h_len as f64;
                tot += b.record.x_h_len;
            }
        }
        if tot == 0 {
            f64::NAN
        } else {
            hit / tot as f64
        }
    }

    /// Pseudo-label accuracy over all batched samples; NaN without truth.
    pub fn batch_accuracy(&self) -> f64 {
        let (mut hit, mut tot) = (0.0, 0usize);
        for b in &self.batches {
            if let Some(a) = b.record.batch_acc {
                hit += a * b.record.n_b as f64;
                tot += b.record.n_b;
            }
        }
        if tot == 0 {
            f64::NAN
        } else {
            hit / tot as f64
        }
    }

    pub fn batches_csv(&self) -> String {
        let mut s = String::from("batch,n_b,m_eff,k_star,count_at_k_star,xh_frac,purity,batch_acc\n");
        for (i, b) in self.batches.iter().enumerate() {
            let r = &b.record;
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{}",
                r.n_b,
                r.m_eff,
                r.k_star,
                r.count_at_k_star,
                fmt_value(r.x_h_len as f64 / r.n_b as f64),
                fmt_value(r.purity.unwrap_or(f64::NAN)),
                fmt_value(r.batch_acc.unwrap_or(f64::NAN)),
            );
        }
        s
    }

    /// One row per batch and neighbour count `k` in `1..=m'`.
    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("batch,k,count,score\n");
        for (i, b) in self.batches.iter().enumerate() {
            for (k, (&c, &sc)) in b.curve.counts.iter().zip(&b.curve.scores).enumerate() {
                let _ = writeln!(s, "{i},{},{c},{}", k + 1, fmt_value(sc));
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let hist: Vec<String> = self.kstar_histogram().iter().map(|(k, c)| format!("{k}:{c}")).collect();
        let mut s = String::new();
        let _ = writeln!(s, "batches={}", self.batches.len());
        let _ = writeln!(s, "kmeans={}", self.used_kmeans);
        let _ = writeln!(s, "kstar_hist={}", hist.join(";"));
        let _ = writeln!(s, "xh_frac={}", fmt_value(self.xh_frac()));
        let _ = writeln!(s, "sel_precision={}", fmt_value(self.precision()));
        let _ = writeln!(s, "batch_acc={}", fmt_value(self.batch_accuracy()));
        s
    }
}

/// Adaptive selection over shuffled batches of the (normalized) raw features.
pub fn cmd_select(data: &DatasetBundle, cfg: &RunConfig) -> Result<SelectReport> {
    cfg.validate()?;
    let z = data.features.l2_normalize()?;
    let (pseudo, used_kmeans) = if cfg.select.kmeans {
        let mut run = cfg.clone();
        if let Some(t) = &data.truth {
            run.adopt_class_count(t.num_classes());
        }
        let km = crate::pseudo_labeler::KMeansConfig {
            seed: rng::derive_seed(cfg.seed, "select-kmeans"),
            ..run.trainer.kmeans.clone()
        };
        (kmeans_labels(&z, &km)?.1, true)
    } else {
        let p = data.pseudo.clone().ok_or_else(|| {
            Error::Config("dataset has no pseudo labels; set select.kmeans=true to compute them".into())
        })?;
        (p, false)
    };
    let batch_size = cfg.select.batch_size.unwrap_or(cfg.trainer.batch_size);
    let mut r = rng::stream(cfg.seed, "select");
    let batches = selection_report(&z, &pseudo, data.truth.as_ref(), &cfg.trainer.filter, batch_size, &mut r)?;
    Ok(SelectReport { batches, used_kmeans })
}

/// Writes `selection.csv`, `selection_summary.txt` and, when requested, `k_sweep.csv`.
pub fn write_select(report: &SelectReport, cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("selection.csv"), report.batches_csv())?;
    fs::write(out_dir.join("selection_summary.txt"), report.summary())?;
    if cfg.select.k_sweep {
        fs::write(out_dir.join("k_sweep.csv"), report.sweep_csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BoostRun {
    pub pretrained: DualNetworks,
    pub outcome: BoostOutcome,
    pub final_report: MetricsReport,
}

pub fn write_labels(labels: &LabelVector, path: &Path) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels.labels() {
        let _ = writeln!(s, "{l}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads one non-negative integer label per line; blank lines are skipped.
pub fn read_labels(path: &Path) -> Result<LabelVector> {
    let text = fs::read_to_string(path)?;
    let labels = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelVector::from_labels(labels))
}

/// Output files written by [`cmd_boost`].
pub fn boost_paths(out_dir: &Path) -> [PathBuf; 6] {
    [
        "pretrained.dcbm",
        "boosted.dcbm",
        "history.csv",
        "labels.txt",
        "metrics.txt",
        "metrics.json",
    ]
    .map(|f| out_dir.join(f))
}

/// Pre-trains (or loads `init`), boosts, and persists checkpoints, history,
/// final labels and metrics under `out_dir` when given.
pub fn cmd_boost(data: &DatasetBundle, cfg: &RunConfig, out_dir: Option<&Path>, init: Option<&Path>) -> Result<BoostRun> {
    let mut cfg = cfg.clone();
    if let Some(t) = &data.truth {
        cfg.adopt_class_count(t.num_classes());
    }
    cfg.validate()?;
    let pretrained = match init {
        Some(p) => load_checkpoint(p)?,
        None => pretrain_baseline(data, &cfg.trainer)?,
    };
    let outcome = run_boost(data, &pretrained, &cfg.trainer)?;
    let final_report = MetricsReport::compute(&outcome.features, &outcome.labels, data.truth.as_ref(), &cfg.trainer.report)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let [pre, post, hist, labels, kv, json] = boost_paths(dir);
        save_checkpoint(&pretrained, pre)?;
        save_checkpoint(&outcome.nets, post)?;
        fs::write(hist, outcome.history.to_csv_string())?;
        write_labels(&outcome.labels, &labels)?;
        fs::write(kv, final_report.to_kv())?;
        let mut obj = serde_json::Map::new();
        if let Some(b) = &outcome.history.baseline {
            obj.insert("baseline".into(), b.to_json());
        }
        obj.insert("final".into(), final_report.to_json());
        fs::write(json, serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("JSON of plain values"))?;
    }
    Ok(BoostRun { pretrained, outcome, final_report })
}

/// What `cmd_eval` scores against the dataset's ground truth.
#[derive(Debug, Clone)]
pub enum EvalSource {
    Labels(LabelVector),
    /// k-means on the target embedding of the checkpoint.
    Checkpoint(DualNetworks),
    /// The dataset's own truth labels.
    Truth,
    /// The dataset's own pseudo-labels.
    Pseudo,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub report: MetricsReport,
    /// Features the structure metrics were computed on.
    pub features: FeatureMatrix,
    pub labels: LabelVector,
}

/// Scores a labeling. Structure diagnostics describe the supplied labels,
/// not the ground truth.
pub fn cmd_eval(data: &DatasetBundle, source: EvalSource, cfg: &RunConfig) -> Result<EvalResult> {
    let missing = |what: &str| Error::Config(format!("dataset has no {what} labels"));
    let (features, labels) = match source {
        EvalSource::Labels(l) => (data.features.clone(), l),
        EvalSource::Truth => (data.features.clone(), data.truth.clone().ok_or_else(|| missing("truth"))?),
        EvalSource::Pseudo => (data.features.clone(), data.pseudo.clone().ok_or_else(|| missing("pseudo"))?),
        EvalSource::Checkpoint(nets) => {
            let mut cfg = cfg.clone();
            if let Some(t) = &data.truth {
                cfg.adopt_class_count(t.num_classes());
            }
            let (z, _, l) = cluster_target(&nets, data, &cfg.trainer, "eval")?;
            (z, l)
        }
    };
    if labels.len() != data.n() {
        return Err(Error::LengthMismatch { left: data.n(), right: labels.len() });
    }
    let opts = ReportOptions { structure: StructureLabels::Predicted, ..cfg.trainer.report.clone() };
    let report = MetricsReport::compute(&features, &labels, data.truth.as_ref(), &opts)?;
    Ok(EvalResult { report, features, labels })
}

/// Writes the L2-normalized evaluation features with their labels as CSV.
pub fn export_embeddings(result: &EvalResult, path: &Path) -> Result<()> {
    let z = if result.features.is_normalized() { result.features.clone() } else { result.features.l2_normalize()? };
    let bundle = DatasetBundle::new(z, Some(result.labels.clone()), None)?;
    save_dataset(&bundle, path, DataFormat::Csv)
}

pub fn load(path: &Path, format: Option<DataFormat>) -> Result<DatasetBundle> {
    load_dataset(path, format_for(path, format))
}
