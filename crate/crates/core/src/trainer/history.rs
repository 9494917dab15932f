//! Per-epoch training records and their CSV export.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::Result;
use crate::metrics::{fmt_value, MetricsReport};

/// Column order of the history CSV.
pub const HISTORY_COLUMNS: [&str; 13] = [
    "epoch",
    "l_pos",
    "l_neg",
    "l_ins",
    "l_total",
    "kstar_mean",
    "xh_frac",
    "sel_precision",
    "nmi",
    "acc",
    "ari",
    "silhouette",
    "knn_acc",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Warmup,
    Boost,
}

/// Selection outcome of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub n_b: usize,
    /// Neighbour budget after clamping.
    pub m_eff: usize,
    pub k_star: usize,
    pub count_at_k_star: usize,
    pub x_h_len: usize,
    /// Truth purity of the selected set under the epoch's cluster-to-class map.
    pub purity: Option<f64>,
    /// Pseudo-label accuracy over the whole batch under the same map.
    pub batch_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub l_pos: f64,
    pub l_neg: f64,
    pub l_ins: f64,
    pub l_total: f64,
    pub batches: Vec<BatchRecord>,
    /// Metrics of the target features at the end of the epoch.
    pub metrics: Option<MetricsReport>,
}

impl EpochRecord {
    pub fn kstar_mean(&self) -> f64 {
        if self.batches.is_empty() {
            return f64::NAN;
        }
        self.batches.iter().map(|b| b.k_star as f64).sum::<f64>() / self.batches.len() as f64
    }

    pub fn kstar_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for b in &self.batches {
            *h.entry(b.k_star).or_insert(0) += 1;
        }
        h
    }

    /// Selected fraction of all samples seen in the epoch.
    pub fn xh_frac(&self) -> f64 {
        let seen: usize = self.batches.iter().map(|b| b.n_b).sum();
        if seen == 0 {
            return f64::NAN;
        }
        self.batches.iter().map(|b| b.x_h_len).sum::<usize>() as f64 / seen as f64
    }

    /// Truth purity over all selected samples of the epoch.
    pub fn sel_precision(&self) -> f64 {
        let (mut correct, mut total) = (0.0, 0usize);
        for b in &self.batches {
            if let Some(p) = b.purity {
                correct += p * b.x_h_len as f64;
                total += b.x_h_len;
            }
        }
        if total == 0 {
            f64::NAN
        } else {
            correct / total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Metrics of the networks handed to boosting, before any update.
    pub baseline: Option<MetricsReport>,
    /// Steps whose target update was verified against an EMA replay.
    pub audited_steps: usize,
    /// Steps where the target changed other than through EMA.
    pub audit_violations: usize,
}

impl TrainHistory {
    pub fn last_metrics(&self) -> Option<&MetricsReport> {
        self.records.iter().rev().find_map(|r| r.metrics.as_ref())
    }

    /// Writes the header and one row per epoch. Undefined values print as `nan`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", HISTORY_COLUMNS.join(","))?;
        for r in &self.records {
            let m = r.metrics.as_ref();
            let metric = |f: fn(&MetricsReport) -> f64| m.map_or(f64::NAN, f);
            let row = [
                fmt_value(r.l_pos),
                fmt_value(r.l_neg),
                fmt_value(r.l_ins),
                fmt_value(r.l_total),
                fmt_value(r.kstar_mean()),
                fmt_value(r.xh_frac()),
                fmt_value(r.sel_precision()),
                fmt_value(metric(|m| m.nmi)),
                fmt_value(metric(|m| m.acc)),
                fmt_value(metric(|m| m.ari)),
                fmt_value(metric(|m| m.silhouette)),
                fmt_value(metric(|m| m.knn_acc)),
            ];
            writeln!(w, "{},{}", r.epoch, row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ASCII output")
    }
}
