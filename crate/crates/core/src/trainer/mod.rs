//! Boosting loop: online/target encoders coupled by EMA, a predictor on the
//! online branch, per-epoch k-means pseudo-labels, per-batch adaptive k-NN
//! selection and the three-term discriminative loss.

pub mod augment;
pub mod checkpoint;
pub mod history;
pub mod network;

use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

pub use augment::{AugmentConfig, Augmenter};
pub use history::{BatchRecord, EpochRecord, Phase, TrainHistory, HISTORY_COLUMNS};
pub use network::{ema_update, sgd_step, ForwardCache, MlpNetwork};

use crate::error::{Error, Result};
use crate::feature_store::{DatasetBundle, FeatureMatrix, LabelVector};
use crate::knn_filter::{select_batch, BatchView, FilterConfig, ScoreCurve};
use crate::losses::{group_by_label, instance_loss, total_loss, WeightMode};
use crate::metrics::{acc, best_label_map, MetricsReport, ReportOptions};
use crate::pseudo_labeler::{kmeans_labels, KMeansConfig, KMeansModel};
use crate::rng::{self, Rng};

/// Batch size the base learning rate refers to.
pub const LR_REFERENCE_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub batch_size: usize,
    /// Learning rate at batch size 256; scaled linearly with `batch_size`.
    pub base_lr: f64,
    pub predictor_lr_mult: f64,
    pub ema_momentum: f64,
    pub pretrain_epochs: usize,
    pub warmup_epochs: usize,
    pub boost_epochs: usize,
    /// Std of the Gaussian noise added to the predictor input.
    pub sigma: f64,
    pub weight_mode: WeightMode,
    /// Hidden widths of the encoder.
    pub hidden_dims: Vec<usize>,
    pub out_dim: usize,
    pub filter: FilterConfig,
    pub kmeans: KMeansConfig,
    pub augment: AugmentConfig,
    pub report: ReportOptions,
    /// Compute a full metrics report after every epoch.
    pub eval_every_epoch: bool,
    /// Verify every step that the target moved only by EMA.
    pub audit: bool,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            base_lr: 0.05,
            predictor_lr_mult: 10.0,
            ema_momentum: 0.996,
            pretrain_epochs: 20,
            warmup_epochs: 10,
            boost_epochs: 50,
            sigma: 0.001,
            weight_mode: WeightMode::WOursFlow,
            hidden_dims: vec![64],
            out_dim: 32,
            filter: FilterConfig::default(),
            kmeans: KMeansConfig::default(),
            augment: AugmentConfig::default(),
            report: ReportOptions::default(),
            eval_every_epoch: true,
            audit: false,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    /// `base_lr * batch_size / 256`.
    pub fn lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / LR_REFERENCE_BATCH as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("trainer.batch_size must be >= 2".into()));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config("trainer.base_lr must be >= 0".into()));
        }
        if !(self.predictor_lr_mult >= 0.0 && self.predictor_lr_mult.is_finite()) {
            return Err(Error::Config("trainer.predictor_lr_mult must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return Err(Error::Config("trainer.ema_momentum must lie in [0, 1]".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("trainer.sigma must be >= 0".into()));
        }
        if self.out_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("network widths must be positive".into()));
        }
        self.filter.validate()?;
        self.kmeans.validate()?;
        self.augment.validate()
    }
}

/// Online encoder, its EMA target twin and the online predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNetworks {
    pub online: MlpNetwork,
    pub target: MlpNetwork,
    pub predictor: MlpNetwork,
}

impl DualNetworks {
    /// Random encoder `d_in -> hidden.. -> d_out` copied into both branches,
    /// and a predictor `d_out -> 2 d_out -> d_out`.
    pub fn new(d_in: usize, hidden: &[usize], d_out: usize, rng: &mut Rng) -> Result<Self> {
        let mut dims = vec![d_in];
        dims.extend_from_slice(hidden);
        dims.push(d_out);
        let online = MlpNetwork::new(&dims, rng)?;
        Self::from_encoder(online, rng)
    }

    /// Both branches start from `encoder`; the predictor is freshly initialized.
    pub fn from_encoder(encoder: MlpNetwork, rng: &mut Rng) -> Result<Self> {
        let d = encoder.out_dim();
        let predictor = MlpNetwork::new(&[d, 2 * d, d], rng)?;
        Self::from_parts(encoder.clone(), encoder, predictor)
    }

    pub fn from_parts(online: MlpNetwork, target: MlpNetwork, predictor: MlpNetwork) -> Result<Self> {
        if online.dims() != target.dims() {
            return Err(Error::Shape(format!("online {:?} vs target {:?}", online.dims(), target.dims())));
        }
        if predictor.in_dim() != online.out_dim() || predictor.out_dim() != online.out_dim() {
            return Err(Error::Shape(format!("predictor {:?} does not fit encoder output {}", predictor.dims(), online.out_dim())));
        }
        Ok(Self { online, target, predictor })
    }

    /// Target-branch embedding of un-augmented inputs.
    pub fn target_features(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.target.forward(x)
    }
}

/// Per-batch selection statistics, without any training.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSelection {
    pub indices: Vec<usize>,
    pub curve: ScoreCurve,
    pub x_h: Vec<usize>,
    pub record: BatchRecord,
}

/// Consecutive chunks of a seeded shuffle; a trailing chunk of one sample is dropped.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect()
}

/// Truth purity of `x_h` and whole-batch accuracy of the pseudo-labels,
/// both under the cluster-to-class map `map`.
pub fn selection_precision(
    x_h: &[usize],
    pseudo: &LabelVector,
    truth: &LabelVector,
    map: &BTreeMap<usize, Option<usize>>,
) -> (Option<f64>, f64) {
    let correct = |i: usize| map.get(&pseudo.get(i)).copied().flatten() == Some(truth.get(i));
    let batch = (0..pseudo.len()).filter(|&i| correct(i)).count() as f64 / pseudo.len() as f64;
    let purity = (!x_h.is_empty()).then(|| x_h.iter().filter(|&&i| correct(i)).count() as f64 / x_h.len() as f64);
    (purity, batch)
}

fn batch_record(
    n_b: usize,
    curve: &ScoreCurve,
    k_star: usize,
    x_h: &[usize],
    precision: Option<(Option<f64>, f64)>,
) -> BatchRecord {
    BatchRecord {
        n_b,
        m_eff: curve.counts.len(),
        k_star,
        count_at_k_star: curve.counts[k_star - 1],
        x_h_len: x_h.len(),
        purity: precision.and_then(|p| p.0),
        batch_acc: precision.map(|p| p.1),
    }
}

/// Runs adaptive selection over shuffled batches of fixed features.
pub fn selection_report(
    z: &FeatureMatrix,
    pseudo: &LabelVector,
    truth: Option<&LabelVector>,
    filter: &FilterConfig,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<BatchSelection>> {
    let z = if z.is_normalized() { z.clone() } else { z.l2_normalize()? };
    let map = truth.map(|t| best_label_map(pseudo, t)).transpose()?;
    let mut out = Vec::new();
    for idx in shuffled_batches(z.n(), batch_size, rng) {
        let zb = z.select_rows(&idx)?;
        let pb = pseudo.select(&idx);
        let view = BatchView::new(&zb, None, &pb)?;
        let sel = select_batch(&view, filter)?;
        let precision = truth.zip(map.as_ref()).map(|(t, m)| selection_precision(&sel.x_h, &pb, &t.select(&idx), m));
        let record = batch_record(idx.len(), &sel.curve, sel.k_star, &sel.x_h, precision);
        out.push(BatchSelection { indices: idx, curve: sel.curve, x_h: sel.x_h, record });
    }
    Ok(out)
}

/// A boosting batch as the filter saw it, kept for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedBatch {
    pub indices: Vec<usize>,
    pub z_t: FeatureMatrix,
    pub z_o: FeatureMatrix,
    pub labels: LabelVector,
    pub curve: ScoreCurve,
    pub k_star: usize,
    pub x_h: Vec<usize>,
}

/// Stateful driver shared by pre-training, warm-up and boosting.
pub struct Trainer<'a> {
    cfg: &'a TrainerConfig,
    augmenter: Augmenter,
    rng: Rng,
    pub audited_steps: usize,
    pub audit_violations: usize,
    /// Boosting batches of the most recent epoch, in order, when capture is on.
    pub captured: Vec<CapturedBatch>,
    capture: bool,
}

struct StepOutcome {
    l_pos: f64,
    l_neg: f64,
    l_ins: f64,
    record: Option<BatchRecord>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a TrainerConfig, data: &DatasetBundle, stream: &str) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            augmenter: Augmenter::for_data(&cfg.augment, &data.features)?,
            rng: rng::stream(cfg.seed, stream),
            audited_steps: 0,
            audit_violations: 0,
            captured: Vec::new(),
            capture: false,
        })
    }

    /// Keep the latest epoch's batches in `captured`.
    pub fn capture_batches(&mut self, on: bool) {
        self.capture = on;
    }

    fn step(
        &mut self,
        nets: &mut DualNetworks,
        x: &FeatureMatrix,
        pseudo: Option<&LabelVector>,
        truth: Option<(&LabelVector, &BTreeMap<usize, Option<usize>>)>,
        idx: &[usize],
    ) -> Result<StepOutcome> {
        let cfg = self.cfg;
        let v1 = self.augmenter.apply(x, &mut self.rng)?;
        let v2 = self.augmenter.apply(x, &mut self.rng)?;
        let (z_o, cache_o) = nets.online.forward_cached(&v1)?;
        let z_t = nets.target.forward(&v2)?;
        let noisy: Vec<f64> = z_o
            .data()
            .iter()
            .map(|v| {
                let e: f64 = StandardNormal.sample(&mut self.rng);
                v + cfg.sigma * e
            })
            .collect();
        let q = FeatureMatrix::new(z_o.n(), z_o.d(), noisy)?;
        let (pred, cache_g) = nets.predictor.forward_cached(&q)?;

        let (l_pos, l_neg, l_ins, grad_z_o, grad_pred, record) = match pseudo {
            None => {
                let (l_ins, g) = instance_loss(&pred, &z_t)?;
                (0.0, 0.0, l_ins, vec![0.0; z_o.data().len()], g, None)
            }
            Some(labels) => {
                let view = BatchView::new(&z_t, Some(&z_o), labels)?;
                let sel = select_batch(&view, &cfg.filter)?;
                let groups = group_by_label(&sel.x_h, labels);
                let loss = total_loss(&z_o, &z_t, &pred, &z_t, &groups, cfg.weight_mode)?;
                let precision = truth.map(|(t, m)| selection_precision(&sel.x_h, labels, &t.select(idx), m));
                let record = batch_record(x.n(), &sel.curve, sel.k_star, &sel.x_h, precision);
                if self.capture {
                    self.captured.push(CapturedBatch {
                        indices: idx.to_vec(),
                        z_t: z_t.clone(),
                        z_o: z_o.clone(),
                        labels: labels.clone(),
                        curve: sel.curve.clone(),
                        k_star: sel.k_star,
                        x_h: sel.x_h.clone(),
                    });
                }
                (loss.l_pos, loss.l_neg, loss.l_ins, loss.grad_z_o, loss.grad_pred, Some(record))
            }
        };

        let (g_pred_params, g_q) = nets.predictor.backward(&cache_g, &grad_pred)?;
        let g_z: Vec<f64> = grad_z_o.iter().zip(&g_q).map(|(a, b)| a + b).collect();
        let (g_online, _) = nets.online.backward(&cache_o, &g_z)?;

        let target_before = cfg.audit.then(|| nets.target.clone());
        let lr = cfg.lr();
        sgd_step(&mut nets.online, &g_online, lr)?;
        sgd_step(&mut nets.predictor, &g_pred_params, lr * cfg.predictor_lr_mult)?;
        if let Some(before) = &target_before {
            if before.param_hash() != nets.target.param_hash() {
                self.audit_violations += 1;
            }
        }
        ema_update(&nets.online, &mut nets.target, cfg.ema_momentum)?;
        if let Some(mut replay) = target_before {
            ema_update(&nets.online, &mut replay, cfg.ema_momentum)?;
            self.audited_steps += 1;
            if replay.param_hash() != nets.target.param_hash() {
                self.audit_violations += 1;
            }
        }
        Ok(StepOutcome { l_pos, l_neg, l_ins, record })
    }

    /// One pass over shuffled batches. Without pseudo-labels only the
    /// instance loss is optimized.
    pub fn run_epoch(
        &mut self,
        nets: &mut DualNetworks,
        data: &DatasetBundle,
        pseudo: Option<&LabelVector>,
        epoch: usize,
        phase: Phase,
    ) -> Result<EpochRecord> {
        if let Some(p) = pseudo {
            if p.len() != data.n() {
                return Err(Error::LengthMismatch { left: data.n(), right: p.len() });
            }
        }
        self.captured.clear();
        let map = match (pseudo, &data.truth) {
            (Some(p), Some(t)) => Some(best_label_map(p, t)?),
            _ => None,
        };
        let truth = data.truth.as_ref().zip(map.as_ref());
        let batches = shuffled_batches(data.n(), self.cfg.batch_size, &mut self.rng);
        let (mut sp, mut sn, mut si) = (0.0, 0.0, 0.0);
        let mut records = Vec::new();
        for idx in &batches {
            let x = data.features.select_rows(idx)?;
            let pb = pseudo.map(|p| p.select(idx));
            let out = self.step(nets, &x, pb.as_ref(), truth, idx)?;
            sp += out.l_pos;
            sn += out.l_neg;
            si += out.l_ins;
            records.extend(out.record);
        }
        let nb = batches.len().max(1) as f64;
        let (l_pos, l_neg, l_ins) = (sp / nb, sn / nb, si / nb);
        Ok(EpochRecord {
            epoch,
            phase,
            l_pos,
            l_neg,
            l_ins,
            l_total: l_pos + l_neg + l_ins,
            batches: records,
            metrics: None,
        })
    }
}

/// k-means pseudo-labels on the target embedding of the whole dataset.
pub fn cluster_target(
    nets: &DualNetworks,
    data: &DatasetBundle,
    cfg: &TrainerConfig,
    tag: &str,
) -> Result<(FeatureMatrix, KMeansModel, LabelVector)> {
    let z = nets.target_features(&data.features)?;
    let km = KMeansConfig { seed: rng::derive_seed(cfg.seed, &format!("kmeans-{tag}")), ..cfg.kmeans.clone() };
    let (model, labels) = kmeans_labels(&z, &km)?;
    Ok((z, model, labels))
}

/// Instance-loss-only training of a fresh network pair, standing in for a
/// pre-trained clustering model. Zero epochs return the random initialization.
pub fn pretrain_baseline(data: &DatasetBundle, cfg: &TrainerConfig) -> Result<DualNetworks> {
    cfg.validate()?;
    let mut init = rng::stream(cfg.seed, "pretrain-init");
    let mut nets = DualNetworks::new(data.features.d(), &cfg.hidden_dims, cfg.out_dim, &mut init)?;
    let mut trainer = Trainer::new(cfg, data, "pretrain")?;
    for e in 1..=cfg.pretrain_epochs {
        let rec = trainer.run_epoch(&mut nets, data, None, e, Phase::Pretrain)?;
        info!("pretrain epoch {e}: l_ins={:.5}", rec.l_ins);
    }
    if let Some(truth) = &data.truth {
        let (_, _, labels) = cluster_target(&nets, data, cfg, "pretrain-check")?;
        let a = acc(&labels, truth)?;
        let chance = truth.class_counts().into_iter().max().unwrap_or(0) as f64 / truth.len() as f64;
        if a <= chance || a >= 1.0 {
            warn!("pretrained k-means ACC {a:.4} leaves no headroom (chance {chance:.4})");
        }
    }
    Ok(nets)
}

/// Instance-loss-only epochs with EMA updates, preparing a fresh predictor.
pub fn warmup(nets: &mut DualNetworks, data: &DatasetBundle, cfg: &TrainerConfig) -> Result<Vec<EpochRecord>> {
    let mut trainer = Trainer::new(cfg, data, "warmup")?;
    (1..=cfg.warmup_epochs)
        .map(|e| trainer.run_epoch(nets, data, None, e, Phase::Warmup))
        .collect()
}

/// One boosting epoch with the given (fresh) pseudo-labels.
pub fn train_epoch(
    nets: &mut DualNetworks,
    data: &DatasetBundle,
    pseudo: &LabelVector,
    cfg: &TrainerConfig,
    epoch: usize,
) -> Result<EpochRecord> {
    let mut trainer = Trainer::new(cfg, data, &format!("epoch-{epoch}"))?;
    trainer.run_epoch(nets, data, Some(pseudo), epoch, Phase::Boost)
}

#[derive(Debug, Clone)]
pub struct BoostOutcome {
    pub nets: DualNetworks,
    pub history: TrainHistory,
    /// Final k-means clustering of the target embedding.
    pub labels: LabelVector,
    pub model: KMeansModel,
    pub features: FeatureMatrix,
}

/// Warm-up followed by `boost_epochs` of pseudo-label / select / update.
/// Both branches start from the pretrained target encoder; the predictor
/// is re-initialized.
pub fn run_boost(data: &DatasetBundle, pretrained: &DualNetworks, cfg: &TrainerConfig) -> Result<BoostOutcome> {
    cfg.validate()?;
    let mut init = rng::stream(cfg.seed, "predictor-init");
    let mut nets = DualNetworks::from_encoder(pretrained.target.clone(), &mut init)?;
    let mut trainer = Trainer::new(cfg, data, "boost")?;
    let truth = data.truth.as_ref();
    let report = |z: &FeatureMatrix, l: &LabelVector| MetricsReport::compute(z, l, truth, &cfg.report);

    let mut history = TrainHistory::default();
    let (z0, model0, labels0) = cluster_target(&nets, data, cfg, "baseline")?;
    history.baseline = Some(report(&z0, &labels0)?);
    let mut current = (z0, model0, labels0);

    for e in 1..=cfg.warmup_epochs {
        let mut rec = trainer.run_epoch(&mut nets, data, None, e, Phase::Warmup)?;
        if cfg.eval_every_epoch || e == cfg.warmup_epochs {
            current = cluster_target(&nets, data, cfg, &format!("epoch-{e}"))?;
            if cfg.eval_every_epoch {
                rec.metrics = Some(report(&current.0, &current.2)?);
            }
        }
        info!("warm-up epoch {e}: l_ins={:.5}", rec.l_ins);
        history.records.push(rec);
    }
    for b in 1..=cfg.boost_epochs {
        let e = cfg.warmup_epochs + b;
        let mut rec = trainer.run_epoch(&mut nets, data, Some(&current.2), e, Phase::Boost)?;
        current = cluster_target(&nets, data, cfg, &format!("epoch-{e}"))?;
        if cfg.eval_every_epoch {
            rec.metrics = Some(report(&current.0, &current.2)?);
        }
        info!(
            "boost epoch {e}: l_pos={:.5} l_neg={:.5} l_ins={:.5} k*={:.2} xh={:.3}",
            rec.l_pos,
            rec.l_neg,
            rec.l_ins,
            rec.kstar_mean(),
            rec.xh_frac()
        );
        history.records.push(rec);
    }
    history.audited_steps = trainer.audited_steps;
    history.audit_violations = trainer.audit_violations;
    let (features, model, labels) = current;
    Ok(BoostOutcome { nets, history, labels, model, features })
}
