//! Randomized comparisons of the library against the oracles in the parent
//! module. Shared by the per-module suites and the acceptance target.

use dcboost::feature_store::{FeatureMatrix, LabelVector};
use dcboost::knn_filter::{select_batch, BatchView, FilterConfig};
use dcboost::losses::{
    compute_prototypes, group_by_label, instance_loss, negative_loss, positive_loss, total_loss, ClassGroup, WeightMode,
};
use dcboost::metrics::{acc, ari, nmi};
use dcboost::rng::Rng;
use rand::Rng as _;

use super::*;

pub const MODES: [WeightMode; 3] = [WeightMode::W0Off, WeightMode::W1Constant, WeightMode::WOursFlow];
pub const FD_STEP: f64 = 1e-5;

/// One random batch through `select_batch` and the brute-force enumerator.
/// Returns a description of the first mismatch.
pub fn selection_case(rng: &mut Rng) -> Result<(), String> {
    let n = rng.random_range(8..=64);
    let d = rng.random_range(2..=8);
    let c = rng.random_range(1..=4);
    let m = rng.random_range(1..=70);
    let z = unit_rows(rng, n, d);
    let labels = random_labels(rng, n, c);
    compare_selection(&z, &labels, m)
}

pub fn compare_selection(z: &FeatureMatrix, labels: &LabelVector, m: usize) -> Result<(), String> {
    let view = BatchView::new(z, None, labels).map_err(|e| e.to_string())?;
    let got = select_batch(&view, &FilterConfig { m, ..FilterConfig::default() }).map_err(|e| e.to_string())?;
    let want = brute_selection(z, labels.labels(), m);
    let tag = format!("n_B={} m={m}", z.n());
    if got.curve.counts != want.counts {
        return Err(format!("{tag}: counts {:?} vs {:?}", got.curve.counts, want.counts));
    }
    if got.curve.scores != want.scores {
        return Err(format!("{tag}: scores {:?} vs {:?}", got.curve.scores, want.scores));
    }
    if got.k_star != want.k_star {
        return Err(format!("{tag}: k_star {} vs {}", got.k_star, want.k_star));
    }
    if got.x_h != want.x_h {
        return Err(format!("{tag}: x_h {:?} vs {:?}", got.x_h, want.x_h));
    }
    Ok(())
}

/// A random loss instance: unit online/target rows, free predictor outputs,
/// and class groups over a random subset.
pub struct LossInstance {
    pub n: usize,
    pub d: usize,
    pub z_o: FeatureMatrix,
    pub z_t: FeatureMatrix,
    pub pred: FeatureMatrix,
    pub groups: Vec<ClassGroup>,
}

pub fn loss_instance(rng: &mut Rng) -> LossInstance {
    let n = rng.random_range(2..=16);
    let d = rng.random_range(2..=8);
    let z_o = unit_rows(rng, n, d);
    let z_t = unit_rows(rng, n, d);
    let pred = FeatureMatrix::new(n, d, (0..n * d).map(|_| gaussian(rng)).collect()).unwrap();
    let c = rng.random_range(1..=4);
    let labels = random_labels(rng, n, c);
    let mut selected: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.75)).collect();
    if selected.is_empty() {
        selected.push(0);
    }
    let groups = group_by_label(&selected, &labels);
    LossInstance { n, d, z_o, z_t, pred, groups }
}

/// Max relative error of every analytic gradient against central
/// differences of the oracle losses, labelled by loss term.
pub fn gradient_case(inst: &LossInstance) -> Vec<(String, f64)> {
    let LossInstance { n, d, z_o, z_t, pred, groups } = inst;
    let (n, d) = (*n, *d);
    let mut out = Vec::new();
    let weights = oracle_weights(z_o.data(), z_t.data(), d, groups);

    for mode in MODES {
        let frozen = (mode == WeightMode::W1Constant).then_some(weights.as_slice());
        let (_, analytic) = positive_loss(z_o, z_t, groups, mode).unwrap();
        let numeric = fd_gradient(|x| oracle_positive(x, z_t.data(), d, groups, mode, frozen), z_o.data(), FD_STEP);
        out.push((format!("l_pos/{mode:?}"), max_rel_err(&analytic, &numeric)));
    }

    let (_, analytic) = negative_loss(&compute_prototypes(groups, z_o, z_t), n, d);
    let numeric = fd_gradient(|x| oracle_negative(x, z_t.data(), d, groups), z_o.data(), FD_STEP);
    out.push(("l_neg".into(), max_rel_err(&analytic, &numeric)));

    let (_, analytic) = instance_loss(pred, z_t).unwrap();
    let numeric = fd_gradient(|x| oracle_instance(x, z_t.data(), n), pred.data(), FD_STEP);
    out.push(("l_ins".into(), max_rel_err(&analytic, &numeric)));

    // total over the concatenated online inputs (encoder outputs, then predictor outputs)
    let split = n * d;
    for mode in MODES {
        let frozen = (mode == WeightMode::W1Constant).then_some(weights.as_slice());
        let b = total_loss(z_o, z_t, pred, z_t, groups, mode).unwrap();
        let mut analytic = b.grad_z_o.clone();
        analytic.extend_from_slice(&b.grad_pred);
        let mut x0 = z_o.data().to_vec();
        x0.extend_from_slice(pred.data());
        let f = |x: &[f64]| {
            let (zo, p) = x.split_at(split);
            oracle_positive(zo, z_t.data(), d, groups, mode, frozen)
                + oracle_negative(zo, z_t.data(), d, groups)
                + oracle_instance(p, z_t.data(), n)
        };
        out.push((format!("l_total/{mode:?}"), max_rel_err(&analytic, &fd_gradient(f, &x0, FD_STEP))));
    }
    out
}

/// Largest relative deviation of the library loss values from the oracles.
pub fn loss_value_case(inst: &LossInstance) -> f64 {
    let LossInstance { n, d, z_o, z_t, pred, groups } = inst;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut worst: f64 = 0.0;
    for mode in MODES {
        let (v, _) = positive_loss(z_o, z_t, groups, mode).unwrap();
        worst = worst.max(rel(v, oracle_positive(z_o.data(), z_t.data(), *d, groups, mode, None)));
    }
    let b = total_loss(z_o, z_t, pred, z_t, groups, WeightMode::WOursFlow).unwrap();
    worst = worst.max(rel(b.l_neg, oracle_negative(z_o.data(), z_t.data(), *d, groups)));
    worst = worst.max(rel(b.l_ins, oracle_instance(pred.data(), z_t.data(), *n)));
    worst
}

/// Random small label pair: returns the largest absolute deviation of
/// NMI, ACC and ARI from their oracles.
pub fn metric_case(rng: &mut Rng) -> f64 {
    let n = rng.random_range(2..=20);
    let ca = rng.random_range(1..=5);
    let cb = rng.random_range(1..=5);
    let a = random_labels(rng, n, ca);
    let b = random_labels(rng, n, cb);
    let dn = (nmi(&a, &b).unwrap() - log_nmi(a.labels(), b.labels())).abs();
    let dacc = (acc(&a, &b).unwrap() - brute_acc(a.labels(), b.labels())).abs();
    let dari = (ari(&a, &b).unwrap() - pair_ari(a.labels(), b.labels())).abs();
    dn.max(dacc).max(dari)
}

/// ACC against factorial enumeration for c <= 4, n <= 10.
pub fn acc_factorial_case(rng: &mut Rng) -> f64 {
    let n = rng.random_range(1..=10);
    let c = rng.random_range(1..=4);
    let a = random_labels(rng, n, c);
    let b = random_labels(rng, n, c);
    (acc(&a, &b).unwrap() - brute_acc(a.labels(), b.labels())).abs()
}
