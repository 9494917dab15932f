//! Discriminative objective with hand-derived gradients.
//!
//! * positive loss: class-weighted squared distances between online and
//!   target outputs of same-class high-confidence samples,
//! * negative loss: repulsion between online and target class prototypes,
//! * instance loss: predictor output vs target output of the other view.
//!
//! Target-branch quantities are constants; every gradient returned here is
//! with respect to online-branch inputs (`z_o` rows or predictor outputs),
//! laid out row-major like the input matrix.

use std::collections::BTreeMap;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::feature_store::{dot, norm, FeatureMatrix, LabelVector, ZERO_NORM};

/// How the per-class weight enters the positive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// No weighting (`w_c = 1`).
    W0Off,
    /// Weighted, but the weight is a constant for differentiation.
    W1Constant,
    /// Weighted, and the gradient flows through the weight.
    #[default]
    WOursFlow,
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w0_off" => Ok(Self::W0Off),
            "w1_constant" => Ok(Self::W1Constant),
            "w_ours_flow" => Ok(Self::WOursFlow),
            other => Err(Error::Config(format!("unknown weight mode {other:?}"))),
        }
    }
}

/// Members (row positions) of one pseudo-class inside the selected set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassGroup {
    pub label: usize,
    pub members: Vec<usize>,
}

/// Groups the selected positions by label, ordered by label.
pub fn group_by_label(selected: &[usize], labels: &LabelVector) -> Vec<ClassGroup> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in selected {
        map.entry(labels.get(i)).or_default().push(i);
    }
    map.into_iter().map(|(label, members)| ClassGroup { label, members }).collect()
}

fn check_pair(z_o: &FeatureMatrix, z_t: &FeatureMatrix) -> Result<()> {
    if z_o.n() != z_t.n() || z_o.d() != z_t.d() {
        return Err(Error::Shape(format!(
            "online {}x{} vs target {}x{}",
            z_o.n(),
            z_o.d(),
            z_t.n(),
            z_t.d()
        )));
    }
    Ok(())
}

fn row_sum(z: &FeatureMatrix, members: &[usize]) -> Vec<f64> {
    let mut s = vec![0.0; z.d()];
    for &i in members {
        s.iter_mut().zip(z.row(i)).for_each(|(a, b)| *a += b);
    }
    s
}

/// `1 / (|sum z_o| * |sum z_t|)` over the group.
pub fn class_weight(group: &ClassGroup, z_o: &FeatureMatrix, z_t: &FeatureMatrix) -> Result<f64> {
    if group.members.is_empty() {
        return Err(Error::Value(format!("class {} has no members", group.label)));
    }
    let so = row_sum(z_o, &group.members);
    let st = row_sum(z_t, &group.members);
    if norm(&so) < ZERO_NORM || norm(&st) < ZERO_NORM {
        return Err(Error::DegenerateClass { label: group.label });
    }
    Ok(inverse_norm_product(&so, &st))
}

/// `1 / (|a| |b|)`, taking a single square root so that exact squared
/// norms give exact weights.
fn inverse_norm_product(a: &[f64], b: &[f64]) -> f64 {
    1.0 / (dot(a, a) * dot(b, b)).sqrt()
}

/// Squared online/target distance in the inner-product form `2 - 2 a.b`.
/// Inputs are unit vectors; the cosine is clamped against rounding so the
/// result stays in `[0, 4]`.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    2.0 - 2.0 * dot(a, b).clamp(-1.0, 1.0)
}

/// Positive loss over all ordered member pairs (self-pairs included),
/// and its gradient with respect to `z_o`.
pub fn positive_loss(
    z_o: &FeatureMatrix,
    z_t: &FeatureMatrix,
    groups: &[ClassGroup],
    mode: WeightMode,
) -> Result<(f64, Vec<f64>)> {
    check_pair(z_o, z_t)?;
    if groups.is_empty() {
        return Err(Error::Value("positive loss needs at least one class group".into()));
    }
    let d = z_o.d();
    let scale = 1.0 / (2.0 * groups.len() as f64);
    let mut grad = vec![0.0; z_o.n() * d];
    let mut value = 0.0;
    for g in groups {
        if g.members.is_empty() {
            return Err(Error::Value(format!("class {} has no members", g.label)));
        }
        let sum_o = row_sum(z_o, &g.members);
        let sum_t = row_sum(z_t, &g.members);
        let nc = g.members.len() as f64;
        // sum over ordered pairs of (2 - 2 a_i.b_j) = 2 n^2 - 2 A.B
        let pair_sum = 2.0 * nc * nc - 2.0 * dot(&sum_o, &sum_t);
        let (w, dw_da): (f64, Option<Vec<f64>>) = match mode {
            WeightMode::W0Off => (1.0, None),
            WeightMode::W1Constant | WeightMode::WOursFlow => {
                let no = norm(&sum_o);
                let nt = norm(&sum_t);
                if no < ZERO_NORM || nt < ZERO_NORM {
                    return Err(Error::DegenerateClass { label: g.label });
                }
                let w = inverse_norm_product(&sum_o, &sum_t);
                let flow = (mode == WeightMode::WOursFlow)
                    .then(|| sum_o.iter().map(|a| -w * a / (no * no)).collect());
                (w, flow)
            }
        };
        value += scale * w * pair_sum;
        // every member's a_i enters A identically
        let mut g_a: Vec<f64> = sum_t.iter().map(|b| -2.0 * w * b * scale).collect();
        if let Some(dw) = dw_da {
            g_a.iter_mut().zip(&dw).for_each(|(x, dw)| *x += scale * pair_sum * dw);
        }
        for &i in &g.members {
            grad[i * d..(i + 1) * d].iter_mut().zip(&g_a).for_each(|(x, y)| *x += y);
        }
    }
    Ok((value, grad))
}

/// Normalized online/target class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub label: usize,
    pub v_o: Vec<f64>,
    pub v_t: Vec<f64>,
    /// Norm of the unnormalized online sum, needed for the gradient.
    pub online_norm: f64,
    pub members: Vec<usize>,
}

/// Prototypes for every group; classes with a zero summed feature are
/// skipped with a warning.
pub fn compute_prototypes(groups: &[ClassGroup], z_o: &FeatureMatrix, z_t: &FeatureMatrix) -> Vec<Prototype> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let so = row_sum(z_o, &g.members);
        let st = row_sum(z_t, &g.members);
        let (no, nt) = (norm(&so), norm(&st));
        if g.members.is_empty() || no < ZERO_NORM || nt < ZERO_NORM {
            warn!("class {} dropped from prototypes: zero summed feature", g.label);
            continue;
        }
        out.push(Prototype {
            label: g.label,
            v_o: so.iter().map(|v| v / no).collect(),
            v_t: st.iter().map(|v| v / nt).collect(),
            online_norm: no,
            members: g.members.clone(),
        });
    }
    out
}

/// `-2 + 2 v_o[c1].v_t[c2]` for every ordered pair `c1 != c2`.
pub fn negative_pair_terms(prototypes: &[Prototype]) -> Vec<f64> {
    let mut terms = Vec::new();
    for (a, pa) in prototypes.iter().enumerate() {
        for (b, pb) in prototypes.iter().enumerate() {
            if a != b {
                terms.push(-2.0 + 2.0 * dot(&pa.v_o, &pb.v_t).clamp(-1.0, 1.0));
            }
        }
    }
    terms
}

/// Prototype repulsion and its gradient with respect to `z_o` (an `n x d`
/// buffer), flowing through the online prototype normalization.
pub fn negative_loss(prototypes: &[Prototype], n: usize, d: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; n * d];
    if prototypes.len() < 2 {
        return (0.0, grad);
    }
    let value = negative_pair_terms(prototypes).iter().sum();
    let total_t: Vec<f64> = (0..d).map(|k| prototypes.iter().map(|p| p.v_t[k]).sum()).collect();
    for p in prototypes {
        // dL/dv_o = 2 * sum of the other classes' target prototypes
        let u: Vec<f64> = total_t.iter().zip(&p.v_t).map(|(t, own)| 2.0 * (t - own)).collect();
        let vu = dot(&p.v_o, &u);
        let g_sum: Vec<f64> = u.iter().zip(&p.v_o).map(|(ui, vi)| (ui - vu * vi) / p.online_norm).collect();
        for &i in &p.members {
            grad[i * d..(i + 1) * d].iter_mut().zip(&g_sum).for_each(|(x, y)| *x += y);
        }
    }
    (value, grad)
}

/// Mean squared distance between predictor and target outputs, with the
/// gradient with respect to the predictor outputs.
pub fn instance_loss(pred_out: &FeatureMatrix, target_out: &FeatureMatrix) -> Result<(f64, Vec<f64>)> {
    check_pair(pred_out, target_out)?;
    let n = pred_out.n() as f64;
    let mut value = 0.0;
    let grad = pred_out
        .data()
        .iter()
        .zip(target_out.data())
        .map(|(p, t)| {
            let diff = p - t;
            value += diff * diff;
            2.0 * diff / n
        })
        .collect();
    Ok((value / n, grad))
}

/// Loss values and online-branch gradients for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_pos: f64,
    pub l_neg: f64,
    pub l_ins: f64,
    pub total: f64,
    /// Gradient of `l_pos + l_neg` with respect to the online encoder outputs.
    pub grad_z_o: Vec<f64>,
    /// Gradient of `l_ins` with respect to the predictor outputs.
    pub grad_pred: Vec<f64>,
    /// Classes dropped as degenerate.
    pub dropped: Vec<usize>,
}

/// Full objective. `groups` index rows of `z_o`/`z_t` and should only
/// cover the high-confidence samples; the instance term covers every row
/// of `pred_out`/`target_out`.
pub fn total_loss(
    z_o: &FeatureMatrix,
    z_t: &FeatureMatrix,
    pred_out: &FeatureMatrix,
    target_out: &FeatureMatrix,
    groups: &[ClassGroup],
    mode: WeightMode,
) -> Result<LossBreakdown> {
    check_pair(z_o, z_t)?;
    let (l_ins, grad_pred) = instance_loss(pred_out, target_out)?;
    let mut dropped = Vec::new();
    let kept: Vec<ClassGroup> = groups
        .iter()
        .filter(|g| match class_weight(g, z_o, z_t) {
            Ok(_) => true,
            Err(_) => {
                warn!("class {} dropped from the discriminative terms", g.label);
                dropped.push(g.label);
                false
            }
        })
        .cloned()
        .collect();
    let (l_pos, l_neg, grad_z_o) = if kept.is_empty() {
        (0.0, 0.0, vec![0.0; z_o.n() * z_o.d()])
    } else {
        let (l_pos, mut g) = positive_loss(z_o, z_t, &kept, mode)?;
        let protos = compute_prototypes(&kept, z_o, z_t);
        let (l_neg, gn) = negative_loss(&protos, z_o.n(), z_o.d());
        g.iter_mut().zip(&gn).for_each(|(a, b)| *a += b);
        (l_pos, l_neg, g)
    };
    if let Some(bad) = grad_z_o.iter().chain(&grad_pred).find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("loss gradient entry {bad}")));
    }
    Ok(LossBreakdown { l_pos, l_neg, l_ins, total: l_pos + l_neg + l_ins, grad_z_o, grad_pred, dropped })
}
