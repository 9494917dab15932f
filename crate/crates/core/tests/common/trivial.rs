//! Closed-form example battery. Every case panics on mismatch; the list
//! in [`CASES`] is run one test per case by `tests/trivial.rs` and as a
//! whole by the acceptance target.

use dcboost::cli::{cmd_boost, cmd_eval, cmd_select, cmd_synth, EvalSource};
use dcboost::config::RunConfig;
use dcboost::feature_store::{
    generate_gaussian_mixture, load_dataset, save_dataset, ClassSizes, DataFormat, DatasetBundle, FeatureMatrix,
    LabelVector, SynthConfig,
};
use dcboost::knn_filter::{
    build_neighbor_table, filter_high_confidence, select_adaptive_k, select_batch, selection_scores, BatchView,
    FilterConfig,
};
use dcboost::losses::{
    class_weight, compute_prototypes, group_by_label, instance_loss, negative_loss, positive_loss, total_loss,
    ClassGroup, WeightMode,
};
use dcboost::metrics::{
    acc, ari, imbalance_ratio, intra_inter_similarity, knn_accuracy, nmi, silhouette, SilhouetteOptions,
};
use dcboost::pseudo_labeler::{assign, kmeans_fit, softmax_assign, KMeansConfig, KMeansModel};
use dcboost::rng;
use dcboost::trainer::{
    cluster_target, ema_update, pretrain_baseline, run_boost, sgd_step, train_epoch, warmup, AugmentConfig,
    Augmenter, DualNetworks, MlpNetwork, Phase, TrainerConfig,
};
use dcboost::Error;

use super::{random_labels, unit_rows};

macro_rules! cases {
    ($($name:ident),* $(,)?) => {
        pub const CASES: &[(&str, fn())] = &[$((stringify!($name), $name)),*];
    };
}

cases!(
    normalize_pythagorean_row,
    normalize_unit_row_unchanged,
    normalize_zero_row_fails,
    dcbf_small_round_trip,
    csv_label_header_attaches_truth,
    dcbf_bad_magic_fails,
    random_bundle_round_trip,
    truth_labels_round_trip,
    unwritable_path_is_io_error,
    synth_same_seed_identical,
    synth_long_tail_ratio,
    orthogonal_neighbors_tie_by_index,
    identical_vectors_sim_one,
    neighbor_budget_clamped,
    pure_batch_counts_and_scores,
    adaptive_k_unique_max,
    adaptive_k_tie_to_larger,
    adaptive_k_all_zero,
    pure_batch_selects_all,
    selection_size_matches_count,
    weight_singleton_one,
    weight_two_identical_quarter,
    weight_two_orthogonal_half,
    positive_identical_outputs_zero,
    positive_singletons_closed_form,
    prototype_singleton_is_member,
    prototype_identical_pair,
    prototype_antipodal_dropped,
    negative_single_class_zero,
    negative_orthogonal_minus_four,
    negative_identical_prototypes_zero,
    instance_equal_zero,
    instance_orthogonal_two,
    instance_quadratic_scaling,
    total_empty_selection_is_instance,
    total_sums_components,
    total_gradient_is_sum,
    kmeans_separated_duplicates,
    kmeans_identical_points_reseed,
    assign_exact_centroid,
    assign_equidistant_lower_index,
    assign_fixed_point,
    softmax_argmax,
    softmax_tie_lower,
    softmax_shift_invariant,
    nmi_identical_one,
    nmi_constant_zero,
    acc_permuted_one,
    acc_half,
    ari_identical_one,
    ari_reversed_one,
    silhouette_all_singletons_zero,
    knn_uniform_labels_one,
    intra_inter_identical,
    intra_inter_orthogonal,
    imbalance_balanced,
    imbalance_nine_three,
    imbalance_ignores_empty,
    augment_disabled_identity,
    augment_deterministic,
    forward_zero_weights_degenerate,
    forward_identity_layer,
    ema_momentum_one_fixed,
    ema_momentum_zero_copies,
    ema_midpoint,
    sgd_zero_grad_unchanged,
    sgd_unit_lr_zeroes,
    pretrain_zero_epochs_is_init,
    pretrain_deterministic,
    warmup_zero_epochs_no_change,
    warmup_moves_target_by_ema,
    unique_labels_instance_only,
    zero_lr_epoch_frozen,
    boost_zero_epochs_warmup_only,
    boost_deterministic,
    synth_cmd_round_trip,
    synth_cmd_byte_identical,
    synth_cmd_imbalance_reported,
    select_pure_file,
    select_fixed_k_constant,
    boost_cmd_zero_epochs_rows,
    boost_cmd_history_identical,
    eval_truth_perfect,
    eval_single_cluster_nan,
);

fn fm(rows: &[&[f64]]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows).unwrap()
}

fn unit(rows: &[&[f64]]) -> FeatureMatrix {
    fm(rows).l2_normalize().unwrap()
}

fn lv(v: &[usize]) -> LabelVector {
    LabelVector::from_labels(v.to_vec())
}

fn dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

pub fn normalize_pythagorean_row() {
    assert_eq!(fm(&[&[3.0, 4.0]]).l2_normalize().unwrap().row(0), &[0.6, 0.8]);
}

pub fn normalize_unit_row_unchanged() {
    assert_eq!(fm(&[&[1.0, 0.0, 0.0]]).l2_normalize().unwrap().row(0), &[1.0, 0.0, 0.0]);
}

pub fn normalize_zero_row_fails() {
    assert!(matches!(fm(&[&[0.0, 0.0]]).l2_normalize(), Err(Error::ZeroVector { row: 0 })));
}

pub fn dcbf_small_round_trip() {
    let d = dir();
    let p = d.path().join("a.dcbf");
    let x = FeatureMatrix::new(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
    save_dataset(&DatasetBundle::new(x.clone(), None, None).unwrap(), &p, DataFormat::Dcbf).unwrap();
    let back = load_dataset(&p, DataFormat::Dcbf).unwrap();
    assert_eq!((back.features.n(), back.features.d()), (4, 2));
    assert_eq!(back.features, x);
}

pub fn csv_label_header_attaches_truth() {
    let d = dir();
    let p = d.path().join("a.csv");
    std::fs::write(&p, "x,y,label\n1.0,2.0,0\n3.0,4.0,1\n0.5,0.5,1\n").unwrap();
    let b = load_dataset(&p, DataFormat::Csv).unwrap();
    assert_eq!(b.truth.unwrap().labels(), &[0, 1, 1]);
    assert_eq!(b.features.d(), 2);
}

pub fn dcbf_bad_magic_fails() {
    let d = dir();
    let p = d.path().join("bad.dcbf");
    std::fs::write(&p, b"XXXX\x01\x00\x00\x00").unwrap();
    assert!(matches!(load_dataset(&p, DataFormat::Dcbf), Err(Error::Format(_))));
}

pub fn random_bundle_round_trip() {
    let d = dir();
    let mut r = rng::stream(3, "rt");
    let x = unit_rows(&mut r, 10, 3);
    let x = FeatureMatrix::new(10, 3, x.into_data()).unwrap();
    let b = DatasetBundle::new(x, None, None).unwrap();
    for (f, fmt) in [("r.dcbf", DataFormat::Dcbf), ("r.csv", DataFormat::Csv)] {
        let p = d.path().join(f);
        save_dataset(&b, &p, fmt).unwrap();
        assert_eq!(load_dataset(&p, fmt).unwrap(), b, "{f}");
    }
}

pub fn truth_labels_round_trip() {
    let d = dir();
    let mut r = rng::stream(4, "rt");
    let x = FeatureMatrix::new(6, 2, unit_rows(&mut r, 6, 2).into_data()).unwrap();
    let t = lv(&[0, 2, 1, 1, 0, 2]);
    let b = DatasetBundle::new(x, Some(t.clone()), None).unwrap();
    for (f, fmt) in [("t.dcbf", DataFormat::Dcbf), ("t.csv", DataFormat::Csv)] {
        let p = d.path().join(f);
        save_dataset(&b, &p, fmt).unwrap();
        assert_eq!(load_dataset(&p, fmt).unwrap().truth.unwrap(), t, "{f}");
    }
}

pub fn unwritable_path_is_io_error() {
    let b = DatasetBundle::new(fm(&[&[1.0]]), None, None).unwrap();
    let r = save_dataset(&b, "/nonexistent-dir/for/sure/x.dcbf", DataFormat::Dcbf);
    assert!(matches!(r, Err(Error::Io(_))));
}

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig { c: 3, d: 4, sizes: ClassSizes::Balanced { n: 60 }, mean_separation: 6.0, within_std: 1.0, seed }
}

pub fn synth_same_seed_identical() {
    assert_eq!(generate_gaussian_mixture(&small_synth(5)).unwrap(), generate_gaussian_mixture(&small_synth(5)).unwrap());
}

pub fn synth_long_tail_ratio() {
    let cfg = SynthConfig { c: 5, sizes: ClassSizes::LongTailed { n: 550, ratio: 10.0 }, ..small_synth(1) };
    let counts = generate_gaussian_mixture(&cfg).unwrap().truth.unwrap().class_counts();
    assert_eq!(counts.iter().sum::<usize>(), 550);
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert_eq!(counts[0], 10 * counts[4], "{counts:?}");
}

fn filter(m: usize) -> FilterConfig {
    FilterConfig { m, ..FilterConfig::default() }
}

pub fn orthogonal_neighbors_tie_by_index() {
    let z = unit(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
    let l = lv(&[0, 0, 0]);
    let t = build_neighbor_table(&BatchView::new(&z, None, &l).unwrap(), &filter(2)).unwrap();
    assert_eq!(t.neighbors(0), &[1, 2]);
    assert_eq!(t.neighbors(1), &[0, 2]);
    assert_eq!(t.neighbors(2), &[0, 1]);
    assert!((0..3).all(|i| t.sims(i) == [0.0, 0.0]));
}

pub fn identical_vectors_sim_one() {
    let z = unit(&[&[0.3, 0.4, 0.5][..]; 5]);
    let l = lv(&[0, 1, 0, 1, 0]);
    let t = build_neighbor_table(&BatchView::new(&z, None, &l).unwrap(), &filter(4)).unwrap();
    assert!((0..5).all(|i| t.sims(i).iter().all(|s| (s - 1.0).abs() < 1e-12)));
}

pub fn neighbor_budget_clamped() {
    let mut r = rng::stream(1, "clamp");
    let z = unit_rows(&mut r, 4, 3);
    let l = lv(&[0, 0, 1, 1]);
    let t = build_neighbor_table(&BatchView::new(&z, None, &l).unwrap(), &filter(50)).unwrap();
    assert_eq!(t.m(), 3);
}

fn pure_batch() -> (FeatureMatrix, LabelVector) {
    let mut r = rng::stream(2, "pure");
    (unit_rows(&mut r, 8, 4), lv(&[3; 8]))
}

pub fn pure_batch_counts_and_scores() {
    let (z, l) = pure_batch();
    let t = build_neighbor_table(&BatchView::new(&z, None, &l).unwrap(), &filter(4)).unwrap();
    let c = selection_scores(&t, &l).unwrap();
    assert_eq!(c.counts, vec![8, 8, 8, 8]);
    assert_eq!(c.scores, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(select_adaptive_k(&c.scores), Some(4));
}

pub fn adaptive_k_unique_max() {
    assert_eq!(select_adaptive_k(&[1.0, 2.0, 3.0, 4.0]), Some(4));
}

pub fn adaptive_k_tie_to_larger() {
    assert_eq!(select_adaptive_k(&[2.0, 2.0, 1.0]), Some(2));
}

pub fn adaptive_k_all_zero() {
    let z = unit(&[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0], &[0.1, 0.9]]);
    let l = lv(&[0, 1, 2, 3]);
    let sel = select_batch(&BatchView::new(&z, None, &l).unwrap(), &filter(3)).unwrap();
    assert_eq!(sel.curve.scores, vec![0.0, 0.0, 0.0]);
    assert_eq!(sel.k_star, 3);
    assert!(sel.x_h.is_empty());
}

pub fn pure_batch_selects_all() {
    let (z, l) = pure_batch();
    let sel = select_batch(&BatchView::new(&z, None, &l).unwrap(), &filter(4)).unwrap();
    assert_eq!(sel.x_h, (0..8).collect::<Vec<_>>());
}

pub fn selection_size_matches_count() {
    let mut r = rng::stream(7, "size");
    for _ in 0..20 {
        let z = unit_rows(&mut r, 24, 3);
        let l = random_labels(&mut r, 24, 3);
        let t = build_neighbor_table(&BatchView::new(&z, None, &l).unwrap(), &filter(10)).unwrap();
        for k in 1..=10 {
            let s = filter_high_confidence(&t, &l, k).unwrap();
            assert_eq!(s.x_h.len(), s.curve.counts[k - 1]);
        }
    }
}

fn group(members: &[usize]) -> ClassGroup {
    ClassGroup { label: 0, members: members.to_vec() }
}

pub fn weight_singleton_one() {
    let z = unit(&[&[0.0, 1.0]]);
    assert_eq!(class_weight(&group(&[0]), &z, &z).unwrap(), 1.0);
}

pub fn weight_two_identical_quarter() {
    let z = unit(&[&[1.0, 0.0], &[1.0, 0.0]]);
    assert_eq!(class_weight(&group(&[0, 1]), &z, &z).unwrap(), 0.25);
}

pub fn weight_two_orthogonal_half() {
    let z = unit(&[&[1.0, 0.0], &[0.0, 1.0]]);
    assert_eq!(class_weight(&group(&[0, 1]), &z, &z).unwrap(), 0.5);
}

pub fn positive_identical_outputs_zero() {
    let z = unit(&[&[1.0, 0.0, 0.0][..]; 3]);
    for mode in [WeightMode::W0Off, WeightMode::W1Constant, WeightMode::WOursFlow] {
        assert_eq!(positive_loss(&z, &z, &[group(&[0, 1, 2])], mode).unwrap().0, 0.0);
    }
}

pub fn positive_singletons_closed_form() {
    let mut r = rng::stream(11, "single");
    let (a, b) = (unit_rows(&mut r, 5, 3), unit_rows(&mut r, 5, 3));
    let groups: Vec<ClassGroup> = (0..5).map(|i| ClassGroup { label: i, members: vec![i] }).collect();
    let expect: f64 = (0..5)
        .map(|i| 2.0 - 2.0 * a.row(i).iter().zip(b.row(i)).map(|(x, y)| x * y).sum::<f64>())
        .sum::<f64>()
        / 10.0;
    for mode in [WeightMode::W0Off, WeightMode::W1Constant, WeightMode::WOursFlow] {
        let v = positive_loss(&a, &b, &groups, mode).unwrap().0;
        assert!((v - expect).abs() < 1e-12, "{mode:?}: {v} vs {expect}");
    }
}

pub fn prototype_singleton_is_member() {
    let z = unit(&[&[0.6, 0.8]]);
    let p = compute_prototypes(&[group(&[0])], &z, &z);
    assert_eq!(p[0].v_o, z.row(0));
    assert_eq!(p[0].v_t, z.row(0));
}

pub fn prototype_identical_pair() {
    let z = unit(&[&[0.6, 0.8], &[0.6, 0.8]]);
    let p = compute_prototypes(&[group(&[0, 1])], &z, &z);
    assert_eq!(p[0].v_o, z.row(0));
}

pub fn prototype_antipodal_dropped() {
    let z = unit(&[&[1.0, 0.0], &[-1.0, 0.0]]);
    assert!(compute_prototypes(&[group(&[0, 1])], &z, &z).is_empty());
}

pub fn negative_single_class_zero() {
    let z = unit(&[&[1.0, 0.0], &[1.0, 0.0]]);
    let p = compute_prototypes(&[group(&[0, 1])], &z, &z);
    assert_eq!(negative_loss(&p, 2, 2).0, 0.0);
}

fn two_classes() -> Vec<ClassGroup> {
    vec![ClassGroup { label: 0, members: vec![0] }, ClassGroup { label: 1, members: vec![1] }]
}

pub fn negative_orthogonal_minus_four() {
    let z = unit(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let p = compute_prototypes(&two_classes(), &z, &z);
    assert_eq!(negative_loss(&p, 2, 2).0, -4.0);
}

pub fn negative_identical_prototypes_zero() {
    let z = unit(&[&[0.0, 1.0], &[0.0, 1.0]]);
    let p = compute_prototypes(&two_classes(), &z, &z);
    assert_eq!(negative_loss(&p, 2, 2).0, 0.0);
}

pub fn instance_equal_zero() {
    let x = fm(&[&[0.3, -0.2], &[1.0, 2.0]]);
    let (v, g) = instance_loss(&x, &x).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|&e| e == 0.0));
}

pub fn instance_orthogonal_two() {
    assert_eq!(instance_loss(&fm(&[&[1.0, 0.0]]), &fm(&[&[0.0, 1.0]])).unwrap().0, 2.0);
}

pub fn instance_quadratic_scaling() {
    let t = fm(&[&[0.0, 0.0], &[1.0, 1.0]]);
    let p1 = fm(&[&[0.5, -0.25], &[1.125, 1.0]]);
    let p3 = fm(&[&[1.5, -0.75], &[1.375, 1.0]]);
    let (v1, _) = instance_loss(&p1, &t).unwrap();
    let (v3, _) = instance_loss(&p3, &t).unwrap();
    assert_eq!(v3, 9.0 * v1);
}

pub fn total_empty_selection_is_instance() {
    let mut r = rng::stream(5, "empty");
    let (zo, zt, p) = (unit_rows(&mut r, 6, 3), unit_rows(&mut r, 6, 3), unit_rows(&mut r, 6, 3));
    let b = total_loss(&zo, &zt, &p, &zt, &[], WeightMode::WOursFlow).unwrap();
    assert_eq!(b.total, instance_loss(&p, &zt).unwrap().0);
    assert_eq!((b.l_pos, b.l_neg), (0.0, 0.0));
}

pub fn total_sums_components() {
    // positive 0.5, negative -4, instance 0.1
    let zo = fm(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]).l2_normalize().unwrap();
    let zt = fm(&[&[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]).l2_normalize().unwrap();
    let pred = fm(&[&[0.2, 0.0, 0.0], &[0.4, 0.0, 0.0]]);
    let target = fm(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
    let b = total_loss(&zo, &zt, &pred, &target, &two_classes(), WeightMode::WOursFlow).unwrap();
    assert_eq!(b.l_pos, 0.5);
    assert_eq!(b.l_neg, -4.0);
    assert!((b.l_ins - 0.1).abs() < 1e-15);
    assert_eq!(b.total, b.l_pos + b.l_neg + b.l_ins);
    assert!((b.total + 3.4).abs() < 1e-12);
}

pub fn total_gradient_is_sum() {
    let mut r = rng::stream(8, "lin");
    let (zo, zt) = (unit_rows(&mut r, 10, 4), unit_rows(&mut r, 10, 4));
    let labels = random_labels(&mut r, 10, 3);
    let groups = group_by_label(&(0..10).collect::<Vec<_>>(), &labels);
    let b = total_loss(&zo, &zt, &zo, &zt, &groups, WeightMode::WOursFlow).unwrap();
    let (_, gp) = positive_loss(&zo, &zt, &groups, WeightMode::WOursFlow).unwrap();
    let (_, gn) = negative_loss(&compute_prototypes(&groups, &zo, &zt), 10, 4);
    let sum: Vec<f64> = gp.iter().zip(&gn).map(|(a, b)| a + b).collect();
    assert_eq!(b.grad_z_o, sum);
}

fn km(c: usize) -> KMeansConfig {
    KMeansConfig { c, ..KMeansConfig::default() }
}

pub fn kmeans_separated_duplicates() {
    let x = fm(&[&[0.0, 0.0], &[10.0, 10.0], &[0.0, 0.0], &[10.0, 10.0], &[0.0, 0.0]]);
    let m = kmeans_fit(&x, &km(2)).unwrap();
    assert_eq!(m.inertia, 0.0);
    let mut cs = vec![m.centroid(0).to_vec(), m.centroid(1).to_vec()];
    cs.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    assert_eq!(cs, vec![vec![0.0, 0.0], vec![10.0, 10.0]]);
}

pub fn kmeans_identical_points_reseed() {
    let x = fm(&[&[1.0, 2.0][..]; 5]);
    let m = kmeans_fit(&x, &km(2)).unwrap();
    assert_eq!(m.inertia, 0.0);
    assert_eq!(m.centroid(0), &[1.0, 2.0]);
    assert_eq!(m.centroid(1), &[1.0, 2.0]);
}

fn model(centroids: &[f64], c: usize, d: usize) -> KMeansModel {
    KMeansModel {
        centroids: centroids.to_vec(),
        c,
        d,
        inertia: 0.0,
        iterations_run: 0,
        inertia_trace: Vec::new(),
        restart: 0,
    }
}

pub fn assign_exact_centroid() {
    let m = model(&[0.0, 0.0, 3.0, 1.0], 2, 2);
    assert_eq!(assign(&m, &fm(&[&[3.0, 1.0]])).unwrap().labels(), &[1]);
}

pub fn assign_equidistant_lower_index() {
    let m = model(&[-1.0, 0.0, 1.0, 0.0], 2, 2);
    assert_eq!(assign(&m, &fm(&[&[0.0, 5.0]])).unwrap().labels(), &[0]);
}

pub fn assign_fixed_point() {
    let mut r = rng::stream(6, "fp");
    let x = FeatureMatrix::new(40, 2, (0..80).map(|_| super::gaussian(&mut r)).collect()).unwrap();
    let m = kmeans_fit(&x, &KMeansConfig { c: 3, tol: 1e-300, ..KMeansConfig::default() }).unwrap();
    let l = assign(&m, &x).unwrap();
    for k in 0..3 {
        let mem: Vec<usize> = (0..40).filter(|&i| l.get(i) == k).collect();
        for j in 0..2 {
            let mean = mem.iter().map(|&i| x.row(i)[j]).sum::<f64>() / mem.len() as f64;
            assert!((mean - m.centroid(k)[j]).abs() < 1e-12);
        }
    }
}

pub fn softmax_argmax() {
    assert_eq!(softmax_assign(&fm(&[&[0.1, 0.9]])).labels(), &[1]);
}

pub fn softmax_tie_lower() {
    assert_eq!(softmax_assign(&fm(&[&[0.5, 0.5, 0.5]])).labels(), &[0]);
}

pub fn softmax_shift_invariant() {
    let a = fm(&[&[0.1, 0.9, 0.3], &[2.0, -1.0, 0.5]]);
    let b = fm(&[&[100.1, 100.9, 100.3], &[-5.0, -8.0, -6.5]]);
    assert_eq!(softmax_assign(&a), softmax_assign(&b));
}

pub fn nmi_identical_one() {
    let a = lv(&[0, 0, 1, 1, 2]);
    assert_eq!(nmi(&a, &a).unwrap(), 1.0);
}

pub fn nmi_constant_zero() {
    assert_eq!(nmi(&lv(&[0, 0, 0, 0]), &lv(&[0, 0, 1, 1])).unwrap(), 0.0);
}

pub fn acc_permuted_one() {
    assert_eq!(acc(&lv(&[2, 2, 0, 0, 1]), &lv(&[0, 0, 1, 1, 2])).unwrap(), 1.0);
}

pub fn acc_half() {
    assert_eq!(acc(&lv(&[1, 1, 1, 1]), &lv(&[0, 0, 1, 1])).unwrap(), 0.5);
}

pub fn ari_identical_one() {
    let a = lv(&[0, 1, 1, 2, 2, 2]);
    assert_eq!(ari(&a, &a).unwrap(), 1.0);
}

pub fn ari_reversed_one() {
    assert_eq!(ari(&lv(&[0, 0, 1, 1]), &lv(&[1, 1, 0, 0])).unwrap(), 1.0);
}

pub fn silhouette_all_singletons_zero() {
    let x = fm(&[&[0.0, 1.0], &[1.0, 0.0], &[2.0, 2.0], &[3.0, 0.5]]);
    assert_eq!(silhouette(&x, &lv(&[0, 1, 2, 3]), &SilhouetteOptions::default()).unwrap(), 0.0);
}

pub fn knn_uniform_labels_one() {
    let mut r = rng::stream(9, "knn");
    assert_eq!(knn_accuracy(&unit_rows(&mut r, 12, 3), &lv(&[4; 12]), 5).unwrap(), 1.0);
}

pub fn intra_inter_identical() {
    let x = unit(&[&[0.0, 1.0][..]; 4]);
    assert_eq!(intra_inter_similarity(&x, &lv(&[0, 0, 1, 1])).unwrap(), (1.0, 1.0));
}

pub fn intra_inter_orthogonal() {
    let x = unit(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]]);
    assert_eq!(intra_inter_similarity(&x, &lv(&[0, 0, 1, 1])).unwrap(), (1.0, 0.0));
}

pub fn imbalance_balanced() {
    assert_eq!(imbalance_ratio(&[0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap().ratio, 1.0);
}

pub fn imbalance_nine_three() {
    let mut l = vec![0; 9];
    l.extend([1; 3]);
    assert_eq!(imbalance_ratio(&l, 2).unwrap().ratio, 3.0);
}

pub fn imbalance_ignores_empty() {
    let s = imbalance_ratio(&[0, 0, 0, 0, 0, 2], 3).unwrap();
    assert_eq!(s.ratio, 5.0);
    assert_eq!(s.empty_classes, vec![1]);
}

pub fn augment_disabled_identity() {
    let x = fm(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 7.0]]);
    let aug = Augmenter::for_data(&AugmentConfig { jitter_std: 0.0, dropout_prob: 0.0 }, &x).unwrap();
    assert_eq!(aug.apply(&x, &mut rng::stream(1, "a")).unwrap(), x);
}

pub fn augment_deterministic() {
    let x = fm(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 7.0], &[0.0, 1.0, 1.0]]);
    let aug = Augmenter::for_data(&AugmentConfig::default(), &x).unwrap();
    assert_eq!(aug.apply(&x, &mut rng::stream(1, "a")).unwrap(), aug.apply(&x, &mut rng::stream(1, "a")).unwrap());
}

pub fn forward_zero_weights_degenerate() {
    let net = MlpNetwork::zeros(&[3, 4, 2]).unwrap();
    assert!(matches!(net.forward(&fm(&[&[1.0, 2.0, 3.0]])), Err(Error::DegenerateOutput { row: 0 })));
}

pub fn forward_identity_layer() {
    let net = MlpNetwork::from_params(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(net.forward(&fm(&[&[0.0, 1.0, 0.0]])).unwrap().row(0), &[0.0, 1.0, 0.0]);
}

fn pair_nets(a: f64, b: f64) -> (MlpNetwork, MlpNetwork) {
    (MlpNetwork::from_params(&[1, 1], vec![a, a]).unwrap(), MlpNetwork::from_params(&[1, 1], vec![b, b]).unwrap())
}

pub fn ema_momentum_one_fixed() {
    let (o, mut t) = pair_nets(0.3, -1.7);
    ema_update(&o, &mut t, 1.0).unwrap();
    assert_eq!(t.params(), &[-1.7, -1.7]);
}

pub fn ema_momentum_zero_copies() {
    let (o, mut t) = pair_nets(0.3, -1.7);
    ema_update(&o, &mut t, 0.0).unwrap();
    assert_eq!(t, o);
}

pub fn ema_midpoint() {
    let (o, mut t) = pair_nets(1.0, 0.0);
    ema_update(&o, &mut t, 0.5).unwrap();
    assert_eq!(t.params(), &[0.5, 0.5]);
}

pub fn sgd_zero_grad_unchanged() {
    let (mut n, _) = pair_nets(0.7, 0.0);
    let before = n.clone();
    sgd_step(&mut n, &[0.0, 0.0], 0.5).unwrap();
    assert_eq!(n, before);
}

pub fn sgd_unit_lr_zeroes() {
    let (mut n, _) = pair_nets(0.7, 0.0);
    let g = n.params().to_vec();
    sgd_step(&mut n, &g, 1.0).unwrap();
    assert_eq!(n.params(), &[0.0, 0.0]);
}

pub fn tiny_data(seed: u64) -> DatasetBundle {
    generate_gaussian_mixture(&small_synth(seed)).unwrap()
}

pub fn tiny_cfg(seed: u64) -> TrainerConfig {
    let mut cfg = TrainerConfig {
        batch_size: 20,
        pretrain_epochs: 2,
        warmup_epochs: 2,
        boost_epochs: 2,
        hidden_dims: vec![8],
        out_dim: 4,
        seed,
        ..TrainerConfig::default()
    };
    cfg.filter.m = 10;
    cfg.kmeans.c = 3;
    cfg.kmeans.n_init = 2;
    cfg
}

pub fn pretrain_zero_epochs_is_init() {
    let cfg = TrainerConfig { pretrain_epochs: 0, ..tiny_cfg(3) };
    let nets = pretrain_baseline(&tiny_data(1), &cfg).unwrap();
    let fresh = DualNetworks::new(4, &[8], 4, &mut rng::stream(3, "pretrain-init")).unwrap();
    assert_eq!(nets, fresh);
}

pub fn pretrain_deterministic() {
    let (d, cfg) = (tiny_data(1), tiny_cfg(3));
    assert_eq!(pretrain_baseline(&d, &cfg).unwrap(), pretrain_baseline(&d, &cfg).unwrap());
}

pub fn warmup_zero_epochs_no_change() {
    let (d, cfg) = (tiny_data(1), TrainerConfig { warmup_epochs: 0, ..tiny_cfg(3) });
    let mut nets = DualNetworks::new(4, &[8], 4, &mut rng::stream(1, "w")).unwrap();
    let before = nets.clone();
    assert!(warmup(&mut nets, &d, &cfg).unwrap().is_empty());
    assert_eq!(nets, before);
}

pub fn warmup_moves_target_by_ema() {
    let (d, cfg) = (tiny_data(1), TrainerConfig { warmup_epochs: 1, ..tiny_cfg(3) });
    let mut nets = DualNetworks::new(4, &[8], 4, &mut rng::stream(1, "w")).unwrap();
    let before = nets.target.clone();
    warmup(&mut nets, &d, &cfg).unwrap();
    assert_ne!(nets.target, before);
}

pub fn unique_labels_instance_only() {
    let mut r = rng::stream(12, "uniq");
    let x = FeatureMatrix::new(8, 4, unit_rows(&mut r, 8, 4).into_data()).unwrap();
    let d = DatasetBundle::new(x, None, None).unwrap();
    let cfg = TrainerConfig { batch_size: 8, ..tiny_cfg(2) };
    let mut nets = DualNetworks::new(4, &[8], 4, &mut r).unwrap();
    let rec = train_epoch(&mut nets, &d, &lv(&[0, 1, 2, 3, 4, 5, 6, 7]), &cfg, 1).unwrap();
    assert_eq!((rec.l_pos, rec.l_neg), (0.0, 0.0));
    assert_eq!(rec.batches[0].x_h_len, 0);
    assert_eq!(rec.l_total, rec.l_ins);
}

pub fn zero_lr_epoch_frozen() {
    let d = tiny_data(2);
    let cfg = TrainerConfig { base_lr: 0.0, ..tiny_cfg(4) };
    let mut nets = DualNetworks::new(4, &[8], 4, &mut rng::stream(2, "z")).unwrap();
    let before = nets.clone();
    let pseudo = d.truth.clone().unwrap();
    let rec = train_epoch(&mut nets, &d, &pseudo, &cfg, 1).unwrap();
    assert_eq!(nets, before);
    assert_eq!(rec.batches.len(), 3);
    assert!(rec.l_ins.is_finite());
}

pub fn boost_zero_epochs_warmup_only() {
    let d = tiny_data(3);
    let cfg = TrainerConfig { boost_epochs: 0, ..tiny_cfg(5) };
    let pre = pretrain_baseline(&d, &cfg).unwrap();
    let out = run_boost(&d, &pre, &cfg).unwrap();
    assert_eq!(out.history.records.len(), 2);
    assert!(out.history.records.iter().all(|r| r.phase == Phase::Warmup));
    let (_, _, labels) = cluster_target(&out.nets, &d, &cfg, "epoch-2").unwrap();
    assert_eq!(out.labels, labels);
}

pub fn boost_deterministic() {
    let d = tiny_data(3);
    let cfg = tiny_cfg(6);
    let pre = pretrain_baseline(&d, &cfg).unwrap();
    let a = run_boost(&d, &pre, &cfg).unwrap();
    let b = run_boost(&d, &pre, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.nets, b.nets);
}

pub fn synth_cmd_round_trip() {
    let t = dir();
    let p = t.path().join("d.dcbf");
    let cfg = RunConfig::default();
    cmd_synth(&cfg, &p, DataFormat::Dcbf).unwrap();
    let b = load_dataset(&p, DataFormat::Dcbf).unwrap();
    assert_eq!((b.n(), b.features.d()), (2000, 16));
}

pub fn synth_cmd_byte_identical() {
    let t = dir();
    let cfg = RunConfig::parse("seed=17\nsynth.n=300\n").unwrap();
    let (a, b) = (t.path().join("a.dcbf"), t.path().join("b.dcbf"));
    cmd_synth(&cfg, &a, DataFormat::Dcbf).unwrap();
    cmd_synth(&cfg, &b, DataFormat::Dcbf).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

pub fn synth_cmd_imbalance_reported() {
    let t = dir();
    let p = t.path().join("i.dcbf");
    let cfg = RunConfig::parse("synth.imbalance_ratio=10\n").unwrap();
    let data = cmd_synth(&cfg, &p, DataFormat::Dcbf).unwrap();
    let r = cmd_eval(&data, EvalSource::Truth, &cfg).unwrap();
    assert_eq!(r.report.imbalance_ratio, 10.0);
}

fn pure_file() -> DatasetBundle {
    let mut r = rng::stream(13, "purefile");
    let x = FeatureMatrix::new(16, 3, unit_rows(&mut r, 16, 3).into_data()).unwrap();
    DatasetBundle::new(x, Some(lv(&[1; 16])), Some(lv(&[0; 16]))).unwrap()
}

pub fn select_pure_file() {
    let cfg = RunConfig::parse("select.batch_size=8\nfilter.m=5\n").unwrap();
    let rep = cmd_select(&pure_file(), &cfg).unwrap();
    assert_eq!(rep.precision(), 1.0);
    assert_eq!(rep.xh_frac(), 1.0);
}

pub fn select_fixed_k_constant() {
    let mut r = rng::stream(14, "fixed");
    let x = FeatureMatrix::new(64, 4, unit_rows(&mut r, 64, 4).into_data()).unwrap();
    let d = DatasetBundle::new(x, None, Some(random_labels(&mut r, 64, 3))).unwrap();
    let cfg = RunConfig::parse("select.batch_size=16\nfilter.m=10\nfilter.fixed_k=5\n").unwrap();
    let rep = cmd_select(&d, &cfg).unwrap();
    assert_eq!(rep.batches.len(), 4);
    assert!(rep.batches.iter().all(|b| b.record.k_star == 5));
}

pub fn tiny_run_config(extra: &str) -> RunConfig {
    RunConfig::parse(&format!(
        "seed=21\ntrainer.batch_size=20\ntrainer.pretrain_epochs=2\ntrainer.warmup_epochs=2\n\
         trainer.boost_epochs=2\ntrainer.hidden_dims=8\ntrainer.out_dim=4\nfilter.m=10\nkmeans.n_init=2\n{extra}"
    ))
    .unwrap()
}

pub fn boost_cmd_zero_epochs_rows() {
    let t = dir();
    let cfg = tiny_run_config("trainer.boost_epochs=0\n");
    cmd_boost(&tiny_data(4), &cfg, Some(t.path()), None).unwrap();
    let hist = std::fs::read_to_string(t.path().join("history.csv")).unwrap();
    let rows: Vec<&str> = hist.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').nth(5) == Some("nan")));
}

pub fn boost_cmd_history_identical() {
    let (a, b) = (dir(), dir());
    let cfg = tiny_run_config("");
    let data = tiny_data(4);
    cmd_boost(&data, &cfg, Some(a.path()), None).unwrap();
    cmd_boost(&data, &cfg, Some(b.path()), None).unwrap();
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("history.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

pub fn eval_truth_perfect() {
    let r = cmd_eval(&tiny_data(5), EvalSource::Truth, &RunConfig::default()).unwrap();
    assert_eq!((r.report.nmi, r.report.acc, r.report.ari), (1.0, 1.0, 1.0));
}

pub fn eval_single_cluster_nan() {
    let r = cmd_eval(&tiny_data(5), EvalSource::Labels(lv(&[0; 60])), &RunConfig::default()).unwrap();
    assert!(r.report.silhouette.is_nan());
    assert!(!r.report.warnings.is_empty());
    assert!(r.report.to_kv().contains("silhouette=nan"));
}
