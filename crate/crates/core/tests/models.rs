use errp_core::eval::{self, Hyperparams, Method};
use errp_core::features::{self, RiemannConfig, BENCHMARK_WINDOWS};
use errp_core::signal::{EpochSet, Label};
use errp_core::synth::{self, ErpTemplateSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn short_spec() -> ErpTemplateSpec {
    ErpTemplateSpec { t0_offset_s: -0.2, duration_s: 1.0, ..ErpTemplateSpec::default() }
}

fn alternating(n: usize) -> Vec<Label> {
    (0..n).map(|i| if i % 2 == 0 { Label::Success } else { Label::Failure }).collect()
}

fn dataset(n: usize, nc: usize, seed: u64) -> EpochSet {
    synth::generate_epochs(&alternating(n), &short_spec(), nc, 128.0, seed).unwrap()
}

#[test]
fn super_trial_prototype_block_is_shared() {
    let set = dataset(20, 4, 1);
    let cfg = RiemannConfig { shrinkage: 0.0, ..RiemannConfig::default() };
    let model = features::fit_riemann(&set, &cfg).unwrap();
    let covs: Vec<_> = set.epochs().iter().map(|e| features::riemann_covariance(&model, e).unwrap()).collect();
    let nb = 2 * model.n_channels();
    for c in &covs[1..] {
        for i in 0..nb {
            for j in 0..nb {
                assert!((c.matrix()[(i, j)] - covs[0].matrix()[(i, j)]).abs() < 1e-12);
            }
        }
    }
    let shrunk = features::fit_riemann(&set, &RiemannConfig::default()).unwrap();
    for e in set.epochs() {
        let c = features::riemann_covariance(&shrunk, e).unwrap();
        assert!(c.matrix().asymmetry() < 1e-12);
        assert!(c.eigenvalues().unwrap()[0] > 0.0);
    }
}

#[test]
fn benchmark_feature_count() {
    for nc in [1, 3, 8] {
        let set = dataset(10, nc, 2);
        let (_, feats) = features::fit_transform_benchmark(&set, &BENCHMARK_WINDOWS).unwrap();
        assert!(feats.iter().all(|f| f.values.len() == nc * 2 * BENCHMARK_WINDOWS.len()));
    }
}

#[test]
fn transform_depends_only_on_the_fitted_model() {
    let set = dataset(30, 4, 3);
    let train = set.subset(&(0..20).collect::<Vec<_>>()).unwrap();
    let model = features::fit_riemann(&train, &RiemannConfig::default()).unwrap();
    let bench = features::fit_benchmark(&train, &BENCHMARK_WINDOWS).unwrap();
    let e = &set.epochs()[25];
    let alone = features::transform_riemann(&model, e).unwrap();
    let b_alone = features::transform_benchmark(&bench, e).unwrap();
    for other in &set.epochs()[20..] {
        features::transform_riemann(&model, other).unwrap();
        features::transform_benchmark(&bench, other).unwrap();
    }
    assert_eq!(features::transform_riemann(&model, e).unwrap(), alone);
    assert_eq!(features::transform_benchmark(&bench, e).unwrap(), b_alone);
}

#[test]
fn fit_transform_matches_separate_transform() {
    let set = dataset(24, 3, 4);
    let (model, feats) = features::fit_transform_riemann(&set, &RiemannConfig::default()).unwrap();
    for (e, f) in set.epochs().iter().zip(&feats) {
        let g = features::transform_riemann(&model, e).unwrap();
        for (a, b) in f.values.iter().zip(&g.values) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }
}

#[test]
fn dropping_a_test_epoch_leaves_other_predictions() {
    let set = dataset(40, 4, 5);
    let plan = eval::make_fold_plan(&set.labels(), 4, 1, 9).unwrap();
    let hp = Hyperparams::default();
    let train = set.subset(&plan.train_indices(0, 0)).unwrap();
    let test_idx = plan.test_indices(0, 0);
    let (model, tf) = features::fit_transform_benchmark(&train, &hp.benchmark_windows).unwrap();
    let clf = errp_core::logistic::fit(&tf, &train.labels(), &hp.logistic).unwrap();
    let predict = |idx: &[usize]| -> Vec<Label> {
        idx.iter().map(|&i| clf.predict(&features::transform_benchmark(&model, &set.epochs()[i]).unwrap()).unwrap()).collect()
    };
    let all = predict(&test_idx);
    let fewer = predict(&test_idx[1..]);
    assert_eq!(&all[1..], fewer.as_slice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn training_order_does_not_change_models(seed in any::<u64>()) {
        let set = dataset(16, 3, seed);
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = set.subset(&order).unwrap();
        let a = features::fit_riemann(&set, &RiemannConfig::default()).unwrap();
        let b = features::fit_riemann(&shuffled, &RiemannConfig::default()).unwrap();
        prop_assert_eq!(&a.prototypes, &b.prototypes);
        prop_assert_eq!(a.reference(), b.reference());
        let ba = features::fit_benchmark(&set, &BENCHMARK_WINDOWS).unwrap();
        let bb = features::fit_benchmark(&shuffled, &BENCHMARK_WINDOWS).unwrap();
        prop_assert_eq!(ba, bb);
    }

    #[test]
    fn swapped_labels_mirror_the_dataset(seed in any::<u64>()) {
        let labels = alternating(12);
        let flipped: Vec<Label> = labels.iter().map(|l| l.flipped()).collect();
        let spec = short_spec();
        let a = synth::generate_epochs(&labels, &spec, 4, 128.0, seed).unwrap();
        let b = synth::generate_epochs(&flipped, &spec, 4, 128.0, seed).unwrap();
        let names = synth::channel_names(4);
        let gains = spec.gains(&names);
        let diff = spec.template(Label::Failure, &gains, 128.0).sub(&spec.template(Label::Success, &gains, 128.0)).unwrap();
        for (ea, eb) in a.epochs().iter().zip(b.epochs()) {
            let sign = if ea.label == Label::Success { 1.0 } else { -1.0 };
            let d = eb.data.sub(&ea.data).unwrap().sub(&diff.scaled(sign)).unwrap();
            prop_assert!(d.max_abs() < 1e-12);
        }
        let quiet = ErpTemplateSpec { noise_rms_uv: 0.0, ..spec };
        let qa = synth::generate_epochs(&labels, &quiet, 4, 128.0, seed).unwrap();
        let qb = synth::generate_epochs(&flipped, &quiet, 4, 128.0, seed).unwrap();
        prop_assert_eq!(&qa.epochs()[0].data, &qb.epochs()[1].data);
        prop_assert_eq!(&qa.epochs()[1].data, &qb.epochs()[0].data);
    }

    #[test]
    fn cv_is_a_pure_function(seed in any::<u64>()) {
        let set = dataset(20, 3, seed);
        let plan = eval::make_fold_plan(&set.labels(), 2, 2, seed).unwrap();
        let hp = Hyperparams::default();
        for m in [Method::Riemann, Method::Benchmark] {
            prop_assert_eq!(eval::run_cv(&set, m, &plan, &hp).unwrap(), eval::run_cv(&set, m, &plan, &hp).unwrap());
        }
    }
}
