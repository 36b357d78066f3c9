//! Repeated stratified cross-validation, the corrected resampled t-test,
//! the cross-participant sign-flip permutation test and shuffle-based
//! chance levels.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{self, RiemannConfig, BENCHMARK_WINDOWS};
use crate::linalg;
use crate::logistic::{self, LogisticConfig};
use crate::signal::{EpochSet, Label};

/// Fold index of every epoch, per repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub n_epochs: usize,
    pub k: usize,
    pub r: usize,
    pub seed: u64,
    pub assignments: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn test_indices(&self, repeat: usize, fold: usize) -> Vec<usize> {
        (0..self.n_epochs).filter(|&i| self.assignments[repeat][i] == fold).collect()
    }

    pub fn train_indices(&self, repeat: usize, fold: usize) -> Vec<usize> {
        (0..self.n_epochs).filter(|&i| self.assignments[repeat][i] != fold).collect()
    }

    /// `(repeat, fold)` pairs in result order.
    pub fn splits(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.r).flat_map(move |rep| (0..self.k).map(move |f| (rep, f)))
    }

    pub fn n_splits(&self) -> usize {
        self.r * self.k
    }
}

/// Per repeat: shuffle each class, then deal its members round-robin over
/// folds, continuing the dealing position from one class to the next.
pub fn make_fold_plan(labels: &[Label], k: usize, r: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InsufficientData("at least two folds are required"));
    }
    if r == 0 {
        return Err(Error::InsufficientData("at least one repeat is required"));
    }
    let classes = [Label::Success, Label::Failure];
    let members: Vec<Vec<usize>> = classes.iter().map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect()).collect();
    if members.iter().any(|m| m.len() < k) {
        return Err(Error::InsufficientData("each class needs at least k epochs"));
    }
    let mut assignments = Vec::with_capacity(r);
    for rep in 0..r {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64 + 1);
        let mut fold_of = vec![0usize; labels.len()];
        let mut pos = 0usize;
        for m in &members {
            let mut idx = m.clone();
            idx.shuffle(&mut rng);
            for i in idx {
                fold_of[i] = pos % k;
                pos += 1;
            }
        }
        assignments.push(fold_of);
    }
    Ok(FoldPlan { n_epochs: labels.len(), k, r, seed, assignments })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Riemann,
    Benchmark,
}

impl Method {
    pub const fn name(self) -> &'static str {
        match self {
            Method::Riemann => "riemann",
            Method::Benchmark => "benchmark",
        }
    }
}

/// Featurizer and classifier settings shared by every fold.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub riemann: RiemannConfig,
    pub benchmark_windows: Vec<(f64, f64)>,
    pub logistic: LogisticConfig,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { riemann: RiemannConfig::default(), benchmark_windows: BENCHMARK_WINDOWS.to_vec(), logistic: LogisticConfig::default() }
    }
}

/// Diagnostics of the models fitted in one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAudit {
    pub classifier_converged: bool,
    pub classifier_iterations: usize,
    pub classifier_grad_norm: f64,
    /// Karcher iterations (Riemann only).
    pub reference_iterations: Option<usize>,
    /// Smallest and largest reference eigenvalue (Riemann only).
    pub reference_eigen_range: Option<(f64, f64)>,
    /// Traces of the success and failure prototypes (Riemann only).
    pub prototype_checksums: Option<(f64, f64)>,
    /// Smallest and largest feature scale (benchmark only).
    pub scale_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub correct: usize,
    pub n_test: usize,
    pub audit: FoldAudit,
}

impl FoldOutcome {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.n_test as f64
    }
}

/// Fits on the training split of `(repeat, fold)` and scores the test split.
pub fn evaluate_fold(set: &EpochSet, method: Method, plan: &FoldPlan, repeat: usize, fold: usize, hp: &Hyperparams) -> Result<FoldOutcome> {
    let tag = |e: Error| Error::Fold { repeat, fold, source: alloc::boxed::Box::new(e) };
    evaluate_split(set, method, &plan.train_indices(repeat, fold), &plan.test_indices(repeat, fold), hp).map_err(tag)
}

fn evaluate_split(set: &EpochSet, method: Method, train_idx: &[usize], test_idx: &[usize], hp: &Hyperparams) -> Result<FoldOutcome> {
    let train = set.subset(train_idx)?;
    let test = set.subset(test_idx)?;
    let labels = train.labels();
    let (train_feats, test_feats, mut audit) = match method {
        Method::Riemann => {
            let (model, tf) = features::fit_transform_riemann(&train, &hp.riemann)?;
            let test_feats = test.epochs().iter().map(|e| features::transform_riemann(&model, e)).collect::<Result<Vec<_>>>()?;
            let ev = model.reference().eigenvalues()?;
            let audit = FoldAudit {
                reference_iterations: Some(model.iterations),
                reference_eigen_range: Some((ev[0], ev[ev.len() - 1])),
                prototype_checksums: Some((model.prototypes.success.trace(), model.prototypes.failure.trace())),
                ..empty_audit()
            };
            (tf, test_feats, audit)
        }
        Method::Benchmark => {
            let (model, tf) = features::fit_transform_benchmark(&train, &hp.benchmark_windows)?;
            let test_feats = test.epochs().iter().map(|e| features::transform_benchmark(&model, e)).collect::<Result<Vec<_>>>()?;
            let lo = model.scale.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = model.scale.iter().copied().fold(0.0, f64::max);
            let audit = FoldAudit { scale_range: Some((lo, hi)), ..empty_audit() };
            (tf, test_feats, audit)
        }
    };
    let clf = logistic::fit(&train_feats, &labels, &hp.logistic)?;
    audit.classifier_converged = clf.converged;
    audit.classifier_iterations = clf.iterations;
    audit.classifier_grad_norm = clf.final_grad_norm;
    let mut correct = 0;
    for (f, e) in test_feats.iter().zip(test.epochs()) {
        if clf.predict(f)? == e.label {
            correct += 1;
        }
    }
    Ok(FoldOutcome { correct, n_test: test.len(), audit })
}

fn empty_audit() -> FoldAudit {
    FoldAudit {
        classifier_converged: false,
        classifier_iterations: 0,
        classifier_grad_norm: 0.0,
        reference_iterations: None,
        reference_eigen_range: None,
        prototype_checksums: None,
        scale_range: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub method: Method,
    /// One accuracy per `(repeat, fold)`, repeat-major.
    pub accuracies: Vec<f64>,
    pub per_fold_test_sizes: Vec<usize>,
    pub audits: Vec<FoldAudit>,
    pub plan: FoldPlan,
}

impl CvResult {
    /// Assembles a result from outcomes listed in [`FoldPlan::splits`] order.
    pub fn from_outcomes(method: Method, plan: &FoldPlan, outcomes: Vec<FoldOutcome>) -> Result<Self> {
        if outcomes.len() != plan.n_splits() {
            return Err(Error::PlanMismatch);
        }
        Ok(Self {
            method,
            accuracies: outcomes.iter().map(FoldOutcome::accuracy).collect(),
            per_fold_test_sizes: outcomes.iter().map(|o| o.n_test).collect(),
            audits: outcomes.into_iter().map(|o| o.audit).collect(),
            plan: plan.clone(),
        })
    }

    pub fn mean(&self) -> f64 {
        mean(&self.accuracies)
    }

    pub fn median(&self) -> f64 {
        median(&self.accuracies)
    }
}

pub fn check_plan(set: &EpochSet, plan: &FoldPlan) -> Result<()> {
    if plan.n_epochs != set.len() || plan.assignments.iter().any(|a| a.len() != set.len()) {
        return Err(Error::PlanMismatch);
    }
    Ok(())
}

/// Sequential cross-validation over every split of `plan`.
pub fn run_cv(set: &EpochSet, method: Method, plan: &FoldPlan, hp: &Hyperparams) -> Result<CvResult> {
    check_plan(set, plan)?;
    let outcomes = plan.splits().map(|(rep, fold)| evaluate_fold(set, method, plan, rep, fold, hp)).collect::<Result<Vec<_>>>()?;
    CvResult::from_outcomes(method, plan, outcomes)
}

pub fn mean(xs: &[f64]) -> f64 {
    linalg::pairwise_sum(xs) / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Percentile `q ∈ [0, 100]` by linear interpolation between order
/// statistics at rank `q/100·(n-1)`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

/// Sample variance with the `n - 1` denominator.
fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    linalg::pairwise_sum(&sq) / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

/// Paired t-test on `diffs` with the variance inflated by
/// `1/n + test_train_ratio`.
pub fn corrected_t_from_diffs(diffs: &[f64], test_train_ratio: f64) -> Result<TTestResult> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InsufficientData("t-test needs at least two paired values"));
    }
    let d = mean(diffs);
    let var = sample_variance(diffs);
    let df = n - 1;
    if var == 0.0 {
        if d == 0.0 {
            return Ok(TTestResult { t: 0.0, p: 1.0, df, mean_diff: 0.0 });
        }
        let t = if d > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(TTestResult { t, p: 0.0, df, mean_diff: d });
    }
    let t = d / libm::sqrt(var * (1.0 / n as f64 + test_train_ratio));
    if !t.is_finite() {
        return Err(Error::NumericalFailure("non-finite t statistic"));
    }
    Ok(TTestResult { t, p: student_t_two_sided_p(t, df as f64), df, mean_diff: d })
}

/// Corrected resampled t-test of `a - b` over shared splits, with the
/// test/train ratio fixed at `1/(k-1)`.
pub fn corrected_t_test(a: &CvResult, b: &CvResult) -> Result<TTestResult> {
    if a.plan != b.plan || a.accuracies.len() != b.accuracies.len() {
        return Err(Error::PlanMismatch);
    }
    let diffs: Vec<f64> = a.accuracies.iter().zip(&b.accuracies).map(|(x, y)| x - y).collect();
    corrected_t_from_diffs(&diffs, 1.0 / (a.plan.k - 1) as f64)
}

/// Two-sided Student-t tail `P(|T| ≥ |t|)` via the regularized incomplete
/// beta function `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    reg_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Two-sided standard normal tail `P(|Z| ≥ |z|)`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / core::f64::consts::SQRT_2)
}

/// Regularized incomplete beta `I_x(a, b)` by modified Lentz evaluation of
/// its continued fraction, using the symmetry relation where it converges
/// faster.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermTestResult {
    pub observed_metric: f64,
    pub z: f64,
    pub p: f64,
    pub n_permutations: usize,
    pub null_mean: f64,
    pub null_std: f64,
}

/// `Σ_i (median(a_i) - median(b_i))` against per-participant random swaps
/// of the two methods.
///
/// Swapping a participant's methods negates its difference, so each null
/// draw is a random-sign sum of the absolute differences taken in sorted
/// order. Draws come in antithetic pairs `(x, -x)`; the null mean is
/// exactly zero and `n_perm` is rounded up to an even count. The result
/// is invariant to participant order and antisymmetric in `(a, b)`.
pub fn permutation_test(per_participant: &[(Vec<f64>, Vec<f64>)], n_perm: usize, seed: u64) -> Result<PermTestResult> {
    if per_participant.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n_perm < 100 {
        return Err(Error::InsufficientData("at least 100 permutations are required"));
    }
    let mut diffs = Vec::with_capacity(per_participant.len());
    for (a, b) in per_participant {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyInput);
        }
        diffs.push(median(a) - median(b));
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NumericalFailure("non-finite participant difference"));
    }
    let observed = signed_sum(&diffs);
    let mut mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    mags.sort_by(f64::total_cmp);

    let pairs = n_perm.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut signed = vec![0.0f64; mags.len()];
    let mut squares = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        for (s, m) in signed.iter_mut().zip(&mags) {
            *s = if rng.random::<bool>() { *m } else { -*m };
        }
        let x = signed_sum(&signed);
        squares.push(x * x);
        squares.push(x * x);
    }
    let n = 2 * pairs;
    let null_mean = 0.0;
    let null_std = libm::sqrt(linalg::pairwise_sum(&squares) / (n - 1) as f64);
    let (z, p) = if null_std == 0.0 {
        // Every participant difference is zero.
        (0.0, 1.0)
    } else {
        let z = (observed - null_mean) / null_std;
        (z, normal_two_sided_p(z))
    };
    Ok(PermTestResult { observed_metric: observed, z, p, n_permutations: n, null_mean, null_std })
}

/// Sum as (positives) - (magnitudes of negatives), each in sorted order,
/// so negating every input negates the result exactly.
fn signed_sum(xs: &[f64]) -> f64 {
    let mut pos: Vec<f64> = xs.iter().copied().filter(|&x| x > 0.0).collect();
    let mut neg: Vec<f64> = xs.iter().filter(|&&x| x < 0.0).map(|x| -x).collect();
    linalg::canonical_sum(&mut pos) - linalg::canonical_sum(&mut neg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChanceLevel {
    pub mean_accuracy: f64,
    pub threshold_97_5: f64,
    pub n_shuffles: usize,
    pub per_shuffle_mean_accuracies: Vec<f64>,
}

impl ChanceLevel {
    pub fn from_means(per_shuffle: Vec<f64>) -> Result<Self> {
        if per_shuffle.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            mean_accuracy: mean(&per_shuffle),
            threshold_97_5: percentile(&per_shuffle, 97.5),
            n_shuffles: per_shuffle.len(),
            per_shuffle_mean_accuracies: per_shuffle,
        })
    }
}

/// Labels of shuffle `index` and the stratified plan built on them.
pub fn shuffled_labels(labels: &[Label], seed: u64, index: usize) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let mut out = labels.to_vec();
    out.shuffle(&mut rng);
    out
}

/// Label-shuffled dataset and its plan for shuffle `index`.
pub fn shuffle_case(set: &EpochSet, k: usize, r: usize, seed: u64, index: usize) -> Result<(EpochSet, FoldPlan)> {
    let labels = shuffled_labels(&set.labels(), seed, index);
    let plan = make_fold_plan(&labels, k, r, seed.wrapping_add(index as u64 + 1))?;
    Ok((set.relabeled(&labels)?, plan))
}

/// Benchmark CV mean accuracy under `n_shuffles` label permutations.
pub fn chance_level(set: &EpochSet, k: usize, r: usize, seed: u64, n_shuffles: usize, hp: &Hyperparams) -> Result<ChanceLevel> {
    let means = (0..n_shuffles)
        .map(|i| {
            let (shuffled, plan) = shuffle_case(set, k, r, seed, i)?;
            Ok(run_cv(&shuffled, Method::Benchmark, &plan, hp)?.mean())
        })
        .collect::<Result<Vec<_>>>()?;
    ChanceLevel::from_means(means)
}
