//! Featurizers: prototype super-trial covariances projected to a tangent
//! space, and windowed per-channel mean/std with max-abs scaling.
//!
//! Every fit reads training epochs only; transforms read only the fitted
//! model and the epoch being featurized.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::signal::{Epoch, EpochSet, Label};
use crate::spd::{self, KarcherOptions, SpdMatrix, TangentSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    RiemannTangent,
    BenchmarkWindowed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
}

/// Class-average ERPs over the analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypePair {
    pub success: Matrix,
    pub failure: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannConfig {
    pub window: (f64, f64),
    /// Weight on the trace-scaled identity, in `[0, 1)`.
    pub shrinkage: f64,
    pub karcher: KarcherOptions,
}

impl Default for RiemannConfig {
    fn default() -> Self {
        Self { window: (0.100, 0.600), shrinkage: 0.01, karcher: KarcherOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct RiemannModel {
    pub window: (f64, f64),
    pub prototypes: PrototypePair,
    pub shrinkage: f64,
    tangent: TangentSpace,
    /// Karcher iterations used to fit the reference.
    pub iterations: usize,
}

impl RiemannModel {
    /// Training geometric mean of super-trial covariances.
    pub fn reference(&self) -> &SpdMatrix {
        self.tangent.base()
    }

    pub fn n_channels(&self) -> usize {
        self.prototypes.success.rows()
    }

    pub fn feature_dim(&self) -> usize {
        let d = self.tangent.dim();
        d * (d + 1) / 2
    }
}

fn check_shape(m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.rows() != rows {
        return Err(Error::DimMismatch { expected: rows, found: m.rows() });
    }
    if m.cols() != cols {
        return Err(Error::DimMismatch { expected: cols, found: m.cols() });
    }
    Ok(())
}

fn require_both_classes(train: &EpochSet) -> Result<()> {
    let (s, f) = train.class_counts();
    if s == 0 || f == 0 {
        return Err(Error::DegenerateTrainingSet);
    }
    Ok(())
}

/// Elementwise mean with sorted summation, independent of input order.
fn canonical_mean(mats: &[Matrix]) -> Matrix {
    let (r, c) = (mats[0].rows(), mats[0].cols());
    let mut buf = vec![0.0f64; mats.len()];
    let count = mats.len() as f64;
    Matrix::from_fn(r, c, |i, j| {
        for (b, m) in buf.iter_mut().zip(mats) {
            *b = m[(i, j)];
        }
        linalg::canonical_sum(&mut buf) / count
    })
}

fn fit_prototypes(train: &EpochSet, window: (f64, f64)) -> Result<PrototypePair> {
    let first = &train.epochs()[0];
    let range = first.window(window.0, window.1)?;
    let mut succ = Vec::new();
    let mut fail = Vec::new();
    for e in train.epochs() {
        let w = e.slice(range.clone());
        match e.label {
            Label::Success => succ.push(w),
            Label::Failure => fail.push(w),
        }
    }
    Ok(PrototypePair { success: canonical_mean(&succ), failure: canonical_mean(&fail) })
}

/// Stacks `[success; failure; trial]` row blocks.
pub fn super_trial(window: &Matrix, protos: &PrototypePair) -> Result<Matrix> {
    let (nc, nw) = (protos.success.rows(), protos.success.cols());
    check_shape(&protos.failure, nc, nw)?;
    check_shape(window, nc, nw)?;
    let mut data = Vec::with_capacity(3 * nc * nw);
    data.extend_from_slice(protos.success.as_slice());
    data.extend_from_slice(protos.failure.as_slice());
    data.extend_from_slice(window.as_slice());
    Matrix::from_vec(3 * nc, nw, data)
}

/// Row-centered sample covariance shrunk toward `trace/D · I`.
pub fn trial_covariance(st: &Matrix, shrinkage: f64) -> Result<SpdMatrix> {
    let n = st.cols();
    if n < 2 {
        return Err(Error::InsufficientData("covariance needs at least two samples"));
    }
    if !(0.0..1.0).contains(&shrinkage) {
        return Err(Error::InsufficientData("shrinkage must lie in [0, 1)"));
    }
    let d = st.rows();
    let mut centered = st.clone();
    for i in 0..d {
        let row = centered.row_mut(i);
        let mean = linalg::pairwise_sum(row) / n as f64;
        for v in row.iter_mut() {
            *v -= mean;
        }
    }
    let mut cov = centered.gram().scaled(1.0 / (n - 1) as f64);
    if shrinkage > 0.0 {
        let mu = cov.trace() / d as f64;
        cov = cov.scaled(1.0 - shrinkage);
        for i in 0..d {
            cov[(i, i)] += shrinkage * mu;
        }
    }
    SpdMatrix::from_matrix(cov)
}

fn epoch_covariance(e: &Epoch, range: core::ops::Range<usize>, protos: &PrototypePair, shrinkage: f64) -> Result<SpdMatrix> {
    trial_covariance(&super_trial(&e.slice(range), protos)?, shrinkage)
}

/// Fits prototypes and the reference point, returning the model together
/// with tangent features of the training epochs (computed at the reference
/// during the mean iteration, so no second pass is needed).
pub fn fit_transform_riemann(train: &EpochSet, cfg: &RiemannConfig) -> Result<(RiemannModel, Vec<FeatureVector>)> {
    require_both_classes(train)?;
    let prototypes = fit_prototypes(train, cfg.window)?;
    let range = train.epochs()[0].window(cfg.window.0, cfg.window.1)?;
    let covs = train.epochs().iter().map(|e| epoch_covariance(e, range.clone(), &prototypes, cfg.shrinkage)).collect::<Result<Vec<_>>>()?;
    let km = spd::karcher_mean(&covs, cfg.karcher).map_err(|e| match e {
        Error::NonConvergence { .. } => Error::NumericalFailure("reference mean did not converge"),
        other => other,
    })?;
    let tangent = TangentSpace::new(km.mean)?;
    let features =
        km.logs.iter().map(|l| FeatureVector { values: spd::vectorize_upper(l.matrix()), kind: FeatureKind::RiemannTangent }).collect();
    let model = RiemannModel { window: cfg.window, prototypes, shrinkage: cfg.shrinkage, tangent, iterations: km.iterations };
    Ok((model, features))
}

pub fn fit_riemann(train: &EpochSet, cfg: &RiemannConfig) -> Result<RiemannModel> {
    Ok(fit_transform_riemann(train, cfg)?.0)
}

/// The epoch's super-trial covariance before projection.
pub fn riemann_covariance(model: &RiemannModel, e: &Epoch) -> Result<SpdMatrix> {
    if e.n_channels() != model.n_channels() {
        return Err(Error::DimMismatch { expected: model.n_channels(), found: e.n_channels() });
    }
    let range = e.window(model.window.0, model.window.1)?;
    epoch_covariance(e, range, &model.prototypes, model.shrinkage)
}

pub fn transform_riemann(model: &RiemannModel, e: &Epoch) -> Result<FeatureVector> {
    let c = riemann_covariance(model, e)?;
    let log = model.tangent.log_map(&c)?;
    Ok(FeatureVector { values: spd::vectorize_upper(log.matrix()), kind: FeatureKind::RiemannTangent })
}

/// Default benchmark windows in seconds after feedback onset.
pub const BENCHMARK_WINDOWS: [(f64, f64); 4] = [(0.100, 0.200), (0.200, 0.300), (0.300, 0.400), (0.400, 0.600)];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkModel {
    pub windows: Vec<(f64, f64)>,
    /// Per-feature divisor, the training max-abs (1 where that is zero).
    pub scale: Vec<f64>,
}

/// Unscaled windowed features: channel-major, window-minor, (mean, std).
pub fn windowed_stats(e: &Epoch, windows: &[(f64, f64)]) -> Result<Vec<f64>> {
    let ranges = windows.iter().map(|&(a, b)| e.window(a, b)).collect::<Result<Vec<_>>>()?;
    if ranges.iter().any(|r| r.len() < 2) {
        return Err(Error::InsufficientData("each window needs at least two samples"));
    }
    let mut out = Vec::with_capacity(e.n_channels() * windows.len() * 2);
    let mut buf = Vec::new();
    for c in 0..e.n_channels() {
        let row = e.data.row(c);
        for r in &ranges {
            let seg = &row[r.clone()];
            let n = seg.len() as f64;
            let mean = linalg::pairwise_sum(seg) / n;
            buf.clear();
            buf.extend(seg.iter().map(|v| (v - mean) * (v - mean)));
            let var = linalg::pairwise_sum(&buf) / (n - 1.0);
            out.push(mean);
            out.push(libm::sqrt(var));
        }
    }
    Ok(out)
}

/// Fits max-abs scales, returning the model and scaled training features.
pub fn fit_transform_benchmark(train: &EpochSet, windows: &[(f64, f64)]) -> Result<(BenchmarkModel, Vec<FeatureVector>)> {
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    if windows.is_empty() {
        return Err(Error::InsufficientData("benchmark needs at least one window"));
    }
    let raw = train.epochs().iter().map(|e| windowed_stats(e, windows)).collect::<Result<Vec<_>>>()?;
    let dim = raw[0].len();
    let mut scale = vec![0.0f64; dim];
    for f in &raw {
        for (s, v) in scale.iter_mut().zip(f) {
            *s = s.max(v.abs());
        }
    }
    for s in &mut scale {
        if !(*s > 0.0) {
            *s = 1.0;
        }
    }
    let features = raw
        .into_iter()
        .map(|mut v| {
            for (x, s) in v.iter_mut().zip(&scale) {
                *x /= s;
            }
            FeatureVector { values: v, kind: FeatureKind::BenchmarkWindowed }
        })
        .collect();
    let model = BenchmarkModel { windows: windows.to_vec(), scale };
    Ok((model, features))
}

pub fn fit_benchmark(train: &EpochSet, windows: &[(f64, f64)]) -> Result<BenchmarkModel> {
    Ok(fit_transform_benchmark(train, windows)?.0)
}

pub fn transform_benchmark(model: &BenchmarkModel, e: &Epoch) -> Result<FeatureVector> {
    let mut values = windowed_stats(e, &model.windows)?;
    if values.len() != model.scale.len() {
        return Err(Error::DimMismatch { expected: model.scale.len(), found: values.len() });
    }
    for (x, s) in values.iter_mut().zip(&model.scale) {
        *x /= s;
    }
    Ok(FeatureVector { values, kind: FeatureKind::BenchmarkWindowed })
}
