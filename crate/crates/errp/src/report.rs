//! Schema-versioned JSON reports.
//!
//! Everything except the `timestamp` block is a pure function of the input
//! bytes and the configuration, so two runs with the same config produce
//! identical reports once `timestamp` is removed.

use errp_core::eval::{ChanceLevel, CvResult, FoldPlan, PermTestResult, TTestResult};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: Config,
    pub seeds: Seeds,
    pub datasets: Vec<DatasetReport>,
    pub permutation_test: Option<PermReport>,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub plan: u64,
    pub permutation: u64,
    pub chance: u64,
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Self { plan: seed, permutation: seed.wrapping_add(1), chance: seed.wrapping_add(2) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timestamp {
    pub unix_s: u64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetReport {
    pub input: String,
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_success: usize,
    pub n_failure: usize,
    pub plan: PlanReport,
    pub methods: Vec<MethodReport>,
    pub t_test: Option<TTestReport>,
    pub chance: Option<ChanceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanReport {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// SHA-256 of the fold assignments, repeat-major, one byte per epoch.
    pub digest: String,
}

impl PlanReport {
    pub fn new(plan: &FoldPlan) -> Self {
        let mut h = Sha256::new();
        for rep in &plan.assignments {
            let bytes: Vec<u8> = rep.iter().map(|&f| f as u8).collect();
            h.update(&bytes);
        }
        Self { folds: plan.k, repeats: plan.r, seed: plan.seed, digest: format!("{:x}", h.finalize()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodReport {
    pub method: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub test_sizes: Vec<usize>,
    pub audit: AuditReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditReport {
    pub classifier_converged_folds: usize,
    pub classifier_max_iterations: usize,
    pub classifier_max_grad_norm: f64,
    pub reference_iterations: Option<Vec<usize>>,
    pub reference_eigen_min: Option<f64>,
    pub reference_eigen_max: Option<f64>,
    /// Per fold: traces of the success and failure prototypes.
    pub prototype_checksums: Option<Vec<[f64; 2]>>,
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
}

impl MethodReport {
    pub fn new(cv: &CvResult) -> Self {
        let a = &cv.audits;
        let fold_min = |f: &dyn Fn(&errp_core::eval::FoldAudit) -> Option<f64>| a.iter().filter_map(f).reduce(f64::min);
        let fold_max = |f: &dyn Fn(&errp_core::eval::FoldAudit) -> Option<f64>| a.iter().filter_map(f).reduce(f64::max);
        let iters: Vec<usize> = a.iter().filter_map(|x| x.reference_iterations).collect();
        let sums: Vec<[f64; 2]> = a.iter().filter_map(|x| x.prototype_checksums).map(|(s, f)| [s, f]).collect();
        Self {
            method: cv.method.name().to_string(),
            accuracies: cv.accuracies.clone(),
            mean: cv.mean(),
            median: cv.median(),
            test_sizes: cv.per_fold_test_sizes.clone(),
            audit: AuditReport {
                classifier_converged_folds: a.iter().filter(|x| x.classifier_converged).count(),
                classifier_max_iterations: a.iter().map(|x| x.classifier_iterations).max().unwrap_or(0),
                classifier_max_grad_norm: a.iter().map(|x| x.classifier_grad_norm).fold(0.0, f64::max),
                reference_iterations: (!iters.is_empty()).then_some(iters),
                reference_eigen_min: fold_min(&|x| x.reference_eigen_range.map(|r| r.0)),
                reference_eigen_max: fold_max(&|x| x.reference_eigen_range.map(|r| r.1)),
                prototype_checksums: (!sums.is_empty()).then_some(sums),
                scale_min: fold_min(&|x| x.scale_range.map(|r| r.0)),
                scale_max: fold_max(&|x| x.scale_range.map(|r| r.1)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TTestReport {
    /// The difference tested is `a - b`.
    pub a: String,
    pub b: String,
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

impl TTestReport {
    pub fn new(a: &CvResult, b: &CvResult, t: &TTestResult) -> Self {
        Self { a: a.method.name().to_string(), b: b.method.name().to_string(), t: t.t, p: t.p, df: t.df, mean_diff: t.mean_diff }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermReport {
    pub a: String,
    pub b: String,
    pub observed_metric: f64,
    pub z: f64,
    pub p: f64,
    pub n_permutations: usize,
    pub null_mean: f64,
    pub null_std: f64,
    /// How methods were exchanged under the null.
    pub swap_scheme: String,
}

impl PermReport {
    pub fn new(a: &str, b: &str, r: &PermTestResult) -> Self {
        Self {
            a: a.to_string(),
            b: b.to_string(),
            observed_metric: r.observed_metric,
            z: r.z,
            p: r.p,
            n_permutations: r.n_permutations,
            null_mean: r.null_mean,
            null_std: r.null_std,
            swap_scheme: "independent per-participant swaps, antithetic pairs".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanceReport {
    pub method: String,
    pub folds: usize,
    pub repeats: usize,
    pub mean_accuracy: f64,
    pub threshold_97_5: f64,
    pub n_shuffles: usize,
    pub per_shuffle_mean_accuracies: Vec<f64>,
}

impl ChanceReport {
    pub fn new(c: &ChanceLevel, folds: usize, repeats: usize) -> Self {
        Self {
            method: "benchmark".to_string(),
            folds,
            repeats,
            mean_accuracy: c.mean_accuracy,
            threshold_97_5: c.threshold_97_5,
            n_shuffles: c.n_shuffles,
            per_shuffle_mean_accuracies: c.per_shuffle_mean_accuracies.clone(),
        }
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Parses a report, rejecting other schema versions and unknown fields.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::input(format!("report: {e}")))?;
        match value.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(CliError::input(format!("report: unsupported schema_version {v} (this build reads {SCHEMA_VERSION})"))),
            None => return Err(CliError::input("report: missing schema_version")),
        }
        serde_json::from_value(value).map_err(|e| CliError::input(format!("report: {e}")))
    }
}

/// The report text with the `timestamp` block removed, for comparisons.
pub fn without_timestamp(text: &str) -> Result<String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::input(format!("report: {e}")))?;
    if let Value::Object(m) = &mut value {
        m.remove("timestamp");
    }
    Ok(serde_json::to_string_pretty(&value).expect("value serializes"))
}
