//! CSV export of class-average ERPs and accuracy distributions.

use std::path::Path;

use errp_core::signal::{EpochSet, Label};

use crate::error::{CliError, Result};
use crate::report::Report;

/// Per-channel class means and the failure-minus-success difference.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAverages {
    pub channels: Vec<String>,
    pub times_s: Vec<f64>,
    /// Indexed `[channel][sample]`.
    pub success: Vec<Vec<f64>>,
    pub failure: Vec<Vec<f64>>,
}

impl ClassAverages {
    pub fn new(set: &EpochSet) -> Result<Self> {
        let (n_s, n_f) = set.class_counts();
        if n_s == 0 || n_f == 0 {
            return Err(CliError::input("class averages need trials of both outcomes"));
        }
        let (nc, ns) = (set.n_channels(), set.n_samples());
        let mut sums = [vec![vec![0.0; ns]; nc], vec![vec![0.0; ns]; nc]];
        for e in set.epochs() {
            let acc = &mut sums[e.label.code() as usize];
            for (c, row) in acc.iter_mut().enumerate() {
                for (a, v) in row.iter_mut().zip(e.data.row(c)) {
                    *a += v;
                }
            }
        }
        let [mut success, mut failure] = sums;
        success.iter_mut().flatten().for_each(|v| *v /= n_s as f64);
        failure.iter_mut().flatten().for_each(|v| *v /= n_f as f64);
        let fs = set.fs_hz();
        let t0 = set.t0_offset_s();
        Ok(Self { channels: set.channels().to_vec(), times_s: (0..ns).map(|i| t0 + i as f64 / fs).collect(), success, failure })
    }

    pub fn mean(&self, label: Label, channel: usize) -> &[f64] {
        match label {
            Label::Success => &self.success[channel],
            Label::Failure => &self.failure[channel],
        }
    }
}

/// Writes `dataset,channel,time_s,success_mean,failure_mean,difference`
/// rows for every dataset, one row per channel and sample.
pub fn write_erp_csv(path: &Path, datasets: &[(String, ClassAverages)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["dataset", "channel", "time_s", "success_mean", "failure_mean", "difference"]).map_err(|e| csv_error(path, e))?;
    for (name, avg) in datasets {
        for (c, ch) in avg.channels.iter().enumerate() {
            for (i, t) in avg.times_s.iter().enumerate() {
                let (s, f) = (avg.success[c][i], avg.failure[c][i]);
                w.write_record([name.clone(), ch.clone(), t.to_string(), s.to_string(), f.to_string(), (f - s).to_string()])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `dataset,method,repeat,fold,accuracy` rows for a report.
pub fn write_accuracy_csv(path: &Path, report: &Report) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["dataset", "method", "repeat", "fold", "accuracy"]).map_err(|e| csv_error(path, e))?;
    for d in &report.datasets {
        for m in &d.methods {
            for (i, a) in m.accuracies.iter().enumerate() {
                let (rep, fold) = (i / d.plan.folds, i % d.plan.folds);
                w.write_record([d.input.clone(), m.method.clone(), rep.to_string(), fold.to_string(), a.to_string()])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}
