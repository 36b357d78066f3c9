//! The subcommands as library functions.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use errp_core::eval::{self, Method};
use errp_core::signal::{self, ContinuousRecording, EpochSet, IdentityHook};
use errp_core::synth;
use log::{info, warn};
use rayon::ThreadPool;
use serde_json::{json, Value};

use crate::config::Config;
use crate::container::{self, LabeledRecording};
use crate::erp::{self, ClassAverages};
use crate::error::{CliError, Result};
use crate::report::{
    ChanceReport, DatasetReport, MethodReport, PermReport, PlanReport, Report, Seeds, TTestReport, Timestamp, SCHEMA_VERSION,
};
use crate::runner;

fn produced_by(command: &str, cfg: &Config, extra: Option<(&str, Value)>) -> Value {
    let mut v = json!({ "command": command, "config": cfg.to_json() });
    if let Some((k, x)) = extra {
        v[k] = x;
    }
    v
}

/// The dataset a synth run writes, at the precision stored on disk.
pub fn synth_epochs(cfg: &Config) -> Result<EpochSet> {
    let labels = synth::synth_labels(&cfg.label_source(), cfg.n_trials, cfg.seed);
    let set = synth::generate_epochs(&labels, &cfg.erp_spec(), cfg.n_channels, cfg.fs_hz, cfg.seed)?;
    container::quantize(&set)
}

/// A continuous recording at `continuous_fs_hz` with feedback events and
/// optional mains interference.
pub fn synth_continuous(cfg: &Config) -> Result<LabeledRecording> {
    let labels = synth::synth_labels(&cfg.label_source(), cfg.n_trials, cfg.seed);
    let rec = synth::generate_continuous(
        &labels,
        &cfg.erp_spec(),
        cfg.n_channels,
        cfg.continuous_fs_hz,
        cfg.trial_gap_s,
        cfg.event_code,
        cfg.seed,
    )?;
    let rec = if cfg.line_noise_uv > 0.0 { add_line_noise(&rec, cfg.line_noise_uv)? } else { rec };
    Ok(LabeledRecording { event_labels: labels.into_iter().map(Some).collect(), recording: rec })
}

/// 50 Hz interference with a fixed phase per channel.
fn add_line_noise(rec: &ContinuousRecording, amp_uv: f64) -> Result<ContinuousRecording> {
    let mut data = rec.data().clone();
    let w = 2.0 * std::f64::consts::PI * 50.0 / rec.fs_hz();
    for c in 0..data.rows() {
        let phase = c as f64;
        for (i, v) in data.row_mut(c).iter_mut().enumerate() {
            *v += amp_uv * (w * i as f64 + phase).sin();
        }
    }
    Ok(ContinuousRecording::new(rec.fs_hz(), rec.channels().to_vec(), data, rec.events().to_vec())?)
}

pub fn cmd_synth(cfg: &Config, out: &Path, continuous: bool) -> Result<()> {
    let by = produced_by("synth", cfg, None);
    if continuous {
        let rec = synth_continuous(cfg)?;
        container::write_continuous(out, &rec, Some(by))?;
        info!("wrote continuous recording of {} samples to {}", rec.recording.n_samples(), out.display());
    } else {
        let set = synth_epochs(cfg)?;
        container::write_epochs(out, &set, Some(by))?;
        info!("wrote {} epochs to {}", set.len(), out.display());
    }
    Ok(())
}

pub fn cmd_preprocess(cfg: &Config, input: &Path, out: &Path) -> Result<Vec<usize>> {
    let (_, rec) = container::read_continuous(input)?;
    let labels = rec.labels_for(cfg.event_code)?;
    let pcfg = cfg.preprocess();
    let res = signal::preprocess(&rec.recording, &labels, &pcfg, &IdentityHook)?;
    if !res.skipped.is_empty() {
        warn!("skipped {} edge-clipped event(s): {:?}", res.skipped.len(), res.skipped);
    }
    let set = container::quantize(&res.set)?;
    let by = produced_by("preprocess", cfg, Some(("skipped_events", json!(res.skipped))));
    container::write_epochs(out, &set, Some(by))?;
    info!("wrote {} epochs to {}", set.len(), out.display());
    Ok(res.skipped)
}

/// What a report-producing command evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum Analysis {
    Run(Method),
    Compare { chance: bool },
    Chance,
}

/// Riemann and benchmark accuracies of one dataset, in plan order.
type AccuracyPair = (Vec<f64>, Vec<f64>);

fn dataset_report(
    pool: &ThreadPool,
    cfg: &Config,
    name: String,
    set: &EpochSet,
    analysis: &Analysis,
) -> Result<(DatasetReport, Option<AccuracyPair>)> {
    let seeds = Seeds::from_base(cfg.seed);
    let hp = cfg.hyperparams();
    let plan = eval::make_fold_plan(&set.labels(), cfg.folds, cfg.repeats, seeds.plan)?;
    let methods: &[Method] = match analysis {
        Analysis::Run(m) => std::slice::from_ref(m),
        Analysis::Compare { .. } => &[Method::Riemann, Method::Benchmark],
        Analysis::Chance => &[],
    };
    let mut cvs = Vec::new();
    for &m in methods {
        info!("{name}: {} cross-validation over {} splits", m.name(), plan.n_splits());
        cvs.push(runner::run_cv(pool, set, m, &plan, &hp)?);
    }
    let t_test = match cvs.as_slice() {
        [a, b] => Some(TTestReport::new(a, b, &eval::corrected_t_test(a, b)?)),
        _ => None,
    };
    let want_chance = matches!(analysis, Analysis::Chance | Analysis::Compare { chance: true });
    let chance = if want_chance {
        let k = cfg.chance_folds.unwrap_or(cfg.folds);
        let r = cfg.chance_repeats.unwrap_or(cfg.repeats);
        info!("{name}: chance level over {} shuffles", cfg.n_shuffles);
        let c = runner::chance_level(pool, set, k, r, seeds.chance, cfg.n_shuffles, &hp)?;
        Some(ChanceReport::new(&c, k, r))
    } else {
        None
    };
    let (n_success, n_failure) = set.class_counts();
    let pair = match cvs.as_slice() {
        [a, b] => Some((a.accuracies.clone(), b.accuracies.clone())),
        _ => None,
    };
    let report = DatasetReport {
        input: name,
        n_trials: set.len(),
        n_channels: set.n_channels(),
        n_success,
        n_failure,
        plan: PlanReport::new(&plan),
        methods: cvs.iter().map(MethodReport::new).collect(),
        t_test,
        chance,
    };
    Ok((report, pair))
}

/// Evaluates already loaded datasets. `command` only labels the report.
pub fn analyze(pool: &ThreadPool, cfg: &Config, command: &str, datasets: &[(String, EpochSet)], analysis: &Analysis) -> Result<Report> {
    let started = Instant::now();
    let unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    if datasets.is_empty() {
        return Err(CliError::input("at least one --input is required"));
    }
    let seeds = Seeds::from_base(cfg.seed);
    let mut reports = Vec::new();
    let mut pairs = Vec::new();
    for (name, set) in datasets {
        let (r, pair) = dataset_report(pool, cfg, name.clone(), set, analysis)?;
        reports.push(r);
        pairs.extend(pair);
    }
    let permutation_test = if pairs.len() >= 2 {
        let r = eval::permutation_test(&pairs, cfg.n_permutations, seeds.permutation)?;
        Some(PermReport::new(Method::Riemann.name(), Method::Benchmark.name(), &r))
    } else {
        None
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        config: cfg.clone(),
        seeds,
        datasets: reports,
        permutation_test,
        timestamp: Timestamp { unix_s, runtime_s: started.elapsed().as_secs_f64() },
    })
}

pub fn load_inputs(inputs: &[PathBuf]) -> Result<Vec<(String, EpochSet)>> {
    inputs.iter().map(|p| Ok((p.display().to_string(), container::read_epochs(p)?.1))).collect()
}

/// Class averages of every dataset, written to `path`.
pub fn emit_erp(path: &Path, datasets: &[(String, EpochSet)]) -> Result<()> {
    let avgs = datasets.iter().map(|(n, s)| Ok((n.clone(), ClassAverages::new(s)?))).collect::<Result<Vec<_>>>()?;
    erp::write_erp_csv(path, &avgs)
}

pub fn write_report(report: &Report, out: Option<&Path>) -> Result<()> {
    let text = report.to_json();
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
