//! Flat key-value experiment configuration.
//!
//! A config file is a JSON object whose keys are the fields of [`Config`];
//! missing keys take their defaults and unknown keys are rejected.
//! `--set key=value` overrides are applied to the JSON object before it is
//! decoded, with `value` read as JSON when it parses and as a string
//! otherwise.

use std::path::Path;

use errp_core::eval::Hyperparams;
use errp_core::features::RiemannConfig;
use errp_core::logistic::LogisticConfig;
use errp_core::signal::{BaselineOrder, PreprocessConfig};
use errp_core::spd::{KarcherOptions, KarcherStep};
use errp_core::synth::{ErpTemplateSpec, LabelSource, PsychometricModel, StaircaseConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Balanced,
    Staircase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineOrderKey {
    BeforeDownsample,
    AfterDownsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KarcherStepKey {
    Tuned,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,

    pub n_trials: usize,
    pub n_channels: usize,
    pub fs_hz: f64,
    pub labels: LabelMode,
    pub frn_peak_s: f64,
    pub frn_width_s: f64,
    pub frn_amp_uv: f64,
    pub p3a_peak_s: f64,
    pub p3a_width_s: f64,
    pub p3a_amp_success_uv: f64,
    pub p3a_amp_failure_uv: f64,
    pub topography: Option<Vec<f64>>,
    pub noise_exponent: f64,
    pub noise_rms_uv: f64,
    pub confound_enabled: bool,
    pub confound_peak_s: f64,
    pub confound_width_s: f64,
    pub confound_amp_success_uv: f64,
    pub confound_amp_failure_uv: f64,
    pub epoch_t0_s: f64,
    pub epoch_duration_s: f64,
    pub staircase_alpha: f64,
    pub staircase_beta: f64,
    pub staircase_lapse: f64,
    pub staircase_start: f64,
    pub staircase_step: f64,
    pub staircase_blocks: usize,
    /// Sampling rate of `synth --continuous` recordings.
    pub continuous_fs_hz: f64,
    /// Amplitude of the 50 Hz line component added to continuous output.
    pub line_noise_uv: f64,
    /// Gap between consecutive trials in continuous output.
    pub trial_gap_s: f64,

    pub bandpass_lo_hz: f64,
    pub bandpass_hi_hz: f64,
    pub notch_hz: Vec<f64>,
    pub average_reference: bool,
    pub event_code: u32,
    pub epoch_pre_s: f64,
    pub epoch_post_s: f64,
    pub baseline_start_s: f64,
    pub baseline_end_s: f64,
    pub target_fs_hz: f64,
    pub baseline_order: BaselineOrderKey,

    pub riemann_window_start_s: f64,
    pub riemann_window_end_s: f64,
    pub shrinkage: f64,
    pub karcher_tol: f64,
    pub karcher_max_iter: usize,
    pub karcher_step: KarcherStepKey,
    pub benchmark_windows: Vec<[f64; 2]>,
    pub reg_c: f64,
    pub logistic_tol: f64,
    pub logistic_max_iter: usize,

    pub folds: usize,
    pub repeats: usize,
    pub n_permutations: usize,
    pub n_shuffles: usize,
    pub chance_folds: Option<usize>,
    pub chance_repeats: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        let erp = ErpTemplateSpec::default();
        let stair = StaircaseConfig::default();
        let pre = PreprocessConfig::default();
        let riem = RiemannConfig::default();
        let logit = LogisticConfig::default();
        let (bp_lo, bp_hi) = pre.bandpass_hz.unwrap_or((1.0, 100.0));
        let (bl_a, bl_b) = pre.baseline_s.unwrap_or((-0.5, 0.0));
        Self {
            seed: 0,
            n_trials: 300,
            n_channels: 32,
            fs_hz: 256.0,
            labels: LabelMode::Balanced,
            frn_peak_s: erp.frn_peak_s,
            frn_width_s: erp.frn_width_s,
            frn_amp_uv: erp.frn_amp_uv,
            p3a_peak_s: erp.p3a_peak_s,
            p3a_width_s: erp.p3a_width_s,
            p3a_amp_success_uv: erp.p3a_amp_success_uv,
            p3a_amp_failure_uv: erp.p3a_amp_failure_uv,
            topography: None,
            noise_exponent: erp.noise_exponent,
            noise_rms_uv: erp.noise_rms_uv,
            confound_enabled: erp.confound_enabled,
            confound_peak_s: erp.confound_peak_s,
            confound_width_s: erp.confound_width_s,
            confound_amp_success_uv: erp.confound_amp_success_uv,
            confound_amp_failure_uv: erp.confound_amp_failure_uv,
            epoch_t0_s: erp.t0_offset_s,
            epoch_duration_s: erp.duration_s,
            staircase_alpha: stair.observer.threshold_alpha,
            staircase_beta: stair.observer.slope_beta,
            staircase_lapse: stair.observer.lapse,
            staircase_start: stair.start_contrast,
            staircase_step: stair.step_factor,
            staircase_blocks: stair.blocks,
            continuous_fs_hz: 2048.0,
            line_noise_uv: 0.0,
            trial_gap_s: 0.5,
            bandpass_lo_hz: bp_lo,
            bandpass_hi_hz: bp_hi,
            notch_hz: pre.notch_hz.clone(),
            average_reference: pre.average_reference,
            event_code: pre.event_code,
            epoch_pre_s: pre.pre_s,
            epoch_post_s: pre.post_s,
            baseline_start_s: bl_a,
            baseline_end_s: bl_b,
            target_fs_hz: pre.target_fs_hz.unwrap_or(256.0),
            baseline_order: BaselineOrderKey::BeforeDownsample,
            riemann_window_start_s: riem.window.0,
            riemann_window_end_s: riem.window.1,
            shrinkage: riem.shrinkage,
            karcher_tol: riem.karcher.tol,
            karcher_max_iter: riem.karcher.max_iter,
            karcher_step: KarcherStepKey::Tuned,
            benchmark_windows: errp_core::features::BENCHMARK_WINDOWS.iter().map(|&(a, b)| [a, b]).collect(),
            reg_c: logit.reg_c,
            logistic_tol: logit.tol,
            logistic_max_iter: logit.max_iter,
            folds: 10,
            repeats: 10,
            n_permutations: 1000,
            n_shuffles: 100,
            chance_folds: None,
            chance_repeats: None,
        }
    }
}

fn parse_override(item: &str) -> Result<(String, Value)> {
    let (key, raw) = item.split_once('=').ok_or_else(|| CliError::input(format!("--set expects key=value, found {item:?}")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::input(format!("--set has an empty key in {item:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

impl Config {
    /// The config file (if any) with overrides applied.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut map = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::input(format!("{}: config must be a JSON object", p.display()))),
                    Err(e) => return Err(CliError::input(format!("{}: {e}", p.display()))),
                }
            }
            None => Map::new(),
        };
        for item in overrides {
            let (k, v) = parse_override(item)?;
            map.insert(k, v);
        }
        let cfg: Config = serde_json::from_value(Value::Object(map)).map_err(|e| CliError::input(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(CliError::input(format!("config field `{field}`: {why}")));
        if self.n_trials == 0 {
            return fail("n_trials", "must be positive");
        }
        if self.n_channels == 0 {
            return fail("n_channels", "must be positive");
        }
        if !(self.fs_hz > 0.0) {
            return fail("fs_hz", "must be positive");
        }
        if !(self.noise_rms_uv >= 0.0) {
            return fail("noise_rms_uv", "must be non-negative");
        }
        if !(0.0..1.0).contains(&self.shrinkage) {
            return fail("shrinkage", "must lie in [0, 1)");
        }
        if !(self.reg_c > 0.0) {
            return fail("reg_c", "must be positive");
        }
        if self.folds < 2 {
            return fail("folds", "must be at least 2");
        }
        if self.repeats == 0 {
            return fail("repeats", "must be positive");
        }
        if self.n_permutations < 100 {
            return fail("n_permutations", "must be at least 100");
        }
        if self.n_shuffles == 0 {
            return fail("n_shuffles", "must be positive");
        }
        if self.benchmark_windows.is_empty() {
            return fail("benchmark_windows", "must list at least one window");
        }
        if self.staircase_blocks == 0 {
            return fail("staircase_blocks", "must be positive");
        }
        if !(self.staircase_step > 1.0) {
            return fail("staircase_step", "must exceed 1");
        }
        Ok(())
    }

    pub fn erp_spec(&self) -> ErpTemplateSpec {
        ErpTemplateSpec {
            frn_peak_s: self.frn_peak_s,
            frn_width_s: self.frn_width_s,
            frn_amp_uv: self.frn_amp_uv,
            p3a_peak_s: self.p3a_peak_s,
            p3a_width_s: self.p3a_width_s,
            p3a_amp_success_uv: self.p3a_amp_success_uv,
            p3a_amp_failure_uv: self.p3a_amp_failure_uv,
            topography: self.topography.clone(),
            noise_exponent: self.noise_exponent,
            noise_rms_uv: self.noise_rms_uv,
            confound_enabled: self.confound_enabled,
            confound_peak_s: self.confound_peak_s,
            confound_width_s: self.confound_width_s,
            confound_amp_success_uv: self.confound_amp_success_uv,
            confound_amp_failure_uv: self.confound_amp_failure_uv,
            t0_offset_s: self.epoch_t0_s,
            duration_s: self.epoch_duration_s,
        }
    }

    pub fn label_source(&self) -> LabelSource {
        match self.labels {
            LabelMode::Balanced => LabelSource::Balanced,
            LabelMode::Staircase => LabelSource::Staircase(StaircaseConfig {
                observer: PsychometricModel {
                    threshold_alpha: self.staircase_alpha,
                    slope_beta: self.staircase_beta,
                    lapse: self.staircase_lapse,
                    guess: 0.5,
                },
                start_contrast: self.staircase_start,
                step_factor: self.staircase_step,
                blocks: self.staircase_blocks,
                trials_per_block: self.n_trials.div_ceil(self.staircase_blocks),
            }),
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            bandpass_hz: Some((self.bandpass_lo_hz, self.bandpass_hi_hz)),
            notch_hz: self.notch_hz.clone(),
            average_reference: self.average_reference,
            event_code: self.event_code,
            pre_s: self.epoch_pre_s,
            post_s: self.epoch_post_s,
            baseline_s: Some((self.baseline_start_s, self.baseline_end_s)),
            target_fs_hz: Some(self.target_fs_hz),
            baseline_order: match self.baseline_order {
                BaselineOrderKey::BeforeDownsample => BaselineOrder::BeforeDownsample,
                BaselineOrderKey::AfterDownsample => BaselineOrder::AfterDownsample,
            },
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            riemann: RiemannConfig {
                window: (self.riemann_window_start_s, self.riemann_window_end_s),
                shrinkage: self.shrinkage,
                karcher: KarcherOptions {
                    tol: self.karcher_tol,
                    max_iter: self.karcher_max_iter,
                    step: match self.karcher_step {
                        KarcherStepKey::Tuned => KarcherStep::Tuned,
                        KarcherStepKey::Unit => KarcherStep::Fixed(1.0),
                    },
                },
            },
            benchmark_windows: self.benchmark_windows.iter().map(|w| (w[0], w[1])).collect(),
            logistic: LogisticConfig { reg_c: self.reg_c, tol: self.logistic_tol, max_iter: self.logistic_max_iter },
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_keys() {
        let cfg = Config::load(None, &["folds=5".into(), "labels=staircase".into(), "confound_enabled=true".into()]).unwrap();
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.labels, LabelMode::Staircase);
        assert!(cfg.confound_enabled);
        let err = Config::load(None, &["fold=5".into()]).unwrap_err();
        assert!(err.to_string().contains("fold"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = Config::load(None, &["shrinkage=1.5".into()]).unwrap_err();
        assert!(err.to_string().contains("shrinkage"));
        assert!(Config::load(None, &["noequals".into()]).is_err());
    }

    #[test]
    fn echo_roundtrips() {
        let cfg = Config::default();
        let back: Config = serde_json::from_value(cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}
