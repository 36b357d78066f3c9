//! Synthetic data: an adaptive staircase driven by a simulated 2AFC
//! observer, and EEG epochs with class-dependent feedback components in
//! spatially mixed 1/f noise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::signal::{ContinuousRecording, Epoch, EpochSet, Event, Label};

/// Two-alternative observer with a cumulative-Weibull psychometric curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsychometricModel {
    /// Weber contrast at the Weibull scale point.
    pub threshold_alpha: f64,
    /// Weibull shape; `f64::INFINITY` gives a step at `threshold_alpha`.
    pub slope_beta: f64,
    pub lapse: f64,
    pub guess: f64,
}

impl Default for PsychometricModel {
    fn default() -> Self {
        Self { threshold_alpha: 0.005, slope_beta: 20.0, lapse: 0.02, guess: 0.5 }
    }
}

impl PsychometricModel {
    pub fn step(threshold_alpha: f64) -> Self {
        Self { threshold_alpha, slope_beta: f64::INFINITY, lapse: 0.0, guess: 0.5 }
    }

    pub fn p_correct(&self, contrast: f64) -> f64 {
        let f = if self.slope_beta.is_infinite() {
            if contrast >= self.threshold_alpha {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - libm::exp(-libm::pow(contrast / self.threshold_alpha, self.slope_beta))
        };
        self.guess + (1.0 - self.guess - self.lapse) * f
    }
}

/// One-up/one-down staircase in multiplicative contrast steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseState {
    pub contrast: f64,
    pub step_factor: f64,
    pub history: Vec<(f64, bool)>,
    /// Contrast of each trial whose response reversed the step direction.
    pub reversals: Vec<f64>,
    last_correct: Option<bool>,
}

impl StaircaseState {
    pub fn new(start_contrast: f64, step_factor: f64) -> Self {
        Self { contrast: start_contrast, step_factor, history: Vec::new(), reversals: Vec::new(), last_correct: None }
    }

    pub fn respond(&mut self, correct: bool) {
        let c = self.contrast;
        self.history.push((c, correct));
        if self.last_correct.is_some_and(|prev| prev != correct) {
            self.reversals.push(c);
        }
        self.last_correct = Some(correct);
        self.contrast = if correct { c / self.step_factor } else { c * self.step_factor };
    }
}

fn run_staircase(model: &PsychometricModel, n_trials: usize, start: f64, step: f64, rng: &mut ChaCha8Rng) -> StaircaseState {
    let mut st = StaircaseState::new(start, step);
    for _ in 0..n_trials {
        let correct = rng.random::<f64>() < model.p_correct(st.contrast);
        st.respond(correct);
    }
    st
}

/// `n_trials` staircase trials; deterministic in `seed`.
pub fn staircase_run(model: &PsychometricModel, n_trials: usize, start_contrast: f64, step_factor: f64, seed: u64) -> Vec<(f64, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_staircase(model, n_trials, start_contrast, step_factor, &mut rng).history
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaircaseConfig {
    pub observer: PsychometricModel,
    pub start_contrast: f64,
    pub step_factor: f64,
    pub blocks: usize,
    pub trials_per_block: usize,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        Self { observer: PsychometricModel::default(), start_contrast: 0.0055, step_factor: 1.05, blocks: 5, trials_per_block: 60 }
    }
}

/// Independent blocks, each restarting at `start_contrast`.
pub fn run_blocks(cfg: &StaircaseConfig, seed: u64) -> Vec<StaircaseState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.blocks)
        .map(|b| {
            rng.set_stream(b as u64 + 1);
            run_staircase(&cfg.observer, cfg.trials_per_block, cfg.start_contrast, cfg.step_factor, &mut rng)
        })
        .collect()
}

pub fn percent_correct(blocks: &[StaircaseState]) -> f64 {
    let (hits, total) = blocks.iter().flat_map(|b| &b.history).fold((0usize, 0usize), |(h, t), &(_, c)| (h + c as usize, t + 1));
    100.0 * hits as f64 / total as f64
}

pub const REVERSALS_PER_BLOCK: usize = 10;

/// Mean over blocks of the log-domain mean of each block's last ten
/// reversal contrasts, mapped back to Weber contrast.
pub fn estimate_threshold(reversals_per_block: &[&[f64]]) -> Result<f64> {
    if reversals_per_block.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut logs = Vec::with_capacity(reversals_per_block.len());
    for revs in reversals_per_block {
        if revs.len() < REVERSALS_PER_BLOCK {
            return Err(Error::InsufficientData("a block has fewer than ten reversals"));
        }
        let tail: Vec<f64> = revs[revs.len() - REVERSALS_PER_BLOCK..].iter().map(|&c| libm::log(c)).collect();
        logs.push(linalg::pairwise_sum(&tail) / REVERSALS_PER_BLOCK as f64);
    }
    Ok(libm::exp(linalg::pairwise_sum(&logs) / logs.len() as f64))
}

/// The recording montage in acquisition order.
pub const CHANNELS_32: [&str; 32] = [
    "Fp1", "AF3", "F7", "F3", "FC1", "FC5", "T7", "C3", "CP1", "CP5", "PO7", "P3", "POz", "PO3", "O1", "Oz", "O2", "PO4", "P4", "PO8",
    "CP6", "CP2", "C4", "T8", "FC6", "FC2", "F4", "F8", "AF4", "Fp2", "Fz", "Cz",
];

/// First `n` montage names, or generic names beyond the montage size.
pub fn channel_names(n: usize) -> Vec<String> {
    if n <= CHANNELS_32.len() {
        CHANNELS_32[..n].iter().map(|s| String::from(*s)).collect()
    } else {
        (0..n).map(|i| format!("E{}", i + 1)).collect()
    }
}

/// Gain peaking at Fz and its frontocentral neighbours.
pub fn frontocentral_gain(name: &str) -> f64 {
    match name {
        "Fz" => 1.0,
        "FC1" | "FC2" => 0.9,
        "Cz" => 0.8,
        "F3" | "F4" | "AF3" | "AF4" | "C3" | "C4" | "CP1" | "CP2" => 0.4,
        "FC5" | "FC6" | "Fp1" | "Fp2" | "F7" | "F8" => 0.2,
        _ => 0.05,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErpTemplateSpec {
    pub frn_peak_s: f64,
    pub frn_width_s: f64,
    /// Failure-only negativity (µV, ≤ 0).
    pub frn_amp_uv: f64,
    pub p3a_peak_s: f64,
    pub p3a_width_s: f64,
    pub p3a_amp_success_uv: f64,
    pub p3a_amp_failure_uv: f64,
    /// Per-channel gain in `[0, 1]`; `None` uses [`frontocentral_gain`].
    pub topography: Option<Vec<f64>>,
    pub noise_exponent: f64,
    pub noise_rms_uv: f64,
    pub confound_enabled: bool,
    pub confound_peak_s: f64,
    pub confound_width_s: f64,
    /// Early tone-evoked deflection for feedback on success trials.
    pub confound_amp_success_uv: f64,
    pub confound_amp_failure_uv: f64,
    pub t0_offset_s: f64,
    pub duration_s: f64,
}

impl Default for ErpTemplateSpec {
    fn default() -> Self {
        Self {
            frn_peak_s: 0.15,
            frn_width_s: 0.05,
            frn_amp_uv: -5.0,
            p3a_peak_s: 0.30,
            p3a_width_s: 0.06,
            p3a_amp_success_uv: 2.0,
            p3a_amp_failure_uv: 5.0,
            topography: None,
            noise_exponent: 1.0,
            noise_rms_uv: 10.0,
            confound_enabled: false,
            confound_peak_s: 0.1375,
            confound_width_s: 0.02,
            confound_amp_success_uv: -1.0,
            confound_amp_failure_uv: -3.0,
            t0_offset_s: -0.5,
            duration_s: 2.5,
        }
    }
}

impl ErpTemplateSpec {
    pub fn validate(&self, n_channels: usize) -> Result<()> {
        let end = self.t0_offset_s + self.duration_s;
        let inside = |t: f64| t > self.t0_offset_s && t < end;
        if !(self.duration_s > 0.0) || !inside(self.frn_peak_s) || !inside(self.p3a_peak_s) || !inside(self.confound_peak_s) {
            return Err(Error::InvalidWindow { start: self.t0_offset_s, end });
        }
        if !(self.frn_width_s > 0.0 && self.p3a_width_s > 0.0 && self.confound_width_s > 0.0) {
            return Err(Error::InsufficientData("component widths must be positive"));
        }
        if !(self.noise_rms_uv >= 0.0 && self.noise_rms_uv.is_finite()) {
            return Err(Error::InsufficientData("noise RMS must be finite and non-negative"));
        }
        if let Some(t) = &self.topography {
            if t.len() != n_channels {
                return Err(Error::DimMismatch { expected: n_channels, found: t.len() });
            }
            if t.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::InsufficientData("topography gains must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn gains(&self, names: &[String]) -> Vec<f64> {
        match &self.topography {
            Some(t) => t.clone(),
            None => names.iter().map(|n| frontocentral_gain(n)).collect(),
        }
    }

    /// Noise-free waveform at time `t` (seconds from feedback onset).
    pub fn waveform(&self, label: Label, t: f64) -> f64 {
        let bump = |peak: f64, width: f64| {
            let u = (t - peak) / width;
            libm::exp(-0.5 * u * u)
        };
        let (p3a, confound) = match label {
            Label::Success => (self.p3a_amp_success_uv, self.confound_amp_success_uv),
            Label::Failure => (self.p3a_amp_failure_uv, self.confound_amp_failure_uv),
        };
        let mut v = p3a * bump(self.p3a_peak_s, self.p3a_width_s);
        if label == Label::Failure {
            v += self.frn_amp_uv * bump(self.frn_peak_s, self.frn_width_s);
        }
        if self.confound_enabled {
            v += confound * bump(self.confound_peak_s, self.confound_width_s);
        }
        v
    }

    /// Channels × samples class template.
    pub fn template(&self, label: Label, gains: &[f64], fs_hz: f64) -> Matrix {
        let n = self.n_samples(fs_hz);
        let wave: Vec<f64> = (0..n).map(|s| self.waveform(label, self.t0_offset_s + s as f64 / fs_hz)).collect();
        Matrix::from_fn(gains.len(), n, |c, s| gains[c] * wave[s])
    }

    pub fn n_samples(&self, fs_hz: f64) -> usize {
        libm::round(self.duration_s * fs_hz) as usize
    }
}

/// Number of first-order components summed to approximate 1/f^γ noise.
const NOISE_COMPONENTS: usize = 10;
const NOISE_LOWEST_HZ: f64 = 0.2;

/// Mixing matrix and per-source scales shared by every epoch.
struct NoiseModel {
    mixing: Matrix,
    source_scale: Vec<f64>,
    coeffs: Vec<f64>,
    weights: Vec<f64>,
}

impl NoiseModel {
    fn new(n_channels: usize, fs_hz: f64, spec: &ErpTemplateSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let mixing = random_orthonormal(n_channels, &mut rng);
        // Unequal source variances, normalized to unit mean power, so the
        // mixed channel covariance is not a multiple of the identity.
        let raw: Vec<f64> = (0..n_channels).map(|_| libm::exp(rng.random_range(-1.0..1.0))).collect();
        let power = raw.iter().map(|s| s * s).sum::<f64>() / n_channels as f64;
        let source_scale = raw.iter().map(|s| spec.noise_rms_uv * s / libm::sqrt(power)).collect();

        let hi = 0.45 * fs_hz;
        let ratio = libm::pow(hi / NOISE_LOWEST_HZ, 1.0 / (NOISE_COMPONENTS - 1) as f64);
        let corners: Vec<f64> = (0..NOISE_COMPONENTS).map(|k| NOISE_LOWEST_HZ * libm::pow(ratio, k as f64)).collect();
        let coeffs = corners.iter().map(|f| libm::exp(-2.0 * PI * f / fs_hz)).collect();
        let var: Vec<f64> = corners.iter().map(|f| libm::pow(*f, 1.0 - spec.noise_exponent)).collect();
        let total: f64 = var.iter().sum();
        let weights = var.iter().map(|v| libm::sqrt(v / total)).collect();
        Self { mixing, source_scale, coeffs, weights }
    }

    /// Unit-variance colored source sampled from its stationary law.
    fn source(&self, n: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&rho, &w) in self.coeffs.iter().zip(&self.weights) {
            let innov = libm::sqrt(1.0 - rho * rho);
            let mut x: f64 = rng.sample(StandardNormal);
            for o in out.iter_mut().take(n) {
                *o += w * x;
                let e: f64 = rng.sample(StandardNormal);
                x = rho * x + innov * e;
            }
        }
    }

    fn epoch_noise(&self, n_samples: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let nc = self.source_scale.len();
        let mut sources = Matrix::zeros(nc, n_samples);
        for j in 0..nc {
            let row = sources.row_mut(j);
            self.source(n_samples, rng, row);
            let s = self.source_scale[j];
            row.iter_mut().for_each(|v| *v *= s);
        }
        self.mixing.matmul(&sources).expect("mixing is square in the channel count")
    }
}

/// Modified Gram-Schmidt on a Gaussian matrix.
fn random_orthonormal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    for j in 0..n {
        for i in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let p = linalg::dot(&done[i], &rest[0]);
            for (v, q) in rest[0].iter_mut().zip(&done[i]) {
                *v -= p * q;
            }
        }
        let norm = libm::sqrt(linalg::dot(&cols[j], &cols[j]));
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Template plus noise for every label. Epoch `i` draws its noise from
/// stream `i + 1` of `seed`, so output does not depend on generation order.
pub fn generate_epochs(labels: &[Label], spec: &ErpTemplateSpec, n_channels: usize, fs_hz: f64, seed: u64) -> Result<EpochSet> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n_channels == 0 {
        return Err(Error::InsufficientChannels(0));
    }
    if !(fs_hz > 0.0) {
        return Err(Error::InsufficientData("sampling rate must be positive"));
    }
    spec.validate(n_channels)?;
    let names = channel_names(n_channels);
    let gains = spec.gains(&names);
    let templates = [spec.template(Label::Success, &gains, fs_hz), spec.template(Label::Failure, &gains, fs_hz)];
    let noise = NoiseModel::new(n_channels, fs_hz, spec, seed);
    let n_samples = spec.n_samples(fs_hz);
    let epochs = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut data = templates[label.code() as usize].clone();
            if spec.noise_rms_uv > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                let n = noise.epoch_noise(n_samples, &mut rng);
                for (d, v) in data.as_mut_slice().iter_mut().zip(n.as_slice()) {
                    *d += v;
                }
            }
            Epoch { fs_hz, data, t0_offset_s: spec.t0_offset_s, label }
        })
        .collect();
    EpochSet::new(epochs, names)
}

/// A continuous recording holding one trial per label, separated by `gap_s`
/// of ongoing noise, with an event of `event_code` at each feedback onset.
/// The noise runs uninterrupted from stream `u64::MAX - 1` of `seed`.
pub fn generate_continuous(
    labels: &[Label],
    spec: &ErpTemplateSpec,
    n_channels: usize,
    fs_hz: f64,
    gap_s: f64,
    event_code: u32,
    seed: u64,
) -> Result<ContinuousRecording> {
    if !(gap_s >= 0.0) {
        return Err(Error::InsufficientData("trial gap must be non-negative"));
    }
    let quiet = ErpTemplateSpec { noise_rms_uv: 0.0, ..spec.clone() };
    let trials = generate_epochs(labels, &quiet, n_channels, fs_hz, seed)?;
    let n_epoch = trials.n_samples();
    let n_gap = libm::round(gap_s * fs_hz) as usize;
    let onset = libm::round(-spec.t0_offset_s * fs_hz).max(0.0) as usize;
    let total = n_gap + labels.len() * (n_epoch + n_gap);
    let mut data = if spec.noise_rms_uv > 0.0 {
        let noise = NoiseModel::new(n_channels, fs_hz, spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX - 1);
        noise.epoch_noise(total, &mut rng)
    } else {
        Matrix::zeros(n_channels, total)
    };
    let mut events = Vec::with_capacity(labels.len());
    for (i, e) in trials.epochs().iter().enumerate() {
        let start = n_gap + i * (n_epoch + n_gap);
        for c in 0..n_channels {
            let dst = &mut data.row_mut(c)[start..start + n_epoch];
            for (d, v) in dst.iter_mut().zip(e.data.row(c)) {
                *d += v;
            }
        }
        events.push(Event { sample: start + onset, code: event_code });
    }
    ContinuousRecording::new(fs_hz, trials.channels().to_vec(), data, events)
}

/// How trial outcomes are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelSource {
    /// Half of each class (the extra trial is a success), shuffled.
    Balanced,
    /// Outcomes of a simulated staircase session.
    Staircase(StaircaseConfig),
}

pub fn synth_labels(source: &LabelSource, n_trials: usize, seed: u64) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    match source {
        LabelSource::Balanced => {
            let mut v: Vec<Label> = (0..n_trials).map(|i| if i < n_trials.div_ceil(2) { Label::Success } else { Label::Failure }).collect();
            v.shuffle(&mut rng);
            v
        }
        LabelSource::Staircase(cfg) => {
            let per_block = n_trials.div_ceil(cfg.blocks.max(1));
            let cfg = StaircaseConfig { trials_per_block: per_block, ..*cfg };
            let blocks = run_blocks(&cfg, rng.random());
            blocks
                .iter()
                .flat_map(|b| b.history.iter())
                .take(n_trials)
                .map(|&(_, ok)| if ok { Label::Success } else { Label::Failure })
                .collect()
        }
    }
}
