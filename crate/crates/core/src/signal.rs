//! Continuous-recording preprocessing and epoching.
//!
//! Stage order follows the acquisition protocol: bandpass, notch, average
//! reference, artifact hook, epoching around feedback onset, baseline
//! subtraction, downsampling. Every stage is a pure function of its input.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::filter::{self, Sos};
use crate::linalg::{self, Matrix};

/// Trial outcome. Failure is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Success,
    Failure,
}

impl Label {
    pub const fn code(self) -> u8 {
        match self {
            Label::Success => 0,
            Label::Failure => 1,
        }
    }

    pub const fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Success),
            1 => Some(Label::Failure),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Label::Success => "success",
            Label::Failure => "failure",
        }
    }

    /// ±1 encoding used by the classifier (failure = +1).
    pub const fn sign(self) -> f64 {
        match self {
            Label::Success => -1.0,
            Label::Failure => 1.0,
        }
    }

    pub const fn flipped(self) -> Label {
        match self {
            Label::Success => Label::Failure,
            Label::Failure => Label::Success,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub sample: usize,
    pub code: u32,
}

/// Multi-channel continuous recording in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecording {
    fs_hz: f64,
    channels: Vec<String>,
    data: Matrix,
    events: Vec<Event>,
}

impl ContinuousRecording {
    pub fn new(fs_hz: f64, channels: Vec<String>, data: Matrix, events: Vec<Event>) -> Result<Self> {
        if !(fs_hz > 0.0 && fs_hz.is_finite()) {
            return Err(Error::InvalidFilterSpec("sampling rate must be positive"));
        }
        if channels.len() != data.rows() {
            return Err(Error::DimMismatch { expected: data.rows(), found: channels.len() });
        }
        if let Some(bad) = events.iter().find(|e| e.sample >= data.cols()) {
            return Err(Error::DimMismatch { expected: data.cols(), found: bad.sample });
        }
        Ok(Self { fs_hz, channels, data, events })
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn n_channels(&self) -> usize {
        self.data.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.cols()
    }

    fn with_data(&self, data: Matrix) -> Self {
        Self { fs_hz: self.fs_hz, channels: self.channels.clone(), data, events: self.events.clone() }
    }

    fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = Matrix::zeros(self.n_channels(), self.n_samples());
        for c in 0..self.n_channels() {
            out.row_mut(c).copy_from_slice(&f(self.data.row(c)));
        }
        self.with_data(out)
    }
}

/// One trial: channels × samples, sample 0 at `t0_offset_s` relative to
/// feedback onset.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub fs_hz: f64,
    pub data: Matrix,
    pub t0_offset_s: f64,
    pub label: Label,
}

impl Epoch {
    pub fn n_channels(&self) -> usize {
        self.data.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.cols()
    }

    /// Sample range `[round((t_a - t0)·fs), +round((t_b - t_a)·fs))`.
    pub fn window(&self, t_a: f64, t_b: f64) -> Result<Range<usize>> {
        let bad = Error::InvalidWindow { start: t_a, end: t_b };
        if !(t_b > t_a) {
            return Err(bad);
        }
        let start = libm::round((t_a - self.t0_offset_s) * self.fs_hz);
        let len = libm::round((t_b - t_a) * self.fs_hz);
        if start < 0.0 || len < 1.0 || start + len > self.n_samples() as f64 {
            return Err(bad);
        }
        let start = start as usize;
        Ok(start..start + len as usize)
    }

    /// The channels × window sub-matrix.
    pub fn slice(&self, range: Range<usize>) -> Matrix {
        let len = range.len();
        let mut m = Matrix::zeros(self.n_channels(), len);
        for c in 0..self.n_channels() {
            m.row_mut(c).copy_from_slice(&self.data.row(c)[range.clone()]);
        }
        m
    }
}

/// Epochs sharing a channel layout, sampling rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    epochs: Vec<Epoch>,
    channels: Vec<String>,
}

impl EpochSet {
    pub fn new(epochs: Vec<Epoch>, channels: Vec<String>) -> Result<Self> {
        let first = epochs.first().ok_or(Error::EmptyInput)?;
        let (fs, nc, ns, t0) = (first.fs_hz, first.n_channels(), first.n_samples(), first.t0_offset_s);
        if channels.len() != nc {
            return Err(Error::DimMismatch { expected: nc, found: channels.len() });
        }
        for e in &epochs {
            if e.n_channels() != nc {
                return Err(Error::DimMismatch { expected: nc, found: e.n_channels() });
            }
            if e.n_samples() != ns {
                return Err(Error::DimMismatch { expected: ns, found: e.n_samples() });
            }
            if e.fs_hz != fs || e.t0_offset_s != t0 {
                return Err(Error::InsufficientData("epochs disagree on sampling rate or time origin"));
            }
        }
        Ok(Self { epochs, channels })
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn into_epochs(self) -> Vec<Epoch> {
        self.epochs
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn fs_hz(&self) -> f64 {
        self.epochs[0].fs_hz
    }

    pub fn t0_offset_s(&self) -> f64 {
        self.epochs[0].t0_offset_s
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.epochs[0].n_samples()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.epochs.iter().map(|e| e.label).collect()
    }

    /// (success count, failure count).
    pub fn class_counts(&self) -> (usize, usize) {
        let failures = self.epochs.iter().filter(|e| e.label == Label::Failure).count();
        (self.epochs.len() - failures, failures)
    }

    /// Copy with the given labels substituted in order.
    pub fn relabeled(&self, labels: &[Label]) -> Result<EpochSet> {
        if labels.len() != self.len() {
            return Err(Error::DimMismatch { expected: self.len(), found: labels.len() });
        }
        let epochs = self.epochs.iter().zip(labels).map(|(e, &label)| Epoch { label, ..e.clone() }).collect();
        Ok(Self { epochs, channels: self.channels.clone() })
    }

    /// Epochs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<EpochSet> {
        let epochs = indices.iter().map(|&i| self.epochs[i].clone()).collect();
        EpochSet::new(epochs, self.channels.clone())
    }

    pub fn map_epochs(&self, f: impl Fn(&Epoch) -> Result<Epoch>) -> Result<EpochSet> {
        let epochs = self.epochs.iter().map(f).collect::<Result<Vec<_>>>()?;
        EpochSet::new(epochs, self.channels.clone())
    }
}

/// Bandpass order per pass (the forward-backward response is squared).
pub const BANDPASS_ORDER: usize = 4;
pub const NOTCH_Q: f64 = 35.0;
/// Anti-alias lowpass applied before decimation.
pub const ANTIALIAS_ORDER: usize = 8;
pub const ANTIALIAS_FRACTION: f64 = 0.4;

fn pad_samples(order: usize, edge_hz: f64, fs_hz: f64) -> usize {
    libm::ceil(3.0 * order as f64 / edge_hz * fs_hz) as usize
}

fn apply_zero_phase(rec: &ContinuousRecording, sos: &Sos, padlen: usize) -> ContinuousRecording {
    rec.map_rows(|row| sos.filtfilt(row, padlen))
}

/// Zero-phase Butterworth bandpass.
pub fn bandpass(rec: &ContinuousRecording, lo_hz: f64, hi_hz: f64) -> Result<ContinuousRecording> {
    let sos = filter::butter_bandpass(BANDPASS_ORDER / 2, lo_hz, hi_hz, rec.fs_hz)?;
    let pad = pad_samples(BANDPASS_ORDER, lo_hz, rec.fs_hz);
    Ok(apply_zero_phase(rec, &sos, pad))
}

/// Zero-phase second-order notch at `freq_hz`.
pub fn notch(rec: &ContinuousRecording, freq_hz: f64) -> Result<ContinuousRecording> {
    let sos = filter::iir_notch(freq_hz, NOTCH_Q, rec.fs_hz)?;
    let pad = pad_samples(2, freq_hz, rec.fs_hz);
    Ok(apply_zero_phase(rec, &sos, pad))
}

/// Subtracts the across-channel mean at every sample.
pub fn average_reference(rec: &ContinuousRecording) -> Result<ContinuousRecording> {
    let nc = rec.n_channels();
    if nc < 2 {
        return Err(Error::InsufficientChannels(nc));
    }
    let ns = rec.n_samples();
    let mut out = rec.data.clone();
    let mut col = alloc::vec![0.0f64; nc];
    for t in 0..ns {
        for (c, v) in col.iter_mut().enumerate() {
            *v = rec.data[(c, t)];
        }
        let mean = linalg::pairwise_sum(&col) / nc as f64;
        for c in 0..nc {
            out[(c, t)] -= mean;
        }
        // Re-center once more so the residual mean sits at rounding level
        // even for large offsets.
        for (c, v) in col.iter_mut().enumerate() {
            *v = out[(c, t)];
        }
        let resid = linalg::pairwise_sum(&col) / nc as f64;
        for c in 0..nc {
            out[(c, t)] -= resid;
        }
    }
    Ok(rec.with_data(out))
}

/// Stage for artifact removal between referencing and epoching.
pub trait ArtifactHook {
    fn name(&self) -> &'static str;
    fn apply(&self, rec: ContinuousRecording) -> Result<ContinuousRecording>;
}

/// Pass-through stage standing in for ICA-based EOG removal.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityHook;

impl ArtifactHook for IdentityHook {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn apply(&self, rec: ContinuousRecording) -> Result<ContinuousRecording> {
        Ok(rec)
    }
}

/// Epochs plus the indices (into the matched-event list) that were dropped
/// because their window crossed a recording edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoching {
    pub set: EpochSet,
    pub skipped: Vec<usize>,
}

/// Cuts `[-pre_s, post_s]` around every event with `event_code`.
///
/// `labels[i]` belongs to the i-th matching event.
pub fn epoch_extract(rec: &ContinuousRecording, event_code: u32, pre_s: f64, post_s: f64, labels: &[Label]) -> Result<Epoching> {
    if !(pre_s >= 0.0 && post_s >= 0.0 && pre_s + post_s > 0.0) {
        return Err(Error::InvalidWindow { start: -pre_s, end: post_s });
    }
    let matching: Vec<&Event> = rec.events.iter().filter(|e| e.code == event_code).collect();
    if matching.is_empty() {
        return Err(Error::EmptyInput);
    }
    if labels.len() != matching.len() {
        return Err(Error::DimMismatch { expected: matching.len(), found: labels.len() });
    }
    let fs = rec.fs_hz;
    let lead = libm::round(pre_s * fs) as usize;
    let len = libm::round((pre_s + post_s) * fs) as usize;
    let mut epochs = Vec::new();
    let mut skipped = Vec::new();
    for (i, ev) in matching.iter().enumerate() {
        if ev.sample < lead || ev.sample - lead + len > rec.n_samples() {
            skipped.push(i);
            continue;
        }
        let start = ev.sample - lead;
        let mut data = Matrix::zeros(rec.n_channels(), len);
        for c in 0..rec.n_channels() {
            data.row_mut(c).copy_from_slice(&rec.data.row(c)[start..start + len]);
        }
        epochs.push(Epoch { fs_hz: fs, data, t0_offset_s: -(lead as f64) / fs, label: labels[i] });
    }
    if epochs.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Epoching { set: EpochSet::new(epochs, rec.channels.clone())?, skipped })
}

/// Removes each channel's mean over `[t_a, t_b]`.
pub fn baseline_subtract(e: &Epoch, t_a: f64, t_b: f64) -> Result<Epoch> {
    let range = e.window(t_a, t_b)?;
    let mut data = e.data.clone();
    for c in 0..e.n_channels() {
        let row = data.row_mut(c);
        let mean = linalg::pairwise_sum(&row[range.clone()]) / range.len() as f64;
        for v in row.iter_mut() {
            *v -= mean;
        }
        let resid = linalg::pairwise_sum(&row[range.clone()]) / range.len() as f64;
        for v in row.iter_mut() {
            *v -= resid;
        }
    }
    Ok(Epoch { data, ..e.clone() })
}

/// Lowpass at `0.4·target` then keeps every `fs/target`-th sample.
pub fn downsample(e: &Epoch, target_fs_hz: f64) -> Result<Epoch> {
    let ratio = e.fs_hz / target_fs_hz;
    let factor = libm::round(ratio);
    if !(target_fs_hz > 0.0) || factor < 1.0 || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::InvalidResampleFactor { from: e.fs_hz, to: target_fs_hz });
    }
    let factor = factor as usize;
    if factor == 1 {
        return Ok(e.clone());
    }
    let sos = filter::butter_lowpass(ANTIALIAS_ORDER, ANTIALIAS_FRACTION * target_fs_hz, e.fs_hz)?;
    let padlen = 3 * (2 * sos.sections.len() + 1);
    let out_len = e.n_samples() / factor;
    let mut data = Matrix::zeros(e.n_channels(), out_len);
    for c in 0..e.n_channels() {
        let filtered = sos.filtfilt(e.data.row(c), padlen);
        for (k, v) in data.row_mut(c).iter_mut().enumerate() {
            *v = filtered[k * factor];
        }
    }
    Ok(Epoch { fs_hz: target_fs_hz, data, ..e.clone() })
}

/// Whether baseline subtraction happens before or after downsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineOrder {
    BeforeDownsample,
    AfterDownsample,
}

/// Full preprocessing configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub bandpass_hz: Option<(f64, f64)>,
    pub notch_hz: Vec<f64>,
    pub average_reference: bool,
    pub event_code: u32,
    pub pre_s: f64,
    pub post_s: f64,
    pub baseline_s: Option<(f64, f64)>,
    pub target_fs_hz: Option<f64>,
    pub baseline_order: BaselineOrder,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bandpass_hz: Some((1.0, 100.0)),
            notch_hz: alloc::vec![50.0, 100.0],
            average_reference: true,
            event_code: 1,
            pre_s: 0.5,
            post_s: 2.0,
            baseline_s: Some((-0.5, 0.0)),
            target_fs_hz: Some(256.0),
            baseline_order: BaselineOrder::BeforeDownsample,
        }
    }
}

/// Runs every continuous stage, the artifact hook, then epoch-level stages.
pub fn preprocess(rec: &ContinuousRecording, labels: &[Label], cfg: &PreprocessConfig, hook: &dyn ArtifactHook) -> Result<Epoching> {
    let mut cur = match cfg.bandpass_hz {
        Some((lo, hi)) => bandpass(rec, lo, hi)?,
        None => rec.clone(),
    };
    for &f in &cfg.notch_hz {
        cur = notch(&cur, f)?;
    }
    if cfg.average_reference {
        cur = average_reference(&cur)?;
    }
    cur = hook.apply(cur)?;
    let Epoching { set, skipped } = epoch_extract(&cur, cfg.event_code, cfg.pre_s, cfg.post_s, labels)?;
    let set = set.map_epochs(|e| epoch_stages(e, cfg))?;
    Ok(Epoching { set, skipped })
}

/// Baseline subtraction and downsampling of one epoch, in configured order.
pub fn epoch_stages(e: &Epoch, cfg: &PreprocessConfig) -> Result<Epoch> {
    let baseline = |e: &Epoch| match cfg.baseline_s {
        Some((a, b)) => baseline_subtract(e, a, b),
        None => Ok(e.clone()),
    };
    let resample = |e: &Epoch| match cfg.target_fs_hz {
        Some(fs) => downsample(e, fs),
        None => Ok(e.clone()),
    };
    match cfg.baseline_order {
        BaselineOrder::BeforeDownsample => resample(&baseline(e)?),
        BaselineOrder::AfterDownsample => baseline(&resample(e)?),
    }
}
