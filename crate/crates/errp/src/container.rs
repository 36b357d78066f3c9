//! On-disk epoch and continuous-recording containers.
//!
//! An epoch container is a directory holding `manifest.json`, `data.f32`
//! (little-endian f32, trial-major, then channel, then sample) and
//! `labels.u8` (one byte per trial). A continuous container holds
//! `continuous.json` and a channel-major `data.f32`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use errp_core::linalg::Matrix;
use errp_core::signal::{ContinuousRecording, Epoch, EpochSet, Event, Label};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const CONTINUOUS_MANIFEST: &str = "continuous.json";
pub const DATA: &str = "data.f32";
pub const LABELS: &str = "labels.u8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs_hz: f64,
    pub t0_offset_s: f64,
    pub channel_names: Vec<String>,
    pub label_codes: BTreeMap<String, String>,
    /// Command and parameters that produced the container.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub produced_by: Option<serde_json::Value>,
}

pub fn default_label_codes() -> BTreeMap<String, String> {
    [Label::Success, Label::Failure].iter().map(|l| (l.code().to_string(), l.name().to_string())).collect()
}

impl Manifest {
    pub fn for_set(set: &EpochSet, produced_by: Option<serde_json::Value>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n_trials: set.len(),
            n_channels: set.n_channels(),
            n_samples: set.n_samples(),
            fs_hz: set.fs_hz(),
            t0_offset_s: set.t0_offset_s(),
            channel_names: set.channels().to_vec(),
            label_codes: default_label_codes(),
            produced_by,
        }
    }

    fn expected_values(&self) -> Option<usize> {
        self.n_trials.checked_mul(self.n_channels)?.checked_mul(self.n_samples)
    }

    /// Byte value to label for every declared code.
    fn decode_table(&self) -> std::result::Result<BTreeMap<u8, Label>, String> {
        let mut table = BTreeMap::new();
        for (code, name) in &self.label_codes {
            let byte: u8 = code.parse().map_err(|_| format!("label code {code:?} is not a byte value"))?;
            let label = [Label::Success, Label::Failure]
                .into_iter()
                .find(|l| l.name() == name)
                .ok_or_else(|| format!("label code {code} names unknown class {name:?}"))?;
            if label.code() != byte {
                return Err(format!("label code {code} must map to {:?}", Label::from_code(byte).map(Label::name)));
            }
            table.insert(byte, label);
        }
        Ok(table)
    }
}

/// Rounds every sample to f32 precision, the precision stored on disk.
pub fn quantize(set: &EpochSet) -> Result<EpochSet> {
    Ok(set.map_epochs(|e| {
        let mut data = e.data.clone();
        for v in data.as_mut_slice() {
            *v = f64::from(*v as f32);
        }
        Ok(Epoch { data, ..e.clone() })
    })?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn encode_f32(values: impl Iterator<Item = f64>, cap: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(cap * 4);
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn decode_f32(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect()
}

/// Writes an epoch container into `dir`, creating it if needed.
pub fn write_epochs(dir: &Path, set: &EpochSet, produced_by: Option<serde_json::Value>) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let manifest = Manifest::for_set(set, produced_by);
    let n = manifest.expected_values().unwrap_or(0);
    let data = encode_f32(set.epochs().iter().flat_map(|e| e.data.as_slice().iter().copied()), n);
    let labels: Vec<u8> = set.epochs().iter().map(|e| e.label.code()).collect();
    write_file(&dir.join(DATA), &data)?;
    write_file(&dir.join(LABELS), &labels)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&dir.join(MANIFEST), format!("{json}\n").as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = read_file(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Every violated container invariant, empty when the container is valid.
pub fn validate(dir: &Path) -> Vec<String> {
    let manifest = match read_manifest(dir) {
        Ok(m) => m,
        Err(e) => return vec![e.to_string()],
    };
    let mut diags = manifest_diagnostics(&manifest);
    match fs::read(dir.join(DATA)) {
        Ok(bytes) => {
            let want = manifest.expected_values().and_then(|n| n.checked_mul(4));
            if want != Some(bytes.len()) {
                diags.push(format!(
                    "data size mismatch: {DATA} has {} bytes, manifest implies {}",
                    bytes.len(),
                    want.map_or_else(|| "an overflowing count".into(), |w| w.to_string())
                ));
            } else if let Some(pos) = decode_f32(&bytes).iter().position(|v| !v.is_finite()) {
                diags.push(format!("non-finite sample at value index {pos}"));
            }
        }
        Err(e) => diags.push(format!("cannot read {DATA}: {e}")),
    }
    match fs::read(dir.join(LABELS)) {
        Ok(bytes) => {
            if bytes.len() != manifest.n_trials {
                diags.push(format!("labels size mismatch: {LABELS} has {} bytes, n_trials is {}", bytes.len(), manifest.n_trials));
            }
            if let Ok(table) = manifest.decode_table() {
                let bad: Vec<String> =
                    bytes.iter().enumerate().filter(|(_, b)| !table.contains_key(b)).map(|(i, b)| format!("trial {i}: {b}")).collect();
                if !bad.is_empty() {
                    let shown = bad.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
                    diags.push(format!("invalid label byte in {} trial(s): {shown}", bad.len()));
                }
            }
        }
        Err(e) => diags.push(format!("cannot read {LABELS}: {e}")),
    }
    diags
}

fn manifest_diagnostics(m: &Manifest) -> Vec<String> {
    let mut d = Vec::new();
    if m.format_version != FORMAT_VERSION {
        d.push(format!("unsupported format_version {} (expected {FORMAT_VERSION})", m.format_version));
    }
    if m.channel_names.len() != m.n_channels {
        d.push(format!("channel_names has {} entries, n_channels is {}", m.channel_names.len(), m.n_channels));
    }
    if m.n_trials == 0 || m.n_channels == 0 || m.n_samples == 0 {
        d.push("n_trials, n_channels and n_samples must all be positive".into());
    }
    if !(m.fs_hz > 0.0 && m.fs_hz.is_finite()) {
        d.push(format!("fs_hz must be positive, found {}", m.fs_hz));
    }
    if !m.t0_offset_s.is_finite() {
        d.push("t0_offset_s must be finite".into());
    }
    if let Err(e) = m.decode_table() {
        d.push(e);
    }
    d
}

/// Reads and fully validates an epoch container.
pub fn read_epochs(dir: &Path) -> Result<(Manifest, EpochSet)> {
    let diags = validate(dir);
    if !diags.is_empty() {
        return Err(CliError::input(format!("{}: invalid container: {}", dir.display(), diags.join("; "))));
    }
    let manifest = read_manifest(dir)?;
    let table = manifest.decode_table().map_err(CliError::Input)?;
    let values = decode_f32(&read_file(&dir.join(DATA))?);
    let labels = read_file(&dir.join(LABELS))?;
    let per = manifest.n_channels * manifest.n_samples;
    let epochs = values
        .chunks_exact(per)
        .zip(&labels)
        .map(|(chunk, b)| {
            Ok(Epoch {
                fs_hz: manifest.fs_hz,
                data: Matrix::from_vec(manifest.n_channels, manifest.n_samples, chunk.to_vec())?,
                t0_offset_s: manifest.t0_offset_s,
                label: table[b],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = EpochSet::new(epochs, manifest.channel_names.clone())?;
    Ok((manifest, set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub sample: usize,
    pub code: u32,
    /// Outcome code for feedback events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousManifest {
    pub format_version: u32,
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs_hz: f64,
    pub channel_names: Vec<String>,
    pub label_codes: BTreeMap<String, String>,
    pub events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub produced_by: Option<serde_json::Value>,
}

/// Recording plus the outcome label of every event that carries one.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecording {
    pub recording: ContinuousRecording,
    pub event_labels: Vec<Option<Label>>,
}

impl LabeledRecording {
    /// Labels of the events with `code`, in recording order.
    pub fn labels_for(&self, code: u32) -> Result<Vec<Label>> {
        self.recording
            .events()
            .iter()
            .zip(&self.event_labels)
            .filter(|(e, _)| e.code == code)
            .map(|(e, l)| l.ok_or_else(|| CliError::input(format!("event at sample {} has no outcome label", e.sample))))
            .collect()
    }
}

pub fn write_continuous(dir: &Path, rec: &LabeledRecording, produced_by: Option<serde_json::Value>) -> Result<ContinuousManifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let r = &rec.recording;
    let manifest = ContinuousManifest {
        format_version: FORMAT_VERSION,
        n_channels: r.n_channels(),
        n_samples: r.n_samples(),
        fs_hz: r.fs_hz(),
        channel_names: r.channels().to_vec(),
        label_codes: default_label_codes(),
        events: r
            .events()
            .iter()
            .zip(&rec.event_labels)
            .map(|(e, l)| EventRecord { sample: e.sample, code: e.code, label: l.map(Label::code) })
            .collect(),
        produced_by,
    };
    let data = encode_f32(r.data().as_slice().iter().copied(), r.data().as_slice().len());
    write_file(&dir.join(DATA), &data)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&dir.join(CONTINUOUS_MANIFEST), format!("{json}\n").as_bytes())?;
    Ok(manifest)
}

pub fn read_continuous(dir: &Path) -> Result<(ContinuousManifest, LabeledRecording)> {
    let path: PathBuf = dir.join(CONTINUOUS_MANIFEST);
    let m: ContinuousManifest =
        serde_json::from_slice(&read_file(&path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if m.format_version != FORMAT_VERSION {
        return Err(CliError::input(format!("unsupported format_version {}", m.format_version)));
    }
    let bytes = read_file(&dir.join(DATA))?;
    if Some(bytes.len()) != m.n_channels.checked_mul(m.n_samples).and_then(|n| n.checked_mul(4)) {
        return Err(CliError::input(format!(
            "data size mismatch: {} bytes for {} channels × {} samples",
            bytes.len(),
            m.n_channels,
            m.n_samples
        )));
    }
    let values = decode_f32(&bytes);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::input("continuous data contains non-finite samples"));
    }
    let data = Matrix::from_vec(m.n_channels, m.n_samples, values)?;
    let events = m.events.iter().map(|e| Event { sample: e.sample, code: e.code }).collect();
    let event_labels = m
        .events
        .iter()
        .map(|e| match e.label {
            None => Ok(None),
            Some(b) => Label::from_code(b)
                .map(Some)
                .ok_or_else(|| CliError::input(format!("event at sample {} has invalid label byte {b}", e.sample))),
        })
        .collect::<Result<Vec<_>>>()?;
    let recording = ContinuousRecording::new(m.fs_hz, m.channel_names.clone(), data, events)?;
    Ok((m, LabeledRecording { recording, event_labels }))
}
