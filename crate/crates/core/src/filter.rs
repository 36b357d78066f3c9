//! IIR design (Butterworth, notch) as second-order sections, and zero-phase
//! forward-backward application.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One second-order section, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + zi * (self.b[1] + zi * self.b[2]);
        let den = self.a[0] + zi * (self.a[1] + zi * self.a[2]);
        num / den
    }

    /// Steady-state internal state (transposed direct form II) for a unit
    /// step input.
    fn step_state(&self) -> [f64; 2] {
        let den = self.a[0] + self.a[1] + self.a[2];
        let gain = (self.b[0] + self.b[1] + self.b[2]) / den;
        let z2 = self.b[2] - self.a[2] * gain;
        let z1 = self.b[1] - self.a[1] * gain + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / fs_hz;
        let z = Complex64::new(libm::cos(w), libm::sin(w));
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    /// Single-pass magnitude response.
    pub fn gain(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        self.response(freq_hz, fs_hz).norm()
    }

    /// Causal filtering in place, starting from internal state `zi · x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let mut scale = x0;
        for s in &self.sections {
            let zi = s.step_state();
            let mut z1 = zi[0] * scale;
            let mut z2 = zi[1] * scale;
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
            scale *= s.dc_gain();
        }
    }

    /// Zero-phase filtering with odd-reflection padding of `padlen`
    /// samples on each side (capped at `len - 1`).
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let first = x[0];
        let last = x[n - 1];
        for i in (1..=pad).rev() {
            ext.push(2.0 * first - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * last - x[n - 1 - i]);
        }
        self.run(&mut ext);
        ext.reverse();
        self.run(&mut ext);
        ext.reverse();
        ext.drain(..pad);
        ext.truncate(n);
        ext
    }
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = Complex64::new(2.0 * fs, 0.0);
    (k + s) / (k - s)
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * libm::tan(PI * freq_hz / fs)
}

fn butter_prototype(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::new(libm::cos(theta), libm::sin(theta))
        })
        .collect()
}

/// Groups digital poles into conjugate pairs (one real pair allowed per
/// leftover) and returns denominators `[1, a1, a2]`.
fn pair_poles(poles: &[Complex64]) -> Vec<[f64; 3]> {
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= 1e-12).map(|p| p.re).collect();
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(f64::total_cmp);
    let mut out: Vec<[f64; 3]> = upper.iter().map(|p| [1.0, -2.0 * p.re, p.norm_sqr()]).collect();
    for pair in real.chunks(2) {
        match *pair {
            [r1, r2] => out.push([1.0, -(r1 + r2), r1 * r2]),
            [r] => out.push([1.0, -r, 0.0]),
            _ => {}
        }
    }
    out
}

fn normalize_at(mut sos: Sos, freq_hz: f64, fs: f64) -> Sos {
    let g = sos.gain(freq_hz, fs);
    if let Some(first) = sos.sections.first_mut() {
        for b in &mut first.b {
            *b /= g;
        }
    }
    sos
}

/// Butterworth bandpass from an `order`-pole lowpass prototype, so the
/// digital filter has `2·order` poles (`order` sections).
pub fn butter_bandpass(order: usize, lo_hz: f64, hi_hz: f64, fs_hz: f64) -> Result<Sos> {
    if order == 0 {
        return Err(Error::InvalidFilterSpec("filter order must be positive"));
    }
    if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs_hz / 2.0) {
        return Err(Error::InvalidFilterSpec("band edges must satisfy 0 < lo < hi < fs/2"));
    }
    let w1 = prewarp(lo_hz, fs_hz);
    let w2 = prewarp(hi_hz, fs_hz);
    let w0sq = w1 * w2;
    let bw = w2 - w1;
    let mut poles = Vec::with_capacity(2 * order);
    for p in butter_prototype(order) {
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0sq).sqrt();
        poles.push(bilinear((pb + disc) / 2.0, fs_hz));
        poles.push(bilinear((pb - disc) / 2.0, fs_hz));
    }
    let sections = pair_poles(&poles)
        .into_iter()
        .map(|a| Biquad {
            // One zero at z = 1 (DC) and one at z = -1 (Nyquist) per section.
            b: [1.0, 0.0, -1.0],
            a,
        })
        .collect();
    let center = fs_hz / PI * libm::atan(libm::sqrt(w0sq) / (2.0 * fs_hz));
    Ok(normalize_at(Sos { sections }, center, fs_hz))
}

/// Butterworth lowpass with `order` poles, unity gain at DC.
pub fn butter_lowpass(order: usize, cutoff_hz: f64, fs_hz: f64) -> Result<Sos> {
    if order == 0 {
        return Err(Error::InvalidFilterSpec("filter order must be positive"));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0) {
        return Err(Error::InvalidFilterSpec("cutoff must satisfy 0 < fc < fs/2"));
    }
    let wc = prewarp(cutoff_hz, fs_hz);
    let poles: Vec<Complex64> = butter_prototype(order).into_iter().map(|p| bilinear(p * wc, fs_hz)).collect();
    let sections =
        pair_poles(&poles).into_iter().map(|a| Biquad { b: if a[2] == 0.0 { [1.0, 1.0, 0.0] } else { [1.0, 2.0, 1.0] }, a }).collect();
    Ok(normalize_at(Sos { sections }, 0.0, fs_hz))
}

/// Second-order IIR notch with quality factor `q`.
pub fn iir_notch(freq_hz: f64, q: f64, fs_hz: f64) -> Result<Sos> {
    if !(freq_hz > 0.0 && freq_hz < fs_hz / 2.0) {
        return Err(Error::InvalidFilterSpec("notch frequency must satisfy 0 < f < fs/2"));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidFilterSpec("notch quality factor must be positive"));
    }
    let w0 = 2.0 * PI * freq_hz / fs_hz;
    let beta = libm::tan(w0 / q / 2.0);
    let gain = 1.0 / (1.0 + beta);
    let c = libm::cos(w0);
    Ok(Sos { sections: vec![Biquad { b: [gain, -2.0 * gain * c, gain], a: [1.0, -2.0 * gain * c, 2.0 * gain - 1.0] }] })
}
