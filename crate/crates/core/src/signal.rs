//! Waveform containers and deterministic test-signal generation.
//!
//! Amplitudes are volts everywhere. Nothing here normalizes implicitly.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{ensure_below_nyquist, ensure_positive, Error, Result};

/// Uniformly sampled real waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSignal {
    sample_rate_hz: f64,
    samples: Vec<f64>,
}

impl RealSignal {
    pub fn new(sample_rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        ensure_positive("sample_rate_hz", sample_rate_hz)?;
        check_finite(samples.iter().copied())?;
        Ok(Self {
            sample_rate_hz,
            samples,
        })
    }

    /// Constant signal of `len` samples.
    pub fn constant(sample_rate_hz: f64, value: f64, len: usize) -> Result<Self> {
        Self::new(sample_rate_hz, vec![value; len])
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Largest absolute sample value, 0 for an empty signal.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    /// Samples `[start, end)` as a new signal with the same rate.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.samples.len() {
            return Err(Error::arg(format!(
                "slice {start}..{end} out of range for {} samples",
                self.samples.len()
            )));
        }
        Ok(Self {
            sample_rate_hz: self.sample_rate_hz,
            samples: self.samples[start..end].to_vec(),
        })
    }

    /// Drops the first `seconds` of the signal.
    pub fn skip_seconds(&self, seconds: f64) -> Result<Self> {
        let n = ((seconds * self.sample_rate_hz).round() as usize).min(self.samples.len());
        self.slice(n, self.samples.len())
    }

    /// Applies `f` to every sample, re-checking finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.sample_rate_hz, self.samples.iter().map(|&x| f(x)).collect())
    }

    /// Like [`RealSignal::map`] with the sample index.
    pub fn map_indexed(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        Self::new(
            self.sample_rate_hz,
            self.samples.iter().enumerate().map(|(n, &x)| f(n, x)).collect(),
        )
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        self.map(|x| gain * x)
    }

    /// Subtracts the buffer mean: steady-state AC coupling.
    pub fn remove_dc(&self) -> Self {
        let mean = self.mean();
        Self {
            sample_rate_hz: self.sample_rate_hz,
            samples: self.samples.iter().map(|x| x - mean).collect(),
        }
    }

    /// Converts to `target_hz` by linear interpolation.
    ///
    /// When decimating, a centered moving average one output period wide is
    /// applied first so content near the new Nyquist limit is suppressed.
    pub fn resample(&self, target_hz: f64) -> Result<Self> {
        ensure_positive("target sample rate", target_hz)?;
        if target_hz == self.sample_rate_hz {
            return Ok(self.clone());
        }
        let ratio = self.sample_rate_hz / target_hz;
        let source = if ratio > 1.5 {
            centered_moving_average(&self.samples, ratio.round() as usize)
        } else {
            self.samples.clone()
        };
        let out_len = (self.samples.len() as f64 / ratio).round() as usize;
        let last = source.len().saturating_sub(1);
        let samples = (0..out_len)
            .map(|n| {
                let pos = n as f64 * ratio;
                let i = (pos.floor() as usize).min(last);
                let frac = pos - i as f64;
                let next = source[(i + 1).min(last)];
                source[i] + frac * (next - source[i])
            })
            .collect();
        Self::new(target_hz, samples)
    }
}

fn centered_moving_average(x: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    // Odd width keeps the average centered on the sample.
    let width = width | 1;
    let half = width / 2;
    (0..x.len())
        .map(|n| {
            let lo = n.saturating_sub(half);
            let hi = (n + width - half).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Complex-baseband IQ waveform. `center_hz` records the RF frequency that
/// baseband 0 Hz stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    sample_rate_hz: f64,
    center_hz: f64,
    samples: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(sample_rate_hz: f64, center_hz: f64, samples: Vec<Complex64>) -> Result<Self> {
        ensure_positive("sample_rate_hz", sample_rate_hz)?;
        if !center_hz.is_finite() {
            return Err(Error::arg("center_hz must be finite"));
        }
        check_finite(samples.iter().flat_map(|z| [z.re, z.im]))?;
        Ok(Self {
            sample_rate_hz,
            center_hz,
            samples,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_hz(&self) -> f64 {
        self.center_hz
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.sample_rate_hz,
            self.center_hz,
            self.samples.iter().map(|z| z * gain).collect(),
        )
    }

    /// Complex exponential at `freq_hz` relative to baseband.
    pub fn tone(
        sample_rate_hz: f64,
        center_hz: f64,
        freq_hz: f64,
        amplitude: f64,
        len: usize,
    ) -> Result<Self> {
        ensure_positive("sample_rate_hz", sample_rate_hz)?;
        ensure_below_nyquist("complex tone", freq_hz, sample_rate_hz)?;
        let w = TAU * freq_hz / sample_rate_hz;
        let samples = (0..len)
            .map(|n| Complex64::from_polar(amplitude, w * n as f64))
            .collect();
        Self::new(sample_rate_hz, center_hz, samples)
    }
}

fn check_finite(values: impl Iterator<Item = f64>) -> Result<()> {
    for (i, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
    }
    Ok(())
}

/// Cosine generator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneSpec {
    pub frequency_hz: f64,
    pub amplitude_v: f64,
    pub dc_offset_v: f64,
    pub phase_rad: f64,
}

impl ToneSpec {
    pub fn new(frequency_hz: f64, amplitude_v: f64) -> Self {
        Self {
            frequency_hz,
            amplitude_v,
            dc_offset_v: 0.0,
            phase_rad: 0.0,
        }
    }

    pub fn with_offset(mut self, dc_offset_v: f64) -> Self {
        self.dc_offset_v = dc_offset_v;
        self
    }

    pub fn with_phase(mut self, phase_rad: f64) -> Self {
        self.phase_rad = phase_rad;
        self
    }
}

/// Number of samples covering `duration_s` at `sample_rate_hz`.
pub fn sample_count(duration_s: f64, sample_rate_hz: f64) -> usize {
    (duration_s * sample_rate_hz).round() as usize
}

/// `dc + A·cos(2π f n / fs + phase)` for `round(duration·fs)` samples.
pub fn generate_tone(spec: ToneSpec, duration_s: f64, sample_rate_hz: f64) -> Result<RealSignal> {
    ensure_positive("duration_s", duration_s)?;
    ensure_positive("sample_rate_hz", sample_rate_hz)?;
    if spec.frequency_hz < 0.0 || spec.amplitude_v < 0.0 {
        return Err(Error::arg("tone frequency and amplitude must be non-negative"));
    }
    ensure_below_nyquist("tone", spec.frequency_hz, sample_rate_hz)?;
    let w = TAU * spec.frequency_hz / sample_rate_hz;
    let samples = (0..sample_count(duration_s, sample_rate_hz))
        .map(|n| spec.dc_offset_v + spec.amplitude_v * (w * n as f64 + spec.phase_rad).cos())
        .collect();
    RealSignal::new(sample_rate_hz, samples)
}

/// Multiplies by `exp(j·2π·shift·n/fs)` and moves the center annotation.
pub fn frequency_shift(signal: &ComplexSignal, shift_hz: f64) -> Result<ComplexSignal> {
    ensure_below_nyquist("frequency shift", shift_hz, signal.sample_rate_hz)?;
    let w = TAU * shift_hz / signal.sample_rate_hz;
    let samples = signal
        .samples
        .iter()
        .enumerate()
        .map(|(n, z)| z * Complex64::from_polar(1.0, w * n as f64))
        .collect();
    ComplexSignal::new(signal.sample_rate_hz, signal.center_hz + shift_hz, samples)
}
