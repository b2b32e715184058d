//! AM and FM waveform synthesis and an ideal multiplying mixer.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{ensure_below_nyquist, ensure_positive, Error, Result};
use crate::signal::{ComplexSignal, RealSignal};

/// AM broadcast band edges in Hz.
pub const AM_BAND_HZ: (f64, f64) = (530e3, 1.7e6);
/// FM broadcast band edges in Hz.
pub const FM_BAND_HZ: (f64, f64) = (88e6, 108e6);

/// Full-carrier AM: `(m·x + 1)·A·cos(2π f_c t)` with `|x| ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmParams {
    pub carrier_hz: f64,
    pub carrier_amplitude_v: f64,
    pub modulation_depth: f64,
}

impl AmParams {
    pub fn new(carrier_hz: f64, carrier_amplitude_v: f64, modulation_depth: f64) -> Self {
        Self {
            carrier_hz,
            carrier_amplitude_v,
            modulation_depth,
        }
    }

    pub fn in_broadcast_band(&self) -> bool {
        (AM_BAND_HZ.0..=AM_BAND_HZ.1).contains(&self.carrier_hz)
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        ensure_positive("carrier_hz", self.carrier_hz)?;
        ensure_positive("carrier_amplitude_v", self.carrier_amplitude_v)?;
        if !(0.0..=1.0).contains(&self.modulation_depth) {
            return Err(Error::arg(format!(
                "modulation depth must be in [0, 1], got {}",
                self.modulation_depth
            )));
        }
        ensure_below_nyquist("AM carrier", self.carrier_hz, sample_rate_hz)
    }
}

/// Amplitude-modulates a message normalized to peak 1.
///
/// The message is validated, never rescaled. Carriers outside the AM
/// broadcast band only log a warning.
pub fn am_modulate(message: &RealSignal, params: AmParams) -> Result<RealSignal> {
    let fs = message.sample_rate_hz();
    params.validate(fs)?;
    let peak = message.peak();
    if peak > 1.0 + 1e-12 {
        return Err(Error::arg(format!(
            "message peak {peak} exceeds 1; normalize before modulating"
        )));
    }
    if !params.in_broadcast_band() {
        log::warn!(
            "AM carrier {} Hz lies outside the {}-{} Hz broadcast band",
            params.carrier_hz,
            AM_BAND_HZ.0,
            AM_BAND_HZ.1
        );
    }
    let w = TAU * params.carrier_hz / fs;
    let (m, a) = (params.modulation_depth, params.carrier_amplitude_v);
    message.map_indexed(|n, x| (m * x + 1.0) * a * (w * n as f64).cos())
}

/// How the message is integrated into phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseIntegration {
    /// `φ[n] = φ[n−1] + 2π·k·x[n]/fs`
    #[default]
    Rectangular,
    /// `φ[n] = φ[n−1] + π·k·(x[n] + x[n−1])/fs`
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmParams {
    /// RF frequency that baseband 0 Hz represents.
    pub center_hz: f64,
    /// Modulation sensitivity in Hz of deviation per volt.
    pub deviation_hz_per_volt: f64,
    pub integration: PhaseIntegration,
}

impl FmParams {
    pub fn new(center_hz: f64, deviation_hz_per_volt: f64) -> Self {
        Self {
            center_hz,
            deviation_hz_per_volt,
            integration: PhaseIntegration::Rectangular,
        }
    }
}

/// Wraps a phase into `(−π, π]`.
pub(crate) fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Running phase accumulator that turns an instantaneous-frequency
/// sequence (Hz relative to baseband) into unit phasors.
///
/// Starts at phase 0; the first output already includes the first step.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PhaseAccumulator {
    phase: f64,
}

impl PhaseAccumulator {
    pub(crate) fn advance(&mut self, delta_rad: f64) -> f64 {
        self.phase = wrap_phase(self.phase + delta_rad);
        self.phase
    }
}

/// Frequency-modulates `message` at complex baseband. Output has unit modulus.
pub fn fm_modulate(message: &RealSignal, params: FmParams) -> Result<ComplexSignal> {
    let fs = message.sample_rate_hz();
    ensure_positive("deviation_hz_per_volt", params.deviation_hz_per_volt)?;
    let peak_dev = params.deviation_hz_per_volt * message.peak();
    ensure_below_nyquist("peak FM deviation", peak_dev, fs)?;

    let k = TAU * params.deviation_hz_per_volt / fs;
    let x = message.samples();
    let mut acc = PhaseAccumulator::default();
    let samples = x
        .iter()
        .enumerate()
        .map(|(n, &v)| {
            let delta = match params.integration {
                PhaseIntegration::Rectangular => k * v,
                PhaseIntegration::Trapezoidal => {
                    let prev = if n == 0 { v } else { x[n - 1] };
                    0.5 * k * (v + prev)
                }
            };
            Complex64::from_polar(1.0, acc.advance(delta))
        })
        .collect();
    ComplexSignal::new(fs, params.center_hz, samples)
}

/// Ideal multiplier against `cos(2π·lo·n/fs)`.
pub fn mix(signal: &RealSignal, lo_hz: f64) -> Result<RealSignal> {
    let fs = signal.sample_rate_hz();
    if lo_hz < 0.0 {
        return Err(Error::arg("LO frequency must be non-negative"));
    }
    ensure_below_nyquist("LO", lo_hz, fs)?;
    let w = TAU * lo_hz / fs;
    signal.map_indexed(|n, x| x * (w * n as f64).cos())
}

/// [`mix`] with the sum product `input_max_hz + lo_hz` checked against
/// Nyquist. Aliasing is an error unless `allow_alias` is set, in which case
/// it is only logged.
pub fn mix_checked(
    signal: &RealSignal,
    lo_hz: f64,
    input_max_hz: f64,
    allow_alias: bool,
) -> Result<RealSignal> {
    let fs = signal.sample_rate_hz();
    let sum = input_max_hz + lo_hz;
    if sum >= fs / 2.0 {
        if allow_alias {
            log::warn!("mixer sum product {sum} Hz aliases at fs = {fs} Hz");
        } else {
            return Err(Error::nyquist("mixer sum product", sum, fs));
        }
    }
    mix(signal, lo_hz)
}
