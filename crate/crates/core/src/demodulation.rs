//! AM detectors (diode envelope, precision full-wave chain, product) and an
//! FM quadrature discriminator.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{ensure_positive, Error, Result};
use crate::filters::{analog_pole_lowpass, FilterSpec};
use crate::signal::{ComplexSignal, RealSignal};

/// Diode plus RC hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeDetectorConfig {
    pub r_ohms: f64,
    pub c_farads: f64,
    /// Forward drop of the rectifying diode; 0 models an ideal diode.
    pub diode_drop_v: f64,
}

impl EnvelopeDetectorConfig {
    pub fn new(r_ohms: f64, c_farads: f64, diode_drop_v: f64) -> Self {
        Self {
            r_ohms,
            c_farads,
            diode_drop_v,
        }
    }

    pub fn time_constant_s(&self) -> f64 {
        self.r_ohms * self.c_farads
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("r_ohms", self.r_ohms)?;
        ensure_positive("c_farads", self.c_farads)?;
        if !(self.diode_drop_v >= 0.0) {
            return Err(Error::arg("diode drop must be non-negative"));
        }
        Ok(())
    }

    /// False (and a logged warning) when RC spans fewer than ten carrier
    /// periods, where the hold cannot bridge the carrier troughs.
    pub fn suits_carrier(&self, carrier_hz: f64) -> bool {
        let ok = self.time_constant_s() * carrier_hz >= 10.0;
        if !ok {
            log::warn!(
                "envelope detector RC = {} s is short for a {} Hz carrier",
                self.time_constant_s(),
                carrier_hz
            );
        }
        ok
    }
}

/// Peak hold with exact exponential RC discharge between samples.
pub fn simple_envelope_detect(am: &RealSignal, cfg: EnvelopeDetectorConfig) -> Result<RealSignal> {
    cfg.validate()?;
    let decay = (-1.0 / (am.sample_rate_hz() * cfg.time_constant_s())).exp();
    let mut held = 0.0f64;
    let out = am
        .samples()
        .iter()
        .map(|&x| {
            held = (x - cfg.diode_drop_v).max(held * decay);
            held
        })
        .collect();
    RealSignal::new(am.sample_rate_hz(), out)
}

/// Peak-to-peak ripple `V_peak / (f_c·R·C)` of an RC envelope hold.
pub fn predicted_ripple(v_peak_v: f64, carrier_hz: f64, r_ohms: f64, c_farads: f64) -> Result<f64> {
    if !(v_peak_v >= 0.0) || !v_peak_v.is_finite() {
        return Err(Error::arg("v_peak must be non-negative"));
    }
    ensure_positive("carrier_hz", carrier_hz)?;
    ensure_positive("r_ohms", r_ohms)?;
    ensure_positive("c_farads", c_farads)?;
    Ok(v_peak_v / (carrier_hz * r_ohms * c_farads))
}

/// Behavioral op-amp used in the rectifier and recombination stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpAmpModel {
    pub gain_bandwidth_hz: f64,
    pub slew_rate_v_per_s: f64,
    /// When false the rectifier is ideal.
    pub enabled: bool,
    /// Apply the slew-rate limit in addition to the bandwidth limit.
    pub slew_limited: bool,
}

impl Default for OpAmpModel {
    /// LM318-class part: 15 MHz GBP, 70 V/µs.
    fn default() -> Self {
        Self {
            gain_bandwidth_hz: 15e6,
            slew_rate_v_per_s: 70e6,
            enabled: true,
            slew_limited: true,
        }
    }
}

impl OpAmpModel {
    /// Closed-loop noise gain of the gain-of-two recombination stages.
    pub const NOISE_GAIN: f64 = 2.0;

    pub fn ideal() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// Closed-loop bandwidth `GBP / noise gain`.
    pub fn closed_loop_bandwidth_hz(&self) -> f64 {
        self.gain_bandwidth_hz / Self::NOISE_GAIN
    }
}

/// Full-wave precision rectifier followed by the gain-of-two recombination:
/// `y = 2·|x|`, non-negative.
///
/// With the op-amp model enabled the result passes through a single pole at
/// the closed-loop bandwidth and, optionally, a slew-rate limiter.
pub fn precision_full_wave_rectify(am: &RealSignal, opamp: OpAmpModel) -> Result<RealSignal> {
    let ideal = am.map(|x| 2.0 * x.abs())?;
    if !opamp.enabled {
        return Ok(ideal);
    }
    ensure_positive("gain_bandwidth_hz", opamp.gain_bandwidth_hz)?;
    ensure_positive("slew_rate_v_per_s", opamp.slew_rate_v_per_s)?;
    let fs = am.sample_rate_hz();
    let pole = analog_pole_lowpass(1.0 / (TAU * opamp.closed_loop_bandwidth_hz()), fs)?;
    let band_limited = pole.filter(&ideal)?;
    if !opamp.slew_limited {
        return Ok(band_limited);
    }
    let max_step = opamp.slew_rate_v_per_s / fs;
    let mut y = 0.0f64;
    let out = band_limited
        .samples()
        .iter()
        .map(|&target| {
            y += (target - y).clamp(-max_step, max_step);
            y
        })
        .collect();
    RealSignal::new(fs, out)
}

/// Precision rectification, recombination, then the output low-pass.
///
/// DC from the rectified envelope is left in the output.
pub fn demodulate_am(am: &RealSignal, opamp: OpAmpModel, filter: &FilterSpec) -> Result<RealSignal> {
    let rectified = precision_full_wave_rectify(am, opamp)?;
    filter.filter(&rectified)
}

/// Synchronous detector: `lowpass(am · cos(2π·lo·t + φ))`.
pub fn product_detect(
    am: &RealSignal,
    lo_hz: f64,
    lo_phase_rad: f64,
    filter: &FilterSpec,
) -> Result<RealSignal> {
    ensure_positive("lo_hz", lo_hz)?;
    let w = TAU * lo_hz / am.sample_rate_hz();
    let mixed = am.map_indexed(|n, x| x * (w * n as f64 + lo_phase_rad).cos())?;
    filter.filter(&mixed)
}

/// Quadrature discriminator: instantaneous frequency in Hz,
/// `(fs/2π)·arg(z[n]·conj(z[n−1]))`, with `z[−1] = 1`.
pub fn fm_demodulate(iq: &ComplexSignal) -> Result<RealSignal> {
    let fs = iq.sample_rate_hz();
    let gain = fs / (2.0 * PI);
    let mut prev = Complex64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(iq.len());
    for (i, &z) in iq.samples().iter().enumerate() {
        if z.norm_sqr() == 0.0 {
            return Err(Error::ZeroMagnitude { index: i });
        }
        out.push(gain * (z * prev.conj()).arg());
        prev = z;
    }
    RealSignal::new(fs, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::design_single_pole_lowpass;
    use crate::modulation::{fm_modulate, FmParams};
    use crate::signal::{generate_tone, ToneSpec};
    use proptest::prelude::*;

    #[test]
    fn small_signal_never_turns_diode_on() {
        let x = generate_tone(ToneSpec::new(1e6, 0.3), 1e-4, 1e7).unwrap();
        let y = simple_envelope_detect(&x, EnvelopeDetectorConfig::new(10e3, 22e-9, 0.6)).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dc_input_holds() {
        let x = RealSignal::constant(1e6, 1.0, 100).unwrap();
        let y = simple_envelope_detect(&x, EnvelopeDetectorConfig::new(10e3, 22e-9, 0.0)).unwrap();
        assert!(y.samples().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn carrier_suitability() {
        let cfg = EnvelopeDetectorConfig::new(10e3, 22e-9, 0.0);
        assert!(cfg.suits_carrier(1e6));
        assert!(!cfg.suits_carrier(1e4));
    }

    #[test]
    fn ripple_formula() {
        let r = predicted_ripple(1.0, 1e6, 10e3, 22e-9).unwrap();
        assert!((r - 1.0 / (1e6 * 2.2e-4)).abs() < 1e-15);
        assert!((r - 4.545e-3).abs() < 1e-6);
        assert_eq!(predicted_ripple(0.0, 1e6, 10e3, 22e-9).unwrap(), 0.0);
        let half = predicted_ripple(1.0, 1e6, 10e3, 44e-9).unwrap();
        assert!((half - r / 2.0).abs() < 1e-15);
        assert!(predicted_ripple(1.0, 0.0, 10e3, 22e-9).is_err());
        assert!(predicted_ripple(-1.0, 1e6, 10e3, 22e-9).is_err());
    }

    #[test]
    fn measured_ripple_near_prediction() {
        let fs = 2e7;
        let x = generate_tone(ToneSpec::new(1e6, 1.0), 5e-3, fs).unwrap();
        let y = simple_envelope_detect(&x, EnvelopeDetectorConfig::new(10e3, 22e-9, 0.0)).unwrap();
        let tail = &y.samples()[y.len() - 200..];
        let pp = tail.iter().copied().fold(f64::MIN, f64::max) - tail.iter().copied().fold(f64::MAX, f64::min);
        let expect = predicted_ripple(1.0, 1e6, 10e3, 22e-9).unwrap();
        assert!((pp - expect).abs() / expect < 0.25, "{pp} vs {expect}");
    }

    #[test]
    fn ideal_rectifier_values() {
        let x = RealSignal::constant(1e6, -0.5, 4).unwrap();
        let y = precision_full_wave_rectify(&x, OpAmpModel::ideal()).unwrap();
        assert!(y.samples().iter().all(|&v| v == 1.0));
        let c = generate_tone(ToneSpec::new(1e3, 1.0), 1e-2, 1e5).unwrap();
        let r = precision_full_wave_rectify(&c, OpAmpModel::ideal()).unwrap();
        assert_eq!(r.peak(), 2.0);
    }

    #[test]
    fn product_detector_inverts_at_pi() {
        let fs = 1e7;
        let msg = generate_tone(ToneSpec::new(500.0, 1.0), 0.02, fs).unwrap();
        let am = crate::modulation::am_modulate(&msg, crate::modulation::AmParams::new(1e6, 1.0, 0.5)).unwrap();
        let lp = design_single_pole_lowpass(10e3, 22e-9, fs).unwrap();
        let a = product_detect(&am, 1e6, 0.0, &lp).unwrap();
        let b = product_detect(&am, 1e6, PI, &lp).unwrap();
        let tail = a.len() - 20_000;
        for (p, q) in a.samples()[tail..].iter().zip(&b.samples()[tail..]) {
            assert!((p + q).abs() < 0.01 * p.abs().max(1e-3));
        }
    }

    #[test]
    fn discriminator_of_constant_tone() {
        let iq = ComplexSignal::tone(1e6, 0.0, 1e4, 1.0, 500).unwrap();
        let f = fm_demodulate(&iq).unwrap();
        // First sample is referenced to z[-1] = 1, and the tone starts at phase 0.
        assert_eq!(f.samples()[0], 0.0);
        assert!(f.samples()[1..].iter().all(|v| (v - 1e4).abs() < 1e-6));
    }

    #[test]
    fn discriminator_edge_cases() {
        let empty = ComplexSignal::new(1e6, 0.0, vec![]).unwrap();
        assert!(fm_demodulate(&empty).unwrap().is_empty());
        let zero = ComplexSignal::new(1e6, 0.0, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert!(matches!(fm_demodulate(&zero), Err(Error::ZeroMagnitude { index: 1 })));
    }

    #[test]
    fn constant_message_recovers_deviation() {
        let msg = RealSignal::constant(1e6, 1.0, 1000).unwrap();
        let iq = fm_modulate(&msg, FmParams::new(0.0, 10e3)).unwrap();
        let f = fm_demodulate(&iq).unwrap();
        assert!(f.samples().iter().all(|v| (v - 10e3).abs() < 100.0));
    }

    proptest! {
        #[test]
        fn ideal_rectifier_is_even(xs in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
            let x = RealSignal::new(1e6, xs).unwrap();
            let neg = x.scaled(-1.0).unwrap();
            let a = precision_full_wave_rectify(&x, OpAmpModel::ideal()).unwrap();
            let b = precision_full_wave_rectify(&neg, OpAmpModel::ideal()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn envelope_is_nonnegative_and_bounded(
            xs in proptest::collection::vec(-3.0f64..3.0, 1..300),
            drop in 0.0f64..0.7,
        ) {
            let x = RealSignal::new(1e6, xs).unwrap();
            let y = simple_envelope_detect(&x, EnvelopeDetectorConfig::new(1e3, 1e-6, drop)).unwrap();
            let mut running_max = f64::MIN;
            for (&xi, &yi) in x.samples().iter().zip(y.samples()) {
                running_max = running_max.max(xi);
                prop_assert!(yi >= 0.0);
                prop_assert!(yi <= running_max.max(0.0));
            }
        }
    }
}
