//! Behavioral varactor-tuned oscillator: varactor C(V), LC tank, bias
//! conditioning, phase-accumulator synthesis, and the output buffer's
//! small-signal numbers.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure_positive, Error, Result};
use crate::filters::{apply_filter, lowpass_from_tau, FilterState};
use crate::modulation::PhaseAccumulator;
use crate::signal::{ComplexSignal, RealSignal};

/// Allowed bias span in volts.
pub const BIAS_RANGE_V: (f64, f64) = (0.0, 12.0);
/// Tuning range the calibration targets.
pub const TUNING_RANGE_HZ: (f64, f64) = (66e6, 102e6);

/// Capacitance-voltage law of one varactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VaractorLaw {
    /// `C_j0 / (1 + V/φ)^γ`
    Junction { phi_v: f64, gamma: f64 },
    /// `C_j0 · exp(−V/V_s)`
    Exponential { v_scale_v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaractorModel {
    pub c_zero_f: f64,
    pub c_min_f: f64,
    pub law: VaractorLaw,
}

impl Default for VaractorModel {
    fn default() -> Self {
        Self {
            c_zero_f: 120e-12,
            c_min_f: 12e-12,
            law: VaractorLaw::Exponential { v_scale_v: 11.31 },
        }
    }
}

impl VaractorModel {
    pub fn junction(c_zero_f: f64, phi_v: f64, gamma: f64) -> Self {
        Self {
            c_zero_f,
            law: VaractorLaw::Junction { phi_v, gamma },
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_positive("c_zero_f", self.c_zero_f)?;
        ensure_positive("c_min_f", self.c_min_f)?;
        match self.law {
            VaractorLaw::Junction { phi_v, gamma } => {
                ensure_positive("phi_v", phi_v)?;
                ensure_positive("gamma", gamma)
            }
            VaractorLaw::Exponential { v_scale_v } => ensure_positive("v_scale_v", v_scale_v),
        }
    }

    /// Two devices back to back: half of one.
    pub fn series_pair(&self, v_reverse: f64) -> Result<f64> {
        Ok(varactor_capacitance(self, v_reverse)? / 2.0)
    }

    fn with_shape(mut self, p: f64) -> Self {
        match &mut self.law {
            VaractorLaw::Junction { gamma, .. } => *gamma = p,
            VaractorLaw::Exponential { v_scale_v } => *v_scale_v = p,
        }
        self
    }
}

/// Single-device capacitance at reverse bias `v_reverse`, floored at `c_min`.
pub fn varactor_capacitance(model: &VaractorModel, v_reverse: f64) -> Result<f64> {
    model.validate()?;
    if !(v_reverse >= 0.0) || !v_reverse.is_finite() {
        return Err(Error::arg(format!(
            "varactor bias must be a finite reverse voltage >= 0, got {v_reverse}"
        )));
    }
    let c = match model.law {
        VaractorLaw::Junction { phi_v, gamma } => model.c_zero_f / (1.0 + v_reverse / phi_v).powf(gamma),
        VaractorLaw::Exponential { v_scale_v } => model.c_zero_f * (-v_reverse / v_scale_v).exp(),
    };
    Ok(c.max(model.c_min_f))
}

/// Fixed capacitors and how they combine.
#[derive(Debug, Clone, PartialEq)]
pub enum CapNetwork {
    Series(Vec<f64>),
    Parallel(Vec<f64>),
}

impl CapNetwork {
    pub fn total_f(&self) -> Result<f64> {
        let caps = match self {
            CapNetwork::Series(c) | CapNetwork::Parallel(c) => c,
        };
        if caps.is_empty() {
            return Err(Error::arg("capacitor network is empty"));
        }
        for &c in caps {
            ensure_positive("capacitance", c)?;
        }
        Ok(match self {
            CapNetwork::Series(c) => 1.0 / c.iter().map(|x| 1.0 / x).sum::<f64>(),
            CapNetwork::Parallel(c) => c.iter().sum(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TankCircuit {
    pub inductance_h: f64,
    pub fixed_caps: CapNetwork,
    pub varactor: VaractorModel,
}

impl Default for TankCircuit {
    fn default() -> Self {
        Self {
            inductance_h: 50e-9,
            fixed_caps: CapNetwork::Series(vec![15e-12, 15e-12]),
            varactor: VaractorModel::default(),
        }
    }
}

impl TankCircuit {
    /// Fixed network in parallel with the varactor pair.
    pub fn total_capacitance_f(&self, v_reverse: f64) -> Result<f64> {
        Ok(self.fixed_caps.total_f()? + self.varactor.series_pair(v_reverse)?)
    }
}

/// `1 / (2π·√(LC))`
pub fn tank_resonant_frequency(l_h: f64, c_total_f: f64) -> Result<f64> {
    ensure_positive("inductance", l_h)?;
    ensure_positive("capacitance", c_total_f)?;
    Ok(1.0 / (TAU * (l_h * c_total_f).sqrt()))
}

/// Summing amplifier plus RC isolation into the varactors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasConditioner {
    pub dc_set_v: f64,
    pub ac_attenuation: f64,
    pub isolation_r_ohms: f64,
    pub varactor_load_c_f: f64,
}

impl Default for BiasConditioner {
    fn default() -> Self {
        Self {
            dc_set_v: 4.5,
            ac_attenuation: 0.01,
            isolation_r_ohms: 20e3,
            varactor_load_c_f: 100e-12,
        }
    }
}

impl BiasConditioner {
    pub const ADDER_GAIN: f64 = 2.0;

    pub fn validate(&self) -> Result<()> {
        if !(BIAS_RANGE_V.0..=BIAS_RANGE_V.1).contains(&self.dc_set_v) {
            return Err(Error::arg(format!("dc_set_v must lie in [0, 12] V, got {}", self.dc_set_v)));
        }
        if !(0.0..=1.0).contains(&self.ac_attenuation) {
            return Err(Error::arg(format!(
                "ac_attenuation must lie in [0, 1], got {}",
                self.ac_attenuation
            )));
        }
        ensure_positive("isolation_r_ohms", self.isolation_r_ohms)?;
        ensure_positive("varactor_load_c_f", self.varactor_load_c_f)
    }

    /// Quiescent bias with no audio.
    pub fn quiescent_v(&self) -> f64 {
        Self::ADDER_GAIN * self.dc_set_v
    }

    pub fn isolation_cutoff_hz(&self) -> f64 {
        1.0 / (TAU * self.isolation_r_ohms * self.varactor_load_c_f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedBias {
    pub signal: RealSignal,
    /// Samples pulled back into [0, 12] V.
    pub clamped_samples: usize,
}

/// Varactor bias from audio: `2·dc_set + attenuation·(audio − mean)`,
/// low-passed by the isolation RC and clamped to the supply rails.
pub fn condition_bias(audio: &RealSignal, bias: &BiasConditioner) -> Result<ConditionedBias> {
    bias.validate()?;
    let fs = audio.sample_rate_hz();
    let ac = audio.remove_dc();
    let dc = bias.quiescent_v();
    let summed = ac.map(|x| dc + bias.ac_attenuation * x)?;
    let lp = lowpass_from_tau(bias.isolation_r_ohms * bias.varactor_load_c_f, fs)?;
    let mut state = FilterState::settled(&lp, dc);
    let filtered = apply_filter(&summed, &lp, &mut state)?;
    let clamped_samples = filtered
        .samples()
        .iter()
        .filter(|v| !(BIAS_RANGE_V.0..=BIAS_RANGE_V.1).contains(*v))
        .count();
    let signal = filtered.map(|v| v.clamp(BIAS_RANGE_V.0, BIAS_RANGE_V.1))?;
    if clamped_samples > 0 {
        log::warn!("bias clamped to [0, 12] V on {clamped_samples} samples");
    }
    Ok(ConditionedBias {
        signal,
        clamped_samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcoConfig {
    pub tank: TankCircuit,
    pub bias: BiasConditioner,
    /// Multiplier on total tank capacitance standing in for parasitics.
    pub parasitic_scale: f64,
    /// tanh drive for the real-mode soft clip; `None` is a clean sinusoid.
    pub soft_clip_drive: Option<f64>,
    /// Standard deviation of the per-block center-frequency error.
    pub center_jitter_std_hz: f64,
    pub jitter_block_len: usize,
    pub jitter_seed: u64,
}

impl Default for VcoConfig {
    /// Default tank calibrated to the 66–102 MHz range.
    fn default() -> Self {
        Self::uncalibrated()
            .calibrated(TUNING_RANGE_HZ.0, TUNING_RANGE_HZ.1)
            .expect("default tank brackets the tuning range")
    }
}

impl VcoConfig {
    pub fn uncalibrated() -> Self {
        Self {
            tank: TankCircuit::default(),
            bias: BiasConditioner::default(),
            parasitic_scale: 1.0,
            soft_clip_drive: None,
            center_jitter_std_hz: 0.0,
            jitter_block_len: 1024,
            jitter_seed: 0,
        }
    }

    /// Fits the varactor shape parameter so `f(12 V)/f(0 V)` equals
    /// `f_high/f_low`, then the parasitic scale so `f(0 V) = f_low`.
    pub fn calibrated(mut self, f_low_hz: f64, f_high_hz: f64) -> Result<Self> {
        ensure_positive("f_low_hz", f_low_hz)?;
        if !(f_high_hz > f_low_hz) || !f_high_hz.is_finite() {
            return Err(Error::arg("f_high_hz must exceed f_low_hz"));
        }
        let target = f_high_hz / f_low_hz;
        let tank = self.tank.clone();
        let ratio = |p: f64| -> Result<f64> {
            let t = TankCircuit {
                varactor: tank.varactor.with_shape(p),
                ..tank.clone()
            };
            Ok((t.total_capacitance_f(BIAS_RANGE_V.0)? / t.total_capacitance_f(BIAS_RANGE_V.1)?).sqrt())
        };
        let (mut lo, mut hi) = match tank.varactor.law {
            VaractorLaw::Junction { .. } => (1e-3, 20.0),
            VaractorLaw::Exponential { .. } => (0.05, 1e4),
        };
        let (r_lo, r_hi) = (ratio(lo)?, ratio(hi)?);
        if !((r_lo - target) * (r_hi - target) < 0.0) {
            return Err(Error::Calibration(format!(
                "tuning ratio {target:.4} outside the reachable span {:.4}..{:.4}",
                r_lo.min(r_hi),
                r_lo.max(r_hi)
            )));
        }
        let increasing = r_hi > r_lo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (ratio(mid)? < target) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.tank.varactor = tank.varactor.with_shape(0.5 * (lo + hi));
        self.parasitic_scale = 1.0;
        let f0 = vco_frequency(&self, BIAS_RANGE_V.0)?;
        self.parasitic_scale = (f0 / f_low_hz).powi(2);
        Ok(self)
    }

    /// Output frequency at the quiescent bias.
    pub fn center_frequency_hz(&self) -> Result<f64> {
        vco_frequency(self, self.bias.quiescent_v())
    }

    /// Sets the soft-clip drive so the 3rd harmonic sits at `target_dbc`.
    pub fn with_soft_clip_for(mut self, target_dbc: f64) -> Result<Self> {
        self.soft_clip_drive = Some(soft_clip_drive_for(target_dbc)?);
        Ok(self)
    }
}

/// `1 / (2π·√(L·C_total(V)·parasitic_scale))`
pub fn vco_frequency(cfg: &VcoConfig, v_bias: f64) -> Result<f64> {
    if !(BIAS_RANGE_V.0..=BIAS_RANGE_V.1).contains(&v_bias) {
        return Err(Error::arg(format!("bias {v_bias} V outside [0, 12] V")));
    }
    ensure_positive("parasitic_scale", cfg.parasitic_scale)?;
    let c = cfg.tank.total_capacitance_f(v_bias)? * cfg.parasitic_scale;
    tank_resonant_frequency(cfg.tank.inductance_h, c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputMode {
    /// Complex samples relative to `center_hz`.
    Baseband { center_hz: f64 },
    /// Real passband samples.
    Real,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VcoOutput {
    Baseband(ComplexSignal),
    Real(RealSignal),
}

impl VcoOutput {
    pub fn into_baseband(self) -> Option<ComplexSignal> {
        match self {
            VcoOutput::Baseband(s) => Some(s),
            VcoOutput::Real(_) => None,
        }
    }

    pub fn into_real(self) -> Option<RealSignal> {
        match self {
            VcoOutput::Real(s) => Some(s),
            VcoOutput::Baseband(_) => None,
        }
    }
}

/// Runs the phase accumulator at the bias signal's sample rate.
///
/// Baseband output has unit modulus. Real output is `cos φ`, passed through
/// `tanh(d·x)/tanh(d)` when a soft-clip drive is configured.
pub fn vco_synthesize(cfg: &VcoConfig, bias_signal: &RealSignal, mode: OutputMode) -> Result<VcoOutput> {
    let fs = bias_signal.sample_rate_hz();
    let mut freqs = bias_signal
        .samples()
        .iter()
        .map(|&v| vco_frequency(cfg, v))
        .collect::<Result<Vec<f64>>>()?;
    apply_jitter(cfg, &mut freqs)?;

    let mut acc = PhaseAccumulator::default();
    match mode {
        OutputMode::Baseband { center_hz } => {
            let samples = freqs
                .iter()
                .map(|&f| {
                    let offset = f - center_hz;
                    if offset.abs() >= fs / 2.0 {
                        return Err(Error::nyquist("VCO offset from IQ center", offset, fs));
                    }
                    Ok(Complex64::from_polar(1.0, acc.advance(TAU * offset / fs)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VcoOutput::Baseband(ComplexSignal::new(fs, center_hz, samples)?))
        }
        OutputMode::Real => {
            let f_max = freqs.iter().copied().fold(0.0, f64::max);
            if fs < 2.5 * f_max {
                return Err(Error::FrequencyOutOfRange {
                    what: "real-mode VCO output needs fs >= 2.5x frequency".into(),
                    freq_hz: f_max,
                    nyquist_hz: fs / 2.0,
                });
            }
            let shape = SoftClip::new(cfg.soft_clip_drive)?;
            let samples = freqs
                .iter()
                .map(|&f| shape.apply(acc.advance(TAU * f / fs).cos()))
                .collect();
            Ok(VcoOutput::Real(RealSignal::new(fs, samples)?))
        }
    }
}

fn apply_jitter(cfg: &VcoConfig, freqs: &mut [f64]) -> Result<()> {
    if cfg.center_jitter_std_hz == 0.0 {
        return Ok(());
    }
    if !(cfg.center_jitter_std_hz > 0.0) || !cfg.center_jitter_std_hz.is_finite() {
        return Err(Error::arg("center_jitter_std_hz must be finite and >= 0"));
    }
    if cfg.jitter_block_len == 0 {
        return Err(Error::arg("jitter_block_len must be positive"));
    }
    let normal = Normal::new(0.0, cfg.center_jitter_std_hz).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.jitter_seed);
    for block in freqs.chunks_mut(cfg.jitter_block_len) {
        let offset = normal.sample(&mut rng);
        block.iter_mut().for_each(|f| *f += offset);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct SoftClip {
    drive: f64,
    norm: f64,
}

impl SoftClip {
    fn new(drive: Option<f64>) -> Result<Self> {
        match drive {
            None => Ok(Self { drive: 0.0, norm: 1.0 }),
            Some(d) => {
                ensure_positive("soft_clip_drive", d)?;
                Ok(Self {
                    drive: d,
                    norm: 1.0 / d.tanh(),
                })
            }
        }
    }

    fn apply(&self, x: f64) -> f64 {
        if self.drive == 0.0 {
            x
        } else {
            self.norm * (self.drive * x).tanh()
        }
    }
}

/// Level of harmonic `order` relative to the fundamental for
/// `tanh(d·cos θ)`, from a direct Fourier sum over one period.
pub fn soft_clip_harmonic_dbc(drive: f64, order: usize) -> Result<f64> {
    ensure_positive("drive", drive)?;
    const N: usize = 4096;
    let coeff = |k: usize| {
        (0..N)
            .map(|i| {
                let th = TAU * i as f64 / N as f64;
                (drive * th.cos()).tanh() * (k as f64 * th).cos()
            })
            .sum::<f64>()
            .abs()
    };
    Ok(20.0 * (coeff(order).max(1e-300) / coeff(1)).log10())
}

/// Drive that puts the 3rd harmonic of the soft clip at `target_dbc`.
///
/// The clip is odd-symmetric, so the 3rd is always the strongest spur.
/// Reachable targets lie between about −100 dBc and the square-wave limit
/// of −9.54 dBc.
pub fn soft_clip_drive_for(target_dbc: f64) -> Result<f64> {
    let (mut lo, mut hi) = (1e-3, 100.0);
    let (l_lo, l_hi) = (soft_clip_harmonic_dbc(lo, 3)?, soft_clip_harmonic_dbc(hi, 3)?);
    if !(l_lo < target_dbc && target_dbc < l_hi) {
        return Err(Error::Calibration(format!(
            "3rd-harmonic target {target_dbc} dBc outside {l_lo:.1}..{l_hi:.1} dBc"
        )));
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if soft_clip_harmonic_dbc(mid, 3)? < target_dbc {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    /// `(bias_v, freq_hz)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl TuningCurve {
    pub const CSV_HEADER: &'static str = "bias_v,freq_hz";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (v, f) in &self.points {
            s.push_str(&format!("{v},{f}\n"));
        }
        s
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 > w[0].1)
    }

    pub fn second_differences(&self) -> Vec<f64> {
        self.points
            .windows(3)
            .map(|w| w[2].1 - 2.0 * w[1].1 + w[0].1)
            .collect()
    }
}

/// `steps` evenly spaced bias points from `v_min` to `v_max` inclusive.
pub fn tuning_curve(cfg: &VcoConfig, v_min: f64, v_max: f64, steps: usize) -> Result<TuningCurve> {
    if !(BIAS_RANGE_V.0 <= v_min && v_min < v_max && v_max <= BIAS_RANGE_V.1) {
        return Err(Error::arg(format!(
            "tuning range {v_min}..{v_max} V must be increasing within [0, 12] V"
        )));
    }
    if steps < 2 {
        return Err(Error::arg("tuning curve needs at least 2 steps"));
    }
    let points = (0..steps)
        .map(|i| {
            let v = if i == steps - 1 {
                v_max
            } else {
                v_min + (v_max - v_min) * i as f64 / (steps - 1) as f64
            };
            Ok((v, vco_frequency(cfg, v)?))
        })
        .collect::<Result<_>>()?;
    Ok(TuningCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterFollower {
    pub gain: f64,
    pub input_resistance_ohms: f64,
    pub output_resistance_ohms: f64,
}

/// Small-signal gain, input and output resistance of an emitter follower.
pub fn emitter_follower_small_signal(
    r_source_ohms: f64,
    r_pi_ohms: f64,
    beta: f64,
    r_emitter_ohms: f64,
) -> Result<EmitterFollower> {
    ensure_positive("r_source_ohms", r_source_ohms)?;
    ensure_positive("r_pi_ohms", r_pi_ohms)?;
    ensure_positive("beta", beta)?;
    ensure_positive("r_emitter_ohms", r_emitter_ohms)?;
    let r = (r_source_ohms + r_pi_ohms) / (beta + 1.0);
    Ok(EmitterFollower {
        gain: 1.0 / (1.0 + r / r_emitter_ohms),
        input_resistance_ohms: r_pi_ohms + (beta + 1.0) * r_emitter_ohms,
        output_resistance_ohms: r_emitter_ohms * r / (r_emitter_ohms + r),
    })
}

/// Relative deviation from a linear tuning law for a bias step `delta_v`
/// around `v0`.
pub fn linearity_error(cfg: &VcoConfig, v0: f64, delta_v: f64) -> Result<f64> {
    let h = 1e-4;
    let slope = (vco_frequency(cfg, v0 + h)? - vco_frequency(cfg, v0 - h)?) / (2.0 * h);
    let df = vco_frequency(cfg, v0 + delta_v)? - vco_frequency(cfg, v0)?;
    Ok(((df - delta_v * slope) / (delta_v * slope)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{compute_spectrum, measure_harmonics, Window};
    use crate::demodulation::fm_demodulate;
    use crate::signal::{generate_tone, ToneSpec};
    use proptest::prelude::*;

    #[test]
    fn tank_anchor_values() {
        let f = tank_resonant_frequency(50e-9, 13.5e-12).unwrap();
        assert!((f - 193.7e6).abs() / 193.7e6 < 1e-3, "{f}");
        let g = tank_resonant_frequency(200e-9, 13.5e-12).unwrap();
        assert!((g - 96.8e6).abs() / 96.8e6 < 1e-3, "{g}");
        let q = tank_resonant_frequency(50e-9, 54e-12).unwrap();
        assert!((q - f / 2.0).abs() < 1e-3);
        assert!(tank_resonant_frequency(0.0, 1e-12).is_err());
        assert!(tank_resonant_frequency(1e-9, -1.0).is_err());
    }

    #[test]
    fn default_fixed_network_is_7p5_pf() {
        let t = TankCircuit::default();
        assert!((t.fixed_caps.total_f().unwrap() - 7.5e-12).abs() < 1e-24);
        // 12 pF devices at the floor give the 13.5 pF total.
        let floor = TankCircuit {
            varactor: VaractorModel {
                c_zero_f: 12e-12,
                ..VaractorModel::default()
            },
            ..t
        };
        assert!((floor.total_capacitance_f(12.0).unwrap() - 13.5e-12).abs() < 1e-24);
        assert!(CapNetwork::Parallel(vec![]).total_f().is_err());
    }

    #[test]
    fn varactor_definition_and_floor() {
        let m = VaractorModel::junction(40e-12, 0.7, 0.5);
        assert_eq!(varactor_capacitance(&m, 0.0).unwrap(), 40e-12);
        assert_eq!(varactor_capacitance(&m, 1e6).unwrap(), 12e-12);
        assert_eq!(m.series_pair(3.0).unwrap(), varactor_capacitance(&m, 3.0).unwrap() / 2.0);
        assert!(varactor_capacitance(&m, -0.1).is_err());
        assert!(varactor_capacitance(&m, f64::NAN).is_err());
    }

    #[test]
    fn calibration_hits_endpoints() {
        let cfg = VcoConfig::default();
        let f0 = vco_frequency(&cfg, 0.0).unwrap();
        let f12 = vco_frequency(&cfg, 12.0).unwrap();
        assert!((f0 - 66e6).abs() < 1.0, "{f0}");
        assert!((f12 - 102e6).abs() < 1.0, "{f12}");
        assert!(vco_frequency(&cfg, 12.5).is_err());
        assert!(vco_frequency(&cfg, -0.5).is_err());
    }

    #[test]
    fn tuning_curve_shape() {
        let cfg = VcoConfig::default();
        let f = |v| vco_frequency(&cfg, v).unwrap();
        assert!(f(8.0) > f(4.0) && f(4.0) > f(1.0));
        assert!(f(8.0) - f(6.0) > f(3.0) - f(1.0));
        let c = tuning_curve(&cfg, 2.0, 10.0, 33).unwrap();
        assert!(c.is_strictly_increasing());
        assert!(c.second_differences().iter().all(|&d| d > 0.0));
        let two = tuning_curve(&cfg, 0.0, 12.0, 2).unwrap();
        assert_eq!(two.points.len(), 2);
        assert_eq!(two.points[0].0, 0.0);
        assert_eq!(two.points[1].0, 12.0);
        assert!(two.to_csv().starts_with("bias_v,freq_hz\n0,"));
        assert!(tuning_curve(&cfg, 5.0, 5.0, 3).is_err());
        assert!(tuning_curve(&cfg, 0.0, 13.0, 3).is_err());
        assert!(tuning_curve(&cfg, 0.0, 12.0, 1).is_err());
    }

    #[test]
    fn junction_law_also_calibrates() {
        let mut cfg = VcoConfig::uncalibrated();
        cfg.tank.varactor = VaractorModel::junction(120e-12, 0.7, 0.5);
        let cfg = cfg.calibrated(66e6, 102e6).unwrap();
        assert!((vco_frequency(&cfg, 0.0).unwrap() - 66e6).abs() < 1.0);
        assert!((vco_frequency(&cfg, 12.0).unwrap() - 102e6).abs() < 1.0);
        assert!(tuning_curve(&cfg, 0.0, 12.0, 25).unwrap().is_strictly_increasing());
    }

    #[test]
    fn unreachable_ratio_is_calibration_error() {
        let r = VcoConfig::uncalibrated().calibrated(66e6, 660e6);
        assert!(matches!(r, Err(Error::Calibration(_))));
    }

    #[test]
    fn bias_dc_gain_is_two() {
        let bias = BiasConditioner {
            dc_set_v: 5.0,
            ..BiasConditioner::default()
        };
        let silence = RealSignal::constant(1e6, 0.0, 1000).unwrap();
        let out = condition_bias(&silence, &bias).unwrap();
        assert!(out.signal.samples().iter().all(|&v| (v - 10.0).abs() < 1e-12));
        assert_eq!(out.clamped_samples, 0);
    }

    #[test]
    fn bias_ignores_audio_dc_and_clamps() {
        let bias = BiasConditioner {
            dc_set_v: 5.5,
            ac_attenuation: 1.0,
            ..BiasConditioner::default()
        };
        let tone = generate_tone(ToneSpec::new(1000.0, 2.0).with_offset(3.0), 0.01, 1e6).unwrap();
        let out = condition_bias(&tone, &bias).unwrap();
        assert!(out.clamped_samples > 0);
        assert!(out.signal.samples().iter().all(|&v| (0.0..=12.0).contains(&v)));
        assert!(out.signal.samples().iter().any(|&v| v < 11.0 - 1.5));
    }

    #[test]
    fn isolation_pole() {
        let bias = BiasConditioner::default();
        assert!((bias.isolation_cutoff_hz() - 79.6e3).abs() / 79.6e3 < 0.02);
        assert!(BiasConditioner { ac_attenuation: 1.5, ..bias }.validate().is_err());
        assert!(BiasConditioner { dc_set_v: -1.0, ..bias }.validate().is_err());
    }

    #[test]
    fn emitter_follower_worked_example() {
        let ef = emitter_follower_small_signal(50.0, 2.5e3, 100.0, 1e3).unwrap();
        assert!((ef.gain - 0.9754).abs() < 5e-5, "{}", ef.gain);
        assert!((ef.input_resistance_ohms - 103_500.0).abs() < 1e-9);
        assert!((ef.output_resistance_ohms - 24.63).abs() < 5e-3, "{}", ef.output_resistance_ohms);
        let big_re = emitter_follower_small_signal(50.0, 2.5e3, 100.0, 1e9).unwrap();
        assert!((big_re.gain - 1.0).abs() < 1e-6);
        let big_beta = emitter_follower_small_signal(50.0, 2.5e3, 1e12, 1e3).unwrap();
        assert!(big_beta.output_resistance_ohms < 1e-6);
        assert!(emitter_follower_small_signal(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_bias_gives_constant_tone() {
        let cfg = VcoConfig::default();
        let f = vco_frequency(&cfg, 6.0).unwrap();
        let bias = RealSignal::constant(1e6, 6.0, 2000).unwrap();
        let iq = vco_synthesize(&cfg, &bias, OutputMode::Baseband { center_hz: f - 1e5 })
            .unwrap()
            .into_baseband()
            .unwrap();
        let d = fm_demodulate(&iq).unwrap();
        assert!(d.samples().iter().all(|v| (v - 1e5).abs() < 1e-3));
    }

    #[test]
    fn baseband_offset_beyond_nyquist_rejected() {
        let cfg = VcoConfig::default();
        let bias = RealSignal::constant(1e6, 6.0, 10).unwrap();
        let r = vco_synthesize(&cfg, &bias, OutputMode::Baseband { center_hz: 0.0 });
        assert!(matches!(r, Err(Error::FrequencyOutOfRange { .. })));
        let r = vco_synthesize(&cfg, &bias, OutputMode::Real);
        assert!(matches!(r, Err(Error::FrequencyOutOfRange { .. })));
    }

    #[test]
    fn conditioned_tone_round_trip_is_linear() {
        let cfg = VcoConfig::default();
        let fs = 1e6;
        let audio = generate_tone(ToneSpec::new(1000.0, 1.0), 0.2, fs).unwrap();
        let bias = condition_bias(&audio, &cfg.bias).unwrap();
        let center = cfg.center_frequency_hz().unwrap();
        let iq = vco_synthesize(&cfg, &bias.signal, OutputMode::Baseband { center_hz: center })
            .unwrap()
            .into_baseband()
            .unwrap();
        let d = fm_demodulate(&iq).unwrap();
        let s = compute_spectrum(&d.slice(1000, d.len()).unwrap(), 65536, Window::Hann).unwrap();
        let rep = measure_harmonics(&s, 1000.0, 5).unwrap();
        assert!((rep.fundamental_hz - 1000.0).abs() < s.bin_width_hz);
        assert!(rep.thd_percent < 2.0, "{}", rep.thd_percent);
    }

    #[test]
    fn soft_clip_calibrates_to_minus_15() {
        let d = soft_clip_drive_for(-15.0).unwrap();
        assert!((soft_clip_harmonic_dbc(d, 3).unwrap() + 15.0).abs() < 1e-6);
        assert!(soft_clip_harmonic_dbc(d, 2).unwrap() < -200.0);
        assert!(soft_clip_drive_for(-5.0).is_err());
    }

    #[test]
    fn real_mode_soft_clip_spectrum() {
        let cfg = VcoConfig::default().with_soft_clip_for(-15.0).unwrap();
        let f = vco_frequency(&cfg, 6.0).unwrap();
        let bias = RealSignal::constant(1e9, 6.0, 32768).unwrap();
        let out = vco_synthesize(&cfg, &bias, OutputMode::Real).unwrap().into_real().unwrap();
        assert!(out.peak() <= 1.0 + 1e-12);
        let s = compute_spectrum(&out, 32768, Window::BlackmanHarris).unwrap();
        let rep = measure_harmonics(&s, f, 4).unwrap();
        let strongest = rep.strongest().unwrap();
        assert_eq!(strongest.order, 3);
        assert!((strongest.level_dbc + 15.0).abs() < 1.0, "{}", strongest.level_dbc);
    }

    #[test]
    fn jitter_is_seeded() {
        let cfg = VcoConfig {
            center_jitter_std_hz: 5e3,
            jitter_seed: 9,
            ..VcoConfig::default()
        };
        let c = cfg.center_frequency_hz().unwrap();
        let bias = RealSignal::constant(1e6, cfg.bias.quiescent_v(), 8192).unwrap();
        let mode = OutputMode::Baseband { center_hz: c };
        let a = vco_synthesize(&cfg, &bias, mode).unwrap();
        let b = vco_synthesize(&cfg, &bias, mode).unwrap();
        assert_eq!(a, b);
        let d = fm_demodulate(&a.into_baseband().unwrap()).unwrap();
        assert!(d.samples().iter().any(|v| v.abs() > 10.0));
        assert!(d.samples()[..1024].iter().all(|v| (v - d.samples()[1]).abs() < 1e-6));
    }

    proptest! {
        #[test]
        fn capacitance_strictly_decreasing(v in 0.0f64..11.9, dv in 0.01f64..0.1) {
            let m = VcoConfig::default().tank.varactor;
            prop_assert!(varactor_capacitance(&m, v + dv).unwrap() < varactor_capacitance(&m, v).unwrap());
        }

        #[test]
        fn frequency_strictly_increasing(v in 0.0f64..11.9, dv in 0.01f64..0.1, scale in 0.5f64..3.0) {
            let cfg = VcoConfig { parasitic_scale: scale, ..VcoConfig::default() };
            prop_assert!(vco_frequency(&cfg, v + dv).unwrap() > vco_frequency(&cfg, v).unwrap());
        }

        #[test]
        fn small_deviation_is_linear(v0 in 2.0f64..10.0, delta in -0.05f64..0.05) {
            prop_assume!(delta.abs() > 1e-3);
            let cfg = VcoConfig::default();
            prop_assert!(linearity_error(&cfg, v0, delta).unwrap() < 0.01);
        }

        #[test]
        fn baseband_has_unit_modulus(
            bias in proptest::collection::vec(8.95f64..9.05, 1..400),
        ) {
            let cfg = VcoConfig::default();
            let c = cfg.center_frequency_hz().unwrap();
            let sig = RealSignal::new(1e6, bias).unwrap();
            let iq = vco_synthesize(&cfg, &sig, OutputMode::Baseband { center_hz: c }).unwrap().into_baseband().unwrap();
            prop_assert!(iq.samples().iter().all(|z| (z.norm() - 1.0).abs() < 1e-9));
        }
    }
}
