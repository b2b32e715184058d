//! End-to-end conversion chain and its flat `key = value` configuration.
//!
//! Each stage runs at its own sample rate. Rate changes happen only at the
//! points listed in [`run_convert`], using the rates from the config.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::analysis::{audio_fidelity, compute_spectrum, measure_harmonics, Fidelity, Window};
use crate::demodulation::{demodulate_am, fm_demodulate, OpAmpModel};
use crate::error::{Error, Result};
use crate::filters::{design_deemphasis, design_preemphasis, design_single_pole_lowpass, rc_cutoff_hz, EmphasisParams};
use crate::modulation::{am_modulate, AmParams};
use crate::signal::{generate_tone, ComplexSignal, RealSignal, ToneSpec};
use crate::vco::{
    condition_bias, vco_frequency, vco_synthesize, BiasConditioner, CapNetwork, OutputMode, TankCircuit,
    VaractorLaw, VaractorModel, VcoConfig, VcoOutput, BIAS_RANGE_V, TUNING_RANGE_HZ,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    Exponential,
    Junction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Baseband,
    Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub am: AmParams,
    pub am_sample_rate_hz: f64,
    pub message_hz: f64,
    pub message_amplitude: f64,
    pub duration_s: f64,

    pub opamp: OpAmpModel,
    pub filter_r_ohms: f64,
    pub filter_c_f: f64,

    pub emphasis: EmphasisParams,
    pub audio_sample_rate_hz: f64,

    pub bias: BiasConditioner,

    pub inductance_h: f64,
    pub fixed_caps: CapNetwork,
    pub law: LawKind,
    pub c_zero_f: f64,
    pub c_min_f: f64,
    pub v_scale_v: f64,
    pub phi_v: f64,
    pub gamma: f64,
    pub calibrate: bool,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub parasitic_scale: f64,
    pub soft_clip_dbc: Option<f64>,
    pub jitter_std_hz: f64,
    pub jitter_block: usize,
    pub jitter_seed: u64,

    pub iq_sample_rate_hz: f64,
    /// `None` centers the IQ stream on the quiescent VCO frequency.
    pub iq_center_hz: Option<f64>,
    pub output: OutputKind,
    pub output_scale: f64,

    /// Start-up transient skipped before round-trip measurements.
    pub settle_s: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        let varactor = VaractorModel::default();
        let VaractorLaw::Exponential { v_scale_v } = varactor.law else {
            unreachable!()
        };
        Self {
            am: AmParams::new(1e6, 2.5, 0.8),
            am_sample_rate_hz: 10e6,
            message_hz: 500.0,
            message_amplitude: 1.0,
            duration_s: 0.5,
            opamp: OpAmpModel::default(),
            filter_r_ohms: 10e3,
            filter_c_f: 22e-9,
            emphasis: EmphasisParams::default(),
            audio_sample_rate_hz: 48_000.0,
            bias: BiasConditioner::default(),
            inductance_h: 50e-9,
            fixed_caps: CapNetwork::Series(vec![15e-12, 15e-12]),
            law: LawKind::Exponential,
            c_zero_f: varactor.c_zero_f,
            c_min_f: varactor.c_min_f,
            v_scale_v,
            phi_v: 0.7,
            gamma: 0.5,
            calibrate: true,
            f_low_hz: TUNING_RANGE_HZ.0,
            f_high_hz: TUNING_RANGE_HZ.1,
            parasitic_scale: 1.0,
            soft_clip_dbc: None,
            jitter_std_hz: 0.0,
            jitter_block: 1024,
            jitter_seed: 0,
            iq_sample_rate_hz: 1e6,
            iq_center_hz: None,
            output: OutputKind::Baseband,
            output_scale: 1.0,
            settle_s: 0.02,
        }
    }
}

fn config_err(stage: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        stage: stage.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(stage_of(key), format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(config_err(stage_of(key), format!("`{key}`: expected true/false, got `{value}`"))),
    }
}

fn stage_of(key: &str) -> &str {
    key.split('.').next().unwrap_or(key)
}

fn fmt_caps(c: &CapNetwork) -> String {
    let (kind, v) = match c {
        CapNetwork::Series(v) => ("series", v),
        CapNetwork::Parallel(v) => ("parallel", v),
    };
    let list: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
    format!("{kind}:{}", list.join(","))
}

fn parse_caps(key: &str, value: &str) -> Result<CapNetwork> {
    let (kind, list) = value
        .split_once(':')
        .ok_or_else(|| config_err("vco", format!("`{key}`: expected series:<c>,... or parallel:<c>,...")))?;
    let caps = list
        .split(',')
        .map(|c| parse_num::<f64>(key, c.trim()))
        .collect::<Result<Vec<_>>>()?;
    match kind.trim() {
        "series" => Ok(CapNetwork::Series(caps)),
        "parallel" => Ok(CapNetwork::Parallel(caps)),
        other => Err(config_err("vco", format!("`{key}`: unknown network `{other}`"))),
    }
}

impl ChainConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err("config", format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config_err("config", format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| parse_num::<f64>(key, v);
        match key {
            "am.carrier_hz" => self.am.carrier_hz = f(value)?,
            "am.carrier_amplitude_v" => self.am.carrier_amplitude_v = f(value)?,
            "am.depth" => self.am.modulation_depth = f(value)?,
            "am.sample_rate_hz" => self.am_sample_rate_hz = f(value)?,
            "message.freq_hz" => self.message_hz = f(value)?,
            "message.amplitude" => self.message_amplitude = f(value)?,
            "message.duration_s" => self.duration_s = f(value)?,
            "demod.opamp" => self.opamp.enabled = parse_bool(key, value)?,
            "demod.gbw_hz" => self.opamp.gain_bandwidth_hz = f(value)?,
            "demod.slew_rate_v_per_s" => self.opamp.slew_rate_v_per_s = f(value)?,
            "demod.slew_limited" => self.opamp.slew_limited = parse_bool(key, value)?,
            "demod.filter_r_ohms" => self.filter_r_ohms = f(value)?,
            "demod.filter_c_f" => self.filter_c_f = f(value)?,
            "emphasis.tau1_s" => self.emphasis.tau1_s = f(value)?,
            "emphasis.tau2_s" => self.emphasis.tau2_s = f(value)?,
            "emphasis.gain" => self.emphasis.amp_gain = f(value)?,
            "audio.sample_rate_hz" => self.audio_sample_rate_hz = f(value)?,
            "bias.dc_set_v" => self.bias.dc_set_v = f(value)?,
            "bias.ac_attenuation" => self.bias.ac_attenuation = f(value)?,
            "bias.isolation_r_ohms" => self.bias.isolation_r_ohms = f(value)?,
            "bias.load_c_f" => self.bias.varactor_load_c_f = f(value)?,
            "vco.inductance_h" => self.inductance_h = f(value)?,
            "vco.fixed_caps" => self.fixed_caps = parse_caps(key, value)?,
            "vco.law" => {
                self.law = match value {
                    "exponential" => LawKind::Exponential,
                    "junction" => LawKind::Junction,
                    _ => return Err(config_err("vco", format!("`{key}`: unknown law `{value}`"))),
                }
            }
            "vco.c_zero_f" => self.c_zero_f = f(value)?,
            "vco.c_min_f" => self.c_min_f = f(value)?,
            "vco.v_scale_v" => self.v_scale_v = f(value)?,
            "vco.phi_v" => self.phi_v = f(value)?,
            "vco.gamma" => self.gamma = f(value)?,
            "vco.calibrate" => self.calibrate = parse_bool(key, value)?,
            "vco.f_low_hz" => self.f_low_hz = f(value)?,
            "vco.f_high_hz" => self.f_high_hz = f(value)?,
            "vco.parasitic_scale" => self.parasitic_scale = f(value)?,
            "vco.soft_clip_dbc" => {
                self.soft_clip_dbc = if value == "none" { None } else { Some(f(value)?) }
            }
            "vco.jitter_std_hz" => self.jitter_std_hz = f(value)?,
            "vco.jitter_block" => self.jitter_block = parse_num(key, value)?,
            "vco.jitter_seed" => self.jitter_seed = parse_num(key, value)?,
            "iq.sample_rate_hz" => self.iq_sample_rate_hz = f(value)?,
            "iq.center_hz" => {
                self.iq_center_hz = if value == "auto" { None } else { Some(f(value)?) }
            }
            "output.mode" => {
                self.output = match value {
                    "baseband" => OutputKind::Baseband,
                    "real" => OutputKind::Real,
                    _ => return Err(config_err("output", format!("`{key}`: expected baseband or real"))),
                }
            }
            "output.scale" => self.output_scale = f(value)?,
            "analysis.settle_s" => self.settle_s = f(value)?,
            _ => return Err(config_err(stage_of(key), format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`ChainConfig::parse`] reads back.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("am.carrier_hz", self.am.carrier_hz.to_string());
        put("am.carrier_amplitude_v", self.am.carrier_amplitude_v.to_string());
        put("am.depth", self.am.modulation_depth.to_string());
        put("am.sample_rate_hz", self.am_sample_rate_hz.to_string());
        put("message.freq_hz", self.message_hz.to_string());
        put("message.amplitude", self.message_amplitude.to_string());
        put("message.duration_s", self.duration_s.to_string());
        put("demod.opamp", self.opamp.enabled.to_string());
        put("demod.gbw_hz", self.opamp.gain_bandwidth_hz.to_string());
        put("demod.slew_rate_v_per_s", self.opamp.slew_rate_v_per_s.to_string());
        put("demod.slew_limited", self.opamp.slew_limited.to_string());
        put("demod.filter_r_ohms", self.filter_r_ohms.to_string());
        put("demod.filter_c_f", self.filter_c_f.to_string());
        put("emphasis.tau1_s", self.emphasis.tau1_s.to_string());
        put("emphasis.tau2_s", self.emphasis.tau2_s.to_string());
        put("emphasis.gain", self.emphasis.amp_gain.to_string());
        put("audio.sample_rate_hz", self.audio_sample_rate_hz.to_string());
        put("bias.dc_set_v", self.bias.dc_set_v.to_string());
        put("bias.ac_attenuation", self.bias.ac_attenuation.to_string());
        put("bias.isolation_r_ohms", self.bias.isolation_r_ohms.to_string());
        put("bias.load_c_f", self.bias.varactor_load_c_f.to_string());
        put("vco.inductance_h", self.inductance_h.to_string());
        put("vco.fixed_caps", fmt_caps(&self.fixed_caps));
        put(
            "vco.law",
            match self.law {
                LawKind::Exponential => "exponential",
                LawKind::Junction => "junction",
            }
            .to_string(),
        );
        put("vco.c_zero_f", self.c_zero_f.to_string());
        put("vco.c_min_f", self.c_min_f.to_string());
        put("vco.v_scale_v", self.v_scale_v.to_string());
        put("vco.phi_v", self.phi_v.to_string());
        put("vco.gamma", self.gamma.to_string());
        put("vco.calibrate", self.calibrate.to_string());
        put("vco.f_low_hz", self.f_low_hz.to_string());
        put("vco.f_high_hz", self.f_high_hz.to_string());
        put("vco.parasitic_scale", self.parasitic_scale.to_string());
        put(
            "vco.soft_clip_dbc",
            self.soft_clip_dbc.map_or("none".to_string(), |d| d.to_string()),
        );
        put("vco.jitter_std_hz", self.jitter_std_hz.to_string());
        put("vco.jitter_block", self.jitter_block.to_string());
        put("vco.jitter_seed", self.jitter_seed.to_string());
        put("iq.sample_rate_hz", self.iq_sample_rate_hz.to_string());
        put("iq.center_hz", self.iq_center_hz.map_or("auto".to_string(), |c| c.to_string()));
        put(
            "output.mode",
            match self.output {
                OutputKind::Baseband => "baseband",
                OutputKind::Real => "real",
            }
            .to_string(),
        );
        put("output.scale", self.output_scale.to_string());
        put("analysis.settle_s", self.settle_s.to_string());
        s
    }

    /// Builds the oscillator model, running the calibration when enabled.
    pub fn vco_config(&self) -> Result<VcoConfig> {
        let law = match self.law {
            LawKind::Exponential => VaractorLaw::Exponential {
                v_scale_v: self.v_scale_v,
            },
            LawKind::Junction => VaractorLaw::Junction {
                phi_v: self.phi_v,
                gamma: self.gamma,
            },
        };
        let mut vco = VcoConfig {
            tank: TankCircuit {
                inductance_h: self.inductance_h,
                fixed_caps: self.fixed_caps.clone(),
                varactor: VaractorModel {
                    c_zero_f: self.c_zero_f,
                    c_min_f: self.c_min_f,
                    law,
                },
            },
            bias: self.bias,
            parasitic_scale: self.parasitic_scale,
            soft_clip_drive: None,
            center_jitter_std_hz: self.jitter_std_hz,
            jitter_block_len: self.jitter_block,
            jitter_seed: self.jitter_seed,
        };
        if self.calibrate {
            vco = vco.calibrated(self.f_low_hz, self.f_high_hz)?;
        }
        if let Some(dbc) = self.soft_clip_dbc {
            vco = vco.with_soft_clip_for(dbc)?;
        }
        Ok(vco)
    }

    /// IQ center frequency: configured, or the quiescent VCO frequency.
    pub fn iq_center(&self, vco: &VcoConfig) -> Result<f64> {
        match self.iq_center_hz {
            Some(c) => Ok(c),
            None => vco.center_frequency_hz(),
        }
    }

    /// Checks every stage against its own sample rate. Errors name the stage.
    pub fn validate(&self) -> Result<()> {
        let within = |stage: &str, r: Result<()>| r.map_err(|e| config_err(stage, e.to_string()));
        for (stage, name, fs) in [
            ("am", "am.sample_rate_hz", self.am_sample_rate_hz),
            ("audio", "audio.sample_rate_hz", self.audio_sample_rate_hz),
            ("iq", "iq.sample_rate_hz", self.iq_sample_rate_hz),
        ] {
            if !(fs.is_finite() && fs > 0.0) {
                return Err(config_err(stage, format!("{name} must be positive")));
            }
        }
        within("am", self.am.validate(self.am_sample_rate_hz))?;
        if !(self.message_hz > 0.0 && self.message_hz < self.audio_sample_rate_hz / 2.0) {
            return Err(config_err(
                "audio",
                format!(
                    "message {} Hz must lie below the audio Nyquist limit {} Hz",
                    self.message_hz,
                    self.audio_sample_rate_hz / 2.0
                ),
            ));
        }
        if !(self.message_amplitude >= 0.0 && self.message_amplitude <= 1.0) {
            return Err(config_err("message", "message.amplitude must lie in [0, 1]"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(config_err("message", "message.duration_s must be positive"));
        }
        if self.audio_sample_rate_hz >= self.am_sample_rate_hz {
            return Err(config_err("audio", "audio rate must be below the AM-stage rate"));
        }
        within(
            "demod",
            design_single_pole_lowpass(self.filter_r_ohms, self.filter_c_f, self.am_sample_rate_hz).map(|_| ()),
        )?;
        let cutoff = rc_cutoff_hz(self.filter_r_ohms, self.filter_c_f);
        if cutoff >= self.audio_sample_rate_hz / 2.0 {
            return Err(config_err(
                "demod",
                format!("output filter cutoff {cutoff} Hz is not below the audio Nyquist limit"),
            ));
        }
        within("emphasis", design_preemphasis(self.emphasis, self.audio_sample_rate_hz).map(|_| ()))?;
        within("bias", self.bias.validate())?;
        let iso = self.bias.isolation_cutoff_hz();
        if iso >= self.iq_sample_rate_hz / 2.0 {
            return Err(config_err(
                "bias",
                format!("isolation pole {iso} Hz is not below the IQ Nyquist limit"),
            ));
        }
        let vco = self.vco_config().map_err(|e| config_err("vco", e.to_string()))?;
        match self.output {
            OutputKind::Baseband => {
                let center = self.iq_center(&vco).map_err(|e| config_err("vco", e.to_string()))?;
                let f = vco
                    .center_frequency_hz()
                    .map_err(|e| config_err("vco", e.to_string()))?;
                if (f - center).abs() >= self.iq_sample_rate_hz / 2.0 {
                    return Err(config_err(
                        "iq",
                        format!(
                            "quiescent VCO frequency {f} Hz is {} Hz from the IQ center, beyond Nyquist",
                            f - center
                        ),
                    ));
                }
            }
            OutputKind::Real => {
                let f_max = vco_frequency(&vco, BIAS_RANGE_V.1).map_err(|e| config_err("vco", e.to_string()))?;
                if self.iq_sample_rate_hz < 2.5 * f_max {
                    return Err(config_err(
                        "iq",
                        format!("real output needs iq.sample_rate_hz >= {}", 2.5 * f_max),
                    ));
                }
            }
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(config_err("output", "output.scale must be positive"));
        }
        if !(self.settle_s >= 0.0 && self.settle_s.is_finite()) {
            return Err(config_err("analysis", "analysis.settle_s must be >= 0"));
        }
        Ok(())
    }

    /// Test message from the `message.*` keys at the audio rate.
    pub fn message_tone(&self) -> Result<RealSignal> {
        generate_tone(
            ToneSpec::new(self.message_hz, self.message_amplitude),
            self.duration_s,
            self.audio_sample_rate_hz,
        )
    }
}

/// What enters the chain.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainInput {
    /// Message audio, peak ≤ 1, at any rate.
    Audio(RealSignal),
    /// Real AM waveform already at the AM-stage rate.
    Am(RealSignal),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageData {
    Real(RealSignal),
    Complex(ComplexSignal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: &'static str,
    pub data: StageData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertOutput {
    pub output: VcoOutput,
    pub center_hz: f64,
    /// Intermediate signals, in chain order, when requested.
    pub stages: Vec<Stage>,
    pub warnings: Vec<String>,
}

/// AM demodulation through FM synthesis.
///
/// Rate changes: audio → AM rate before modulation, AM rate → audio rate
/// after the detector, audio rate → IQ rate before the bias conditioner.
pub fn run_convert(input: ChainInput, cfg: &ChainConfig, keep_stages: bool) -> Result<ConvertOutput> {
    cfg.validate()?;
    let mut stages = Vec::new();
    let mut warnings = Vec::new();
    let mut keep = |name: &'static str, data: StageData| {
        if keep_stages {
            stages.push(Stage { name, data });
        }
    };

    let am = match input {
        ChainInput::Audio(audio) => {
            if audio.is_empty() {
                return Err(Error::arg("input audio is empty"));
            }
            let at_am = audio.resample(cfg.am_sample_rate_hz)?;
            keep("audio_in", StageData::Real(audio));
            if !cfg.am.in_broadcast_band() {
                warnings.push(format!("AM carrier {} Hz is outside the broadcast band", cfg.am.carrier_hz));
            }
            let am = am_modulate(&at_am, cfg.am)?;
            keep("am", StageData::Real(am.clone()));
            am
        }
        ChainInput::Am(am) => {
            if am.is_empty() {
                return Err(Error::arg("input AM signal is empty"));
            }
            if am.sample_rate_hz() != cfg.am_sample_rate_hz {
                return Err(config_err(
                    "am",
                    format!(
                        "AM input is at {} Hz but am.sample_rate_hz is {}",
                        am.sample_rate_hz(),
                        cfg.am_sample_rate_hz
                    ),
                ));
            }
            am
        }
    };

    let lpf = design_single_pole_lowpass(cfg.filter_r_ohms, cfg.filter_c_f, cfg.am_sample_rate_hz)?;
    let demod = demodulate_am(&am, cfg.opamp, &lpf)?;
    let audio = demod.resample(cfg.audio_sample_rate_hz)?.remove_dc();
    keep("demod", StageData::Real(audio.clone()));

    let pre = design_preemphasis(cfg.emphasis, cfg.audio_sample_rate_hz)?.filter(&audio)?;
    keep("preemphasis", StageData::Real(pre.clone()));

    let at_iq = pre.resample(cfg.iq_sample_rate_hz)?;
    let vco = cfg.vco_config()?;
    let bias = condition_bias(&at_iq, &vco.bias)?;
    if bias.clamped_samples > 0 {
        warnings.push(format!("bias clamped to [0, 12] V on {} samples", bias.clamped_samples));
    }
    keep("bias", StageData::Real(bias.signal.clone()));

    let center_hz = cfg.iq_center(&vco)?;
    let mode = match cfg.output {
        OutputKind::Baseband => OutputMode::Baseband { center_hz },
        OutputKind::Real => OutputMode::Real,
    };
    let output = match vco_synthesize(&vco, &bias.signal, mode)? {
        VcoOutput::Baseband(iq) => VcoOutput::Baseband(iq.scaled(cfg.output_scale)?),
        VcoOutput::Real(x) => VcoOutput::Real(x.scaled(cfg.output_scale)?),
    };
    Ok(ConvertOutput {
        output,
        center_hz,
        stages,
        warnings,
    })
}

/// Receiver side: discriminator, decimation to the audio rate, de-emphasis.
/// The result is instantaneous deviation in Hz with DC removed.
pub fn recover_audio(iq: &ComplexSignal, cfg: &ChainConfig) -> Result<RealSignal> {
    let hz = fm_demodulate(iq)?;
    let audio = hz.resample(cfg.audio_sample_rate_hz)?;
    let de = design_deemphasis(cfg.emphasis, cfg.audio_sample_rate_hz)?;
    Ok(de.filter(&audio)?.remove_dc())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTripReport {
    pub fidelity: Fidelity,
    /// `None` when no fundamental stands above the noise floor.
    pub thd_percent: Option<f64>,
    pub recovered_hz: Option<f64>,
    pub reference: RealSignal,
    pub recovered: RealSignal,
    pub warnings: Vec<String>,
}

impl RoundTripReport {
    pub fn summary(&self) -> String {
        let f = &self.fidelity;
        let mut s = String::new();
        if f.degenerate {
            s.push_str("degenerate: reference or recovered signal carries no energy\n");
        }
        let _ = writeln!(s, "delay_samples {}", f.delay_samples);
        let _ = writeln!(s, "correlation {:.6}", f.correlation);
        let _ = writeln!(s, "snr_db {:.2}", f.snr_db);
        match (self.thd_percent, self.recovered_hz) {
            (Some(t), Some(h)) => {
                let _ = writeln!(s, "fundamental_hz {h:.2}");
                let _ = writeln!(s, "thd_percent {t:.4}");
            }
            _ => s.push_str("thd_percent n/a\n"),
        }
        s
    }
}

/// Convert, receive, and compare against the input after the settling time.
pub fn run_roundtrip(audio: &RealSignal, cfg: &ChainConfig) -> Result<RoundTripReport> {
    if cfg.output != OutputKind::Baseband {
        return Err(config_err("output", "round trip needs output.mode = baseband"));
    }
    let conv = run_convert(ChainInput::Audio(audio.clone()), cfg, false)?;
    let iq = conv.output.into_baseband().expect("baseband mode");
    let recovered = recover_audio(&iq, cfg)?;
    let reference = audio.resample(cfg.audio_sample_rate_hz)?.remove_dc();
    let skip = ((cfg.settle_s * cfg.audio_sample_rate_hz).round() as usize).min(reference.len());
    let n = reference.len().min(recovered.len());
    let reference = reference.slice(skip, n)?.remove_dc();
    let recovered = recovered.slice(skip.min(n), n)?.remove_dc();
    if reference.is_empty() {
        return Err(Error::arg("input shorter than the settling time"));
    }
    let fidelity = audio_fidelity(&reference, &recovered)?;
    let (thd_percent, recovered_hz) = if fidelity.degenerate {
        (None, None)
    } else {
        thd_of(&reference, &recovered)
    };
    Ok(RoundTripReport {
        fidelity,
        thd_percent,
        recovered_hz,
        reference,
        recovered,
        warnings: conv.warnings,
    })
}

fn thd_of(reference: &RealSignal, recovered: &RealSignal) -> (Option<f64>, Option<f64>) {
    let len = reference.len().min(recovered.len());
    if len < 64 {
        return (None, None);
    }
    let nfft = (1usize << (usize::BITS - 1 - len.leading_zeros())).min(1 << 16);
    let Ok(ref_spec) = compute_spectrum(reference, nfft, Window::Hann) else {
        return (None, None);
    };
    let f0 = ref_spec.peak_frequency();
    compute_spectrum(recovered, nfft, Window::Hann)
        .and_then(|s| measure_harmonics(&s, f0, 5))
        .map(|r| (Some(r.thd_percent), Some(r.fundamental_hz)))
        .unwrap_or((None, None))
}
