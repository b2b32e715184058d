//! Rational discrete-time filters designed from the analog RC networks of the
//! chain: the demodulator's output pole, the pre-emphasis shelf and its
//! receive-side inverse, and the varactor isolation pole.
//!
//! Every design maps a first-order analog prototype through the bilinear
//! transform, prewarped so the prototype's pole frequency lands exactly.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{ensure_below_nyquist, ensure_positive, Error, Result};
use crate::signal::RealSignal;

/// Analog prototype a [`FilterSpec`] was designed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterDesign {
    /// `1 / (1 + s·τ)`
    SinglePoleLowpass { tau_s: f64 },
    /// `k·(1 + s·τ1) / (1 + s·τ2)` with `k = gain·τ2/τ1`
    PreEmphasis { tau1_s: f64, tau2_s: f64, gain: f64 },
    /// Reciprocal of [`FilterDesign::PreEmphasis`].
    DeEmphasis { tau1_s: f64, tau2_s: f64, gain: f64 },
    /// Product of other designs.
    Cascade,
}

/// Transfer function `B(z)/A(z)` with `a[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    b: Vec<f64>,
    a: Vec<f64>,
    sample_rate_hz: f64,
    design: FilterDesign,
}

impl FilterSpec {
    pub fn numerator(&self) -> &[f64] {
        &self.b
    }

    pub fn denominator(&self) -> &[f64] {
        &self.a
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn design(&self) -> FilterDesign {
        self.design
    }

    pub fn order(&self) -> usize {
        self.a.len().max(self.b.len()) - 1
    }

    /// Longest analog time constant behind the design, used for settling.
    pub fn longest_time_constant_s(&self) -> f64 {
        match self.design {
            FilterDesign::SinglePoleLowpass { tau_s } => tau_s,
            FilterDesign::PreEmphasis { tau1_s, tau2_s, .. }
            | FilterDesign::DeEmphasis { tau1_s, tau2_s, .. } => tau1_s.max(tau2_s),
            FilterDesign::Cascade => {
                // Slowest pole: |p|^n decays as exp(-n/(fs·τ)).
                let slowest = self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
                if slowest <= 0.0 {
                    0.0
                } else {
                    -1.0 / (self.sample_rate_hz * slowest.ln())
                }
            }
        }
    }

    /// Frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = TAU * freq_hz / self.sample_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        let eval = |c: &[f64]| {
            c.iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z_inv + k)
        };
        eval(&self.b) / eval(&self.a)
    }

    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    pub fn phase_deg(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).arg().to_degrees()
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Roots of the denominator in the z-plane.
    pub fn poles(&self) -> Vec<Complex64> {
        polynomial_roots(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Series connection of `self` followed by `other`.
    pub fn cascade(&self, other: &FilterSpec) -> Result<FilterSpec> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate_hz,
                actual: other.sample_rate_hz,
            });
        }
        Ok(FilterSpec {
            b: poly_mul(&self.b, &other.b),
            a: poly_mul(&self.a, &other.a),
            sample_rate_hz: self.sample_rate_hz,
            design: FilterDesign::Cascade,
        })
    }

    /// Runs the filter over a whole buffer from rest.
    pub fn filter(&self, signal: &RealSignal) -> Result<RealSignal> {
        apply_filter(signal, self, &mut FilterState::new(self))
    }
}

/// Transposed direct-form II delay line for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    z: Vec<f64>,
}

impl FilterState {
    /// Zero initial conditions.
    pub fn new(spec: &FilterSpec) -> Self {
        Self {
            z: vec![0.0; spec.order()],
        }
    }

    /// State the filter would hold after a constant `input` forever.
    pub fn settled(spec: &FilterSpec, input: f64) -> Self {
        let n = spec.order();
        let y = spec.dc_gain() * input;
        let mut z = vec![0.0; n];
        let mut next = 0.0;
        for i in (0..n).rev() {
            next += coef(&spec.b, i + 1) * input - coef(&spec.a, i + 1) * y;
            z[i] = next;
        }
        Self { z }
    }
}

fn coef(c: &[f64], i: usize) -> f64 {
    c.get(i).copied().unwrap_or(0.0)
}

/// Filters `signal`, continuing from and updating `state`.
///
/// Splitting a buffer in two and threading the state through both calls is
/// bit-identical to one call on the whole buffer.
pub fn apply_filter(
    signal: &RealSignal,
    spec: &FilterSpec,
    state: &mut FilterState,
) -> Result<RealSignal> {
    if signal.sample_rate_hz() != spec.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            expected: spec.sample_rate_hz,
            actual: signal.sample_rate_hz(),
        });
    }
    let n = spec.order();
    if state.z.len() != n {
        return Err(Error::arg(format!(
            "filter state has {} taps, spec needs {n}",
            state.z.len()
        )));
    }
    let b0 = coef(&spec.b, 0);
    let mut out = Vec::with_capacity(signal.len());
    for (idx, &x) in signal.samples().iter().enumerate() {
        let y = b0 * x + state.z.first().copied().unwrap_or(0.0);
        if !y.is_finite() {
            return Err(Error::NonFinite { index: idx });
        }
        for i in 0..n {
            let carry = if i + 1 < n { state.z[i + 1] } else { 0.0 };
            state.z[i] = coef(&spec.b, i + 1) * x - coef(&spec.a, i + 1) * y + carry;
        }
        out.push(y);
    }
    RealSignal::new(signal.sample_rate_hz(), out)
}

/// Bilinear map of `(nb1·s + nb0) / (da1·s + da0)` with `s = k(1 − z⁻¹)/(1 + z⁻¹)`.
fn bilinear_first_order(nb1: f64, nb0: f64, da1: f64, da0: f64, k: f64) -> (Vec<f64>, Vec<f64>) {
    let norm = da1 * k + da0;
    let b = vec![(nb1 * k + nb0) / norm, (nb0 - nb1 * k) / norm];
    let a = vec![1.0, (da0 - da1 * k) / norm];
    (b, a)
}

/// Bilinear constant that maps analog `omega` onto the same digital frequency.
fn prewarp(omega: f64, sample_rate_hz: f64) -> f64 {
    omega / (omega / (2.0 * sample_rate_hz)).tan()
}

/// First-order RC low-pass, −3 dB at exactly `1/(2πRC)`.
pub fn design_single_pole_lowpass(r_ohms: f64, c_farads: f64, sample_rate_hz: f64) -> Result<FilterSpec> {
    ensure_positive("r_ohms", r_ohms)?;
    ensure_positive("c_farads", c_farads)?;
    lowpass_from_tau(r_ohms * c_farads, sample_rate_hz)
}

pub fn lowpass_from_tau(tau_s: f64, sample_rate_hz: f64) -> Result<FilterSpec> {
    ensure_positive("tau_s", tau_s)?;
    ensure_positive("sample_rate_hz", sample_rate_hz)?;
    let cutoff_hz = 1.0 / (TAU * tau_s);
    ensure_below_nyquist("low-pass cutoff", cutoff_hz, sample_rate_hz)?;
    let k = prewarp(1.0 / tau_s, sample_rate_hz);
    let (b, a) = bilinear_first_order(0.0, 1.0, tau_s, 1.0, k);
    Ok(FilterSpec {
        b,
        a,
        sample_rate_hz,
        design: FilterDesign::SinglePoleLowpass { tau_s },
    })
}

/// First-order low-pass through the plain bilinear transform (no prewarp).
///
/// Valid for any pole frequency, including poles above Nyquist, so it suits
/// parasitic poles such as an op-amp's closed-loop bandwidth.
pub fn analog_pole_lowpass(tau_s: f64, sample_rate_hz: f64) -> Result<FilterSpec> {
    ensure_positive("tau_s", tau_s)?;
    ensure_positive("sample_rate_hz", sample_rate_hz)?;
    let (b, a) = bilinear_first_order(0.0, 1.0, tau_s, 1.0, 2.0 * sample_rate_hz);
    Ok(FilterSpec {
        b,
        a,
        sample_rate_hz,
        design: FilterDesign::SinglePoleLowpass { tau_s },
    })
}

/// Shelf parameters shared by pre- and de-emphasis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmphasisParams {
    pub tau1_s: f64,
    pub tau2_s: f64,
    /// High-frequency asymptotic gain of the pre-emphasis stage.
    pub amp_gain: f64,
}

impl Default for EmphasisParams {
    fn default() -> Self {
        Self {
            tau1_s: 500e-6,
            tau2_s: 75e-6,
            amp_gain: 3.0,
        }
    }
}

impl EmphasisParams {
    fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        ensure_positive("tau2_s", self.tau2_s)?;
        ensure_positive("amp_gain", self.amp_gain)?;
        ensure_positive("sample_rate_hz", sample_rate_hz)?;
        if !(self.tau1_s > self.tau2_s) {
            return Err(Error::arg(format!(
                "emphasis needs tau1 > tau2 > 0, got tau1={} tau2={}",
                self.tau1_s, self.tau2_s
            )));
        }
        ensure_below_nyquist("emphasis pole", 1.0 / (TAU * self.tau2_s), sample_rate_hz)
    }

    /// Low-frequency gain `amp_gain·τ2/τ1`.
    pub fn dc_gain(&self) -> f64 {
        self.amp_gain * self.tau2_s / self.tau1_s
    }

    /// Zero and pole frequencies of the shelf in Hz.
    pub fn corner_frequencies_hz(&self) -> (f64, f64) {
        (1.0 / (TAU * self.tau1_s), 1.0 / (TAU * self.tau2_s))
    }
}

pub fn design_preemphasis(params: EmphasisParams, sample_rate_hz: f64) -> Result<FilterSpec> {
    params.validate(sample_rate_hz)?;
    let k_dc = params.dc_gain();
    let k = prewarp(1.0 / params.tau2_s, sample_rate_hz);
    let (b, a) = bilinear_first_order(k_dc * params.tau1_s, k_dc, params.tau2_s, 1.0, k);
    Ok(FilterSpec {
        b,
        a,
        sample_rate_hz,
        design: FilterDesign::PreEmphasis {
            tau1_s: params.tau1_s,
            tau2_s: params.tau2_s,
            gain: params.amp_gain,
        },
    })
}

/// Exact inverse of [`design_preemphasis`] at the same sample rate.
pub fn design_deemphasis(params: EmphasisParams, sample_rate_hz: f64) -> Result<FilterSpec> {
    params.validate(sample_rate_hz)?;
    let k_dc = params.dc_gain();
    // Same bilinear constant as the pre-emphasis so the product cancels exactly.
    let k = prewarp(1.0 / params.tau2_s, sample_rate_hz);
    let (b, a) = bilinear_first_order(params.tau2_s, 1.0, k_dc * params.tau1_s, k_dc, k);
    Ok(FilterSpec {
        b,
        a,
        sample_rate_hz,
        design: FilterDesign::DeEmphasis {
            tau1_s: params.tau1_s,
            tau2_s: params.tau2_s,
            gain: params.amp_gain,
        },
    })
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &x) in p.iter().enumerate() {
        for (j, &y) in q.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of `c[0]·z^n + c[1]·z^(n−1) + … + c[n]` by Durand–Kerner iteration.
fn polynomial_roots(c: &[f64]) -> Vec<Complex64> {
    let mut c: Vec<f64> = c.to_vec();
    let mut roots = Vec::new();
    // trailing zero coefficients are roots at the origin
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
        roots.push(Complex64::new(0.0, 0.0));
    }
    let n = c.len() - 1;
    if n == 0 {
        return roots;
    }
    let monic: Vec<f64> = c.iter().map(|v| v / c[0]).collect();
    if n == 1 {
        roots.push(Complex64::new(-monic[1], 0.0));
        return roots;
    }
    let eval = |z: Complex64| monic.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k);
    let seed = Complex64::new(0.4, 0.9);
    let mut est: Vec<Complex64> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let zi = est[i];
            let denom = est
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, (_, &zj)| acc * (zi - zj));
            let step = eval(zi) / denom;
            est[i] = zi - step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots.extend(est);
    roots
}

/// One measured point of a frequency-response sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub freq_hz: f64,
    pub gain_db: f64,
    pub phase_deg: f64,
}

/// Gain/phase versus frequency, frequencies strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "freq_hz,gain_db,phase_deg";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.freq_hz, p.gain_db, p.phase_deg));
        }
        s
    }

    /// Gain at `freq_hz`, linear in log-frequency between points.
    pub fn gain_at(&self, freq_hz: f64) -> Option<f64> {
        let pts = &self.points;
        let idx = pts.windows(2).position(|w| w[0].freq_hz <= freq_hz && freq_hz <= w[1].freq_hz)?;
        let (p, q) = (pts[idx], pts[idx + 1]);
        let t = (freq_hz / p.freq_hz).ln() / (q.freq_hz / p.freq_hz).ln();
        Some(p.gain_db + t * (q.gain_db - p.gain_db))
    }

    /// Lowest frequency where the gain crosses `level_db`, interpolated in
    /// log-frequency.
    pub fn crossing(&self, level_db: f64) -> Option<f64> {
        self.points.windows(2).find_map(|w| {
            let (p, q) = (w[0], w[1]);
            let (dp, dq) = (p.gain_db - level_db, q.gain_db - level_db);
            if dp == 0.0 {
                Some(p.freq_hz)
            } else if dp * dq < 0.0 || dq == 0.0 {
                let t = dp / (dp - dq);
                Some(p.freq_hz * (q.freq_hz / p.freq_hz).powf(t))
            } else {
                None
            }
        })
    }
}

/// Frequency-response analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FraConfig {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub points_per_decade: usize,
    pub probe_amplitude_v: f64,
    pub sample_rate_hz: f64,
    /// Minimum settling time before measuring, typically 5× the longest
    /// time constant of the system. At least ten probe periods are always
    /// allowed.
    pub settle_time_s: f64,
    /// Probe periods integrated by the single-bin correlator.
    pub measure_periods: usize,
}

impl FraConfig {
    pub fn new(f_start_hz: f64, f_stop_hz: f64, points_per_decade: usize, sample_rate_hz: f64) -> Self {
        Self {
            f_start_hz,
            f_stop_hz,
            points_per_decade,
            probe_amplitude_v: 1.0,
            sample_rate_hz,
            settle_time_s: 0.0,
            measure_periods: 10,
        }
    }

    pub fn with_settle_time(mut self, settle_time_s: f64) -> Self {
        self.settle_time_s = settle_time_s;
        self
    }

    pub fn with_probe_amplitude(mut self, v: f64) -> Self {
        self.probe_amplitude_v = v;
        self
    }

    /// Log-spaced probe frequencies from start to stop inclusive.
    pub fn frequencies(&self) -> Vec<f64> {
        let step = 10f64.powf(1.0 / self.points_per_decade as f64);
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let f = self.f_start_hz * step.powi(k);
            if f > self.f_stop_hz * (1.0 + 1e-9) {
                break;
            }
            out.push(f);
            k += 1;
        }
        if out.last().is_some_and(|&f| f < self.f_stop_hz * (1.0 - 1e-9)) {
            out.push(self.f_stop_hz);
        }
        out
    }
}

/// Swept-sine measurement of a black-box system.
///
/// Each probe frequency gets a fresh tone. The system must return as many
/// samples as it was given. Input and output are correlated against the
/// probe frequency over the same window after settling, so the ratio
/// carries the gain and phase.
pub fn fra_sweep<F>(mut system: F, cfg: &FraConfig) -> Result<SweepResult>
where
    F: FnMut(&RealSignal) -> Result<RealSignal>,
{
    ensure_positive("f_start_hz", cfg.f_start_hz)?;
    ensure_positive("probe_amplitude_v", cfg.probe_amplitude_v)?;
    ensure_positive("sample_rate_hz", cfg.sample_rate_hz)?;
    if !(cfg.f_start_hz < cfg.f_stop_hz) {
        return Err(Error::arg("sweep needs f_start < f_stop"));
    }
    if cfg.points_per_decade == 0 || cfg.measure_periods == 0 {
        return Err(Error::arg("points_per_decade and measure_periods must be positive"));
    }
    ensure_below_nyquist("sweep stop frequency", cfg.f_stop_hz, cfg.sample_rate_hz)?;

    let fs = cfg.sample_rate_hz;
    let mut points = Vec::new();
    for f in cfg.frequencies() {
        let period_s = 1.0 / f;
        let settle = (10.0 * period_s).max(cfg.settle_time_s);
        let settle_n = (settle * fs).ceil() as usize;
        let measure_n = ((cfg.measure_periods as f64 * period_s * fs).round() as usize).max(1);
        let w = TAU * f / fs;
        let probe: Vec<f64> = (0..settle_n + measure_n)
            .map(|n| cfg.probe_amplitude_v * (w * n as f64).sin())
            .collect();
        let probe = RealSignal::new(fs, probe)?;
        let response = system(&probe)?;
        if response.len() != probe.len() {
            return Err(Error::Contract {
                expected: probe.len(),
                actual: response.len(),
            });
        }
        let x = single_bin(&probe.samples()[settle_n..], w, settle_n);
        let y = single_bin(&response.samples()[settle_n..], w, settle_n);
        let h = y / x;
        points.push(SweepPoint {
            freq_hz: f,
            gain_db: 20.0 * h.norm().log10(),
            phase_deg: h.arg().to_degrees(),
        });
    }
    Ok(SweepResult { points })
}

fn single_bin(x: &[f64], w: f64, offset: usize) -> Complex64 {
    x.iter()
        .enumerate()
        .map(|(n, &v)| v * Complex64::from_polar(1.0, -w * (n + offset) as f64))
        .sum()
}

/// −3 dB frequency of a first-order RC network.
pub fn rc_cutoff_hz(r_ohms: f64, c_farads: f64) -> f64 {
    1.0 / (2.0 * PI * r_ohms * c_farads)
}
