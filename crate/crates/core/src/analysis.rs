//! Measurement suite: averaged FFT spectra, harmonic reports, fidelity
//! metrics, and the closed-form design checks used around the chain.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{ensure_positive, Error, Result};
use crate::signal::{ComplexSignal, RealSignal};

/// Power floor applied before taking logarithms.
const POWER_FLOOR: f64 = 1e-30;
/// Cap on reported signal-to-noise ratios.
pub const SNR_CAP_DB: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
    BlackmanHarris,
    FlatTop,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let cosine_sum = |a: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let x = TAU * i as f64 / n as f64;
                    a.iter()
                        .enumerate()
                        .map(|(k, &ak)| if k % 2 == 0 { ak } else { -ak } * (k as f64 * x).cos())
                        .sum()
                })
                .collect()
        };
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => cosine_sum(&[0.5, 0.5]),
            Window::BlackmanHarris => cosine_sum(&[0.35875, 0.48829, 0.14128, 0.01168]),
            Window::FlatTop => cosine_sum(&[
                0.21557895,
                0.41663158,
                0.277263158,
                0.083578947,
                0.006947368,
            ]),
        }
    }

    /// Half-width of the main lobe in bins.
    pub fn main_lobe_half_width(self) -> usize {
        match self {
            Window::Rectangular => 1,
            Window::Hann => 2,
            Window::BlackmanHarris => 4,
            Window::FlatTop => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
            Window::BlackmanHarris => "blackman-harris",
            Window::FlatTop => "flattop",
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rect" | "rectangular" | "none" => Ok(Window::Rectangular),
            "hann" | "hanning" => Ok(Window::Hann),
            "blackman-harris" | "blackmanharris" | "bh" => Ok(Window::BlackmanHarris),
            "flattop" | "flat-top" => Ok(Window::FlatTop),
            other => Err(Error::arg(format!("unknown window `{other}`"))),
        }
    }
}

/// Averaged power spectrum. Each bin holds dB relative to 1 V RMS, corrected
/// for the window's coherent gain so a tone on a bin center reads its RMS.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bin_width_hz: f64,
    pub start_hz: f64,
    pub magnitudes_db: Vec<f64>,
    pub window: Window,
    /// Equivalent noise bandwidth of the window, in bins.
    pub enbw_bins: f64,
    /// Segments averaged.
    pub segments: usize,
}

impl Spectrum {
    pub const CSV_HEADER: &'static str = "freq_hz,mag_db";

    pub fn len(&self) -> usize {
        self.magnitudes_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes_db.is_empty()
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        self.start_hz + bin as f64 * self.bin_width_hz
    }

    /// Nearest bin to `freq_hz`, if inside the spectrum.
    pub fn bin_of(&self, freq_hz: f64) -> Option<usize> {
        let k = ((freq_hz - self.start_hz) / self.bin_width_hz).round();
        (k >= 0.0 && (k as usize) < self.len()).then_some(k as usize)
    }

    /// Linear power (V² RMS) in a bin.
    pub fn power(&self, bin: usize) -> f64 {
        10f64.powf(self.magnitudes_db[bin] / 10.0)
    }

    pub fn peak_bin(&self) -> usize {
        self.magnitudes_db
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }

    pub fn peak_frequency(&self) -> f64 {
        self.frequency(self.peak_bin())
    }

    /// Strongest bin within `±radius` of `bin`.
    pub fn local_peak(&self, bin: usize, radius: usize) -> usize {
        let lo = bin.saturating_sub(radius);
        let hi = (bin + radius).min(self.len() - 1);
        (lo..=hi).fold(lo, |best, k| {
            if self.magnitudes_db[k] > self.magnitudes_db[best] {
                k
            } else {
                best
            }
        })
    }

    /// Tone power around `bin`: bins within the window's main lobe summed and
    /// divided by the ENBW, which undoes scalloping.
    pub fn tone_power(&self, bin: usize) -> f64 {
        let hw = self.window.main_lobe_half_width();
        let lo = bin.saturating_sub(hw);
        let hi = (bin + hw).min(self.len() - 1);
        (lo..=hi).map(|k| self.power(k)).sum::<f64>() / self.enbw_bins
    }

    /// Median bin power, a robust noise-floor estimate.
    pub fn noise_floor_power(&self) -> f64 {
        let mut p: Vec<f64> = (0..self.len()).map(|k| self.power(k)).collect();
        p.sort_by(|a, b| a.total_cmp(b));
        p[p.len() / 2]
    }

    /// Sum of all bin powers (mean square of the analysed samples for a
    /// rectangular window).
    pub fn total_power(&self) -> f64 {
        (0..self.len()).map(|k| self.power(k)).sum::<f64>() / self.enbw_bins
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (k, db) in self.magnitudes_db.iter().enumerate() {
            s.push_str(&format!("{},{}\n", self.frequency(k), db));
        }
        s
    }
}

/// Anything [`compute_spectrum`] can analyse.
pub trait SpectrumSource {
    fn sample_rate_hz(&self) -> f64;
    fn sample_count(&self) -> usize;
    /// Complex samples of segment `[start, start + len)`.
    fn segment(&self, start: usize, len: usize) -> Vec<Complex64>;
    /// Real inputs give single-sided spectra.
    fn is_real(&self) -> bool;
}

impl SpectrumSource for RealSignal {
    fn sample_rate_hz(&self) -> f64 {
        RealSignal::sample_rate_hz(self)
    }
    fn sample_count(&self) -> usize {
        self.len()
    }
    fn segment(&self, start: usize, len: usize) -> Vec<Complex64> {
        self.samples()[start..start + len]
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect()
    }
    fn is_real(&self) -> bool {
        true
    }
}

impl SpectrumSource for ComplexSignal {
    fn sample_rate_hz(&self) -> f64 {
        ComplexSignal::sample_rate_hz(self)
    }
    fn sample_count(&self) -> usize {
        self.len()
    }
    fn segment(&self, start: usize, len: usize) -> Vec<Complex64> {
        self.samples()[start..start + len].to_vec()
    }
    fn is_real(&self) -> bool {
        false
    }
}

/// Windowed FFT magnitude averaged over every whole `nfft` segment.
///
/// Real input yields bins `0..=nfft/2` starting at 0 Hz. Complex input yields
/// `nfft` bins from `−fs/2`, relative to baseband.
pub fn compute_spectrum<S: SpectrumSource + ?Sized>(signal: &S, nfft: usize, window: Window) -> Result<Spectrum> {
    if nfft < 64 || !nfft.is_power_of_two() {
        return Err(Error::arg(format!("nfft must be a power of two >= 64, got {nfft}")));
    }
    if signal.sample_count() < nfft {
        return Err(Error::arg(format!(
            "signal has {} samples, fewer than nfft = {nfft}",
            signal.sample_count()
        )));
    }
    let fs = signal.sample_rate_hz();
    let w = window.coefficients(nfft);
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|v| v * v).sum();
    let enbw_bins = nfft as f64 * sum_w2 / (sum_w * sum_w);

    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let segments = signal.sample_count() / nfft;
    let mut acc = vec![0.0f64; nfft];
    for s in 0..segments {
        let mut buf = signal.segment(s * nfft, nfft);
        for (z, &wk) in buf.iter_mut().zip(&w) {
            *z *= wk;
        }
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
    }
    // |X|/Σw is the amplitude of a complex exponential.
    let norm = 1.0 / (segments as f64 * sum_w * sum_w);
    let (power, start_hz): (Vec<f64>, f64) = if signal.is_real() {
        let half = nfft / 2;
        let p = (0..=half)
            .map(|k| {
                let two_sided = acc[k] * norm;
                // A real tone splits into ±f; fold to RMS² = 2·|A/2|².
                if k == 0 || k == half {
                    two_sided
                } else {
                    2.0 * two_sided
                }
            })
            .collect();
        (p, 0.0)
    } else {
        let half = nfft / 2;
        let p = (0..nfft).map(|i| acc[(i + half) % nfft] * norm).collect();
        (p, -fs / 2.0)
    };
    Ok(Spectrum {
        bin_width_hz: fs / nfft as f64,
        start_hz,
        magnitudes_db: power.iter().map(|&p| 10.0 * p.max(POWER_FLOOR).log10()).collect(),
        window,
        enbw_bins,
        segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicLevel {
    pub order: usize,
    pub freq_hz: f64,
    pub level_dbc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicReport {
    pub fundamental_hz: f64,
    /// Fundamental tone power in dB re 1 V RMS.
    pub fundamental_db: f64,
    pub harmonics: Vec<HarmonicLevel>,
    pub thd_percent: f64,
}

impl HarmonicReport {
    pub const CSV_HEADER: &'static str = "order,freq_hz,level_dbc";

    pub fn strongest(&self) -> Option<HarmonicLevel> {
        self.harmonics
            .iter()
            .copied()
            .max_by(|a, b| a.level_dbc.total_cmp(&b.level_dbc))
    }

    pub fn level(&self, order: usize) -> Option<f64> {
        self.harmonics.iter().find(|h| h.order == order).map(|h| h.level_dbc)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        s.push_str(&format!("1,{},0\n", self.fundamental_hz));
        for h in &self.harmonics {
            s.push_str(&format!("{},{},{}\n", h.order, h.freq_hz, h.level_dbc));
        }
        s
    }
}

impl fmt::Display for HarmonicReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "fundamental {:.3} Hz at {:.2} dBV",
            self.fundamental_hz, self.fundamental_db
        )?;
        for h in &self.harmonics {
            writeln!(f, "  H{:<2} {:>14.3} Hz  {:>8.2} dBc", h.order, h.freq_hz, h.level_dbc)?;
        }
        write!(f, "THD {:.4} %", self.thd_percent)
    }
}

/// Harmonic levels relative to the fundamental.
///
/// Each harmonic is peak-searched within ±2 bins of its expected position
/// and its power taken over the window main lobe. Orders that fall outside
/// the spectrum are skipped.
pub fn measure_harmonics(spectrum: &Spectrum, fundamental_hz: f64, max_order: usize) -> Result<HarmonicReport> {
    const SEARCH: usize = 2;
    let not_found = || Error::Detection { freq_hz: fundamental_hz };
    let guess = spectrum.bin_of(fundamental_hz).ok_or_else(not_found)?;
    let peak = spectrum.local_peak(guess, SEARCH);
    let p1 = spectrum.tone_power(peak);
    let floor = spectrum.noise_floor_power();
    if !(spectrum.power(peak) > 10.0 * floor) {
        return Err(not_found());
    }
    // Power-weighted centroid refines the fundamental between bins.
    let hw = spectrum.window.main_lobe_half_width();
    let (lo, hi) = (peak.saturating_sub(hw), (peak + hw).min(spectrum.len() - 1));
    let (num, den) = (lo..=hi).fold((0.0, 0.0), |(n, d), k| {
        let p = spectrum.power(k);
        (n + p * spectrum.frequency(k), d + p)
    });
    let f1 = num / den;

    let mut harmonics = Vec::new();
    let mut sum = 0.0;
    for order in 2..=max_order {
        let fk = f1 * order as f64;
        let Some(bin) = spectrum.bin_of(fk) else { break };
        if bin + hw >= spectrum.len() {
            break;
        }
        let pk_bin = spectrum.local_peak(bin, SEARCH);
        let pk = spectrum.tone_power(pk_bin);
        if pk > p1 {
            return Err(Error::Detection { freq_hz: fundamental_hz });
        }
        sum += pk;
        harmonics.push(HarmonicLevel {
            order,
            freq_hz: fk,
            level_dbc: 10.0 * (pk.max(POWER_FLOOR) / p1).log10(),
        });
    }
    Ok(HarmonicReport {
        fundamental_hz: f1,
        fundamental_db: 10.0 * p1.max(POWER_FLOOR).log10(),
        harmonics,
        thd_percent: 100.0 * (sum / p1).sqrt(),
    })
}

/// Image band `(low − lo, high − lo)` produced by the difference product.
pub fn intermod_image(band_low_hz: u64, band_high_hz: u64, lo_hz: u64) -> Result<(u64, u64)> {
    if band_low_hz >= band_high_hz {
        return Err(Error::arg("band_low must be below band_high"));
    }
    if lo_hz >= band_low_hz {
        return Err(Error::arg("LO must lie below the band"));
    }
    Ok((band_low_hz - lo_hz, band_high_hz - lo_hz))
}

/// Highest full-swing sine frequency a slew-limited amplifier can follow:
/// `SR / (2π·V_p)`.
pub fn max_full_power_frequency(slew_rate_v_per_s: f64, v_peak_v: f64) -> Result<f64> {
    ensure_positive("slew_rate_v_per_s", slew_rate_v_per_s)?;
    ensure_positive("v_peak_v", v_peak_v)?;
    Ok(slew_rate_v_per_s / (2.0 * PI * v_peak_v))
}

/// Alignment and quality of a recovered waveform against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    /// Samples by which `recovered` lags `reference` (negative: leads).
    pub delay_samples: i64,
    /// Least-squares gain from reference to recovered.
    pub scale: f64,
    pub correlation: f64,
    pub snr_db: f64,
    /// True when either input carries no energy; the metrics are then zero.
    pub degenerate: bool,
}

/// Best-lag normalized cross-correlation, least-squares scale, and
/// residual SNR after alignment (capped at [`SNR_CAP_DB`]).
///
/// Alignment is to whole samples, so any fractional delay left over shows
/// up in the residual and bounds the SNR for high-frequency content.
pub fn audio_fidelity(reference: &RealSignal, recovered: &RealSignal) -> Result<Fidelity> {
    if reference.sample_rate_hz() != recovered.sample_rate_hz() {
        return Err(Error::SampleRateMismatch {
            expected: reference.sample_rate_hz(),
            actual: recovered.sample_rate_hz(),
        });
    }
    if reference.is_empty() || recovered.is_empty() {
        return Err(Error::arg("fidelity needs non-empty signals"));
    }
    if reference.energy() == 0.0 || recovered.energy() == 0.0 {
        return Ok(Fidelity {
            delay_samples: 0,
            scale: 0.0,
            correlation: 0.0,
            snr_db: 0.0,
            degenerate: true,
        });
    }
    let r = reference.samples();
    let y = recovered.samples();
    let lag = best_lag(r, y);
    // Overlap where y[n] pairs with r[n - lag].
    let (r_seg, y_seg) = if lag >= 0 {
        let l = lag as usize;
        let n = r.len().min(y.len().saturating_sub(l));
        (&r[..n], &y[l..l + n])
    } else {
        let l = (-lag) as usize;
        let n = y.len().min(r.len().saturating_sub(l));
        (&r[l..l + n], &y[..n])
    };
    let rr: f64 = r_seg.iter().map(|v| v * v).sum();
    let yy: f64 = y_seg.iter().map(|v| v * v).sum();
    let ry: f64 = r_seg.iter().zip(y_seg).map(|(a, b)| a * b).sum();
    if rr == 0.0 || yy == 0.0 {
        return Ok(Fidelity {
            delay_samples: lag,
            scale: 0.0,
            correlation: 0.0,
            snr_db: 0.0,
            degenerate: true,
        });
    }
    let scale = ry / rr;
    let correlation = ry / (rr * yy).sqrt();
    let residual: f64 = r_seg
        .iter()
        .zip(y_seg)
        .map(|(a, b)| (b - scale * a).powi(2))
        .sum();
    let signal = scale * scale * rr;
    let snr_db = if residual == 0.0 {
        SNR_CAP_DB
    } else {
        (10.0 * (signal / residual).log10()).min(SNR_CAP_DB)
    };
    Ok(Fidelity {
        delay_samples: lag,
        scale,
        correlation,
        snr_db,
        degenerate: false,
    })
}

/// Lag `l` maximizing `Σ y[n]·r[n − l]` over `|l| <= min(len)/2`.
fn best_lag(r: &[f64], y: &[f64]) -> i64 {
    let n = (r.len() + y.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        v.resize(n, Complex64::new(0.0, 0.0));
        v
    };
    let mut rf = pad(r);
    let mut yf = pad(y);
    fwd.process(&mut rf);
    fwd.process(&mut yf);
    let mut c: Vec<Complex64> = yf.iter().zip(&rf).map(|(a, b)| a * b.conj()).collect();
    inv.process(&mut c);
    let max_lag = (r.len().min(y.len()) / 2) as i64;
    let mut best = (0i64, f64::NEG_INFINITY);
    for lag in -max_lag..=max_lag {
        let idx = lag.rem_euclid(n as i64) as usize;
        let v = c[idx].re;
        // Ties resolve toward the smallest |lag|.
        let tol = 1e-12 * v.abs().max(best.1.abs());
        if best.1.is_infinite() || v > best.1 + tol || (v >= best.1 - tol && lag.abs() < best.0.abs()) {
            best = (lag, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_tone, ToneSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 65_536.0;

    #[test]
    fn bin_centred_rms_tone_reads_zero_db() {
        let tone = generate_tone(ToneSpec::new(1024.0, 2f64.sqrt()), 0.125, FS).unwrap();
        let s = compute_spectrum(&tone, 4096, Window::Rectangular).unwrap();
        assert_eq!(s.peak_frequency(), 1024.0);
        assert!(s.magnitudes_db[s.peak_bin()].abs() < 0.05);
        let h = compute_spectrum(&tone, 4096, Window::Hann).unwrap();
        assert!(h.magnitudes_db[h.peak_bin()].abs() < 0.05);
    }

    #[test]
    fn parseval_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..8192).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sig = RealSignal::new(FS, x).unwrap();
        let s = compute_spectrum(&sig, 8192, Window::Rectangular).unwrap();
        let time = sig.energy() / sig.len() as f64;
        let diff_db = 10.0 * (s.total_power() / time).log10();
        assert!(diff_db.abs() < 0.1, "{diff_db}");
    }

    #[test]
    fn two_tones_twenty_db_apart() {
        let a = generate_tone(ToneSpec::new(1000.0, 1.0), 0.5, FS).unwrap();
        let b = generate_tone(ToneSpec::new(5000.0, 0.1), 0.5, FS).unwrap();
        let x = RealSignal::new(FS, a.samples().iter().zip(b.samples()).map(|(p, q)| p + q).collect()).unwrap();
        let s = compute_spectrum(&x, 8192, Window::Hann).unwrap();
        let pa = s.tone_power(s.local_peak(s.bin_of(1000.0).unwrap(), 2));
        let pb = s.tone_power(s.local_peak(s.bin_of(5000.0).unwrap(), 2));
        let delta = 10.0 * (pa / pb).log10();
        assert!((delta - 20.0).abs() < 0.3, "{delta}");
    }

    #[test]
    fn white_noise_floor_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..(1 << 18)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sig = RealSignal::new(FS, x).unwrap();
        let s = compute_spectrum(&sig, 1024, Window::Hann).unwrap();
        // Band averages over 16 bins, skipping DC and Nyquist.
        let bands: Vec<f64> = (1..32)
            .map(|b| {
                let p: f64 = (b * 16..(b + 1) * 16).map(|k| s.power(k)).sum();
                10.0 * (p / 16.0).log10()
            })
            .collect();
        let hi = bands.iter().copied().fold(f64::MIN, f64::max);
        let lo = bands.iter().copied().fold(f64::MAX, f64::min);
        assert!(hi - lo < 3.0, "{lo}..{hi}");
    }

    #[test]
    fn complex_spectrum_is_two_sided() {
        let iq = ComplexSignal::tone(1e6, 0.0, 1e5, 1.0, 4096).unwrap();
        let s = compute_spectrum(&iq, 4096, Window::Hann).unwrap();
        assert_eq!(s.start_hz, -5e5);
        assert!((s.peak_frequency() - 1e5).abs() <= s.bin_width_hz);
        let level = 10.0 * s.tone_power(s.peak_bin()).log10();
        assert!(level.abs() < 0.05, "{level}");
    }

    #[test]
    fn spectrum_argument_errors() {
        let x = RealSignal::constant(FS, 0.0, 100).unwrap();
        assert!(compute_spectrum(&x, 128, Window::Hann).is_err());
        assert!(compute_spectrum(&x, 48, Window::Hann).is_err());
        assert!(compute_spectrum(&x, 96, Window::Hann).is_err());
    }

    #[test]
    fn pure_tone_has_no_harmonics() {
        let tone = generate_tone(ToneSpec::new(1024.0, 1.0), 0.125, FS).unwrap();
        let s = compute_spectrum(&tone, 8192, Window::Rectangular).unwrap();
        let rep = measure_harmonics(&s, 1024.0, 5).unwrap();
        assert!(rep.thd_percent < 1e-6);
        assert_eq!(rep.harmonics.len(), 4);
        assert!(rep.harmonics.iter().all(|h| h.level_dbc < -150.0));
    }

    #[test]
    fn missing_fundamental_is_detection_error() {
        let tone = generate_tone(ToneSpec::new(1024.0, 1.0), 0.125, FS).unwrap();
        let s = compute_spectrum(&tone, 8192, Window::Hann).unwrap();
        assert!(matches!(
            measure_harmonics(&s, 3000.0, 3),
            Err(Error::Detection { .. })
        ));
    }

    #[test]
    fn soft_clip_favours_odd_harmonics() {
        let tone = generate_tone(ToneSpec::new(1000.0, 1.0), 0.5, FS).unwrap();
        let clipped = tone.map(|x| (2.0 * x).tanh()).unwrap();
        let s = compute_spectrum(&clipped, 16384, Window::Hann).unwrap();
        let rep = measure_harmonics(&s, 1000.0, 5).unwrap();
        assert!(rep.level(3).unwrap() > rep.level(2).unwrap() + 40.0);
    }

    #[test]
    fn report_formats() {
        let tone = generate_tone(ToneSpec::new(1000.0, 1.0), 0.5, FS).unwrap();
        let s = compute_spectrum(&tone, 8192, Window::Hann).unwrap();
        let rep = measure_harmonics(&s, 1000.0, 3).unwrap();
        let csv = rep.to_csv();
        assert!(csv.starts_with("order,freq_hz,level_dbc\n1,"));
        assert!(rep.to_string().contains("THD"));
        assert!(s.to_csv().starts_with("freq_hz,mag_db\n0,"));
    }

    #[test]
    fn image_arithmetic() {
        assert_eq!(intermod_image(88_000_000, 108_000_000, 64_000_000).unwrap(), (24_000_000, 44_000_000));
        assert_eq!(intermod_image(530_000, 1_700_000, 0).unwrap(), (530_000, 1_700_000));
        assert_eq!(intermod_image(530_000, 1_700_000, 75_000).unwrap(), (455_000, 1_625_000));
        assert!(intermod_image(88_000_000, 108_000_000, 90_000_000).is_err());
        assert!(intermod_image(108_000_000, 88_000_000, 1).is_err());
    }

    #[test]
    fn full_power_bandwidth() {
        let f = max_full_power_frequency(70e6, 6.0).unwrap();
        assert!((f - 1.857e6).abs() / 1.857e6 < 1e-3, "{f}");
        let g = max_full_power_frequency(70e6, 12.0).unwrap();
        assert!((g - f / 2.0).abs() < 1e-6);
        let h = max_full_power_frequency(70e6, 5.06).unwrap();
        assert!((h - 2.2e6).abs() / 2.2e6 < 1e-3, "{h}");
        assert!(max_full_power_frequency(0.0, 1.0).is_err());
    }

    #[test]
    fn fidelity_identical() {
        let x = generate_tone(ToneSpec::new(440.0, 0.5), 0.1, 48_000.0).unwrap();
        let f = audio_fidelity(&x, &x).unwrap();
        assert_eq!(f.delay_samples, 0);
        assert!((f.correlation - 1.0).abs() < 1e-12);
        assert_eq!(f.snr_db, SNR_CAP_DB);
        assert!((f.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_finds_delay() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; 17];
        y.extend_from_slice(&x[..4000 - 17]);
        let r = RealSignal::new(48_000.0, x).unwrap();
        let d = RealSignal::new(48_000.0, y).unwrap();
        let f = audio_fidelity(&r, &d).unwrap();
        assert_eq!(f.delay_samples, 17);
        assert!((f.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_with_known_noise() {
        let x = generate_tone(ToneSpec::new(1000.0, 1.0), 1.0, 48_000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pn: f64 = noise.iter().map(|v| v * v).sum();
        let gain = (x.energy() * 1e-4 / pn).sqrt();
        let y = RealSignal::new(48_000.0, x.samples().iter().zip(&noise).map(|(a, n)| a + gain * n).collect()).unwrap();
        let f = audio_fidelity(&x, &y).unwrap();
        assert!((f.snr_db - 40.0).abs() < 0.5, "{}", f.snr_db);
    }

    #[test]
    fn fidelity_degenerate_and_errors() {
        let z = RealSignal::constant(48_000.0, 0.0, 100).unwrap();
        let x = generate_tone(ToneSpec::new(1000.0, 1.0), 0.01, 48_000.0).unwrap();
        assert!(audio_fidelity(&x, &z).unwrap().degenerate);
        let empty = RealSignal::new(48_000.0, vec![]).unwrap();
        assert!(audio_fidelity(&x, &empty).is_err());
        let other = RealSignal::constant(44_100.0, 1.0, 10).unwrap();
        assert!(audio_fidelity(&x, &other).is_err());
    }

    proptest! {
        #[test]
        fn tone_peak_within_one_bin(f in 100.0f64..30_000.0, w in 0usize..4) {
            let window = [Window::Rectangular, Window::Hann, Window::BlackmanHarris, Window::FlatTop][w];
            let tone = generate_tone(ToneSpec::new(f, 1.0), 0.0625, FS).unwrap();
            let s = compute_spectrum(&tone, 4096, window).unwrap();
            prop_assert!((s.peak_frequency() - f).abs() <= s.bin_width_hz);
        }

        #[test]
        fn harmonic_report_is_scale_invariant(gain in 1e-3f64..1e3) {
            let a = generate_tone(ToneSpec::new(1000.0, 1.0), 0.25, FS).unwrap();
            let b = generate_tone(ToneSpec::new(2000.0, 0.1), 0.25, FS).unwrap();
            let c = generate_tone(ToneSpec::new(3000.0, 0.03), 0.25, FS).unwrap();
            let x: Vec<f64> = (0..a.len()).map(|i| a.samples()[i] + b.samples()[i] + c.samples()[i]).collect();
            let x = RealSignal::new(FS, x).unwrap();
            let r1 = measure_harmonics(&compute_spectrum(&x, 8192, Window::Hann).unwrap(), 1000.0, 3).unwrap();
            let r2 = measure_harmonics(&compute_spectrum(&x.scaled(gain).unwrap(), 8192, Window::Hann).unwrap(), 1000.0, 3).unwrap();
            for (h1, h2) in r1.harmonics.iter().zip(&r2.harmonics) {
                prop_assert!((h1.level_dbc - h2.level_dbc).abs() < 0.01);
            }
        }
    }
}
