//! Mono WAV and headerless IQ file interchange.
//!
//! IQ files are interleaved little-endian `f32` I,Q pairs with no header;
//! the sample rate and center frequency travel out of band.

use std::fs;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{ComplexSignal, RealSignal};

const I16_SCALE: f64 = i16::MAX as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Int16,
    Float32,
}

/// Outcome of a WAV write.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WavWriteReport {
    /// Samples saturated to ±1.0 (16-bit only).
    pub clipped_samples: usize,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn hound_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |e| match e {
        hound::Error::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => format_err(path, other.to_string()),
    }
}

/// Reads a mono PCM or float WAV file. Integer samples are scaled to ±1.
pub fn load_wav(path: impl AsRef<Path>) -> Result<RealSignal> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(hound_err(path))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(format_err(
            path,
            format!("{} channels; only mono is supported", spec.channels),
        ));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_err(path))?,
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / I16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_err(path))?,
        (SampleFormat::Int, bits @ (8 | 24 | 32)) => {
            let scale = ((1i64 << (bits - 1)) - 1) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(hound_err(path))?
        }
        (fmt, bits) => {
            return Err(format_err(
                path,
                format!("unsupported sample format {fmt:?} at {bits} bits"),
            ))
        }
    };
    RealSignal::new(f64::from(spec.sample_rate), samples)
}

/// Writes a mono WAV. At 16 bits, samples beyond ±1 saturate and are counted.
pub fn save_wav(
    signal: &RealSignal,
    path: impl AsRef<Path>,
    bit_depth: BitDepth,
) -> Result<WavWriteReport> {
    let path = path.as_ref();
    let fs = signal.sample_rate_hz();
    if fs.fract() != 0.0 || fs > f64::from(u32::MAX) {
        return Err(format_err(
            path,
            format!("WAV needs an integer sample rate, got {fs}"),
        ));
    }
    let (bits_per_sample, sample_format) = match bit_depth {
        BitDepth::Int16 => (16, SampleFormat::Int),
        BitDepth::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: fs as u32,
        bits_per_sample,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(hound_err(path))?;
    let mut report = WavWriteReport::default();
    for &x in signal.samples() {
        match bit_depth {
            BitDepth::Float32 => writer.write_sample(x as f32),
            BitDepth::Int16 => {
                if x.abs() > 1.0 {
                    report.clipped_samples += 1;
                }
                let q = (x.clamp(-1.0, 1.0) * I16_SCALE).round() as i16;
                writer.write_sample(q)
            }
        }
        .map_err(hound_err(path))?;
    }
    writer.finalize().map_err(hound_err(path))?;
    if report.clipped_samples > 0 {
        log::warn!(
            "{}: {} samples exceeded ±1.0 and were saturated",
            path.display(),
            report.clipped_samples
        );
    }
    Ok(report)
}

pub fn load_iq(path: impl AsRef<Path>, sample_rate_hz: f64, center_hz: f64) -> Result<ComplexSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    ComplexSignal::new(sample_rate_hz, center_hz, decode_iq(&bytes).map_err(|r| format_err(path, r))?)
}

pub fn save_iq(signal: &ComplexSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_iq(signal.samples())).map_err(io_err(path))
}

/// Encodes samples as interleaved little-endian `f32` pairs.
pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 8);
    for z in samples {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8]) -> std::result::Result<Vec<Complex64>, String> {
    if bytes.len() % 8 != 0 {
        return Err(format!(
            "{} bytes is not a whole number of 8-byte IQ samples",
            bytes.len()
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let i = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let q = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(f64::from(i), f64::from(q))
        })
        .collect())
}

/// Writes a headerless little-endian `f32` real sample stream.
pub fn save_raw_real(signal: &RealSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = signal
        .samples()
        .iter()
        .flat_map(|&x| (x as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(io_err(path))
}

/// Reads a headerless little-endian `f32` real sample stream.
pub fn load_raw_real(path: impl AsRef<Path>, sample_rate_hz: f64) -> Result<RealSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 4 != 0 {
        return Err(format_err(path, "length is not a multiple of 4 bytes"));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    RealSignal::new(sample_rate_hz, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_tone, ToneSpec};

    #[test]
    fn float_wav_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let tone = generate_tone(ToneSpec::new(1e3, 0.8), 0.01, 48_000.0).unwrap();
        let tone = tone.map(|x| f64::from(x as f32)).unwrap();
        save_wav(&tone, &path, BitDepth::Float32).unwrap();
        assert_eq!(load_wav(&path).unwrap(), tone);
    }

    #[test]
    fn int16_wav_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone16.wav");
        let tone = generate_tone(ToneSpec::new(1e3, 0.9), 0.01, 48_000.0).unwrap();
        let report = save_wav(&tone, &path, BitDepth::Int16).unwrap();
        assert_eq!(report.clipped_samples, 0);
        let back = load_wav(&path).unwrap();
        for (a, b) in tone.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / I16_SCALE);
        }
    }

    #[test]
    fn int16_save_saturates_loud_tone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loud.wav");
        let tone = generate_tone(ToneSpec::new(1e3, 2.0), 0.01, 48_000.0).unwrap();
        let report = save_wav(&tone, &path, BitDepth::Int16).unwrap();
        assert!(report.clipped_samples > 0);
        let back = load_wav(&path).unwrap();
        assert_eq!(back.peak(), 1.0);
    }

    #[test]
    fn silence_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for _ in 0..441 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let s = load_wav(&path).unwrap();
        assert_eq!(s.sample_rate_hz(), 44_100.0);
        assert_eq!(s.len(), 441);
        assert!(s.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn iq_constant_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.iq");
        let s = ComplexSignal::new(1e6, 0.0, vec![Complex64::new(1.0, 0.0); 16]).unwrap();
        save_iq(&s, &path).unwrap();
        assert_eq!(load_iq(&path, 1e6, 0.0).unwrap(), s);
    }

    #[test]
    fn iq_file_of_32_bytes_has_four_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("four.iq");
        fs::write(&path, [0u8; 32]).unwrap();
        assert_eq!(load_iq(&path, 1e6, 0.0).unwrap().len(), 4);
    }

    #[test]
    fn truncated_iq_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.iq");
        fs::write(&path, [0u8; 12]).unwrap();
        assert!(matches!(load_iq(&path, 1e6, 0.0), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_wav("/nonexistent/definitely/missing.wav"),
            Err(Error::Io { .. })
        ));
    }
}
