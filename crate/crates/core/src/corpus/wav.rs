use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::SAMPLE_RATE;
use crate::{Error, Result};

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::UnsupportedFormat(format!("{}: {other}", path.display())),
    }
}

/// Reads a 16-bit PCM mono 16 kHz WAV file, scaling samples by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f32>, u32)> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, expected mono",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: expected 16-bit PCM, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedFormat(format!(
            "{}: sample rate {} Hz, expected {SAMPLE_RATE} Hz (no resampling)",
            path.display(),
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f32::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Ok((samples, spec.sample_rate))
}

/// Writes samples in [-1, 1] as 16-bit PCM mono; out-of-range values are clipped.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f32], rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in samples {
        let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_of_silence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_wav(&p, &vec![0.0; 16000], SAMPLE_RATE).unwrap();
        let (s, rate) = read_wav(&p).unwrap();
        assert_eq!(rate, 16000);
        assert_eq!(s.len(), 16000);
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_scale_negative_is_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sq.wav");
        write_wav(&p, &[-1.0, 0.5, -1.0, 0.5], SAMPLE_RATE).unwrap();
        let (s, _) = read_wav(&p).unwrap();
        assert_eq!(s, vec![-1.0, 0.5, -1.0, 0.5]);
    }

    #[test]
    fn wrong_rate_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cd.wav");
        write_wav(&p, &[0.0; 441], 44_100).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn stereo_and_float_are_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for _ in 0..4 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedFormat(_))));

        let q = dir.path().join("fl.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&q, spec).unwrap();
        w.write_sample(0.0f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&q), Err(Error::UnsupportedFormat(_))));
    }
}
