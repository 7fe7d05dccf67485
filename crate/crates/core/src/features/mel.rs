use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

pub const N_MELS: usize = 80;
const LOG_FLOOR: f64 = 1e-10;
// channels whose standard deviation falls below this are treated as constant
const MIN_STD: f64 = 1e-8;

/// STFT and filterbank parameters. Defaults: 800-point FFT and window,
/// hop 200, 80 HTK Mel bands over 0-8000 Hz at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_fft: 800,
            hop: 200,
            win: 800,
            n_mels: N_MELS,
            sample_rate: 16_000,
            f_min: 0.0,
            f_max: 8000.0,
        }
    }
}

impl MelConfig {
    /// Frames produced for `len` samples (no padding).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.win {
            0
        } else {
            1 + (len - self.win) / self.hop
        }
    }
}

/// HTK Mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Normalized log-Mel spectrogram, stored channel-major (`[channel][frame]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f32>,
    frames: usize,
    frame_hop: usize,
    source_id: String,
}

impl MelSpectrogram {
    pub fn new(data: Vec<f32>, frames: usize, source_id: impl Into<String>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Validation(
                "spectrogram must have at least one frame".into(),
            ));
        }
        if data.len() != N_MELS * frames {
            return Err(Error::Validation(format!(
                "spectrogram data has {} values, expected {N_MELS} x {frames}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "spectrogram contains non-finite values".into(),
            ));
        }
        Ok(MelSpectrogram {
            data,
            frames,
            frame_hop: MelConfig::default().hop,
            source_id: source_id.into(),
        })
    }

    pub fn channels(&self) -> usize {
        N_MELS
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_hop(&self) -> usize {
        self.frame_hop
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, channel: usize, frame: usize) -> f32 {
        self.data[channel * self.frames + frame]
    }
}

/// Reusable STFT plan, window and filterbank.
pub struct MelExtractor {
    config: MelConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    // n_mels rows of n_fft/2 + 1 weights
    filters: Vec<Vec<f64>>,
    edges_hz: Vec<f64>,
}

impl MelExtractor {
    pub fn new(config: MelConfig) -> Result<Self> {
        if config.win == 0 || config.hop == 0 || config.win > config.n_fft || config.n_mels == 0 {
            return Err(Error::Validation(format!(
                "invalid Mel configuration {config:?}"
            )));
        }
        if !(config.f_min >= 0.0 && config.f_max > config.f_min) {
            return Err(Error::Validation("invalid Mel frequency range".into()));
        }
        // periodic Hann
        let window = (0..config.win)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / config.win as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);

        let lo = hz_to_mel(config.f_min);
        let hi = hz_to_mel(config.f_max);
        let edges_hz: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let n_bins = config.n_fft / 2 + 1;
        let bin_hz = f64::from(config.sample_rate) / config.n_fft as f64;
        let filters = (0..config.n_mels)
            .map(|m| {
                let (l, c, r) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let up = (f - l) / (c - l);
                        let down = (r - f) / (r - c);
                        up.min(down).max(0.0)
                    })
                    .collect()
            })
            .collect();
        Ok(MelExtractor {
            config,
            window,
            fft,
            filters,
            edges_hz,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    /// Band edges in Hz: band `m` spans `edges[m]..edges[m + 2]` and peaks at `edges[m + 1]`.
    pub fn band_edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.filters
    }

    /// Log Mel energies before normalization, `[channel][frame]`.
    pub fn log_mel(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        if samples.iter().any(|s| s.is_nan()) {
            return Err(Error::Validation("input samples contain NaN".into()));
        }
        if samples.len() < cfg.win {
            return Err(Error::TooShort(format!(
                "{} samples is shorter than one {}-sample window",
                samples.len(),
                cfg.win
            )));
        }
        let frames = cfg.frame_count(samples.len());
        let n_bins = cfg.n_fft / 2 + 1;
        let mut out = vec![vec![0.0; frames]; cfg.n_mels];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut mag = vec![0.0; n_bins];
        for t in 0..frames {
            let start = t * cfg.hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (n, w) in self.window.iter().enumerate() {
                buf[n] = Complex::new(f64::from(samples[start + n]) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (m, c) in mag.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for (row, filt) in out.iter_mut().zip(&self.filters) {
                let e: f64 = filt.iter().zip(&mag).map(|(w, m)| w * m).sum();
                row[t] = (e + LOG_FLOOR).ln();
            }
        }
        Ok(out)
    }

    /// Log-Mel spectrogram with per-channel z-normalization over frames.
    pub fn compute(&self, samples: &[f32], source_id: &str) -> Result<MelSpectrogram> {
        if self.config.n_mels != N_MELS {
            return Err(Error::Validation(format!(
                "model features require {N_MELS} Mel channels, config has {}",
                self.config.n_mels
            )));
        }
        let log_mel = self.log_mel(samples)?;
        let frames = log_mel[0].len();
        let mut data = Vec::with_capacity(N_MELS * frames);
        for row in &log_mel {
            let mean = row.iter().sum::<f64>() / frames as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames as f64;
            let std = var.sqrt();
            if std <= MIN_STD {
                data.extend(std::iter::repeat_n(0.0f32, frames));
            } else {
                data.extend(row.iter().map(|v| ((v - mean) / std) as f32));
            }
        }
        MelSpectrogram::new(data, frames, source_id)
    }
}

/// One-shot convenience wrapper around [`MelExtractor`].
pub fn mel_spectrogram(samples: &[f32], config: &MelConfig) -> Result<MelSpectrogram> {
    MelExtractor::new(config.clone())?.compute(samples, "")
}
