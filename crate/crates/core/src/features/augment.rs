use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MelSpectrogram;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidthMode {
    /// Width drawn uniformly from `0..=max`.
    Uniform,
    /// Every mask is exactly `max` wide.
    Max,
}

/// SpecAugment frequency and time masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub freq_masks: usize,
    pub freq_width_max: usize,
    pub time_masks: usize,
    pub time_width_max: usize,
    pub width_mode: WidthMode,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            freq_masks: 2,
            freq_width_max: 10,
            time_masks: 2,
            time_width_max: 20,
            width_mode: WidthMode::Uniform,
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    pub fn none() -> Self {
        AugmentPolicy {
            freq_masks: 0,
            time_masks: 0,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Zeroes random channel bands and frame spans. Zero is the per-channel
/// mean of a normalized spectrogram.
pub fn spec_augment(spec: &MelSpectrogram, policy: &AugmentPolicy) -> Result<MelSpectrogram> {
    let (channels, frames) = (spec.channels(), spec.frames());
    if policy.freq_width_max > channels {
        return Err(Error::Validation(format!(
            "frequency mask width {} exceeds {channels} channels",
            policy.freq_width_max
        )));
    }
    if policy.time_width_max > frames {
        return Err(Error::Validation(format!(
            "time mask width {} exceeds {frames} frames",
            policy.time_width_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut draw = |max: usize, axis: usize| -> (usize, usize) {
        let w = match policy.width_mode {
            WidthMode::Uniform => rng.gen_range(0..=max),
            WidthMode::Max => max,
        };
        let start = rng.gen_range(0..=axis - w);
        (start, w)
    };
    let mut out = spec.clone();
    for _ in 0..policy.freq_masks {
        let (start, w) = draw(policy.freq_width_max, channels);
        out.data_mut()[start * frames..(start + w) * frames].fill(0.0);
    }
    for _ in 0..policy.time_masks {
        let (start, w) = draw(policy.time_width_max, frames);
        for c in 0..channels {
            out.data_mut()[c * frames + start..c * frames + start + w].fill(0.0);
        }
    }
    Ok(out)
}
