//! Log-Mel features, SpecAugment masking, Mel-cepstral distortion and the
//! on-disk feature cache.

mod augment;
mod cache;
mod mcd;
mod mel;

pub use augment::{spec_augment, AugmentPolicy, WidthMode};
pub use cache::{
    feature_cache_bytes, read_feature_cache, write_feature_cache, FEATURE_CACHE_MAGIC,
    FEATURE_CACHE_VERSION,
};
pub use mcd::{is_good_quality, mcd, mcd_with, MCD_QUALITY_THRESHOLD};
pub use mel::{
    hz_to_mel, mel_spectrogram, mel_to_hz, MelConfig, MelExtractor, MelSpectrogram, N_MELS,
};

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{read_wav, CorpusManifest};
use crate::Result;

/// Reads every utterance's audio and computes its features in parallel on
/// the current rayon pool. Relative audio paths resolve against `base_dir`.
pub fn featurize_manifest(
    manifest: &CorpusManifest,
    base_dir: &Path,
    config: &MelConfig,
) -> Result<BTreeMap<String, MelSpectrogram>> {
    let extractor = MelExtractor::new(config.clone())?;
    manifest
        .records()
        .par_iter()
        .map(|u| {
            let path = base_dir.join(&u.audio_path);
            let (samples, _) = read_wav(&path)?;
            let spec = extractor.compute(&samples, &u.id)?;
            Ok((u.id.clone(), spec))
        })
        .collect()
}
