//! Deterministic synthetic corpora for tests and demos.
//!
//! Each language is a set of tone frequencies. An utterance is a sequence of
//! short segments; each segment is either silent or a burst of one of the
//! language's tones, all over low white noise. The on/off structure keeps
//! per-channel normalized features informative.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{save_manifest, write_wav, CorpusManifest, Split, Utterance, SAMPLE_RATE};
use crate::features::{MelConfig, MelExtractor};
use crate::model::FeatureSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLanguage {
    pub iso: String,
    pub tones_hz: Vec<f64>,
    /// Split for every utterance of a held-out language; `None` for seen
    /// languages, which use the corpus-wide train/val split.
    pub held_out: Option<Split>,
}

impl SyntheticLanguage {
    pub fn new(iso: &str, tones_hz: &[f64]) -> Self {
        SyntheticLanguage {
            iso: iso.to_string(),
            tones_hz: tones_hz.to_vec(),
            held_out: None,
        }
    }

    pub fn held_out(mut self, split: Split) -> Self {
        self.held_out = Some(split);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub languages: Vec<SyntheticLanguage>,
    pub utterances_per_language: usize,
    pub duration_s: f64,
    /// Utterances of each seen language placed in the val split.
    pub val_per_language: usize,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Four seen languages with well separated tones, 50 one-second
    /// utterances each, 10 of them held out for validation.
    pub fn four_tone(seed: u64) -> Self {
        SyntheticSpec {
            languages: vec![
                SyntheticLanguage::new("aaa", &[300.0]),
                SyntheticLanguage::new("bbb", &[800.0]),
                SyntheticLanguage::new("ccc", &[1800.0]),
                SyntheticLanguage::new("ddd", &[3500.0]),
            ],
            utterances_per_language: 50,
            duration_s: 1.0,
            val_per_language: 10,
            noise_amplitude: 0.01,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: CorpusManifest,
    /// Samples keyed by utterance id.
    pub audio: BTreeMap<String, Vec<f32>>,
}

const SEGMENT_MIN_S: f64 = 0.05;
const SEGMENT_MAX_S: f64 = 0.15;

fn utterance_audio(rng: &mut ChaCha8Rng, tones: &[f64], len: usize, noise: f64) -> Vec<f32> {
    let mut out = vec![0.0f64; len];
    let mut start = 0;
    let mut on = rng.gen_bool(0.5);
    while start < len {
        let seg = (rng.gen_range(SEGMENT_MIN_S..SEGMENT_MAX_S) * f64::from(SAMPLE_RATE)) as usize;
        let end = (start + seg.max(1)).min(len);
        if on {
            let f = tones.choose(rng).copied().unwrap_or(440.0) * rng.gen_range(0.98..1.02);
            let amp = rng.gen_range(0.3..0.6);
            let phase = rng.gen_range(0.0..2.0 * PI);
            for (n, v) in out[start..end].iter_mut().enumerate() {
                *v += amp * (2.0 * PI * f * n as f64 / f64::from(SAMPLE_RATE) + phase).sin();
            }
        }
        on = !on;
        start = end;
    }
    out.iter()
        .map(|v| (v + noise * rng.gen_range(-1.0..1.0)) as f32)
        .collect()
}

fn utterance_text(rng: &mut ChaCha8Rng, lang_index: usize) -> String {
    let letters: Vec<char> = (0..4)
        .map(|k| (b'a' + ((lang_index * 4 + k) % 26) as u8) as char)
        .collect();
    let n = rng.gen_range(4..9);
    (0..n).map(|_| *letters.choose(rng).unwrap()).collect()
}

/// Builds the corpus in memory. Audio paths are `<iso>/<id>.wav`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.languages.is_empty() || spec.utterances_per_language == 0 {
        return Err(Error::Validation(
            "synthetic corpus needs languages and utterances".into(),
        ));
    }
    if spec.val_per_language >= spec.utterances_per_language {
        return Err(Error::Validation(
            "val_per_language must leave training utterances".into(),
        ));
    }
    let len = (spec.duration_s * f64::from(SAMPLE_RATE)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    let mut audio = BTreeMap::new();
    for (li, lang) in spec.languages.iter().enumerate() {
        if lang.tones_hz.is_empty() || lang.tones_hz.iter().any(|f| !(*f > 0.0 && *f < 8000.0)) {
            return Err(Error::Validation(format!(
                "language `{}` needs tones in (0, 8000) Hz",
                lang.iso
            )));
        }
        for k in 0..spec.utterances_per_language {
            let id = format!("{}_{k:03}", lang.iso);
            let split = lang.held_out.unwrap_or(
                if k >= spec.utterances_per_language - spec.val_per_language {
                    Split::Val
                } else {
                    Split::Train
                },
            );
            let samples = utterance_audio(&mut rng, &lang.tones_hz, len, spec.noise_amplitude);
            let text = utterance_text(&mut rng, li);
            let mut u = Utterance::new(
                &id,
                &lang.iso,
                PathBuf::from(&lang.iso).join(format!("{id}.wav")),
                split,
            )
            .with_text(&text);
            u.sample_count = Some(samples.len());
            records.push(u);
            audio.insert(id, samples);
        }
    }
    Ok(SyntheticCorpus {
        manifest: CorpusManifest::new(records)?,
        audio,
    })
}

impl SyntheticCorpus {
    pub fn features(&self, config: &MelConfig) -> Result<FeatureSet> {
        use rayon::prelude::*;
        let extractor = MelExtractor::new(config.clone())?;
        self.audio
            .par_iter()
            .map(|(id, s)| Ok((id.clone(), extractor.compute(s, id)?)))
            .collect()
    }

    /// Writes the WAV files and `manifest.jsonl` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        for u in self.manifest.records() {
            let path = dir.join(&u.audio_path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_wav(&path, &self.audio[&u.id], SAMPLE_RATE)?;
        }
        let manifest = dir.join("manifest.jsonl");
        save_manifest(&manifest, &self.manifest)?;
        Ok(manifest)
    }
}
