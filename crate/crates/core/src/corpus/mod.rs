//! Corpus ingestion: manifests, language metadata, family trees, distance
//! and score tables, and 16 kHz PCM audio.
//!
//! Everything here validates on load and is immutable afterwards.

mod manifest;
mod tables;
mod tree;
mod wav;

pub use manifest::{load_manifest, save_manifest, CorpusManifest, Split, Utterance};
pub use tables::{
    distance_table_csv, load_distance_table, load_registry, load_score_table, save_distance_table,
    save_registry, save_score_table, DistanceTable, LanguageRegistry, MeasureKind, Polarity,
    RegistryEntry, ScoreTable, Task,
};
pub use tree::{load_tree, save_tree, FamilyTree, TreeNode};
pub use wav::{read_wav, write_wav};

/// The only sample rate the toolkit accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// Three lowercase ASCII letters.
pub fn is_iso639_3(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_lowercase())
}

pub(crate) fn check_iso(code: &str, context: &str) -> crate::Result<()> {
    if is_iso639_3(code) {
        Ok(())
    } else {
        Err(crate::Error::Validation(format!(
            "{context}: `{code}` is not a three-letter lowercase ISO 639-3 code"
        )))
    }
}
