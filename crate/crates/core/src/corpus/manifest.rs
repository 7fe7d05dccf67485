use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_iso, SAMPLE_RATE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

/// One audio sample with its language label.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub language: String,
    pub audio_path: PathBuf,
    /// Romanized transcript, printable ASCII only.
    pub text: Option<String>,
    pub split: Split,
    /// Known once the audio has been read.
    pub sample_count: Option<usize>,
    pub sample_rate: u32,
}

impl Utterance {
    pub fn new(id: &str, language: &str, audio_path: impl Into<PathBuf>, split: Split) -> Self {
        Utterance {
            id: id.to_string(),
            language: language.to_string(),
            audio_path: audio_path.into(),
            text: None,
            split,
            sample_count: None,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn with_text(mut self, text: &str) -> Self {
        self.text = Some(text.to_string());
        self
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("empty utterance id".into()));
        }
        check_iso(&self.language, &format!("utterance `{}`", self.id))?;
        if let Some(text) = &self.text {
            if let Some(c) = text.chars().find(|c| !(' '..='~').contains(c)) {
                return Err(Error::Validation(format!(
                    "utterance `{}`: text contains non-printable-ASCII character {c:?}",
                    self.id
                )));
            }
        }
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::Validation(format!(
                "utterance `{}`: sample rate {} != {SAMPLE_RATE}",
                self.id, self.sample_rate
            )));
        }
        Ok(())
    }
}

/// Ordered list of utterances, each tagged with its split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusManifest {
    records: Vec<Utterance>,
    zero_shot: bool,
}

impl CorpusManifest {
    pub fn new(records: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate utterance id `{}`",
                    r.id
                )));
            }
        }
        Ok(CorpusManifest {
            records,
            zero_shot: false,
        })
    }

    /// Flags the manifest as a zero-shot split: no val/test language may
    /// appear in train.
    pub fn into_zero_shot(mut self) -> Result<Self> {
        self.zero_shot = true;
        self.check_zero_shot()?;
        Ok(self)
    }

    pub fn is_zero_shot(&self) -> bool {
        self.zero_shot
    }

    pub fn check_zero_shot(&self) -> Result<()> {
        let train = self.languages(Split::Train);
        for r in self.records.iter().filter(|r| r.split != Split::Train) {
            if train.contains(&r.language) {
                return Err(Error::Validation(format!(
                    "zero-shot manifest: {} language `{}` also appears in train",
                    r.split, r.language
                )));
            }
        }
        Ok(())
    }

    pub fn records(&self) -> &[Utterance] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [Utterance] {
        &mut self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Sorted set of languages in one split.
    pub fn languages(&self, split: Split) -> BTreeSet<String> {
        self.split(split).map(|r| r.language.clone()).collect()
    }

    pub fn all_languages(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.language.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    id: String,
    lang: String,
    audio: PathBuf,
    split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// Reads a JSON Lines manifest. Blank lines are ignored.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&content, &path.display().to_string())
}

pub(crate) fn parse_manifest(content: &str, origin: &str) -> Result<CorpusManifest> {
    let mut records = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{origin}:{lineno}");
        let raw: ManifestLine = serde_json::from_str(line).map_err(|e| Error::parse(at(), e))?;
        let split: Split = raw
            .split
            .parse()
            .map_err(|e: Error| Error::Validation(format!("{}: {e}", at())))?;
        let mut u = Utterance::new(&raw.id, &raw.lang, raw.audio, split);
        u.text = raw.text;
        u.validate()
            .map_err(|e| Error::Validation(format!("{}: {e}", at())))?;
        records.push(u);
    }
    CorpusManifest::new(records)
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &CorpusManifest) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in manifest.records() {
        let line = ManifestLine {
            id: r.id.clone(),
            lang: r.language.clone(),
            audio: r.audio_path.clone(),
            split: r.split.to_string(),
            text: r.text.clone(),
        };
        serde_json::to_writer(&mut out, &line).expect("manifest line serializes");
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}
