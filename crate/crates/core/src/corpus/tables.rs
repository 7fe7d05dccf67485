use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::check_iso;
use crate::distances::Coordinate;
use crate::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-9;

fn csv_reader(path: &Path, expected: &[&str]) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::parse(
            format!("{}:1", path.display()),
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(rdr)
}

fn row_location(path: &Path, err_or_pos: Option<&csv::Position>) -> String {
    match err_or_pos {
        Some(p) => format!("{}:{}", path.display(), p.line()),
        None => path.display().to_string(),
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(
    path: &Path,
    expected: &[&str],
) -> Result<Vec<(String, T)>> {
    let mut rdr = csv_reader(path, expected)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(row_location(path, e.position()), &e))?;
        let at = row_location(path, rec.position());
        let row: T = rec
            .deserialize(Some(&csv::StringRecord::from(expected.to_vec())))
            .map_err(|e| Error::parse(at.clone(), e))?;
        rows.push((at, row));
    }
    Ok(rows)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Registry

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub family: String,
    pub coordinate: Coordinate,
}

/// ISO code to family label and coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LanguageRegistry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl LanguageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lang: &str, family: &str, lat: f64, lon: f64) -> Result<()> {
        check_iso(lang, "registry")?;
        if family.trim().is_empty() {
            return Err(Error::Validation(format!(
                "registry: empty family for `{lang}`"
            )));
        }
        let coordinate = Coordinate::new(lat, lon)?;
        if self.entries.contains_key(lang) {
            return Err(Error::Validation(format!(
                "registry: duplicate language `{lang}`"
            )));
        }
        self.entries.insert(
            lang.to_string(),
            RegistryEntry {
                family: family.to_string(),
                coordinate,
            },
        );
        Ok(())
    }

    pub fn get(&self, lang: &str) -> Result<&RegistryEntry> {
        self.entries
            .get(lang)
            .ok_or_else(|| Error::lookup("registry language", lang))
    }

    pub fn family(&self, lang: &str) -> Result<&str> {
        self.get(lang).map(|e| e.family.as_str())
    }

    pub fn coordinate(&self, lang: &str) -> Result<Coordinate> {
        self.get(lang).map(|e| e.coordinate)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &RegistryEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Deserialize)]
struct RegistryRow {
    lang: String,
    family: String,
    lat: f64,
    lon: f64,
}

/// Reads a `lang,family,lat,lon` CSV.
pub fn load_registry(path: impl AsRef<Path>) -> Result<LanguageRegistry> {
    let path = path.as_ref();
    let mut reg = LanguageRegistry::new();
    for (at, row) in read_rows::<RegistryRow>(path, &["lang", "family", "lat", "lon"])? {
        reg.insert(&row.lang, &row.family, row.lat, row.lon)
            .map_err(|e| Error::Validation(format!("{at}: {e}")))?;
    }
    Ok(reg)
}

pub fn save_registry(path: impl AsRef<Path>, reg: &LanguageRegistry) -> Result<()> {
    let mut out = String::from("lang,family,lat,lon\n");
    for (lang, e) in reg.iter() {
        out.push_str(&format!(
            "{lang},{},{},{}\n",
            csv_field(&e.family),
            e.coordinate.latitude(),
            e.coordinate.longitude()
        ));
    }
    write_file(path.as_ref(), out.as_bytes())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// Distance tables

/// Which measure a distance table holds. Determines the admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    Genetic,
    Inventory,
    Syntactic,
    Phonological,
    Featural,
    Geographic,
    SpeechCe,
    SpeechSc,
    Multimodal,
    Ensemble,
    Custom,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 11] = [
        MeasureKind::Genetic,
        MeasureKind::Inventory,
        MeasureKind::Syntactic,
        MeasureKind::Phonological,
        MeasureKind::Featural,
        MeasureKind::Geographic,
        MeasureKind::SpeechCe,
        MeasureKind::SpeechSc,
        MeasureKind::Multimodal,
        MeasureKind::Ensemble,
        MeasureKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::Genetic => "genetic",
            MeasureKind::Inventory => "inventory",
            MeasureKind::Syntactic => "syntactic",
            MeasureKind::Phonological => "phonological",
            MeasureKind::Featural => "featural",
            MeasureKind::Geographic => "geographic",
            MeasureKind::SpeechCe => "speech-ce",
            MeasureKind::SpeechSc => "speech-sc",
            MeasureKind::Multimodal => "multimodal",
            MeasureKind::Ensemble => "ensemble",
            MeasureKind::Custom => "custom",
        }
    }

    /// Closed range of admissible values, `None` when only finiteness is required.
    pub fn range(self) -> Option<(f64, f64)> {
        match self {
            MeasureKind::Genetic
            | MeasureKind::Inventory
            | MeasureKind::Syntactic
            | MeasureKind::Phonological
            | MeasureKind::Featural
            | MeasureKind::Ensemble => Some((0.0, 1.0)),
            MeasureKind::SpeechCe | MeasureKind::SpeechSc | MeasureKind::Multimodal => {
                Some((0.0, 2.0))
            }
            MeasureKind::Geographic => Some((0.0, f64::INFINITY)),
            MeasureKind::Custom => None,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown measure name `{s}`")))
    }
}

/// Symmetric pairwise language distances.
///
/// Both orders of every pair are stored, so lookups never need to know
/// which order the source file used.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    kind: MeasureKind,
    values: BTreeMap<(String, String), f64>,
    note: Option<String>,
}

impl DistanceTable {
    /// Builds a table from directed entries, mirroring missing reverse pairs.
    pub fn new(
        kind: MeasureKind,
        entries: impl IntoIterator<Item = (String, String, f64)>,
    ) -> Result<Self> {
        let mut values: BTreeMap<(String, String), f64> = BTreeMap::new();
        for (a, b, d) in entries {
            if !d.is_finite() {
                return Err(Error::Validation(format!(
                    "{kind}: non-finite distance for ({a}, {b})"
                )));
            }
            if let Some((lo, hi)) = kind.range() {
                if d < lo || d > hi {
                    return Err(Error::Validation(format!(
                        "{kind}: distance {d} for ({a}, {b}) outside [{lo}, {hi}]"
                    )));
                }
            }
            if a == b && d.abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "{kind}: d({a}, {a}) = {d}, expected 0"
                )));
            }
            if let Some(prev) = values.insert((a.clone(), b.clone()), d) {
                if (prev - d).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "{kind}: conflicting duplicate entries for ({a}, {b}): {prev} vs {d}"
                    )));
                }
            }
        }
        let mut table = DistanceTable {
            kind,
            values,
            note: None,
        };
        table.symmetrize()?;
        Ok(table)
    }

    fn symmetrize(&mut self) -> Result<()> {
        let mut mirrored = Vec::new();
        for ((a, b), &d) in &self.values {
            match self.values.get(&(b.clone(), a.clone())) {
                Some(&r) if (r - d).abs() > SYMMETRY_TOLERANCE => {
                    return Err(Error::Validation(format!(
                        "{}: asymmetric entries d({a}, {b}) = {d} vs d({b}, {a}) = {r}",
                        self.kind
                    )));
                }
                Some(_) => {}
                None => mirrored.push(((b.clone(), a.clone()), d)),
            }
        }
        self.values.extend(mirrored);
        Ok(())
    }

    /// Idempotent; returns an equal table.
    pub fn symmetrized(&self) -> Result<Self> {
        let mut t = self.clone();
        t.symmetrize()?;
        Ok(t)
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        self.kind.as_str()
    }

    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    /// Free-form comment written as a `#` line above the header.
    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.values.get(&(a.to_string(), b.to_string())).copied()
    }

    /// Like [`get`](Self::get) but reports a coverage error.
    pub fn require(&self, a: &str, b: &str) -> Result<f64> {
        self.get(a, b).ok_or_else(|| Error::Coverage {
            table: self.name().to_string(),
            a: a.to_string(),
            b: b.to_string(),
        })
    }

    /// All stored ordered pairs (both orientations).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.values
            .iter()
            .map(|((a, b), &d)| (a.as_str(), b.as_str(), d))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Deserialize)]
struct DistanceRow {
    lang_a: String,
    lang_b: String,
    distance: f64,
}

/// Reads a `lang_a,lang_b,distance` CSV; `#` lines are comments.
pub fn load_distance_table(path: impl AsRef<Path>, kind: MeasureKind) -> Result<DistanceTable> {
    let path = path.as_ref();
    let rows = read_rows::<DistanceRow>(path, &["lang_a", "lang_b", "distance"])?;
    let note = fs::read_to_string(path)
        .map_err(|e| Error::io(path, e))?
        .lines()
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string());
    let table = DistanceTable::new(
        kind,
        rows.into_iter()
            .map(|(_, r)| (r.lang_a, r.lang_b, r.distance)),
    )
    .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok(DistanceTable { note, ..table })
}

/// Canonical form: one row per unordered pair with `lang_a <= lang_b`, sorted.
pub fn distance_table_csv(table: &DistanceTable) -> String {
    let mut out = String::new();
    if let Some(note) = &table.note {
        out.push_str(&format!("# {note}\n"));
    }
    out.push_str("lang_a,lang_b,distance\n");
    for (a, b, d) in table.iter().filter(|(a, b, _)| a <= b) {
        out.push_str(&format!("{a},{b},{d}\n"));
    }
    out
}

pub fn save_distance_table(path: impl AsRef<Path>, table: &DistanceTable) -> Result<()> {
    write_file(path.as_ref(), distance_table_csv(table).as_bytes())
}

// ---------------------------------------------------------------------------
// Score tables

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cer,
    Mcd,
    Mos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    LowerIsBetter,
    HigherIsBetter,
}

impl Task {
    pub fn polarity(self) -> Polarity {
        match self {
            Task::Cer | Task::Mcd => Polarity::LowerIsBetter,
            Task::Mos => Polarity::HigherIsBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cer => "CER",
            Task::Mcd => "MCD",
            Task::Mos => "MOS",
        }
    }

    fn check(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                Task::Cer | Task::Mcd => v >= 0.0,
                Task::Mos => (1.0..=5.0).contains(&v),
            }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cer" => Ok(Task::Cer),
            "mcd" => Ok(Task::Mcd),
            "mos" => Ok(Task::Mos),
            _ => Err(Error::Validation(format!(
                "unknown task `{s}` (expected cer, mcd or mos)"
            ))),
        }
    }
}

/// Downstream scores per directed (source, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    task: Task,
    values: BTreeMap<(String, String), f64>,
}

impl ScoreTable {
    pub fn new(
        task: Task,
        entries: impl IntoIterator<Item = (String, String, f64)>,
    ) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (s, t, v) in entries {
            if !task.check(v) {
                return Err(Error::Validation(format!(
                    "{task}: score {v} for ({s}, {t}) out of range"
                )));
            }
            if values.insert((s.clone(), t.clone()), v).is_some() {
                return Err(Error::Validation(format!(
                    "{task}: duplicate score for ({s}, {t})"
                )));
            }
        }
        Ok(ScoreTable { task, values })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn polarity(&self) -> Polarity {
        self.task.polarity()
    }

    pub fn get(&self, source: &str, target: &str) -> Option<f64> {
        self.values
            .get(&(source.to_string(), target.to_string()))
            .copied()
    }

    /// Entries as (source, target, score), sorted by source then target.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.values
            .iter()
            .map(|((s, t), &v)| (s.as_str(), t.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Deserialize)]
struct ScoreRow {
    source: String,
    target: String,
    score: f64,
}

/// Reads a `source,target,score` CSV.
pub fn load_score_table(path: impl AsRef<Path>, task: Task) -> Result<ScoreTable> {
    let path = path.as_ref();
    let rows = read_rows::<ScoreRow>(path, &["source", "target", "score"])?;
    ScoreTable::new(
        task,
        rows.into_iter().map(|(_, r)| (r.source, r.target, r.score)),
    )
    .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn save_score_table(path: impl AsRef<Path>, table: &ScoreTable) -> Result<()> {
    let mut out = String::from("source,target,score\n");
    for (s, t, v) in table.iter() {
        out.push_str(&format!("{s},{t},{v}\n"));
    }
    write_file(path.as_ref(), out.as_bytes())
}
