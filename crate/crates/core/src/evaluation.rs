//! Correlating distance measures with downstream scores, zero-shot family
//! classification, character error rate and report files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, DistanceTable, LanguageRegistry, ScoreTable, Split, Task};
use crate::model::{classify, FeatureSet, ModelParams};
use crate::{Error, Result};

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Validation(format!(
            "spearman: length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "spearman needs at least 2 pairs, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Validation("spearman: non-finite input".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "spearman: one side has all values tied".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Which language is held fixed while the other side varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anchor {
    /// One source language, all targets.
    Source,
    /// One target language, all sources.
    Target,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::Source => "source",
            Anchor::Target => "target",
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Anchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" | "fix_source" => Ok(Anchor::Source),
            "target" | "fix_target" => Ok(Anchor::Target),
            _ => Err(Error::Validation(format!(
                "unknown anchor `{s}` (expected source or target)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub source: String,
    pub target: String,
    pub distance: f64,
    pub score: f64,
    pub distance_rank: f64,
    pub score_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub measure: String,
    pub task: Task,
    pub anchor: Anchor,
    pub anchor_lang: String,
    pub n: usize,
    pub rho: f64,
    pub interpretation: String,
    pub pairs: Vec<PairEntry>,
}

fn interpretation(task: Task) -> String {
    match task {
        Task::Cer | Task::Mcd => format!(
            "rho is distance vs raw {task}; lower {task} is better, so a more positive rho means the measure predicts transfer better"
        ),
        Task::Mos => "rho is distance vs raw MOS; higher MOS is better, so a more negative rho means the measure predicts transfer better".into(),
    }
}

/// Spearman correlation between distances and scores over every scored pair
/// that involves `anchor_lang` on the anchored side. Same-language pairs are
/// included.
pub fn correlate(
    table: &DistanceTable,
    scores: &ScoreTable,
    anchor: Anchor,
    anchor_lang: &str,
) -> Result<CorrelationReport> {
    let mut pairs = Vec::new();
    for (s, t, score) in scores.iter() {
        let anchored = match anchor {
            Anchor::Source => s,
            Anchor::Target => t,
        };
        if anchored != anchor_lang {
            continue;
        }
        if let Some(d) = table.get(s, t) {
            pairs.push(PairEntry {
                source: s.to_string(),
                target: t.to_string(),
                distance: d,
                score,
                distance_rank: 0.0,
                score_rank: 0.0,
            });
        }
    }
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} and {} share {} pair(s) anchored at {anchor} `{anchor_lang}`; need at least 2",
            table.name(),
            scores.task(),
            pairs.len()
        )));
    }
    let ds: Vec<f64> = pairs.iter().map(|p| p.distance).collect();
    let ss: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    let rho = spearman(&ds, &ss)?;
    for (p, (dr, sr)) in pairs
        .iter_mut()
        .zip(average_ranks(&ds).into_iter().zip(average_ranks(&ss)))
    {
        p.distance_rank = dr;
        p.score_rank = sr;
    }
    Ok(CorrelationReport {
        measure: table.name().to_string(),
        task: scores.task(),
        anchor,
        anchor_lang: anchor_lang.to_string(),
        n: pairs.len(),
        rho,
        interpretation: interpretation(scores.task()),
        pairs,
    })
}

/// Candidate sources for one target, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub measure: String,
    pub target: String,
    pub sources: Vec<(String, f64)>,
}

pub fn report_csv(reports: &[CorrelationReport]) -> String {
    let mut out = String::from("measure,anchor,anchor_lang,n,rho\n");
    for r in sorted_reports(reports) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.measure, r.anchor, r.anchor_lang, r.n, r.rho
        ));
    }
    out
}

pub fn rankings_csv(rankings: &[Ranking]) -> String {
    let mut out = String::from("measure,target,rank,source,distance\n");
    for r in sorted_rankings(rankings) {
        for (i, (s, d)) in r.sources.iter().enumerate() {
            out.push_str(&format!("{},{},{},{s},{d}\n", r.measure, r.target, i));
        }
    }
    out
}

fn sorted_reports(reports: &[CorrelationReport]) -> Vec<&CorrelationReport> {
    let mut v: Vec<_> = reports.iter().collect();
    v.sort_by(|a, b| {
        (&a.measure, a.anchor, &a.anchor_lang, a.task.as_str()).cmp(&(
            &b.measure,
            b.anchor,
            &b.anchor_lang,
            b.task.as_str(),
        ))
    });
    v
}

fn sorted_rankings(rankings: &[Ranking]) -> Vec<&Ranking> {
    let mut v: Vec<_> = rankings.iter().collect();
    v.sort_by(|a, b| (&a.measure, &a.target).cmp(&(&b.measure, &b.target)));
    v
}

#[derive(Serialize)]
struct ReportFile<'a> {
    correlations: Vec<&'a CorrelationReport>,
    rankings: Vec<&'a Ranking>,
}

/// Writes `report.csv` and `report.json` (plus `rankings.csv` when there
/// are rankings) into `dir`, creating it if needed.
pub fn emit_report(
    dir: impl AsRef<Path>,
    reports: &[CorrelationReport],
    rankings: &[Ranking],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("report.csv", &report_csv(reports))?;
    if !rankings.is_empty() {
        write("rankings.csv", &rankings_csv(rankings))?;
    }
    let file = ReportFile {
        correlations: sorted_reports(reports),
        rankings: sorted_rankings(rankings),
    };
    let json = serde_json::to_string_pretty(&file).expect("report serializes");
    write("report.json", &(json + "\n"))
}

/// Levenshtein distance (unit costs) over chars divided by the reference length.
pub fn cer(hypothesis: &str, reference: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(Error::Validation(
            "CER undefined for an empty reference".into(),
        ));
    }
    Ok(levenshtein(&hypothesis.chars().collect::<Vec<_>>(), &r) as f64 / r.len() as f64)
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// One classified utterance for the family protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyPrediction {
    pub utterance: String,
    pub split: Split,
    pub language: String,
    pub predicted_language: String,
    pub true_family: String,
    pub predicted_family: String,
}

impl FamilyPrediction {
    pub fn correct(&self) -> bool {
        self.true_family == self.predicted_family
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEvalResult {
    /// Accuracy per evaluated split; splits without utterances are absent.
    pub accuracy: BTreeMap<Split, f64>,
    /// true family -> predicted family -> utterance count.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub n_families: usize,
    pub n_evaluated: usize,
    pub predictions: Vec<FamilyPrediction>,
}

/// Tallies family-level accuracy from per-utterance predictions.
pub fn tally_family(predictions: Vec<FamilyPrediction>) -> FamilyEvalResult {
    let mut per_split: BTreeMap<Split, (usize, usize)> = BTreeMap::new();
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut families = std::collections::BTreeSet::new();
    for p in &predictions {
        let e = per_split.entry(p.split).or_insert((0, 0));
        e.1 += 1;
        if p.correct() {
            e.0 += 1;
        }
        *confusion
            .entry(p.true_family.clone())
            .or_default()
            .entry(p.predicted_family.clone())
            .or_insert(0) += 1;
        families.insert(p.true_family.clone());
        families.insert(p.predicted_family.clone());
    }
    FamilyEvalResult {
        accuracy: per_split
            .into_iter()
            .map(|(s, (c, n))| (s, c as f64 / n as f64))
            .collect(),
        confusion,
        n_families: families.len(),
        n_evaluated: predictions.len(),
        predictions,
    }
}

/// Zero-shot family classification over the val and test splits: each
/// utterance is classified into a training language, and counts as correct
/// when that language's family equals the family of the true language.
pub fn eval_family_classification(
    params: &ModelParams<f32>,
    manifest: &CorpusManifest,
    registry: &LanguageRegistry,
    train_languages: &[String],
    features: &FeatureSet,
) -> Result<FamilyEvalResult> {
    if train_languages != params.config.languages.as_slice() {
        return Err(Error::Validation(format!(
            "checkpoint classifies over [{}], expected [{}]",
            params.config.languages.join(","),
            train_languages.join(",")
        )));
    }
    manifest.check_zero_shot()?;
    let mut predictions = Vec::new();
    for split in [Split::Val, Split::Test] {
        for u in manifest.split(split) {
            if train_languages.contains(&u.language) {
                return Err(Error::Validation(format!(
                    "evaluated language `{}` is also a training language",
                    u.language
                )));
            }
            let true_family = registry.family(&u.language)?.to_string();
            let spec = features
                .get(&u.id)
                .ok_or_else(|| Error::lookup("features for utterance", &u.id))?;
            let (class, _) = classify(params, spec)?;
            let predicted_language = train_languages[class].clone();
            let predicted_family = registry.family(&predicted_language)?.to_string();
            predictions.push(FamilyPrediction {
                utterance: u.id.clone(),
                split,
                language: u.language.clone(),
                predicted_language,
                true_family,
                predicted_family,
            });
        }
    }
    if predictions.is_empty() {
        return Err(Error::InsufficientData(
            "no val or test utterances to evaluate".into(),
        ));
    }
    Ok(tally_family(predictions))
}
