//! Per-language embeddings (mean encoder output) and k-means clustering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::MelSpectrogram;
use crate::model::{encode_speech, ModelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageEmbedding {
    pub language: String,
    pub vector: Vec<f64>,
    pub n_samples: usize,
    pub model_id: String,
}

/// Mean of the unit encoder outputs over `specs`, not re-normalized.
///
/// Samples are summed in order of their source id so the result does not
/// depend on the order they were passed in.
pub fn embed_language(
    params: &ModelParams<f32>,
    specs: &[&MelSpectrogram],
    language: &str,
) -> Result<LanguageEmbedding> {
    embed_language_with_id(params, &params.model_id(), specs, language)
}

/// [`embed_language`] with a precomputed model id.
pub fn embed_language_with_id(
    params: &ModelParams<f32>,
    model_id: &str,
    specs: &[&MelSpectrogram],
    language: &str,
) -> Result<LanguageEmbedding> {
    if specs.is_empty() {
        return Err(Error::Validation(format!(
            "no samples to embed language `{language}`"
        )));
    }
    let mut sorted: Vec<&MelSpectrogram> = specs.to_vec();
    sorted.sort_by(|a, b| a.source_id().cmp(b.source_id()));
    let outputs = sorted
        .par_iter()
        .map(|s| encode_speech(params, s))
        .collect::<Result<Vec<Vec<f32>>>>()?;
    let dim = params.config.encoder.embed_dim;
    let mut sum = vec![0.0f64; dim];
    for out in &outputs {
        for (acc, v) in sum.iter_mut().zip(out) {
            *acc += f64::from(*v);
        }
    }
    let n = outputs.len() as f64;
    Ok(LanguageEmbedding {
        language: language.to_string(),
        vector: sum.into_iter().map(|v| v / n).collect(),
        n_samples: outputs.len(),
        model_id: model_id.to_string(),
    })
}

/// Embeddings from a single model, keyed by ISO code.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    model_id: String,
    embed_dim: usize,
    embeddings: BTreeMap<String, LanguageEmbedding>,
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    model_id: String,
    embed_dim: usize,
    embeddings: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    n_samples: BTreeMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(model_id: &str, embed_dim: usize) -> Self {
        EmbeddingStore {
            model_id: model_id.to_string(),
            embed_dim,
            embeddings: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, e: LanguageEmbedding) -> Result<()> {
        if e.model_id != self.model_id {
            return Err(Error::Validation(format!(
                "embedding for `{}` comes from model {}, store holds model {}",
                e.language, e.model_id, self.model_id
            )));
        }
        if e.vector.len() != self.embed_dim {
            return Err(Error::Validation(format!(
                "embedding for `{}` has dimension {}, store expects {}",
                e.language,
                e.vector.len(),
                self.embed_dim
            )));
        }
        if e.n_samples == 0 || e.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "invalid embedding for `{}`",
                e.language
            )));
        }
        self.embeddings.insert(e.language.clone(), e);
        Ok(())
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn get(&self, lang: &str) -> Result<&LanguageEmbedding> {
        self.embeddings
            .get(lang)
            .ok_or_else(|| Error::lookup("embedding for language", lang))
    }

    /// Sorted ISO codes.
    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.embeddings.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LanguageEmbedding> {
        self.embeddings.values()
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = StoreFile {
            model_id: self.model_id.clone(),
            embed_dim: self.embed_dim,
            embeddings: self
                .embeddings
                .iter()
                .map(|(k, e)| (k.clone(), e.vector.clone()))
                .collect(),
            n_samples: self
                .embeddings
                .iter()
                .map(|(k, e)| (k.clone(), e.n_samples))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("store serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: StoreFile = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("{origin}:{}", e.line()), e))?;
        let mut store = EmbeddingStore::new(&file.model_id, file.embed_dim);
        for (lang, vector) in file.embeddings {
            let n_samples = file.n_samples.get(&lang).copied().unwrap_or(1);
            store.insert(LanguageEmbedding {
                language: lang,
                vector,
                n_samples,
                model_id: file.model_id.clone(),
            })?;
        }
        Ok(store)
    }
}

pub fn save_store(path: impl AsRef<Path>, store: &EmbeddingStore) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_json(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster ids, numbered by first appearance in sorted ISO order.
    pub assignments: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest centroid, lowest id on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding over the store's embeddings.
pub fn kmeans(
    store: &EmbeddingStore,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansResult> {
    let langs: Vec<&str> = store.languages().collect();
    if k == 0 || k > langs.len() {
        return Err(Error::Validation(format!(
            "k = {k} must be between 1 and the number of languages ({})",
            langs.len()
        )));
    }
    let points: Vec<&[f64]> = langs
        .iter()
        .map(|l| store.embeddings[*l].vector.as_slice())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.gen_range(0..points.len())].to_vec()];
    let mut chosen = vec![false; points.len()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        for (i, d) in d2.iter().enumerate() {
            if *d == 0.0 {
                chosen[i] = true;
            }
        }
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            // duplicate points only: take the first not yet used
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.push(points[pick].to_vec());
    }

    let mut assign = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            inertia += d;
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        trace.push(inertia);
        iterations += 1;
        if !changed || iterations >= max_iters {
            break;
        }
        for (c, cen) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| *p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in cen.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assign)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();

    let mut relabel = BTreeMap::new();
    for &a in &assign {
        let next = relabel.len();
        relabel.entry(a).or_insert(next);
    }
    let mut ordered = vec![Vec::new(); relabel.len()];
    for (&old, &new) in &relabel {
        ordered[new] = centroids[old].clone();
    }
    Ok(KMeansResult {
        assignments: langs
            .iter()
            .zip(&assign)
            .map(|(l, a)| (l.to_string(), relabel[a]))
            .collect(),
        centroids: ordered,
        inertia,
        inertia_trace: trace,
        iterations,
    })
}
