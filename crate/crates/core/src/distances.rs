//! Language distance measures and their combination.
//!
//! Every measure ultimately produces a [`DistanceTable`]; [`ensemble`] and
//! [`rank_sources`] consume tables regardless of where they came from.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{DistanceTable, FamilyTree, LanguageRegistry, MeasureKind};
use crate::embeddings::EmbeddingStore;
use crate::{Error, Result};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    latitude: f64,
    longitude: f64,
}

impl Coordinate {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::Validation(format!(
                "latitude {latitude} outside [-90, 90]"
            )));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::Validation(format!(
                "longitude {longitude} outside [-180, 180]"
            )));
        }
        Ok(Coordinate {
            latitude,
            longitude,
        })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }
}

/// `1 - x.y / (|x||y|)`.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!(
            "cosine distance: dimension mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Validation("cosine distance of a zero vector".into()));
    }
    Ok(1.0 - dot / (nx * ny))
}

/// Cosine distance between two stored language embeddings.
pub fn acoustic_distance(store: &EmbeddingStore, a: &str, b: &str) -> Result<f64> {
    let ea = store.get(a)?;
    let eb = store.get(b)?;
    if a == b {
        return Ok(0.0);
    }
    cosine_distance(&ea.vector, &eb.vector)
}

/// `1 - shared / max(depth_a, depth_b)`, where `shared` counts common
/// ancestors (root included) and depths are edges from the root.
pub fn genetic_distance(tree: &FamilyTree, a: &str, b: &str) -> Result<f64> {
    let pa = tree.ancestors(a)?;
    let pb = tree.ancestors(b)?;
    if a == b {
        return Ok(0.0);
    }
    let shared = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
    let depth = pa.len().max(pb.len());
    Ok(1.0 - shared as f64 / depth as f64)
}

/// Haversine great-circle distance in km.
pub fn geographic_distance(c1: Coordinate, c2: Coordinate) -> f64 {
    let (p1, p2) = (c1.latitude.to_radians(), c2.latitude.to_radians());
    let dphi = p2 - p1;
    let dlambda = (c2.longitude - c1.longitude).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn all_pairs(langs: &[String]) -> impl Iterator<Item = (&String, &String)> {
    langs
        .iter()
        .enumerate()
        .flat_map(move |(i, a)| langs[i..].iter().map(move |b| (a, b)))
}

/// Pairwise acoustic distances over every language in the store.
pub fn acoustic_table(store: &EmbeddingStore, kind: MeasureKind) -> Result<DistanceTable> {
    let langs: Vec<String> = store.languages().map(str::to_string).collect();
    let rows = all_pairs(&langs)
        .map(|(a, b)| Ok((a.clone(), b.clone(), acoustic_distance(store, a, b)?)))
        .collect::<Result<Vec<_>>>()?;
    DistanceTable::new(kind, rows).map(|t| t.with_note(format!("model_id {}", store.model_id())))
}

pub fn genetic_table(tree: &FamilyTree, langs: &[String]) -> Result<DistanceTable> {
    let rows = all_pairs(langs)
        .map(|(a, b)| Ok((a.clone(), b.clone(), genetic_distance(tree, a, b)?)))
        .collect::<Result<Vec<_>>>()?;
    DistanceTable::new(MeasureKind::Genetic, rows)
}

/// Great-circle distances in km.
pub fn geographic_table(registry: &LanguageRegistry, langs: &[String]) -> Result<DistanceTable> {
    let rows = all_pairs(langs)
        .map(|(a, b)| {
            let d = geographic_distance(registry.coordinate(a)?, registry.coordinate(b)?);
            Ok((a.clone(), b.clone(), d))
        })
        .collect::<Result<Vec<_>>>()?;
    DistanceTable::new(MeasureKind::Geographic, rows)
}

/// Min-max rescales each table over exactly `pairs` (a constant table maps
/// to 0.5) and averages the rescaled values.
///
/// Self pairs `(l, l)` in the pair set stay at 0 in the output.
pub fn ensemble(tables: &[&DistanceTable], pairs: &[(String, String)]) -> Result<DistanceTable> {
    if tables.len() < 2 {
        return Err(Error::Validation(
            "ensemble needs at least two tables".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::Validation(
            "ensemble needs a non-empty pair set".into(),
        ));
    }
    let mut sums = vec![0.0; pairs.len()];
    for table in tables {
        let values = pairs
            .iter()
            .map(|(a, b)| table.require(a, b))
            .collect::<Result<Vec<f64>>>()?;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (s, v) in sums.iter_mut().zip(&values) {
            *s += if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        }
    }
    let n = tables.len() as f64;
    let rows = pairs.iter().zip(&sums).map(|((a, b), s)| {
        let d = if a == b { 0.0 } else { (s / n).clamp(0.0, 1.0) };
        (a.clone(), b.clone(), d)
    });
    let names: Vec<&str> = tables.iter().map(|t| t.name()).collect();
    Ok(DistanceTable::new(MeasureKind::Ensemble, rows)?
        .with_note(format!("ensemble of: {}", names.join(","))))
}

/// Candidates ordered by distance to `target`, ties broken by ISO code.
/// The target itself, when listed, always comes first at distance 0.
pub fn rank_sources(
    table: &DistanceTable,
    target: &str,
    candidates: &[String],
) -> Result<Vec<(String, f64)>> {
    let unique: BTreeSet<&String> = candidates.iter().collect();
    let mut ranked = Vec::with_capacity(unique.len());
    let mut has_self = false;
    for c in unique {
        if c == target {
            has_self = true;
        } else {
            ranked.push((c.clone(), table.require(c, target)?));
        }
    }
    ranked.sort_by(|(la, da), (lb, db)| da.total_cmp(db).then_with(|| la.cmp(lb)));
    if has_self {
        ranked.insert(0, (target.to_string(), 0.0));
    }
    Ok(ranked)
}
