use crate::{Error, Result};

/// Datasets whose synthesis MCD falls below this many dB count as good quality.
pub const MCD_QUALITY_THRESHOLD: f64 = 5.5;

pub fn is_good_quality(mcd_db: f64) -> bool {
    mcd_db < MCD_QUALITY_THRESHOLD
}

/// Frame-averaged Mel-cepstral distortion in dB between aligned cepstra
/// (`[frame][coefficient]`), ignoring the energy coefficient c0.
pub fn mcd(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    mcd_with(a, b, true)
}

pub fn mcd_with(a: &[Vec<f64>], b: &[Vec<f64>], exclude_c0: bool) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("MCD needs at least one frame".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "MCD frame count mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dim = a[0].len();
    let k = 10.0 / std::f64::consts::LN_10;
    let skip = usize::from(exclude_c0);
    let mut total = 0.0;
    for (fa, fb) in a.iter().zip(b) {
        if fa.len() != dim || fb.len() != dim {
            return Err(Error::Validation(
                "MCD inputs must be equal-shape matrices".into(),
            ));
        }
        let sq: f64 = fa
            .iter()
            .zip(fb)
            .skip(skip)
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        total += k * (2.0 * sq).sqrt();
    }
    Ok(total / a.len() as f64)
}
