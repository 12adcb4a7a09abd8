//! Adjusted Rand index.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn pairs(x: u64) -> u64 {
    x * x.saturating_sub(1) / 2
}

/// Chance-corrected agreement between two labelings of the same points.
///
/// Returns 1 when the chance-corrected denominator vanishes, which happens
/// when both partitions are trivial or there are fewer than two points.
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::invalid_argument(format!(
            "label lengths differ: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::invalid_argument("ari needs at least one label"));
    }
    let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        *cells.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index = cells.values().map(|&c| pairs(c)).sum::<u64>();
    let sum_a = rows.values().map(|&c| pairs(c)).sum::<u64>();
    let sum_b = cols.values().map(|&c| pairs(c)).sum::<u64>();
    let total = pairs(labels_a.len() as u64);
    Ok(adjusted(index, sum_a, sum_b, total))
}

/// `(Index - Expected) / (Max - Expected)` from integer pair counts.
///
/// Numerator and denominator are scaled by `2 * total` so both are exact
/// integers and the result is a single correctly rounded division.
fn adjusted(index: u64, sum_a: u64, sum_b: u64, total: u64) -> f64 {
    let (index, sum_a, sum_b, total) = (index as i128, sum_a as i128, sum_b as i128, total as i128);
    let num = 2 * (index * total - sum_a * sum_b);
    let den = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
    if den == 0 {
        return 1.0;
    }
    num as f64 / den as f64
}
