use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};

/// Row indices of a seeded (rest, held-out) partition. The held-out part
/// has `round(fraction * rows)` rows; both parts keep the original order.
pub fn split_indices(rows: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let degenerate = Error::DegenerateSplit { fraction, rows };
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(degenerate);
    }
    let n = rows as f64;
    if fraction * n < 1.0 || (1.0 - fraction) * n < 1.0 {
        return Err(degenerate);
    }
    let held = ((fraction * n).round() as usize).clamp(1, rows - 1);
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut crate::seed::rng(seed));
    let mut test = idx[..held].to_vec();
    let mut rest = idx[held..].to_vec();
    test.sort_unstable();
    rest.sort_unstable();
    Ok((rest, test))
}

/// Splits a dataset into (rest, held-out) parts with recomputed metadata.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (rest, test) = split_indices(dataset.n_rows(), fraction, seed)?;
    Ok((dataset.select_rows(&rest)?, dataset.select_rows(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let (a, b) = split_indices(10, 0.2, 7).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(split_indices(10, 0.2, 7).unwrap(), (a, b));
    }

    #[test]
    fn degenerate_fraction() {
        assert!(split_indices(10, 0.999, 1).is_err());
        assert!(split_indices(10, 0.0, 1).is_err());
        assert!(split_indices(10, 1.0, 1).is_err());
        assert!(split_indices(1, 0.5, 1).is_err());
    }
}
