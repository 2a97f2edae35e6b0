use std::collections::HashMap;

use crate::error::{Error, Result};

/// Root mean squared error over `(actual, predicted)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("rmse needs at least one prediction"));
    }
    let sse: f64 = pairs.iter().map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

/// Mean absolute error over `(actual, predicted)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("mae needs at least one prediction"));
    }
    Ok(pairs.iter().map(|(a, p)| (a - p).abs()).sum::<f64>() / pairs.len() as f64)
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Chance-corrected agreement between two labelings of the same objects.
/// Returns 1 when both labelings are identical partitions.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same objects");
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(e: &[f64]) -> Vec<(f64, f64)> {
        e.iter().map(|&x| (3.0, 3.0 + x)).collect()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&errors(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(rmse(&errors(&[1.0, 1.0])).unwrap(), 1.0);
        assert!((rmse(&errors(&[0.0, 2.0])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&errors(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(mae(&errors(&[1.0, -1.0])).unwrap(), 1.0);
        assert_eq!(mae(&errors(&[0.0, 2.0])).unwrap(), 1.0);
        assert!(rmse(&[]).is_err());
        assert!(mae(&[]).is_err());
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        // Contingency [[1,1],[1,1]] on four objects: index 0, expected 2*2/6.
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!((v - (0.0 - 2.0 / 3.0) / (2.0 - 2.0 / 3.0)).abs() < 1e-12);
        // sklearn: adjusted_rand_score([0,0,1,1,2,2],[0,0,1,2,2,2]) = 0.4444...
        let v = adjusted_rand_index(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 2, 2, 2]);
        assert!((v - 4.0 / 9.0).abs() < 1e-12, "{v}");
    }
}
