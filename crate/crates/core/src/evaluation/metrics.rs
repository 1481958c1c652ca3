//! Binary-relevance ranking metrics at a cutoff.
//!
//! A repeated item in `retrieved` counts as non-relevant after its first
//! occurrence, which keeps every metric inside `[0, 1]`.

use std::collections::HashSet;
use std::hash::Hash;

use crate::error::{Error, Result};

fn check<T>(relevant: &HashSet<T>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidCutoff);
    }
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    Ok(())
}

/// Relevance flags of the first `k` retrieved items.
fn gains<T: Eq + Hash>(retrieved: &[T], relevant: &HashSet<T>, k: usize) -> Vec<bool> {
    let mut seen = HashSet::new();
    retrieved
        .iter()
        .take(k)
        .map(|item| relevant.contains(item) && seen.insert(item))
        .collect()
}

/// `|top-k ∩ relevant| / |relevant|`.
pub fn recall_at_k<T: Eq + Hash>(retrieved: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    let hits = gains(retrieved, relevant, k)
        .into_iter()
        .filter(|&g| g)
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Average precision at `k`, normalized by `min(k, |relevant|)`.
pub fn ap_at_k<T: Eq + Hash>(retrieved: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, relevant_here) in gains(retrieved, relevant, k).into_iter().enumerate() {
        if relevant_here {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(relevant.len()) as f64)
}

/// nDCG at `k` with gain 1 for relevant items and `1/log2(i+1)` discount.
pub fn ndcg_at_k<T: Eq + Hash>(retrieved: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = gains(retrieved, relevant, k)
        .into_iter()
        .enumerate()
        .filter(|&(_, g)| g)
        .map(|(i, _)| discount(i))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    Ok(dcg / idcg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&'static str]) -> HashSet<&'static str> {
        items.iter().copied().collect()
    }

    #[test]
    fn recall_examples() {
        assert_eq!(
            recall_at_k(&["A1", "A2", "A3"], &set(&["A2", "A5"]), 3).unwrap(),
            0.5
        );
        assert_eq!(
            recall_at_k(&["A1", "A2"], &set(&["A2", "A1"]), 5).unwrap(),
            1.0
        );
        assert_eq!(recall_at_k(&["A1", "A2"], &set(&["A2"]), 1).unwrap(), 0.0);
    }

    #[test]
    fn ap_examples() {
        let ap = ap_at_k(&["r1", "n", "r2"], &set(&["r1", "r2"]), 3).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-12);
        assert!((ap - 0.833_333_333_333_333_3).abs() < 1e-12);
        assert_eq!(ap_at_k(&["r"], &set(&["r"]), 1).unwrap(), 1.0);
        assert_eq!(ap_at_k(&["x", "y"], &set(&["r"]), 2).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let v = ndcg_at_k(&["n", "r"], &set(&["r"]), 2).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert_eq!(
            ndcg_at_k(&["a", "b", "x"], &set(&["a", "b"]), 3).unwrap(),
            1.0
        );
        assert_eq!(ndcg_at_k(&["x", "y"], &set(&["a"]), 2).unwrap(), 0.0);
    }

    #[test]
    fn duplicates_do_not_inflate() {
        let rel = set(&["a"]);
        assert_eq!(recall_at_k(&["a", "a"], &rel, 2).unwrap(), 1.0);
        assert_eq!(ap_at_k(&["a", "a"], &rel, 2).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&["a", "a"], &rel, 2).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        let empty: HashSet<&str> = HashSet::new();
        assert!(matches!(
            recall_at_k(&["a"], &empty, 1),
            Err(Error::EmptyRelevantSet)
        ));
        assert!(matches!(
            ap_at_k(&["a"], &empty, 1),
            Err(Error::EmptyRelevantSet)
        ));
        assert!(matches!(
            ndcg_at_k(&["a"], &empty, 1),
            Err(Error::EmptyRelevantSet)
        ));
        assert!(matches!(
            ndcg_at_k(&["a"], &set(&["a"]), 0),
            Err(Error::InvalidCutoff)
        ));
    }
}
