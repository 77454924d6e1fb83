use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ArticleId, CorpusError, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_sessions: usize,
    pub n_clicks: usize,
    pub n_articles: usize,
    pub avg_session_length: f64,
    /// Gini index of the per-article click counts.
    pub gini: f64,
}

/// Gini index of non-negative counts; 0 for perfect equality.
pub fn gini(counts: &[u64]) -> f64 {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * x as f64)
        .sum();
    (weighted / (n as f64 * total as f64)).clamp(0.0, 1.0)
}

/// Summary statistics over `sessions`. The popularity distribution spans
/// `universe` plus every clicked article, so unclicked articles count as
/// zeros.
pub fn compute_stats(
    sessions: &[Session],
    universe: &[ArticleId],
) -> Result<DatasetStats, CorpusError> {
    if sessions.is_empty() {
        return Err(CorpusError::Empty("no sessions"));
    }
    let mut counts: BTreeMap<ArticleId, u64> = universe.iter().map(|&a| (a, 0)).collect();
    let mut users = HashSet::new();
    let mut n_clicks = 0;
    for s in sessions {
        users.insert(s.user);
        n_clicks += s.len();
        for a in s.articles() {
            *counts.entry(a).or_insert(0) += 1;
        }
    }
    let values: Vec<u64> = counts.values().copied().collect();
    Ok(DatasetStats {
        n_users: users.len(),
        n_sessions: sessions.len(),
        n_clicks,
        n_articles: values.len(),
        avg_session_length: n_clicks as f64 / sessions.len() as f64,
        gini: gini(&values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Mean absolute difference form of the Gini index.
    fn gini_pairwise(x: &[u64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<u64>() as f64 / n;
        let mut acc = 0.0;
        for a in x {
            for b in x {
                acc += (*a as f64 - *b as f64).abs();
            }
        }
        acc / (2.0 * n * n * mean)
    }

    #[test]
    fn equal_counts_have_zero_gini() {
        assert_eq!(gini(&[5, 5, 5, 5]), 0.0);
    }

    #[test]
    fn concentrated_counts() {
        assert!((gini(&[0, 0, 0, 100]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(compute_stats(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn matches_pairwise_definition(x in prop::collection::vec(0u64..50, 1..30)) {
            prop_assume!(x.iter().sum::<u64>() > 0);
            prop_assert!((gini(&x) - gini_pairwise(&x)).abs() < 1e-9);
        }

        #[test]
        fn scale_invariant(x in prop::collection::vec(0u64..50, 1..30), k in 1u64..20) {
            let scaled: Vec<u64> = x.iter().map(|v| v * k).collect();
            prop_assert!((gini(&x) - gini(&scaled)).abs() < 1e-9);
        }
    }
}
