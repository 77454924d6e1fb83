use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Decay;
use crate::corpus::{ArticleId, Session};
use crate::recommender::{Env, Query, Recommender, ScoreError, SessionTrace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrConfig {
    pub max_clicks_dist: usize,
    pub dist_between_clicks_decay: Decay,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self { max_clicks_dist: 10, dist_between_clicks_decay: Decay::Div }
    }
}

/// Directed rules `a -> b` weighted by how many clicks separate them.
#[derive(Clone, Debug, Default)]
pub struct SequentialRules {
    config: SrConfig,
    rules: HashMap<(ArticleId, ArticleId), f64>,
}

impl SequentialRules {
    pub fn new(config: SrConfig) -> Self {
        Self { config, rules: HashMap::new() }
    }

    pub fn add_sequence(&mut self, items: &[ArticleId]) {
        for (j, &later) in items.iter().enumerate() {
            let from = j.saturating_sub(self.config.max_clicks_dist);
            for (i, &earlier) in items.iter().enumerate().take(j).skip(from) {
                if earlier == later {
                    continue;
                }
                let w = self.config.dist_between_clicks_decay.weight(j - i);
                *self.rules.entry((earlier, later)).or_insert(0.0) += w;
            }
        }
    }

    pub fn rule(&self, from: ArticleId, to: ArticleId) -> f64 {
        self.rules.get(&(from, to)).copied().unwrap_or(0.0)
    }
}

impl Recommender for SequentialRules {
    fn name(&self) -> &str {
        "sr"
    }

    fn observe(&mut self, session: &Session, _: Option<&SessionTrace>, _: &Env<'_>) {
        let items: Vec<ArticleId> = session.articles().collect();
        self.add_sequence(&items);
    }

    fn score(&self, query: &Query<'_>, _: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        let last = query.last()?.article;
        Ok(query.candidates.iter().map(|&c| self.rule(last, c)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::CooccurrenceMatrix;
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<ArticleId> {
        v.iter().map(|&i| ArticleId(i)).collect()
    }

    #[test]
    fn distance_weighting() {
        let mut sr = SequentialRules::new(SrConfig::default());
        sr.add_sequence(&ids(&[0, 1, 2]));
        assert_eq!(sr.rule(ArticleId(0), ArticleId(2)), 0.5);
        assert_eq!(sr.rule(ArticleId(0), ArticleId(1)), 1.0);
        assert_eq!(sr.rule(ArticleId(1), ArticleId(0)), 0.0);
    }

    #[test]
    fn far_pairs_are_ignored() {
        let mut sr = SequentialRules::new(SrConfig { max_clicks_dist: 2, ..SrConfig::default() });
        sr.add_sequence(&ids(&[0, 1, 2, 3]));
        assert_eq!(sr.rule(ArticleId(0), ArticleId(2)), 0.5);
        assert_eq!(sr.rule(ArticleId(0), ArticleId(3)), 0.0);
    }

    proptest! {
        /// On three-click sessions, symmetric SR with Same decay counts
        /// exactly the co-occurring pairs.
        #[test]
        fn symmetric_sr_matches_co_on_triples(
            raw in prop::collection::vec(prop::collection::btree_set(0u32..6, 3..=3), 1..10)
        ) {
            let cfg = SrConfig { max_clicks_dist: 10, dist_between_clicks_decay: Decay::Same };
            let mut sr = SequentialRules::new(cfg);
            let mut co = CooccurrenceMatrix::new();
            for s in &raw {
                let v: Vec<ArticleId> = s.iter().map(|&i| ArticleId(i)).collect();
                sr.add_sequence(&v);
                co.add_session(&v);
            }
            for a in 0..6 {
                for b in 0..6 {
                    let (a, b) = (ArticleId(a), ArticleId(b));
                    let sym = sr.rule(a, b) + sr.rule(b, a);
                    prop_assert_eq!(sym, co.count(a, b) as f64);
                }
            }
        }
    }
}
