use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{ArticleId, Session};
use crate::recommender::{Env, Query, Recommender, ScoreError, SessionTrace};

/// Symmetric session co-occurrence counts plus per-article session support.
#[derive(Clone, Debug, Default)]
pub struct CooccurrenceMatrix {
    pairs: HashMap<(ArticleId, ArticleId), u32>,
    support: HashMap<ArticleId, u32>,
}

fn key(a: ArticleId, b: ArticleId) -> (ArticleId, ArticleId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl CooccurrenceMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts each distinct article and each unordered pair once.
    pub fn add_session(&mut self, articles: &[ArticleId]) {
        let mut items = articles.to_vec();
        items.sort_unstable();
        items.dedup();
        for (i, &a) in items.iter().enumerate() {
            *self.support.entry(a).or_insert(0) += 1;
            for &b in &items[i + 1..] {
                *self.pairs.entry((a, b)).or_insert(0) += 1;
            }
        }
    }

    pub fn count(&self, a: ArticleId, b: ArticleId) -> u32 {
        if a == b {
            return 0;
        }
        self.pairs.get(&key(a, b)).copied().unwrap_or(0)
    }

    pub fn support(&self, a: ArticleId) -> u32 {
        self.support.get(&a).copied().unwrap_or(0)
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }
}

/// Scores candidates by how often they were read with the last article.
#[derive(Clone, Debug, Default)]
pub struct CoOccurrence {
    matrix: CooccurrenceMatrix,
}

impl CoOccurrence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn matrix(&self) -> &CooccurrenceMatrix {
        &self.matrix
    }

    pub fn pair_score(&self, last: ArticleId, candidate: ArticleId) -> f64 {
        self.matrix.count(last, candidate) as f64
    }
}

impl Recommender for CoOccurrence {
    fn name(&self) -> &str {
        "co"
    }

    fn observe(&mut self, session: &Session, _: Option<&SessionTrace>, _: &Env<'_>) {
        let items: Vec<ArticleId> = session.articles().collect();
        self.matrix.add_session(&items);
    }

    fn score(&self, query: &Query<'_>, _: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        let last = query.last()?.article;
        Ok(query.candidates.iter().map(|&c| self.pair_score(last, c)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItemKnnConfig {
    pub reg_lambda: f64,
    pub alpha: f64,
}

impl Default for ItemKnnConfig {
    fn default() -> Self {
        Self { reg_lambda: 20.0, alpha: 0.75 }
    }
}

/// Smoothed cosine between session-incidence vectors.
#[derive(Clone, Debug, Default)]
pub struct ItemKnn {
    config: ItemKnnConfig,
    matrix: CooccurrenceMatrix,
}

impl ItemKnn {
    pub fn new(config: ItemKnnConfig) -> Self {
        Self { config, matrix: CooccurrenceMatrix::new() }
    }

    pub fn matrix(&self) -> &CooccurrenceMatrix {
        &self.matrix
    }

    pub fn similarity(&self, a: ArticleId, b: ArticleId) -> f64 {
        let common = self.matrix.count(a, b);
        if common == 0 {
            return 0.0;
        }
        let ItemKnnConfig { reg_lambda, alpha } = self.config;
        let sa = self.matrix.support(a) as f64 + reg_lambda;
        let sb = self.matrix.support(b) as f64 + reg_lambda;
        common as f64 / (sa.powf(alpha) * sb.powf(1.0 - alpha))
    }
}

impl Recommender for ItemKnn {
    fn name(&self) -> &str {
        "itemknn"
    }

    fn observe(&mut self, session: &Session, _: Option<&SessionTrace>, _: &Env<'_>) {
        let items: Vec<ArticleId> = session.articles().collect();
        self.matrix.add_session(&items);
    }

    fn score(&self, query: &Query<'_>, _: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        let last = query.last()?.article;
        Ok(query.candidates.iter().map(|&c| self.similarity(last, c)).collect())
    }
}
