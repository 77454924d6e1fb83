use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Decay;
use crate::corpus::{ArticleId, Session};
use crate::recommender::{Env, Query, Recommender, ScoreError, SessionTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SessionSimilarity {
    #[default]
    Cosine,
    Jaccard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    #[default]
    Recent,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VsknnConfig {
    pub sessions_buffer_size: usize,
    pub candidate_sessions_sample_size: usize,
    pub nearest_neighbor_session_for_scoring: usize,
    pub similarity: SessionSimilarity,
    pub sampling_strategy: SamplingStrategy,
    pub first_session_clicks_decay: Decay,
}

impl Default for VsknnConfig {
    fn default() -> Self {
        Self {
            sessions_buffer_size: 3000,
            candidate_sessions_sample_size: 1000,
            nearest_neighbor_session_for_scoring: 500,
            similarity: SessionSimilarity::Cosine,
            sampling_strategy: SamplingStrategy::Recent,
            first_session_clicks_decay: Decay::Div,
        }
    }
}

/// Ring of recent sessions with an article -> session inverted index.
/// Sequence numbers grow monotonically, so each posting list is sorted.
#[derive(Clone, Debug, Default)]
pub struct SessionBuffer {
    capacity: usize,
    next_seq: u64,
    sessions: VecDeque<(u64, Vec<ArticleId>)>,
    index: HashMap<ArticleId, VecDeque<u64>>,
}

impl SessionBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn push(&mut self, mut items: Vec<ArticleId>) {
        items.sort_unstable();
        items.dedup();
        let seq = self.next_seq;
        self.next_seq += 1;
        for &a in &items {
            self.index.entry(a).or_default().push_back(seq);
        }
        self.sessions.push_back((seq, items));
        while self.sessions.len() > self.capacity {
            let (old, old_items) = self.sessions.pop_front().expect("nonempty");
            for a in old_items {
                if let Some(list) = self.index.get_mut(&a) {
                    if list.front() == Some(&old) {
                        list.pop_front();
                    }
                    if list.is_empty() {
                        self.index.remove(&a);
                    }
                }
            }
        }
    }

    fn get(&self, seq: u64) -> &[ArticleId] {
        let first = self.sessions.front().map(|s| s.0).unwrap_or(0);
        &self.sessions[(seq - first) as usize].1
    }

    /// Buffered sessions containing any of `items`, most recent first.
    fn containing(&self, items: &[ArticleId]) -> Vec<u64> {
        let mut seen = HashSet::new();
        for a in items {
            if let Some(list) = self.index.get(a) {
                seen.extend(list.iter().copied());
            }
        }
        let mut out: Vec<u64> = seen.into_iter().collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }
}

/// Session-based kNN with decayed prefix weights.
#[derive(Clone, Debug)]
pub struct VsKnn {
    config: VsknnConfig,
    seed: u64,
    buffer: SessionBuffer,
}

impl VsKnn {
    pub fn new(config: VsknnConfig, seed: u64) -> Self {
        Self { config, seed, buffer: SessionBuffer::new(config.sessions_buffer_size) }
    }

    pub fn buffer(&self) -> &SessionBuffer {
        &self.buffer
    }

    pub fn add_session(&mut self, items: Vec<ArticleId>) {
        self.buffer.push(items);
    }

    /// Neighbor sessions as `(similarity, seq)`, best first.
    fn neighbors(&self, prefix: &[ArticleId], salt: u64) -> Vec<(f64, u64)> {
        let mut pool = self.buffer.containing(prefix);
        let want = self.config.candidate_sessions_sample_size;
        if pool.len() > want {
            match self.config.sampling_strategy {
                SamplingStrategy::Recent => pool.truncate(want),
                SamplingStrategy::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
                    let mut picked: Vec<u64> =
                        sample(&mut rng, pool.len(), want).into_iter().map(|i| pool[i]).collect();
                    picked.sort_unstable_by(|a, b| b.cmp(a));
                    pool = picked;
                }
            }
        }
        let n = prefix.len();
        let weights: HashMap<ArticleId, f64> = prefix
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, self.config.first_session_clicks_decay.weight(n - i)))
            .collect();
        let prefix_norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
        let mut scored: Vec<(f64, u64)> = pool
            .into_iter()
            .map(|seq| {
                let items = self.buffer.get(seq);
                let sim = match self.config.similarity {
                    SessionSimilarity::Cosine => {
                        let dot: f64 = items.iter().filter_map(|a| weights.get(a)).sum();
                        dot / (prefix_norm * (items.len() as f64).sqrt())
                    }
                    SessionSimilarity::Jaccard => {
                        let common = items.iter().filter(|a| weights.contains_key(a)).count();
                        common as f64 / (items.len() + weights.len() - common) as f64
                    }
                };
                (sim, seq)
            })
            .filter(|(s, _)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        scored.truncate(self.config.nearest_neighbor_session_for_scoring);
        scored
    }

    pub fn score_items(&self, prefix: &[ArticleId], candidates: &[ArticleId], salt: u64) -> Vec<f64> {
        let mut out = vec![0.0; candidates.len()];
        if prefix.is_empty() || self.buffer.is_empty() {
            return out;
        }
        let mut slots: HashMap<ArticleId, Vec<usize>> = HashMap::new();
        for (i, &c) in candidates.iter().enumerate() {
            slots.entry(c).or_default().push(i);
        }
        for (sim, seq) in self.neighbors(prefix, salt) {
            for a in self.buffer.get(seq) {
                if let Some(idx) = slots.get(a) {
                    for &i in idx {
                        out[i] += sim;
                    }
                }
            }
        }
        out
    }
}

impl Recommender for VsKnn {
    fn name(&self) -> &str {
        "vsknn"
    }

    fn observe(&mut self, session: &Session, _: Option<&SessionTrace>, _: &Env<'_>) {
        self.add_session(session.articles().collect());
    }

    fn score(&self, query: &Query<'_>, _: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        query.last()?;
        let prefix: Vec<ArticleId> = query.prefix.iter().map(|c| c.article).collect();
        let salt = ((query.session.0 as u64) << 16) ^ prefix.len() as u64;
        Ok(self.score_items(&prefix, query.candidates, salt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<ArticleId> {
        v.iter().map(|&i| ArticleId(i)).collect()
    }

    #[test]
    fn single_neighbor_scores_its_items() {
        let mut knn = VsKnn::new(VsknnConfig::default(), 0);
        knn.add_session(ids(&[0, 1]));
        let s = knn.score_items(&ids(&[0]), &ids(&[1, 5]), 0);
        assert!(s[0] > 0.0);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn unrelated_neighbor_contributes_nothing() {
        let mut knn = VsKnn::new(VsknnConfig::default(), 0);
        knn.add_session(ids(&[0, 2]));
        knn.add_session(ids(&[8, 9]));
        let s = knn.score_items(&ids(&[0]), &ids(&[2, 9]), 0);
        assert!((s[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn later_prefix_clicks_weigh_more() {
        let mut knn = VsKnn::new(VsknnConfig::default(), 0);
        knn.add_session(ids(&[0, 10]));
        knn.add_session(ids(&[1, 11]));
        let s = knn.score_items(&ids(&[0, 1]), &ids(&[10, 11]), 0);
        assert!(s[1] > s[0]);
        assert!((s[1] / s[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn buffer_is_bounded_and_index_stays_consistent() {
        let mut buf = SessionBuffer::new(3);
        for i in 0..10u32 {
            buf.push(ids(&[i, i + 1, 100]));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.containing(&ids(&[100])), vec![9, 8, 7]);
        assert!(buf.containing(&ids(&[2])).is_empty());
        assert_eq!(buf.containing(&ids(&[8])), vec![8, 7]);
    }

    #[test]
    fn random_sampling_is_seeded() {
        let cfg = VsknnConfig {
            candidate_sessions_sample_size: 3,
            sampling_strategy: SamplingStrategy::Random,
            ..VsknnConfig::default()
        };
        let mut a = VsKnn::new(cfg, 7);
        let mut b = VsKnn::new(cfg, 7);
        for i in 0..20u32 {
            a.add_session(ids(&[0, i + 1]));
            b.add_session(ids(&[0, i + 1]));
        }
        let cands: Vec<ArticleId> = (1..=20).map(ArticleId).collect();
        let sa = a.score_items(&ids(&[0]), &cands, 3);
        assert_eq!(sa, b.score_items(&ids(&[0]), &cands, 3));
        assert_eq!(sa.iter().filter(|&&x| x > 0.0).count(), 3);
    }
}
