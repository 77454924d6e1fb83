use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::ArticleId;
use crate::recommender::{Env, Query, Recommender, ScoreError};

/// Clicks within the tracker's recency window.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecentlyPopular;

impl Recommender for RecentlyPopular {
    fn name(&self) -> &str {
        "rp"
    }

    fn score(&self, query: &Query<'_>, env: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        Ok(query.candidates.iter().map(|&c| env.tracker.recent_clicks(c) as f64).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine similarity of content embeddings with the last article.
#[derive(Clone, Copy, Debug, Default)]
pub struct ContentBased;

impl Recommender for ContentBased {
    fn name(&self) -> &str {
        "cb"
    }

    fn score(&self, query: &Query<'_>, env: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        let last = query.last()?.article;
        let lv = env.catalog.ace(last).ok_or(ScoreError::MissingAce(last))?;
        query
            .candidates
            .iter()
            .map(|&c| {
                let cv = env.catalog.ace(c).ok_or(ScoreError::MissingAce(c))?;
                Ok(cosine(lv, cv))
            })
            .collect()
    }
}

/// Uniform random scores, reproducible per (seed, session, prefix length).
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomScorer {
    pub seed: u64,
}

impl Recommender for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn score(&self, query: &Query<'_>, _: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        let salt = ((query.session.0 as u64) << 20) ^ query.prefix.len() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt);
        Ok(query.candidates.iter().map(|_: &ArticleId| rng.gen::<f64>()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Catalog, Click, SessionId, UserContext};
    use crate::stream_stats::{PopularityTracker, TrackerConfig};

    fn click(a: u32, ts: i64) -> Click {
        Click { article: ArticleId(a), timestamp: ts, context: UserContext::at(ts, 0) }
    }

    fn query<'a>(prefix: &'a [Click], candidates: &'a [ArticleId]) -> Query<'a> {
        Query {
            session: SessionId(0),
            prefix,
            prefix_features: &[],
            candidates,
            candidate_features: &[],
            now: 100,
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert!((cosine(&[2.0, 1.0], &[2.0, 1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rp_ranks_by_recent_clicks() {
        let mut catalog = Catalog::new();
        let a = catalog.intern("a", 0);
        let b = catalog.intern("b", 0);
        let c = catalog.intern("c", 0);
        let mut tracker = PopularityTracker::for_catalog(TrackerConfig::default(), &catalog);
        for i in 0..5 {
            tracker.record_click(a, 10 + i).unwrap();
        }
        for i in 0..2 {
            tracker.record_click(b, 20 + i).unwrap();
        }
        let env = Env { catalog: &catalog, tracker: &tracker };
        let cands = [a, b, c];
        let p1 = [click(0, 50)];
        let p2 = [click(1, 40), click(2, 50)];
        let s1 = RecentlyPopular.score(&query(&p1, &cands), &env).unwrap();
        assert_eq!(s1, vec![5.0, 2.0, 0.0]);
        assert_eq!(s1, RecentlyPopular.score(&query(&p2, &cands), &env).unwrap());
    }

    #[test]
    fn cb_requires_embeddings() {
        let mut catalog = Catalog::new();
        let a = catalog.intern("a", 0);
        let c = catalog.intern("c", 0);
        let d = catalog.intern("d", 0);
        catalog.set_ace(a, vec![1.0, 0.0]).unwrap();
        let h = 0.5f64.sqrt();
        catalog.set_ace(c, vec![h, h]).unwrap();
        let tracker = PopularityTracker::for_catalog(TrackerConfig::default(), &catalog);
        let env = Env { catalog: &catalog, tracker: &tracker };
        let prefix = [click(a.0, 1)];
        let s = ContentBased.score(&query(&prefix, &[c, a]), &env).unwrap();
        assert!((s[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s[1] - 1.0).abs() < 1e-12);
        assert_eq!(
            ContentBased.score(&query(&prefix, &[d]), &env),
            Err(ScoreError::MissingAce(d))
        );
    }

    #[test]
    fn random_scorer_is_reproducible() {
        let catalog = Catalog::new();
        let tracker = PopularityTracker::new(TrackerConfig::default());
        let env = Env { catalog: &catalog, tracker: &tracker };
        let cands: Vec<ArticleId> = (0..5).map(ArticleId).collect();
        let prefix = [click(0, 1)];
        let r = RandomScorer { seed: 3 };
        let a = r.score(&query(&prefix, &cands), &env).unwrap();
        assert_eq!(a, r.score(&query(&prefix, &cands), &env).unwrap());
        assert_ne!(a, RandomScorer { seed: 4 }.score(&query(&prefix, &cands), &env).unwrap());
    }
}
