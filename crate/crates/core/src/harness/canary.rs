//! A recommender that checks the replay for information leaks.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::corpus::Session;
use crate::recommender::{Env, Query, Recommender, ScoreError, SessionTrace};

#[derive(Debug, Default)]
pub struct CanaryStats {
    observations: AtomicU64,
    predictions: AtomicU64,
    violations: AtomicU64,
}

impl CanaryStats {
    pub fn observations(&self) -> u64 {
        self.observations.load(Ordering::Relaxed)
    }

    pub fn predictions(&self) -> u64 {
        self.predictions.load(Ordering::Relaxed)
    }

    /// Predictions made after observing an event at or past their own time.
    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }
}

/// Scores everything 0 and counts predictions that could have seen the
/// future.
#[derive(Debug, Default)]
pub struct Canary {
    latest_observed: Option<i64>,
    stats: Arc<CanaryStats>,
}

impl Canary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shared counters that stay readable after the canary is boxed.
    pub fn stats(&self) -> Arc<CanaryStats> {
        Arc::clone(&self.stats)
    }
}

impl Recommender for Canary {
    fn name(&self) -> &str {
        "canary"
    }

    fn observe(&mut self, session: &Session, _: Option<&SessionTrace>, _: &Env<'_>) {
        let t = session.end_time();
        self.latest_observed = Some(self.latest_observed.map_or(t, |x| x.max(t)));
        self.stats.observations.fetch_add(1, Ordering::Relaxed);
    }

    fn score(&self, query: &Query<'_>, _: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        self.stats.predictions.fetch_add(1, Ordering::Relaxed);
        let future_prefix = query.prefix.iter().any(|c| c.timestamp > query.now);
        if self.latest_observed.is_some_and(|t| t >= query.now) || future_prefix {
            self.stats.violations.fetch_add(1, Ordering::Relaxed);
        }
        Ok(vec![0.0; query.candidates.len()])
    }
}
