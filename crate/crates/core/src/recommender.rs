//! The scoring interface shared by baselines, the neural model and the
//! evaluation harness.

use thiserror::Error;

use crate::corpus::{ArticleId, Catalog, Click, Session, SessionId};
use crate::stream_stats::{ArticleFeatures, PopularityTracker};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("article {0:?} has no content embedding")]
    MissingAce(ArticleId),
    #[error("empty session prefix")]
    EmptyPrefix,
    #[error("non-finite score for {0:?}")]
    NonFinite(ArticleId),
    #[error("{0}")]
    Model(String),
}

/// Read-only shared state available to every recommender.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub catalog: &'a Catalog,
    pub tracker: &'a PopularityTracker,
}

/// One next-click ranking request.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub session: SessionId,
    /// Revealed clicks; the last one is the current article.
    pub prefix: &'a [Click],
    /// Dynamic features of each prefix article at its own click time.
    pub prefix_features: &'a [ArticleFeatures],
    pub candidates: &'a [ArticleId],
    /// Dynamic features of each candidate at `now`.
    pub candidate_features: &'a [ArticleFeatures],
    pub now: i64,
}

impl Query<'_> {
    pub fn last(&self) -> Result<&Click, ScoreError> {
        self.prefix.last().ok_or(ScoreError::EmptyPrefix)
    }
}

/// Per-click record of a completed session, captured by the replay at each
/// click's own time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceStep {
    pub features: ArticleFeatures,
    /// Next article first, then sampled negatives. Empty for the last click.
    pub candidates: Vec<ArticleId>,
    pub candidate_features: Vec<ArticleFeatures>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionTrace {
    pub steps: Vec<TraceStep>,
}

pub trait Recommender: Send {
    fn name(&self) -> &str;

    /// Whether [`Recommender::observe`] needs a [`SessionTrace`].
    fn needs_trace(&self) -> bool {
        false
    }

    /// Called once per session, after its last click.
    fn observe(&mut self, _session: &Session, _trace: Option<&SessionTrace>, _env: &Env<'_>) {}

    /// Called whenever training is allowed. `flush` asks to consume
    /// everything pending even if a mini-batch is incomplete.
    fn fit(&mut self, _env: &Env<'_>, _flush: bool) -> Result<(), ScoreError> {
        Ok(())
    }

    /// Relevance of each candidate, aligned with `query.candidates`.
    /// Higher is better.
    fn score(&self, query: &Query<'_>, env: &Env<'_>) -> Result<Vec<f64>, ScoreError>;
}
