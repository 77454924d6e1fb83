//! Click logs, article catalogs and sessions.
//!
//! Raw logs are newline-delimited JSON records. They are parsed into
//! per-user click streams, split into sessions on inactivity gaps, and
//! summarized into [`DatasetStats`]. [`synthetic`] provides a seeded
//! stand-in dataset for desk-scale experiments.

mod parse;
mod session;
mod stats;
pub mod synthetic;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_catalog, parse_click_log, UserClick};
pub use session::{build_sessions, sessionize, SessionRules, SessionizeReport};
pub use stats::{compute_stats, gini, DatasetStats};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticDataset};

/// Errors raised while ingesting or generating data.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty dataset: {0}")]
    Empty(&'static str),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("article {0:?} already has a content embedding")]
    AceAlreadySet(ArticleId),
    #[error("content embedding for {id:?} has dimension {got}, expected {expected}")]
    AceDimension { id: ArticleId, got: usize, expected: usize },
}

/// Dense catalog index of an article.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArticleId(pub u32);

impl ArticleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionId(pub u32);

/// String interner with a reserved unknown token at index 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    frozen: bool,
}

impl Vocab {
    pub const UNK: u32 = 0;
    pub const UNK_TOKEN: &'static str = "<unk>";

    pub fn new() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
            frozen: false,
        };
        v.tokens.push(Self::UNK_TOKEN.to_string());
        v.index.insert(Self::UNK_TOKEN.to_string(), Self::UNK);
        v
    }

    /// A vocabulary that maps anything outside `tokens` to [`Vocab::UNK`].
    pub fn declared<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.intern(t.as_ref());
        }
        v.frozen = true;
        v
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        if self.frozen {
            return Self::UNK;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(Self::UNK_TOKEN)
    }

    /// Number of entries including the unknown token.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }
}

/// Vocabularies for the categorical user-context fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextVocabs {
    pub country: Vocab,
    pub region: Vocab,
    pub city: Vocab,
    pub device: Vocab,
    pub os: Vocab,
    pub platform: Vocab,
    pub referrer: Vocab,
}

impl ContextVocabs {
    pub fn new() -> Self {
        ContextVocabs {
            country: Vocab::new(),
            region: Vocab::new(),
            city: Vocab::new(),
            device: Vocab::new(),
            os: Vocab::new(),
            platform: Vocab::new(),
            referrer: Vocab::new(),
        }
    }

    /// Cardinalities in the field order used by [`UserContext::categorical`].
    pub fn cardinalities(&self) -> [usize; 7] {
        [
            self.country.len(),
            self.region.len(),
            self.city.len(),
            self.device.len(),
            self.os.len(),
            self.platform.len(),
            self.referrer.len(),
        ]
    }

    pub fn reindex(&mut self) {
        for v in [
            &mut self.country,
            &mut self.region,
            &mut self.city,
            &mut self.device,
            &mut self.os,
            &mut self.platform,
            &mut self.referrer,
        ] {
            v.reindex();
        }
    }
}

/// Context of the user at the moment of a click.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub country: u32,
    pub region: u32,
    pub city: u32,
    pub device: u32,
    pub os: u32,
    pub platform: u32,
    pub referrer: u32,
    pub hour_sin: f64,
    pub hour_cos: f64,
    /// 0 = Monday.
    pub weekday: u8,
}

impl UserContext {
    /// Context with every categorical field unknown and the time fields
    /// derived from `timestamp` shifted by `tz_offset` seconds.
    pub fn at(timestamp: i64, tz_offset: i64) -> Self {
        let (hour_sin, hour_cos, weekday) = time_features(timestamp + tz_offset);
        UserContext {
            country: Vocab::UNK,
            region: Vocab::UNK,
            city: Vocab::UNK,
            device: Vocab::UNK,
            os: Vocab::UNK,
            platform: Vocab::UNK,
            referrer: Vocab::UNK,
            hour_sin,
            hour_cos,
            weekday,
        }
    }

    pub fn categorical(&self) -> [u32; 7] {
        [
            self.country,
            self.region,
            self.city,
            self.device,
            self.os,
            self.platform,
            self.referrer,
        ]
    }
}

/// Cyclic hour-of-day encoding and weekday for a (local) unix timestamp.
pub fn time_features(local_ts: i64) -> (f64, f64, u8) {
    let secs_of_day = local_ts.rem_euclid(86_400) as f64;
    let hour = secs_of_day / 3600.0;
    let angle = 2.0 * std::f64::consts::PI * hour / 24.0;
    let days = local_ts.div_euclid(86_400);
    // 1970-01-01 was a Thursday.
    let weekday = (days + 3).rem_euclid(7) as u8;
    (angle.sin(), angle.cos(), weekday)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub article: ArticleId,
    pub timestamp: i64,
    pub context: UserContext,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: SessionId,
    pub user: UserId,
    pub clicks: Vec<Click>,
}

impl Session {
    pub fn start_time(&self) -> i64 {
        self.clicks.first().map(|c| c.timestamp).unwrap_or(i64::MIN)
    }

    pub fn end_time(&self) -> i64 {
        self.clicks.last().map(|c| c.timestamp).unwrap_or(i64::MIN)
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn articles(&self) -> impl Iterator<Item = ArticleId> + '_ {
        self.clicks.iter().map(|c| c.article)
    }

    pub fn contains(&self, article: ArticleId) -> bool {
        self.clicks.iter().any(|c| c.article == article)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: ArticleId,
    /// Identifier as it appears in the source data.
    pub key: String,
    pub published_at: i64,
    pub tokens: Vec<u32>,
    pub category: Option<u32>,
    pub keywords: Vec<u32>,
    /// False for articles only referenced by clicks.
    pub in_catalog: bool,
    ace: Option<Vec<f64>>,
}

impl Article {
    pub fn ace(&self) -> Option<&[f64]> {
        self.ace.as_deref()
    }
}

/// All known articles plus the text and label vocabularies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    articles: Vec<Article>,
    #[serde(skip)]
    index: HashMap<String, ArticleId>,
    pub words: Vocab,
    pub categories: Vocab,
    pub keywords: Vocab,
    ace_dim: Option<usize>,
}

impl Catalog {
    pub fn new() -> Self {
        Catalog {
            articles: Vec::new(),
            index: HashMap::new(),
            words: Vocab::new(),
            categories: Vocab::new(),
            keywords: Vocab::new(),
            ace_dim: None,
        }
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn get(&self, id: ArticleId) -> Option<&Article> {
        self.articles.get(id.index())
    }

    pub fn lookup(&self, key: &str) -> Option<ArticleId> {
        self.index.get(key).copied()
    }

    /// Adds or replaces a catalog entry keyed by `key`.
    pub fn upsert(
        &mut self,
        key: &str,
        published_at: i64,
        tokens: Vec<u32>,
        category: Option<u32>,
        keywords: Vec<u32>,
    ) -> ArticleId {
        let id = self.intern(key, published_at);
        let a = &mut self.articles[id.index()];
        a.published_at = published_at;
        a.tokens = tokens;
        a.category = category;
        a.keywords = keywords;
        a.in_catalog = true;
        id
    }

    /// Id for `key`, creating a placeholder article first seen at `seen_at`.
    pub fn intern(&mut self, key: &str, seen_at: i64) -> ArticleId {
        if let Some(&id) = self.index.get(key) {
            let a = &mut self.articles[id.index()];
            if !a.in_catalog && seen_at < a.published_at {
                a.published_at = seen_at;
            }
            return id;
        }
        let id = ArticleId(self.articles.len() as u32);
        self.articles.push(Article {
            id,
            key: key.to_string(),
            published_at: seen_at,
            tokens: Vec::new(),
            category: None,
            keywords: Vec::new(),
            in_catalog: false,
            ace: None,
        });
        self.index.insert(key.to_string(), id);
        id
    }

    pub fn ace_dim(&self) -> Option<usize> {
        self.ace_dim
    }

    pub fn ace(&self, id: ArticleId) -> Option<&[f64]> {
        self.get(id).and_then(Article::ace)
    }

    /// Stores an article's content embedding. Embeddings are write-once and
    /// all share one dimension.
    pub fn set_ace(&mut self, id: ArticleId, ace: Vec<f64>) -> Result<(), CorpusError> {
        if let Some(expected) = self.ace_dim {
            if ace.len() != expected {
                return Err(CorpusError::AceDimension {
                    id,
                    got: ace.len(),
                    expected,
                });
            }
        }
        let article = self
            .articles
            .get_mut(id.index())
            .ok_or(CorpusError::Empty("unknown article"))?;
        if article.ace.is_some() {
            return Err(CorpusError::AceAlreadySet(id));
        }
        self.ace_dim = Some(ace.len());
        article.ace = Some(ace);
        Ok(())
    }

    /// Rebuilds lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .articles
            .iter()
            .map(|a| (a.key.clone(), a.id))
            .collect();
        self.words.reindex();
        self.categories.reindex();
        self.keywords.reindex();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hour_encoding_at_noon_utc() {
        // 2018-10-04 12:00:00 UTC
        let (s, c, wd) = time_features(1_538_654_400);
        assert!(s.abs() < 1e-12);
        assert!((c + 1.0).abs() < 1e-12);
        assert_eq!(wd, 3); // Thursday
    }

    #[test]
    fn hour_encoding_is_on_unit_circle() {
        for ts in (0..200_000).step_by(977) {
            let (s, c, _) = time_features(ts);
            assert!((s * s + c * c - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn declared_vocab_maps_unknown_to_unk() {
        let mut v = Vocab::declared(["desktop", "mobile"]);
        assert_eq!(v.intern("mobile"), 2);
        assert_eq!(v.intern("tv"), Vocab::UNK);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn ace_is_write_once_and_fixed_dimension() {
        let mut cat = Catalog::new();
        let a = cat.upsert("a", 0, vec![1], Some(1), vec![]);
        let b = cat.upsert("b", 0, vec![1], Some(1), vec![]);
        cat.set_ace(a, vec![1.0, 0.0]).unwrap();
        assert!(matches!(cat.set_ace(a, vec![0.0, 1.0]), Err(CorpusError::AceAlreadySet(_))));
        assert!(matches!(cat.set_ace(b, vec![1.0]), Err(CorpusError::AceDimension { .. })));
        assert_eq!(cat.ace(a), Some(&[1.0, 0.0][..]));
    }
}
