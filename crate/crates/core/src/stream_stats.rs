//! Sliding-window click statistics.
//!
//! [`PopularityTracker`] counts clicks per article over a trailing window
//! (one hour by default) using one-minute buckets. It backs the recent
//! popularity, novelty and recency features, the recommendable set and the
//! popularity-biased negative sampler.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ArticleId, Catalog};

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("click at {ts} is more than one bucket behind the clock ({clock})")]
    Backwards { ts: i64, clock: i64 },
    #[error("article {0:?} has no publish time")]
    UnknownArticle(ArticleId),
}

/// Floor applied to window standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DynamicFeature {
    Novelty,
    Recency,
}

/// `-log2(p + 1)`: zero for unclicked articles, -1 for an article holding
/// every recent click.
pub fn novelty_from_pop(rec_norm_pop: f64) -> f64 {
    -(rec_norm_pop + 1.0).log2()
}

/// `log2(days + 1)` of the elapsed time, hours as the fractional part.
pub fn recency_from_elapsed(elapsed_secs: i64) -> f64 {
    let days = elapsed_secs.max(0) as f64 / 86_400.0;
    (days + 1.0).log2()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZScore {
    pub value: f64,
    /// Fewer than two observations in the window; `value` is 0.
    pub warm_up: bool,
}

/// Dynamic features of one article at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArticleFeatures {
    pub recent_clicks: u64,
    pub rec_norm_pop: f64,
    pub novelty: f64,
    pub novelty_z: f64,
    pub recency: f64,
    pub recency_z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub window_secs: i64,
    pub bucket_secs: i64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            window_secs: 3600,
            bucket_secs: 60,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Bucket {
    start: i64,
    counts: BTreeMap<ArticleId, u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct FeatureWindow {
    obs: VecDeque<(i64, f64)>,
    sum: f64,
    sum_sq: f64,
}

impl FeatureWindow {
    fn push(&mut self, bucket: i64, x: f64) {
        self.obs.push_back((bucket, x));
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn evict(&mut self, keep_from: i64) {
        while let Some(&(b, x)) = self.obs.front() {
            if b >= keep_from {
                break;
            }
            self.obs.pop_front();
            self.sum -= x;
            self.sum_sq -= x * x;
        }
        if self.obs.is_empty() {
            self.sum = 0.0;
            self.sum_sq = 0.0;
        }
    }

    fn zscore(&self, x: f64) -> ZScore {
        let n = self.obs.len();
        if n < 2 {
            return ZScore {
                value: 0.0,
                warm_up: true,
            };
        }
        let mean = self.sum / n as f64;
        let var = (self.sum_sq / n as f64 - mean * mean).max(0.0);
        let std = var.sqrt().max(STD_FLOOR);
        // running sums carry rounding error; sub-1e-9 deviations are the mean
        let value = if (x - mean).abs() <= STD_FLOOR * 1e-3 {
            0.0
        } else {
            (x - mean) / std
        };
        ZScore {
            value,
            warm_up: false,
        }
    }
}

/// Serializable view of the windowed state (clock excluded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerSnapshot {
    pub counts: BTreeMap<ArticleId, u64>,
    pub total: u64,
    pub novelty_obs: Vec<(i64, f64)>,
    pub recency_obs: Vec<(i64, f64)>,
}

#[derive(Clone, Debug)]
pub struct PopularityTracker {
    config: TrackerConfig,
    clock: Option<i64>,
    buckets: VecDeque<Bucket>,
    counts: HashMap<ArticleId, u64>,
    total: u64,
    novelty: FeatureWindow,
    recency: FeatureWindow,
    published: HashMap<ArticleId, i64>,
}

impl Default for PopularityTracker {
    fn default() -> Self {
        Self::new(TrackerConfig::default())
    }
}

impl PopularityTracker {
    pub fn new(config: TrackerConfig) -> Self {
        PopularityTracker {
            config,
            clock: None,
            buckets: VecDeque::new(),
            counts: HashMap::new(),
            total: 0,
            novelty: FeatureWindow::default(),
            recency: FeatureWindow::default(),
            published: HashMap::new(),
        }
    }

    /// Tracker that knows the publish time of every catalog article.
    pub fn for_catalog(config: TrackerConfig, catalog: &Catalog) -> Self {
        let mut t = Self::new(config);
        for a in catalog.articles() {
            t.register_article(a.id, a.published_at);
        }
        t
    }

    pub fn register_article(&mut self, id: ArticleId, published_at: i64) {
        self.published.insert(id, published_at);
    }

    pub fn config(&self) -> TrackerConfig {
        self.config
    }

    pub fn clock(&self) -> Option<i64> {
        self.clock
    }

    fn bucket_of(&self, ts: i64) -> i64 {
        ts.div_euclid(self.config.bucket_secs) * self.config.bucket_secs
    }

    /// Moves the clock forward (never backward) and evicts expired buckets.
    /// A bucket starting at `b` is live while `now - b < window`.
    pub fn advance_to(&mut self, now: i64) {
        let now = self.clock.map_or(now, |c| c.max(now));
        self.clock = Some(now);
        let keep_from = now - self.config.window_secs + 1;
        while let Some(front) = self.buckets.front() {
            if front.start >= keep_from {
                break;
            }
            let b = self.buckets.pop_front().unwrap();
            for (a, c) in b.counts {
                let c = c as u64;
                self.total -= c;
                if let Some(v) = self.counts.get_mut(&a) {
                    *v -= c;
                    if *v == 0 {
                        self.counts.remove(&a);
                    }
                }
            }
        }
        self.novelty.evict(keep_from);
        self.recency.evict(keep_from);
    }

    /// Counts a click and records the clicked article's novelty and recency
    /// in the normalization windows.
    pub fn record_click(&mut self, article: ArticleId, ts: i64) -> Result<(), TrackerError> {
        if let Some(clock) = self.clock {
            if ts < clock - self.config.bucket_secs {
                return Err(TrackerError::Backwards { ts, clock });
            }
        }
        self.advance_to(ts);
        let b = self.bucket_of(ts);
        let pos = self.buckets.iter().rposition(|x| x.start <= b);
        match pos {
            Some(i) if self.buckets[i].start == b => {
                *self.buckets[i].counts.entry(article).or_insert(0) += 1;
            }
            Some(i) => self.buckets.insert(
                i + 1,
                Bucket {
                    start: b,
                    counts: BTreeMap::from([(article, 1)]),
                },
            ),
            None => self.buckets.push_front(Bucket {
                start: b,
                counts: BTreeMap::from([(article, 1)]),
            }),
        }
        *self.counts.entry(article).or_insert(0) += 1;
        self.total += 1;

        let nov = self.novelty_value(article);
        self.novelty.push(b, nov);
        if let Ok(rec) = self.recency_value(article, ts) {
            self.recency.push(b, rec);
        }
        Ok(())
    }

    pub fn recent_clicks(&self, article: ArticleId) -> u64 {
        self.counts.get(&article).copied().unwrap_or(0)
    }

    pub fn total_recent(&self) -> u64 {
        self.total
    }

    /// Share of the recent clicks; 0 for every article when the window is
    /// empty.
    pub fn rec_norm_pop(&self, article: ArticleId) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.recent_clicks(article) as f64 / self.total as f64
    }

    pub fn novelty_value(&self, article: ArticleId) -> f64 {
        novelty_from_pop(self.rec_norm_pop(article))
    }

    pub fn recency_value(&self, article: ArticleId, now: i64) -> Result<f64, TrackerError> {
        let published = self
            .published
            .get(&article)
            .ok_or(TrackerError::UnknownArticle(article))?;
        Ok(recency_from_elapsed(now - published))
    }

    pub fn z_normalize(&self, feature: DynamicFeature, x: f64) -> ZScore {
        match feature {
            DynamicFeature::Novelty => self.novelty.zscore(x),
            DynamicFeature::Recency => self.recency.zscore(x),
        }
    }

    /// All dynamic features of `article` at `now`. Unknown publish times
    /// give a recency of zero.
    pub fn features(&self, article: ArticleId, now: i64) -> ArticleFeatures {
        let rec_norm_pop = self.rec_norm_pop(article);
        let novelty = novelty_from_pop(rec_norm_pop);
        let recency = self.recency_value(article, now).unwrap_or(0.0);
        ArticleFeatures {
            recent_clicks: self.recent_clicks(article),
            rec_norm_pop,
            novelty,
            novelty_z: self.z_normalize(DynamicFeature::Novelty, novelty).value,
            recency,
            recency_z: self.z_normalize(DynamicFeature::Recency, recency).value,
        }
    }

    /// Articles with at least one click in the current window, ascending.
    pub fn recommendable_set(&self) -> Vec<ArticleId> {
        let mut v: Vec<ArticleId> = self.counts.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// `(article, recent clicks)` for the recommendable set, ascending by id.
    pub fn supports(&self) -> Vec<(ArticleId, u64)> {
        let mut v: Vec<(ArticleId, u64)> = self.counts.iter().map(|(a, c)| (*a, *c)).collect();
        v.sort_unstable();
        v
    }

    pub fn snapshot(&self) -> TrackerSnapshot {
        TrackerSnapshot {
            counts: self.counts.iter().map(|(a, c)| (*a, *c)).collect(),
            total: self.total,
            novelty_obs: self.novelty.obs.iter().copied().collect(),
            recency_obs: self.recency.obs.iter().copied().collect(),
        }
    }
}
