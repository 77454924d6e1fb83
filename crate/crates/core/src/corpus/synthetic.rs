//! Seeded synthetic news portal.
//!
//! Articles are published at staggered times, each with a topic, a Zipf
//! appeal and an exponentially decaying freshness. A session's first click
//! follows the current popularity distribution; later clicks usually follow
//! a topic transition (stay on topic, or move to the topic's successor) and
//! pick a popular live article inside that topic. Sequence-aware and
//! content-aware methods can therefore beat pure popularity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::{BufWriter, Write};

use super::{
    time_features, ArticleId, Catalog, Click, ContextVocabs, CorpusError, Session, SessionId,
    UserContext, UserId, Vocab,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_articles: usize,
    pub n_hours: usize,
    pub sessions_per_hour: usize,
    /// Zipf exponent of article appeal, in (0, 10].
    pub popularity_skew: f64,
    pub topic_count: usize,
    pub seed: u64,
    pub start_ts: i64,
    /// Portion of the catalog published before the first hour.
    pub prepublished_hours: usize,
    /// Freshness time constant of the popularity decay.
    pub lifetime_hours: f64,
    /// Probability that a follow-up click stays on the current topic rather
    /// than moving to the successor topic.
    pub topic_stickiness: f64,
    /// Probability that a follow-up click follows a topic transition rather
    /// than the global popularity distribution.
    pub sequential_prob: f64,
    /// Probability of each additional click after the second.
    pub continue_prob: f64,
    pub words_per_topic: usize,
    pub common_words: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub keywords_per_topic: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_articles: 2000,
            n_hours: 96,
            sessions_per_hour: 520,
            popularity_skew: 1.0,
            topic_count: 20,
            seed: 7,
            start_ts: 1_538_352_000,
            prepublished_hours: 24,
            lifetime_hours: 6.0,
            topic_stickiness: 0.7,
            sequential_prob: 0.85,
            continue_prob: 0.47,
            words_per_topic: 40,
            common_words: 200,
            min_tokens: 20,
            max_tokens: 40,
            keywords_per_topic: 5,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Config(m.to_string()));
        if !(self.popularity_skew > 0.0 && self.popularity_skew <= 10.0) {
            return bad("popularity_skew must be in (0, 10]");
        }
        if self.n_articles == 0 || self.n_hours == 0 || self.sessions_per_hour == 0 {
            return bad("n_articles, n_hours and sessions_per_hour must be >= 1");
        }
        if self.topic_count == 0 || self.words_per_topic == 0 || self.keywords_per_topic == 0 {
            return bad("topic_count, words_per_topic and keywords_per_topic must be >= 1");
        }
        if self.min_tokens == 0 || self.max_tokens < self.min_tokens {
            return bad("token range must satisfy 1 <= min_tokens <= max_tokens");
        }
        if !(self.lifetime_hours > 0.0) {
            return bad("lifetime_hours must be positive");
        }
        for (name, p) in [
            ("topic_stickiness", self.topic_stickiness),
            ("sequential_prob", self.sequential_prob),
            ("continue_prob", self.continue_prob),
        ] {
            if !(0.0..1.0).contains(&p) && p != 1.0 {
                return Err(CorpusError::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.continue_prob >= 1.0 {
            return bad("continue_prob must be < 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub catalog: Catalog,
    pub sessions: Vec<Session>,
    pub vocabs: ContextVocabs,
    /// Topic of each article, by article index.
    pub topics: Vec<usize>,
}

impl SyntheticDataset {
    /// Writes the clicks and the catalog as the JSON-lines files `ingest`
    /// reads back.
    pub fn write_jsonl<W1: Write, W2: Write>(&self, clicks: W1, articles: W2) -> std::io::Result<()> {
        let (mut clicks, mut articles) = (BufWriter::new(clicks), BufWriter::new(articles));
        let v = &self.vocabs;
        let mut rows: Vec<(&Session, &Click)> =
            self.sessions.iter().flat_map(|s| s.clicks.iter().map(move |c| (s, c))).collect();
        rows.sort_by_key(|(s, c)| (c.timestamp, s.id));
        for (s, c) in rows {
            let x = &c.context;
            let rec = json!({
                "ts": c.timestamp,
                "user": format!("u{}", s.user.0),
                "article": self.catalog.get(c.article).map(|a| a.key.as_str()).unwrap_or_default(),
                "country": v.country.token(x.country),
                "region": v.region.token(x.region),
                "city": v.city.token(x.city),
                "device": v.device.token(x.device),
                "os": v.os.token(x.os),
                "platform": v.platform.token(x.platform),
                "referrer": v.referrer.token(x.referrer),
            });
            writeln!(clicks, "{rec}")?;
        }
        let cat = &self.catalog;
        for a in cat.articles() {
            let text: Vec<&str> = a.tokens.iter().map(|&t| cat.words.token(t)).collect();
            let keywords: Vec<&str> = a.keywords.iter().map(|&k| cat.keywords.token(k)).collect();
            let rec = json!({
                "id": a.key,
                "published_ts": a.published_at,
                "category": a.category.map(|c| cat.categories.token(c)),
                "keywords": keywords.join(","),
                "text": text.join(" "),
            });
            writeln!(articles, "{rec}")?;
        }
        clicks.flush()?;
        articles.flush()
    }
}

const COUNTRIES: &[(&str, f64)] = &[("BR", 0.9), ("US", 0.05), ("PT", 0.05)];
const DEVICES: &[&str] = &["desktop", "mobile", "tablet", "tv"];
const OSES: &[&str] = &["android", "ios", "windows", "macos", "linux", "other"];
const PLATFORMS: &[&str] = &["web", "app", "amp"];
const REFERRERS: &[&str] = &["direct", "internal", "search", "social", "aggregator", "other"];
const N_REGIONS: usize = 27;
const N_CITIES: usize = 60;

struct ArticleMeta {
    published_at: i64,
    topic: usize,
    appeal: f64,
}

fn weighted_pick<R: Rng>(rng: &mut R, items: &[(usize, f64)], skip: &[usize]) -> Option<usize> {
    let total: f64 = items
        .iter()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, w)| w)
        .sum();
    if total <= 0.0 {
        return None;
    }
    let mut r = rng.gen::<f64>() * total;
    let mut last = None;
    for &(i, w) in items.iter().filter(|(i, _)| !skip.contains(i)) {
        last = Some(i);
        if r < w {
            return Some(i);
        }
        r -= w;
    }
    last
}

fn draw_context<R: Rng>(rng: &mut R, vocabs: &mut ContextVocabs) -> UserContext {
    let mut ctx = UserContext::at(0, 0);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut country = COUNTRIES[0].0;
    for (c, p) in COUNTRIES {
        acc += p;
        if u < acc {
            country = c;
            break;
        }
    }
    ctx.country = vocabs.country.intern(country);
    ctx.region = vocabs.region.intern(&format!("R{:02}", rng.gen_range(0..N_REGIONS)));
    ctx.city = vocabs.city.intern(&format!("C{:02}", rng.gen_range(0..N_CITIES)));
    ctx.device = vocabs.device.intern(DEVICES.choose(rng).unwrap());
    ctx.os = vocabs.os.intern(OSES.choose(rng).unwrap());
    ctx.platform = vocabs.platform.intern(PLATFORMS.choose(rng).unwrap());
    ctx.referrer = vocabs.referrer.intern(REFERRERS.choose(rng).unwrap());
    ctx
}

fn declared_vocabs() -> ContextVocabs {
    ContextVocabs {
        country: Vocab::declared(COUNTRIES.iter().map(|(c, _)| *c)),
        region: Vocab::declared((0..N_REGIONS).map(|i| format!("R{i:02}"))),
        city: Vocab::declared((0..N_CITIES).map(|i| format!("C{i:02}"))),
        device: Vocab::declared(DEVICES),
        os: Vocab::declared(OSES),
        platform: Vocab::declared(PLATFORMS),
        referrer: Vocab::declared(REFERRERS),
    }
}

/// Generates a deterministic dataset from `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut catalog = Catalog::new();
    let t = config.topic_count;

    for topic in 0..t {
        catalog.categories.intern(&format!("topic{topic:02}"));
        for j in 0..config.words_per_topic {
            catalog.words.intern(&format!("w{topic:02}_{j:03}"));
        }
        for j in 0..config.keywords_per_topic {
            catalog.keywords.intern(&format!("k{topic:02}_{j:02}"));
        }
    }
    for j in 0..config.common_words {
        catalog.words.intern(&format!("c{j:03}"));
    }
    let extra_keywords = 10;
    for j in 0..extra_keywords {
        catalog.keywords.intern(&format!("kx{j:02}"));
    }

    // Articles: publish times spread over [start - prepublished, end).
    let span = ((config.prepublished_hours + config.n_hours) * 3600) as i64;
    let first = config.start_ts - (config.prepublished_hours * 3600) as i64;
    let mut publish: Vec<i64> = (0..config.n_articles)
        .map(|_| first + rng.gen_range(0..span))
        .collect();
    publish.sort_unstable();
    let mut ranks: Vec<usize> = (0..config.n_articles).collect();
    ranks.shuffle(&mut rng);

    let mut metas = Vec::with_capacity(config.n_articles);
    for (i, &published_at) in publish.iter().enumerate() {
        let topic = rng.gen_range(0..t);
        let appeal = (ranks[i] as f64 + 1.0).powf(-config.popularity_skew);
        let n_tokens = rng.gen_range(config.min_tokens..=config.max_tokens);
        let tokens = (0..n_tokens)
            .map(|_| {
                let w = if rng.gen::<f64>() < 0.6 || config.common_words == 0 {
                    format!("w{topic:02}_{:03}", rng.gen_range(0..config.words_per_topic))
                } else {
                    format!("c{:03}", rng.gen_range(0..config.common_words))
                };
                catalog.words.get(&w).unwrap()
            })
            .collect();
        let mut kw: Vec<usize> = (0..config.keywords_per_topic).collect();
        kw.shuffle(&mut rng);
        let mut keywords: Vec<u32> = kw
            .iter()
            .take(2.min(config.keywords_per_topic))
            .map(|j| catalog.keywords.get(&format!("k{topic:02}_{j:02}")).unwrap())
            .collect();
        if rng.gen::<f64>() < 0.3 {
            let j = rng.gen_range(0..extra_keywords);
            keywords.push(catalog.keywords.get(&format!("kx{j:02}")).unwrap());
        }
        keywords.sort_unstable();
        let category = catalog.categories.get(&format!("topic{topic:02}"));
        catalog.upsert(&format!("a{i:05}"), published_at, tokens, category, keywords);
        metas.push(ArticleMeta {
            published_at,
            topic,
            appeal,
        });
    }

    let tau = config.lifetime_hours * 3600.0;
    let max_age = (6.0 * tau) as i64;
    let mut vocabs = declared_vocabs();

    let mut starts: Vec<i64> = Vec::with_capacity(config.n_hours * config.sessions_per_hour);
    for h in 0..config.n_hours {
        let hour_start = config.start_ts + (h * 3600) as i64;
        for _ in 0..config.sessions_per_hour {
            starts.push(hour_start + rng.gen_range(0..3600));
        }
    }
    starts.sort_unstable();

    let user_pool = (starts.len() / 3).max(1);
    let mut user_last_end: Vec<i64> = vec![i64::MIN; user_pool];
    let mut user_ctx: Vec<Option<UserContext>> = vec![None; user_pool];
    let mut extra_users = 0u32;

    let mut sessions = Vec::with_capacity(starts.len());
    for (sid, &start) in starts.iter().enumerate() {
        let hi = publish.partition_point(|&p| p <= start);
        let lo = publish.partition_point(|&p| p < start - max_age);
        let live: Vec<(usize, f64)> = (lo..hi)
            .map(|i| {
                let age = (start - metas[i].published_at) as f64;
                (i, metas[i].appeal * (-age / tau).exp())
            })
            .collect();
        if live.len() < 2 {
            continue;
        }
        let mut by_topic: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t];
        for &(i, w) in &live {
            by_topic[metas[i].topic].push((i, w));
        }

        let mut len = 2;
        while len < 20 && rng.gen::<f64>() < config.continue_prob {
            len += 1;
        }

        let mut chosen: Vec<usize> = Vec::with_capacity(len);
        let Some(first_click) = weighted_pick(&mut rng, &live, &chosen) else {
            continue;
        };
        chosen.push(first_click);
        while chosen.len() < len {
            let cur = metas[*chosen.last().unwrap()].topic;
            let next = if rng.gen::<f64>() < config.sequential_prob {
                let topic = if rng.gen::<f64>() < config.topic_stickiness {
                    cur
                } else {
                    (cur + 1) % t
                };
                weighted_pick(&mut rng, &by_topic[topic], &chosen)
                    .or_else(|| weighted_pick(&mut rng, &live, &chosen))
            } else {
                weighted_pick(&mut rng, &live, &chosen)
            };
            match next {
                Some(n) => chosen.push(n),
                None => break,
            }
        }
        if chosen.len() < 2 {
            continue;
        }

        let mut slot = rng.gen_range(0..user_pool);
        if user_last_end[slot] + 3600 > start {
            slot = user_pool + extra_users as usize;
            extra_users += 1;
            user_last_end.push(i64::MIN);
            user_ctx.push(None);
        }
        let base_ctx = match user_ctx[slot] {
            Some(c) => c,
            None => {
                let c = draw_context(&mut rng, &mut vocabs);
                user_ctx[slot] = Some(c);
                c
            }
        };

        let mut ts = start;
        let mut clicks = Vec::with_capacity(chosen.len());
        for (k, &a) in chosen.iter().enumerate() {
            if k > 0 {
                let gap = 20.0 - 150.0 * (1.0 - rng.gen::<f64>()).ln();
                ts += gap.min(1700.0) as i64;
            }
            let mut context = base_ctx;
            let (s, c, wd) = time_features(ts);
            context.hour_sin = s;
            context.hour_cos = c;
            context.weekday = wd;
            clicks.push(Click {
                article: ArticleId(a as u32),
                timestamp: ts,
                context,
            });
        }
        user_last_end[slot] = ts;
        sessions.push(Session {
            id: SessionId(sid as u32),
            user: UserId(slot as u32),
            clicks,
        });
    }
    for (i, s) in sessions.iter_mut().enumerate() {
        s.id = SessionId(i as u32);
    }

    Ok(SyntheticDataset {
        catalog,
        sessions,
        vocabs,
        topics: metas.iter().map(|m| m.topic).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::compute_stats;
    use std::collections::HashSet;

    fn small(seed: u64, skew: f64) -> SyntheticConfig {
        SyntheticConfig {
            n_articles: 300,
            n_hours: 12,
            sessions_per_hour: 60,
            popularity_skew: skew,
            topic_count: 6,
            seed,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = serde_json::to_string(&generate_synthetic(&small(7, 1.0)).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_synthetic(&small(7, 1.0)).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_synthetic(&small(8, 1.0)).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn higher_skew_raises_gini() {
        let gini_for = |skew| {
            let d = generate_synthetic(&small(3, skew)).unwrap();
            let universe: Vec<ArticleId> = d.catalog.articles().iter().map(|a| a.id).collect();
            compute_stats(&d.sessions, &universe).unwrap().gini
        };
        assert!(gini_for(2.0) > gini_for(0.3));
    }

    #[test]
    fn single_topic_has_one_category() {
        let mut cfg = small(1, 1.0);
        cfg.topic_count = 1;
        let d = generate_synthetic(&cfg).unwrap();
        let cats: HashSet<_> = d.catalog.articles().iter().map(|a| a.category).collect();
        assert_eq!(cats.len(), 1);
    }

    #[test]
    fn rejects_bad_skew() {
        assert!(generate_synthetic(&small(1, 0.0)).is_err());
        assert!(generate_synthetic(&small(1, 10.5)).is_err());
        assert!(generate_synthetic(&small(1, 10.0)).is_ok());
    }

    #[test]
    fn sessions_are_valid() {
        let d = generate_synthetic(&small(5, 1.0)).unwrap();
        assert!(!d.sessions.is_empty());
        for w in d.sessions.windows(2) {
            assert!(w[0].start_time() <= w[1].start_time());
        }
        for s in &d.sessions {
            assert!(s.len() >= 2 && s.len() <= 20);
            let distinct: HashSet<_> = s.articles().collect();
            assert_eq!(distinct.len(), s.len());
            for w in s.clicks.windows(2) {
                assert!(w[1].timestamp - w[0].timestamp < 1800);
            }
            for c in &s.clicks {
                let a = d.catalog.get(c.article).unwrap();
                assert!(a.published_at <= c.timestamp);
            }
        }
    }

    #[test]
    fn exported_logs_sessionize_back() {
        use crate::corpus::{build_sessions, parse_catalog, parse_click_log, SessionRules};
        let d = generate_synthetic(&small(3, 1.0)).unwrap();
        let (mut clicks, mut arts) = (Vec::new(), Vec::new());
        d.write_jsonl(&mut clicks, &mut arts).unwrap();
        let mut cat = Catalog::new();
        assert_eq!(parse_catalog(&arts[..], &mut cat).unwrap(), d.catalog.len());
        let mut vocabs = ContextVocabs::new();
        let log = parse_click_log(&clicks[..], &mut cat, &mut vocabs).unwrap();
        let (sessions, _) = build_sessions(&log, &SessionRules::default());
        let keys = |c: &Catalog, s: &[Session]| -> Vec<Vec<(String, i64)>> {
            let mut v: Vec<_> = s
                .iter()
                .map(|s| s.clicks.iter().map(|k| (c.get(k.article).unwrap().key.clone(), k.timestamp)).collect())
                .collect();
            v.sort();
            v
        };
        assert_eq!(keys(&cat, &sessions), keys(&d.catalog, &d.sessions));
        let a = d.catalog.articles().last().unwrap();
        let b = cat.get(cat.lookup(&a.key).unwrap()).unwrap();
        assert_eq!((a.published_at, a.tokens.len(), a.keywords.len()), (b.published_at, b.tokens.len(), b.keywords.len()));
    }
}
