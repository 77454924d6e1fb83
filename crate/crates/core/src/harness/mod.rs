//! Temporal offline evaluation.
//!
//! Every click of every session is replayed in global time order through a
//! [`PopularityTracker`]. Sessions starting in an evaluation hour are
//! revealed one click at a time; after each revealed click, every algorithm
//! ranks the true next article against popularity-biased negatives drawn
//! from the preceding hour. Algorithms observe a session once it has ended,
//! and are allowed to train only while no evaluation hour is open.

mod canary;
mod report;
mod sampler;
mod schedule;
mod stats;

use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canary::{Canary, CanaryStats};
pub use report::{read_hourly_csv, write_long_csv, EvalReport, HourRow, Metric, SummaryRow, LONG_HEADER};
pub use sampler::{mix_seed, sample_negatives, NegativeSample};
pub use schedule::{bucket_sessions, schedule, HourBucket, ScheduleStep, HOUR};
pub use stats::{paired_ttest, TTest};

use crate::corpus::{ArticleId, Catalog, Session};
use crate::metrics::{evaluate_list, MetricAccumulator, MetricConfig, RankedList};
use crate::recommender::{Env, Query, Recommender, ScoreError, SessionTrace, TraceStep};
use crate::stream_stats::{ArticleFeatures, PopularityTracker, TrackerConfig, TrackerError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("statistics: {0}")]
    Stats(String),
    #[error("hour {hour}, session {session}: {source}")]
    Tracker { hour: usize, session: u32, source: TrackerError },
    #[error("hour {hour}: training {algorithm} failed: {source}")]
    Fit { hour: usize, algorithm: String, source: ScoreError },
    #[error("no algorithms configured")]
    NoAlgorithms,
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub warmup_hours: usize,
    pub eval_stride: usize,
    pub cutoff: usize,
    pub negatives: usize,
    /// Negatives per click recorded for algorithms that train on traces.
    pub train_negatives: usize,
    pub background_relevance: f64,
    pub seed: u64,
    pub tracker: TrackerConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            warmup_hours: 48,
            eval_stride: 5,
            cutoff: 10,
            negatives: 50,
            train_negatives: 50,
            background_relevance: 0.02,
            seed: 1,
            tracker: TrackerConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig { cutoff: self.cutoff, background_relevance: self.background_relevance }
    }
}

/// Candidate order: score descending, then recent clicks descending, then
/// article id ascending.
pub fn rank_order(candidates: &[ArticleId], scores: &[f64], recent: &[u64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by(|&i, &j| {
        scores[j]
            .total_cmp(&scores[i])
            .then(recent[j].cmp(&recent[i]))
            .then(candidates[i].cmp(&candidates[j]))
    });
    idx
}

/// Lower bound applied to popularities entering the novelty metrics.
pub fn popularity_floor(tracker: &PopularityTracker, catalog: &Catalog) -> f64 {
    1.0 / (tracker.total_recent() + catalog.len() as u64).max(1) as f64
}

/// Scores `query.candidates` (positive first) with one algorithm and builds
/// the ranked list. `viewed` tells whether an article was clicked in the
/// session.
pub fn evaluate_click(
    algorithm: &dyn Recommender,
    query: &Query<'_>,
    env: &Env<'_>,
    viewed: &dyn Fn(ArticleId) -> bool,
    cutoff: usize,
) -> Result<RankedList, ScoreError> {
    let scores = algorithm.score(query, env)?;
    if scores.len() != query.candidates.len() {
        return Err(ScoreError::Model(format!(
            "{} returned {} scores for {} candidates",
            algorithm.name(),
            scores.len(),
            query.candidates.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(ScoreError::NonFinite(query.candidates[i]));
    }
    let recent: Vec<u64> = query.candidate_features.iter().map(|f| f.recent_clicks).collect();
    let order = rank_order(query.candidates, &scores, &recent);
    let positive_rank = order.iter().position(|&i| i == 0).unwrap() + 1;
    let top: Vec<ArticleId> = order.iter().take(cutoff).map(|&i| query.candidates[i]).collect();
    let floor = popularity_floor(env.tracker, env.catalog);
    let pops = top.iter().map(|&a| env.tracker.rec_norm_pop(a).max(floor)).collect();
    let clicked = top.iter().map(|&a| viewed(a)).collect();
    let aces = top
        .iter()
        .map(|&a| env.catalog.ace(a).map(<[f64]>::to_vec))
        .collect::<Option<Vec<_>>>();
    Ok(RankedList { top, positive_rank, pops, clicked, aces })
}

struct OpenHour {
    hour: usize,
    supports: Vec<(ArticleId, u64)>,
    recommendable: BTreeSet<ArticleId>,
    acc: Vec<MetricAccumulator>,
    remaining: usize,
    short_sets: usize,
}

#[derive(Default)]
struct Active {
    features: Vec<ArticleFeatures>,
    trace: SessionTrace,
}

/// Replays `sessions` and evaluates `algorithms` on the scheduled hours.
pub fn run(
    catalog: &Catalog,
    sessions: &[Session],
    algorithms: &mut [Box<dyn Recommender>],
    config: &HarnessConfig,
) -> Result<EvalReport, HarnessError> {
    if algorithms.is_empty() {
        return Err(HarnessError::NoAlgorithms);
    }
    let (t0, buckets) = bucket_sessions(sessions);
    let plan = schedule(buckets.len(), config.warmup_hours, config.eval_stride)?;
    let eval_hours: BTreeSet<usize> = plan.iter().map(ScheduleStep::eval_index).collect();
    let mut bucket_of = vec![0usize; sessions.len()];
    for b in &buckets {
        for &i in &b.sessions {
            bucket_of[i] = b.index;
        }
    }
    let names: Vec<String> = algorithms.iter().map(|a| a.name().to_string()).collect();
    let want_trace = algorithms.iter().any(|a| a.needs_trace());
    let mcfg = config.metric_config();

    let mut events: Vec<(i64, usize, usize)> = sessions
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.clicks.iter().enumerate().map(move |(p, c)| (c.timestamp, i, p)))
        .collect();
    events.sort_unstable();

    let mut tracker = PopularityTracker::for_catalog(config.tracker, catalog);
    let mut active: BTreeMap<usize, Active> = BTreeMap::new();
    let mut open: BTreeMap<usize, OpenHour> = BTreeMap::new();
    let mut pending_eval: Vec<usize> = eval_hours.iter().rev().copied().collect();
    let mut rows: Vec<HourRow> = Vec::new();
    let mut voided: BTreeMap<String, usize> = names.iter().map(|n| (n.clone(), 0)).collect();
    let mut short_sets = 0;

    let mut e = 0;
    while e < events.len() {
        let ts = events[e].0;
        let mut end = e;
        while end < events.len() && events[end].0 == ts {
            end += 1;
        }
        let group = &events[e..end];
        e = end;

        while let Some(&h) = pending_eval.last() {
            let start = t0 + h as i64 * HOUR;
            if ts < start {
                break;
            }
            pending_eval.pop();
            if open.is_empty() {
                let env = Env { catalog, tracker: &tracker };
                fit_all(algorithms, &env, true, h)?;
            }
            tracker.advance_to(start);
            let supports = tracker.supports();
            let recommendable = supports.iter().map(|&(a, _)| a).collect();
            info!("evaluating hour {} with {} recommendable articles", h + 1, supports.len());
            open.insert(
                h,
                OpenHour {
                    hour: h,
                    supports,
                    recommendable,
                    acc: vec![MetricAccumulator::new(); algorithms.len()],
                    remaining: buckets[h].sessions.len(),
                    short_sets: 0,
                },
            );
            if buckets[h].sessions.is_empty() {
                let oh = open.remove(&h).unwrap();
                close_hour(oh, &names, &mut rows, &mut short_sets);
            }
        }
        tracker.advance_to(ts);

        for &(_, s, p) in group {
            let f = tracker.features(sessions[s].clicks[p].article, ts);
            active.entry(s).or_default().features.push(f);
        }

        for &(_, s, p) in group {
            let session = &sessions[s];
            if p + 1 >= session.len() {
                continue;
            }
            let Some(oh) = open.get_mut(&bucket_of[s]) else {
                continue;
            };
            let viewed = |a: ArticleId| session.contains(a);
            let positive = session.clicks[p + 1].article;
            let seed = mix_seed(&[config.seed, session.id.0 as u64, p as u64]);
            let neg = sample_negatives(&oh.supports, viewed, config.negatives, seed);
            if neg.short {
                oh.short_sets += 1;
            }
            let mut candidates = Vec::with_capacity(neg.ids.len() + 1);
            candidates.push(positive);
            candidates.extend(neg.ids);
            let candidate_features: Vec<ArticleFeatures> = candidates.iter().map(|&a| tracker.features(a, ts)).collect();
            let st = &active[&s];
            let query = Query {
                session: session.id,
                prefix: &session.clicks[..=p],
                prefix_features: &st.features[..=p],
                candidates: &candidates,
                candidate_features: &candidate_features,
                now: ts,
            };
            let env = Env { catalog, tracker: &tracker };
            for (k, alg) in algorithms.iter().enumerate() {
                let measured = evaluate_click(alg.as_ref(), &query, &env, &viewed, config.cutoff)
                    .and_then(|list| {
                        evaluate_list(&list, &mcfg).map(|m| (list, m)).map_err(|e| ScoreError::Model(e.to_string()))
                    });
                match measured {
                    Ok((list, m)) => oh.acc[k].add(&list, &m, config.cutoff),
                    Err(err) => {
                        warn!("hour {}, session {}, click {}: {} voided: {err}", oh.hour + 1, session.id.0, p + 1, names[k]);
                        *voided.get_mut(&names[k]).unwrap() += 1;
                    }
                }
            }
        }

        if want_trace {
            let supports = tracker.supports();
            for &(_, s, p) in group {
                let session = &sessions[s];
                let st = active.get_mut(&s).unwrap();
                let mut step = TraceStep { features: st.features[p], ..TraceStep::default() };
                if p + 1 < session.len() {
                    let seed = mix_seed(&[config.seed, 0x7472_6169_6e, session.id.0 as u64, p as u64]);
                    let neg = sample_negatives(&supports, |a| session.contains(a), config.train_negatives, seed);
                    step.candidates.push(session.clicks[p + 1].article);
                    step.candidates.extend(neg.ids);
                    step.candidate_features = step.candidates.iter().map(|&a| tracker.features(a, ts)).collect();
                }
                st.trace.steps.push(step);
            }
        }

        for &(_, s, p) in group {
            let c = &sessions[s].clicks[p];
            tracker
                .record_click(c.article, c.timestamp)
                .map_err(|source| HarnessError::Tracker { hour: bucket_of[s] + 1, session: sessions[s].id.0, source })?;
        }

        for &(_, s, p) in group {
            let session = &sessions[s];
            if p + 1 != session.len() {
                continue;
            }
            let st = active.remove(&s).unwrap();
            let env = Env { catalog, tracker: &tracker };
            for alg in algorithms.iter_mut() {
                let trace = alg.needs_trace().then_some(&st.trace);
                alg.observe(session, trace, &env);
            }
            if let Some(oh) = open.get_mut(&bucket_of[s]) {
                oh.remaining -= 1;
                if oh.remaining == 0 {
                    let oh = open.remove(&bucket_of[s]).unwrap();
                    close_hour(oh, &names, &mut rows, &mut short_sets);
                }
            }
            if open.is_empty() {
                fit_all(algorithms, &env, false, bucket_of[s])?;
            }
        }
    }
    for (_, oh) in std::mem::take(&mut open) {
        close_hour(oh, &names, &mut rows, &mut short_sets);
    }
    rows.sort_by_key(|r| r.hour);
    Ok(EvalReport::new(names, rows, voided, short_sets, config.cutoff))
}

fn fit_all(
    algorithms: &mut [Box<dyn Recommender>],
    env: &Env<'_>,
    flush: bool,
    hour: usize,
) -> Result<(), HarnessError> {
    for alg in algorithms.iter_mut() {
        alg.fit(env, flush)
            .map_err(|source| HarnessError::Fit { hour: hour + 1, algorithm: alg.name().to_string(), source })?;
    }
    Ok(())
}

fn close_hour(oh: OpenHour, names: &[String], rows: &mut Vec<HourRow>, short_sets: &mut usize) {
    *short_sets += oh.short_sets;
    if oh.short_sets > 0 {
        warn!("hour {}: {} candidate sets had fewer negatives than requested", oh.hour + 1, oh.short_sets);
    }
    for (k, acc) in oh.acc.iter().enumerate() {
        rows.push(HourRow { hour: oh.hour + 1, algorithm: names[k].clone(), metrics: acc.finish(&oh.recommendable) });
    }
}

#[cfg(test)]
mod tests;
