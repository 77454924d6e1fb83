use super::*;
use crate::baselines::{CoOccurrence, RandomScorer, RecentlyPopular, SequentialRules, SrConfig};
use crate::corpus::{generate_synthetic, Click, SessionId, SyntheticConfig, SyntheticDataset, UserContext, UserId};

fn small() -> SyntheticDataset {
    generate_synthetic(&SyntheticConfig {
        n_articles: 300,
        n_hours: 20,
        sessions_per_hour: 100,
        topic_count: 6,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn cfg() -> HarnessConfig {
    HarnessConfig { warmup_hours: 2, seed: 3, ..HarnessConfig::default() }
}

fn click(a: u32, ts: i64) -> Click {
    Click { article: ArticleId(a), timestamp: ts, context: UserContext::at(ts, 0) }
}

fn session(id: u32, arts: &[u32], ts: i64) -> Session {
    Session {
        id: SessionId(id),
        user: UserId(id),
        clicks: arts.iter().enumerate().map(|(i, &a)| click(a, ts + 60 * i as i64)).collect(),
    }
}

fn catalog(n: u32) -> Catalog {
    let mut c = Catalog::new();
    for i in 0..n {
        c.upsert(&format!("a{i}"), 0, vec![], None, vec![]);
    }
    c
}

#[test]
fn tie_break_order() {
    let c = [ArticleId(5), ArticleId(2), ArticleId(9), ArticleId(1)];
    let order = rank_order(&c, &[1.0, 1.0, 1.0, 2.0], &[3, 3, 7, 0]);
    assert_eq!(order, vec![3, 2, 1, 0]);
}

fn query_parts(tracker: &PopularityTracker, cands: &[ArticleId], now: i64) -> Vec<ArticleFeatures> {
    cands.iter().map(|&a| tracker.features(a, now)).collect()
}

#[test]
fn most_popular_positive_ranks_first() {
    let cat = catalog(60);
    let mut tracker = PopularityTracker::for_catalog(TrackerConfig::default(), &cat);
    for i in 0..60 {
        for _ in 0..(if i == 7 { 20 } else { 1 + i % 3 }) {
            tracker.record_click(ArticleId(i), 100).unwrap();
        }
    }
    let prefix = [click(0, 200)];
    let cands: Vec<ArticleId> = std::iter::once(ArticleId(7)).chain((10..60).map(ArticleId)).collect();
    let feats = query_parts(&tracker, &cands, 200);
    let q = Query {
        session: SessionId(0),
        prefix: &prefix,
        prefix_features: &[ArticleFeatures::default()],
        candidates: &cands,
        candidate_features: &feats,
        now: 200,
    };
    let env = Env { catalog: &cat, tracker: &tracker };
    let list = evaluate_click(&RecentlyPopular, &q, &env, &|a| a == ArticleId(7), 10).unwrap();
    assert_eq!(list.positive_rank, 1);
    assert_eq!(list.top.len(), 10);
    assert!(list.clicked[0]);
    assert!(list.aces.is_none());
    let floor = popularity_floor(&tracker, &cat);
    assert!(list.pops.iter().all(|&p| p >= floor));
}

#[test]
fn random_scorer_hit_rate_floor() {
    let cat = catalog(51);
    let tracker = PopularityTracker::for_catalog(TrackerConfig::default(), &cat);
    let cands: Vec<ArticleId> = (0..51).map(ArticleId).collect();
    let feats = query_parts(&tracker, &cands, 0);
    let env = Env { catalog: &cat, tracker: &tracker };
    let r = RandomScorer { seed: 5 };
    let trials = 10_000;
    let mut hits = 0;
    for t in 0..trials {
        let prefix = [click(0, 0)];
        let q = Query {
            session: SessionId(t),
            prefix: &prefix,
            prefix_features: &[ArticleFeatures::default()],
            candidates: &cands,
            candidate_features: &feats,
            now: 0,
        };
        if evaluate_click(&r, &q, &env, &|_| false, 10).unwrap().positive_rank <= 10 {
            hits += 1;
        }
    }
    let hr = hits as f64 / trials as f64;
    assert!((hr - 10.0 / 51.0).abs() < 0.01, "{hr}");
}

#[test]
fn cooccurrence_hand_trace() {
    let cat = catalog(10);
    let tracker = PopularityTracker::for_catalog(TrackerConfig::default(), &cat);
    let env = Env { catalog: &cat, tracker: &tracker };
    let mut co = CoOccurrence::new();
    co.observe(&session(0, &[0, 1], 0), None, &env);
    let prefix = [click(0, 500)];
    let cands: Vec<ArticleId> = [1, 3, 4, 5, 6].into_iter().map(ArticleId).collect();
    let feats = query_parts(&tracker, &cands, 500);
    let q = Query {
        session: SessionId(1),
        prefix: &prefix,
        prefix_features: &[ArticleFeatures::default()],
        candidates: &cands,
        candidate_features: &feats,
        now: 500,
    };
    assert_eq!(evaluate_click(&co, &q, &env, &|_| false, 10).unwrap().positive_rank, 1);
}

fn algorithms() -> Vec<Box<dyn Recommender>> {
    vec![
        Box::new(RecentlyPopular),
        Box::new(SequentialRules::new(SrConfig::default())),
        Box::new(CoOccurrence::new()),
    ]
}

#[test]
fn run_emits_one_row_per_hour_and_algorithm() {
    let d = small();
    let mut algs = algorithms();
    let report = run(&d.catalog, &d.sessions, &mut algs, &cfg()).unwrap();
    let (_, buckets) = bucket_sessions(&d.sessions);
    let plan = schedule(buckets.len(), 2, 5).unwrap();
    assert_eq!(report.hours(), plan.iter().map(|s| s.eval).collect::<Vec<_>>());
    assert_eq!(report.rows.len(), plan.len() * 3);
    assert!(report.rows.iter().all(|r| r.metrics.n_measurements > 0));
    assert_eq!(report.short_candidate_sets, 0);
    assert!(report.voided.values().all(|&v| v == 0));
    let sr = report.mean("sr", Metric::Mrr).unwrap();
    let rp = report.mean("rp", Metric::Mrr).unwrap();
    assert!(sr > rp, "sr {sr} rp {rp}");
    assert_eq!(report.summary.len(), 7 * 3);
    for s in &report.summary {
        assert!(s.p_value.is_none_or(|p| (0.0..=1.0).contains(&p)));
    }
}

#[test]
fn reports_are_deterministic() {
    let d = small();
    let csv = |seed| {
        let mut algs = algorithms();
        let r = run(&d.catalog, &d.sessions, &mut algs, &HarnessConfig { seed, ..cfg() }).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        r.write_hourly_csv(&mut a).unwrap();
        r.write_summary_csv(&mut b).unwrap();
        (a, b)
    };
    assert_eq!(csv(3), csv(3));
    assert_ne!(csv(3).0, csv(4).0);
}

#[test]
fn canary_sees_no_future() {
    let d = small();
    let canary = Canary::new();
    let stats = canary.stats();
    let mut algs: Vec<Box<dyn Recommender>> = vec![Box::new(canary)];
    run(&d.catalog, &d.sessions, &mut algs, &cfg()).unwrap();
    assert_eq!(stats.violations(), 0);
    assert!(stats.predictions() > 0);
    assert_eq!(stats.observations() as usize, d.sessions.len());
}

#[test]
fn timestamp_ties_are_not_leaked() {
    let cat = catalog(80);
    let mut sessions = Vec::new();
    for h in 0..8 {
        for j in 0..10u32 {
            let id = h * 10 + j;
            sessions.push(session(id, &[j, 10 + (j + h) % 60, 70 + j % 10], h as i64 * 3600 + 30 * j as i64));
        }
    }
    let canary = Canary::new();
    let stats = canary.stats();
    let mut algs: Vec<Box<dyn Recommender>> = vec![Box::new(canary)];
    let c = HarnessConfig { warmup_hours: 0, negatives: 5, ..cfg() };
    run(&cat, &sessions, &mut algs, &c).unwrap();
    assert!(stats.predictions() > 0);
    assert_eq!(stats.violations(), 0);
}

#[test]
fn hourly_csv_round_trip_and_long_format() {
    let d = small();
    let mut algs = algorithms();
    let r = run(&d.catalog, &d.sessions, &mut algs, &cfg()).unwrap();
    let mut buf = Vec::new();
    r.write_hourly_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("hour,algorithm,HR@10,MRR@10,COV@10,ESI-R@10,ESI-RR@10,EILD-R@10,EILD-RR@10,n_measurements\n"));
    let (rows, cutoff) = read_hourly_csv(text.as_bytes()).unwrap();
    assert_eq!(cutoff, 10);
    assert_eq!(rows.len(), r.rows.len());
    assert_eq!(rows[0].metrics.n_measurements, r.rows[0].metrics.n_measurements);

    let two: String = text.lines().take(1 + 4).map(|l| format!("{l}\n")).collect();
    let mut long = Vec::new();
    let n = write_long_csv(&[("x".into(), two.clone())], &mut long).unwrap();
    assert_eq!(n, 28);
    let long = String::from_utf8(long).unwrap();
    let mut merged = Vec::new();
    let m = write_long_csv(&[("x".into(), two.clone()), ("y".into(), two)], &mut merged).unwrap();
    assert_eq!(m, 56);
    let mut again = Vec::new();
    assert_eq!(write_long_csv(&[("z".into(), long.clone())], &mut again).unwrap(), 28);
    assert_eq!(String::from_utf8(again).unwrap(), long);
    assert!(write_long_csv(&[("bad".into(), "a,b\n1,2\n".into())], &mut Vec::new()).is_err());
}

#[test]
fn split_accumulation_merges_exactly() {
    let d = small();
    let mut algs: Vec<Box<dyn Recommender>> = vec![Box::new(RecentlyPopular)];
    let r = run(&d.catalog, &d.sessions, &mut algs, &cfg()).unwrap();
    assert!(r.rows.iter().all(|row| row.metrics.cov.is_some_and(|c| c > 0.0 && c <= 1.0)));
    let lists: Vec<RankedList> = (0..40)
        .map(|i| RankedList {
            top: (0..10).map(|k| ArticleId((i * 3 + k) % 50)).collect(),
            positive_rank: 1 + (i as usize % 13),
            pops: vec![0.01 + i as f64 * 1e-3; 10],
            clicked: (0..10).map(|k| k == 0).collect(),
            aces: None,
        })
        .collect();
    let mcfg = MetricConfig::default();
    let mut whole = MetricAccumulator::new();
    let (mut a, mut b) = (MetricAccumulator::new(), MetricAccumulator::new());
    for (i, l) in lists.iter().enumerate() {
        let m = evaluate_list(l, &mcfg).unwrap();
        whole.add(l, &m, 10);
        if i % 3 == 0 { a.add(l, &m, 10) } else { b.add(l, &m, 10) }
    }
    a.merge(&b);
    let rec: BTreeSet<ArticleId> = (0..60).map(ArticleId).collect();
    let (x, y) = (whole.finish(&rec), a.finish(&rec));
    assert_eq!(x.n_measurements, y.n_measurements);
    assert!((x.mrr.unwrap() - y.mrr.unwrap()).abs() < 1e-12);
    assert_eq!(x.cov, y.cov);
}

#[test]
fn rejects_empty_setup() {
    let d = small();
    assert!(matches!(run(&d.catalog, &d.sessions, &mut [], &cfg()), Err(HarnessError::NoAlgorithms)));
    let short: Vec<Session> = d.sessions.iter().take(5).cloned().collect();
    assert!(run(&d.catalog, &short, &mut algorithms(), &cfg()).is_err());
}
