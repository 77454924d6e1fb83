//! Replays a synthetic stream through the six baselines, the random
//! reference and a user-defined recommender, and prints mean metrics.
//!
//! ```text
//! cargo run --release --example baselines
//! ```

use newsrec::baselines::{
    CoOccurrence, ContentBased, ItemKnn, ItemKnnConfig, RandomScorer, RecentlyPopular, SequentialRules, SrConfig, VsKnn,
    VsknnConfig,
};
use newsrec::content_embeddings::{embed_catalog, train_acr, AcrConfig};
use newsrec::corpus::{generate_synthetic, SyntheticConfig};
use newsrec::harness::{run, HarnessConfig, Metric};
use newsrec::recommender::{Env, Query, Recommender, ScoreError};

/// Prefers articles published recently.
struct Freshest;

impl Recommender for Freshest {
    fn name(&self) -> &str {
        "fresh"
    }

    fn score(&self, query: &Query<'_>, _env: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        Ok(query.candidate_features.iter().map(|f| -f.recency).collect())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut portal = generate_synthetic(&SyntheticConfig { n_articles: 800, n_hours: 30, sessions_per_hour: 250, topic_count: 10, ..Default::default() })?;
    let (acr, _) = train_acr(&portal.catalog, &AcrConfig { ace_dim: 32, word_dim: 32, epochs: 6, ..Default::default() }, None)?;
    embed_catalog(&acr, &mut portal.catalog)?;

    let mut algs: Vec<Box<dyn Recommender>> = vec![
        Box::new(CoOccurrence::new()),
        Box::new(SequentialRules::new(SrConfig::default())),
        Box::new(ItemKnn::new(ItemKnnConfig::default())),
        Box::new(VsKnn::new(VsknnConfig::default(), 1)),
        Box::new(RecentlyPopular),
        Box::new(ContentBased),
        Box::new(RandomScorer { seed: 1 }),
        Box::new(Freshest),
    ];
    let cfg = HarnessConfig { warmup_hours: 6, ..HarnessConfig::default() };
    let report = run(&portal.catalog, &portal.sessions, &mut algs, &cfg)?;

    let metrics = [Metric::Hr, Metric::Mrr, Metric::Cov, Metric::EsiR, Metric::EildR];
    print!("{:<8}", "");
    for m in metrics {
        print!(" {:>9}", m.column(report.cutoff));
    }
    println!();
    for a in &report.algorithms {
        print!("{a:<8}");
        for m in metrics {
            print!(" {:>9.4}", report.mean(a, m).unwrap_or(f64::NAN));
        }
        println!();
    }
    println!("random hit-rate floor: {:.4}", cfg.cutoff as f64 / (cfg.negatives + 1) as f64);
    Ok(())
}
