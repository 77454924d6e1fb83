//! Streams clicks through the popularity tracker and prints the dynamic
//! features the recommenders see, then draws popularity-biased negatives.
//!
//! ```text
//! cargo run --release --example popularity_tracker
//! ```

use newsrec::corpus::{generate_synthetic, SyntheticConfig};
use newsrec::harness::sample_negatives;
use newsrec::stream_stats::{PopularityTracker, TrackerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let portal = generate_synthetic(&SyntheticConfig { n_articles: 300, n_hours: 6, sessions_per_hour: 200, ..Default::default() })?;
    let mut tracker = PopularityTracker::for_catalog(TrackerConfig::default(), &portal.catalog);

    let mut clicks: Vec<_> = portal.sessions.iter().flat_map(|s| &s.clicks).collect();
    clicks.sort_by_key(|c| c.timestamp);
    for c in &clicks {
        tracker.record_click(c.article, c.timestamp)?;
    }
    let now = tracker.clock().unwrap_or(0);
    println!("{} clicks streamed; {} in the recency window", clicks.len(), tracker.total_recent());

    let mut supports = tracker.supports();
    supports.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    println!("{:>8} {:>7} {:>10} {:>9} {:>10} {:>9}", "article", "clicks", "pop share", "novelty", "recency", "nov z");
    for &(a, _) in supports.iter().take(5).chain(supports.iter().rev().take(2)) {
        let f = tracker.features(a, now);
        println!(
            "{:>8} {:>7} {:>10.5} {:>9.5} {:>10.4} {:>9.3}",
            portal.catalog.get(a).map_or("?", |x| x.key.as_str()),
            f.recent_clicks,
            f.rec_norm_pop,
            f.novelty,
            f.recency,
            f.novelty_z
        );
    }
    println!("recommendable now: {} articles", tracker.recommendable_set().len());

    let head = supports[0].0;
    let sample = sample_negatives(&supports, |a| a == head, 50, 42);
    let mean_pop: f64 = sample.ids.iter().map(|&a| tracker.rec_norm_pop(a)).sum::<f64>() / sample.ids.len() as f64;
    let uniform: f64 = 1.0 / supports.len() as f64;
    println!("50 negatives drawn (short: {}); mean share {mean_pop:.5} vs uniform {uniform:.5}", sample.short);
    Ok(())
}
