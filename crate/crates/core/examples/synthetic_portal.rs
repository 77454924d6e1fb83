//! Generates a synthetic news portal, exports it as JSON-lines click and
//! catalog logs, and ingests the logs back into a sessionized dataset.
//!
//! ```text
//! cargo run --release --example synthetic_portal -- [out_dir]
//! ```

use std::fs::{self, File};
use std::path::PathBuf;

use newsrec::corpus::{compute_stats, generate_synthetic, SyntheticConfig};
use newsrec::pipeline::{ingest, Dataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("newsrec-portal"));
    fs::create_dir_all(&dir)?;

    let cfg = SyntheticConfig { n_articles: 600, n_hours: 24, sessions_per_hour: 150, topic_count: 8, ..Default::default() };
    let portal = generate_synthetic(&cfg)?;
    let universe: Vec<_> = portal.catalog.articles().iter().map(|a| a.id).collect();
    let s = compute_stats(&portal.sessions, &universe)?;
    println!(
        "generated {} sessions, {} clicks over {} articles (mean length {:.2}, gini {:.3})",
        s.n_sessions, s.n_clicks, s.n_articles, s.avg_session_length, s.gini
    );

    let clicks = dir.join("clicks.jsonl");
    let articles = dir.join("articles.jsonl");
    portal.write_jsonl(File::create(&clicks)?, File::create(&articles)?)?;
    let first = fs::read_to_string(&clicks)?;
    println!("first click record: {}", first.lines().next().unwrap_or(""));

    let data = ingest(File::open(&clicks)?, File::open(&articles)?)?;
    println!("ingested {} sessions; sessionizer report: {:?}", data.sessions.len(), data.sessionize);
    assert_eq!(data.sessions.len(), portal.sessions.len());

    let path = dir.join("dataset.json");
    data.save(&path)?;
    let back = Dataset::load(&path)?;
    assert_eq!(back.sessions, data.sessions);
    println!("dataset written to {}", path.display());
    Ok(())
}
