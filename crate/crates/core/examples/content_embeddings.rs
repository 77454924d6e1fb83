//! Trains the content encoder on a synthetic catalog, embeds every article
//! and shows that nearest neighbours in embedding space share a topic.
//! The embeddings are written as a repository file that runs can reuse
//! through `dataset.ace_repository`.
//!
//! ```text
//! cargo run --release --example content_embeddings -- [ace_repository.jsonl]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use newsrec::baselines::cosine;
use newsrec::content_embeddings::{embed_catalog, read_ace_repository, train_acr, write_ace_repository, AcrConfig};
use newsrec::corpus::{generate_synthetic, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("newsrec-aces.jsonl"));
    let portal = generate_synthetic(&SyntheticConfig { n_articles: 400, n_hours: 4, topic_count: 8, ..Default::default() })?;
    let mut catalog = portal.catalog.clone();

    let cfg = AcrConfig { ace_dim: 32, word_dim: 32, epochs: 8, ..Default::default() };
    let (model, report) = train_acr(&catalog, &cfg, None)?;
    for (e, l) in report.epoch_losses.iter().enumerate() {
        println!("epoch {e}: loss {l:.4}");
    }
    let n = embed_catalog(&model, &mut catalog)?;
    println!("embedded {n} articles ({} examples, {} excluded)", report.n_examples, report.excluded);

    let ids: Vec<_> = catalog.articles().iter().map(|a| a.id).collect();
    let mut same_topic = 0;
    for &a in &ids {
        let va = catalog.ace(a).unwrap();
        let nearest = ids
            .iter()
            .filter(|&&b| b != a)
            .max_by(|&&x, &&y| cosine(va, catalog.ace(x).unwrap()).total_cmp(&cosine(va, catalog.ace(y).unwrap())))
            .unwrap();
        if portal.topics[a.index()] == portal.topics[nearest.index()] {
            same_topic += 1;
        }
    }
    println!(
        "nearest neighbour shares the topic for {same_topic}/{} articles (chance is about 1/{})",
        ids.len(),
        portal.topics.iter().max().map_or(1, |t| t + 1)
    );

    write_ace_repository(&catalog, BufWriter::new(File::create(&out)?))?;
    let mut fresh = portal.catalog.clone();
    let loaded = read_ace_repository(BufReader::new(File::open(&out)?), &mut fresh)?;
    println!("repository {} holds {loaded} embeddings", out.display());
    Ok(())
}
