//! Trains the neural recommender offline on replayed sessions and compares
//! the accuracy and novelty loss terms for two novelty weights. The
//! sessions are captured from a harness replay, so every candidate set and
//! feature is exactly what the streaming run would have used.
//!
//! ```text
//! cargo run --release --example nar_training
//! ```

use std::io::BufReader;
use std::sync::{Arc, Mutex};

use newsrec::config::RunConfig;
use newsrec::content_embeddings::{embed_catalog, train_acr};
use newsrec::corpus::{generate_synthetic, Session, SyntheticConfig};
use newsrec::harness::{run, HarnessConfig};
use newsrec::nar::{NarInputSpec, NarModel, TrainSession};
use newsrec::nn::{Adam, AdamConfig};
use newsrec::recommender::{Env, Query, Recommender, ScoreError, SessionTrace};

struct Recorder(Arc<Mutex<Vec<TrainSession>>>);

impl Recommender for Recorder {
    fn name(&self) -> &str {
        "recorder"
    }

    fn needs_trace(&self) -> bool {
        true
    }

    fn observe(&mut self, session: &Session, trace: Option<&SessionTrace>, _env: &Env<'_>) {
        if let Some(t) = trace {
            self.0.lock().unwrap().push(TrainSession::from_trace(session, t));
        }
    }

    fn score(&self, query: &Query<'_>, _env: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        Ok(vec![0.0; query.candidates.len()])
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::profile("quick")?;
    let mut portal = generate_synthetic(&SyntheticConfig { n_articles: 500, n_hours: 12, sessions_per_hour: 200, topic_count: 8, ..Default::default() })?;
    let (acr, _) = train_acr(&portal.catalog, &cfg.acr, None)?;
    embed_catalog(&acr, &mut portal.catalog)?;

    let sink = Arc::new(Mutex::new(Vec::new()));
    let mut algs: Vec<Box<dyn Recommender>> = vec![Box::new(Recorder(sink.clone()))];
    let hcfg = HarnessConfig { warmup_hours: 2, train_negatives: cfg.algorithms.nar.train_negatives, ..HarnessConfig::default() };
    run(&portal.catalog, &portal.sessions, &mut algs, &hcfg)?;
    let sessions = std::mem::take(&mut *sink.lock().unwrap());
    println!("captured {} training sessions", sessions.len());

    let spec = NarInputSpec::from_catalog(&portal.catalog, &portal.vocabs);
    for beta in [0.0, 0.5] {
        let mut nc = cfg.algorithms.nar.clone();
        nc.beta = beta;
        let mut model = NarModel::new(nc.clone(), spec.clone())?;
        let mut adam = Adam::new(AdamConfig { learning_rate: nc.learning_rate, ..AdamConfig::default() }, &model.store);
        for epoch in 0..3 {
            let (mut acc, mut nov, mut n) = (0.0, 0.0, 0.0);
            for batch in sessions.chunks(nc.batch_size) {
                let parts = model.train_step(&mut adam, &portal.catalog, batch)?;
                acc += parts.accuracy;
                nov += parts.novelty;
                n += 1.0;
            }
            println!("beta {beta}: epoch {epoch} accuracy loss {:.4}, novelty term {:.5}", acc / n, nov / n);
        }

        let mut checkpoint = Vec::new();
        model.save(&mut checkpoint)?;
        let mut restored = NarModel::new(nc, spec.clone())?;
        restored.load(BufReader::new(checkpoint.as_slice()))?;
        assert_eq!(restored.store.checksum(), model.store.checksum());
        println!("beta {beta}: checkpoint of {} bytes restored", checkpoint.len());
    }
    Ok(())
}
