//! End-to-end experiment plumbing shared by the command line and examples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    CoOccurrence, ContentBased, ItemKnn, RandomScorer, RecentlyPopular, SequentialRules, VsKnn,
};
use crate::config::{ConfigError, DataSource, RunConfig};
use crate::content_embeddings::{embed_catalog, read_ace_repository, train_acr, AcrError};
use crate::corpus::{
    build_sessions, compute_stats, generate_synthetic, parse_catalog, parse_click_log, ArticleId, Catalog,
    ContextVocabs, CorpusError, DatasetStats, Session, SessionRules, SessionizeReport,
};
use crate::harness::{self, EvalReport, HarnessError, Metric};
use crate::nar::{NarError, NarInputSpec, NarRecommender};
use crate::recommender::Recommender;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Acr(#[from] AcrError),
    #[error(transparent)]
    Nar(#[from] NarError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    /// Whether the error comes from the input data rather than the run.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Corpus(_)
                | PipelineError::Acr(AcrError::Parse { .. } | AcrError::NoTrainingData | AcrError::UnknownArticle(_))
                | PipelineError::Io { .. }
                | PipelineError::Json { .. }
                | PipelineError::Data(_)
                | PipelineError::Harness(HarnessError::Schedule(_) | HarnessError::Tracker { .. })
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

/// A sessionized dataset as written by `ingest`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub catalog: Catalog,
    pub sessions: Vec<Session>,
    pub vocabs: ContextVocabs,
    pub stats: DatasetStats,
    pub sessionize: SessionizeReport,
}

impl Dataset {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let f = File::create(path).map_err(io_err(path))?;
        serde_json::to_writer(BufWriter::new(f), self)
            .map_err(|source| PipelineError::Json { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let f = File::open(path).map_err(io_err(path))?;
        let mut d: Dataset = serde_json::from_reader(BufReader::new(f))
            .map_err(|source| PipelineError::Json { path: path.display().to_string(), source })?;
        d.catalog.reindex();
        d.vocabs.reindex();
        Ok(d)
    }
}

/// Parses a click log and an article catalog and sessionizes the clicks.
pub fn ingest<R1: Read, R2: Read>(clicks: R1, catalog: R2) -> Result<Dataset, PipelineError> {
    let mut cat = Catalog::new();
    parse_catalog(BufReader::new(catalog), &mut cat)?;
    let mut vocabs = ContextVocabs::new();
    let log = parse_click_log(BufReader::new(clicks), &mut cat, &mut vocabs)?;
    if log.is_empty() {
        return Err(PipelineError::Data("click log is empty".into()));
    }
    let (sessions, report) = build_sessions(&log, &SessionRules::default());
    if sessions.is_empty() {
        return Err(PipelineError::Data("no session has two or more clicks".into()));
    }
    let universe: Vec<ArticleId> = cat.articles().iter().filter(|a| a.in_catalog).map(|a| a.id).collect();
    let stats = compute_stats(&sessions, &universe)?;
    Ok(Dataset { catalog: cat, sessions, vocabs, stats, sessionize: report })
}

/// Data ready for evaluation: every article has a content embedding where
/// one could be computed.
pub struct Prepared {
    pub catalog: Catalog,
    pub sessions: Vec<Session>,
    pub vocabs: ContextVocabs,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, PipelineError> {
    let (mut catalog, sessions, vocabs) = match cfg.dataset.source {
        DataSource::Synthetic => {
            let d = generate_synthetic(&cfg.dataset.synthetic)?;
            (d.catalog, d.sessions, d.vocabs)
        }
        DataSource::Ingested => {
            let path = cfg.dataset.path.as_deref().ok_or_else(|| PipelineError::Data("dataset.path missing".into()))?;
            let d = Dataset::load(path)?;
            (d.catalog, d.sessions, d.vocabs)
        }
    };
    if let Some(p) = &cfg.dataset.ace_repository {
        let f = File::open(p).map_err(io_err(p))?;
        let n = read_ace_repository(BufReader::new(f), &mut catalog)?;
        info!("loaded {n} content embeddings from {}", p.display());
    }
    if catalog.articles().iter().any(|a| a.ace().is_none()) {
        let (model, report) = train_acr(&catalog, &cfg.acr, None)?;
        info!(
            "content encoder trained on {} articles, final loss {:.4}",
            report.n_examples,
            report.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
        embed_catalog(&model, &mut catalog)?;
    }
    Ok(Prepared { catalog, sessions, vocabs })
}

pub fn build_algorithms(cfg: &RunConfig, data: &Prepared) -> Result<Vec<Box<dyn Recommender>>, PipelineError> {
    let a = &cfg.algorithms;
    let mut out: Vec<Box<dyn Recommender>> = Vec::new();
    for name in &a.enabled {
        let alg: Box<dyn Recommender> = match name.as_str() {
            "nar" => {
                let spec = NarInputSpec::from_catalog(&data.catalog, &data.vocabs);
                Box::new(NarRecommender::new(a.nar.clone(), spec)?)
            }
            "co" => Box::new(CoOccurrence::new()),
            "sr" => Box::new(SequentialRules::new(a.sr)),
            "itemknn" => Box::new(ItemKnn::new(a.itemknn)),
            "vsknn" => Box::new(VsKnn::new(a.vsknn, cfg.seed)),
            "rp" => Box::new(RecentlyPopular),
            "cb" => Box::new(ContentBased),
            "random" => Box::new(RandomScorer { seed: cfg.seed }),
            other => return Err(ConfigError::Invalid(vec![format!("unknown algorithm {other:?}")]).into()),
        };
        out.push(alg);
    }
    Ok(out)
}

fn harness_config(cfg: &RunConfig) -> harness::HarnessConfig {
    let mut h = cfg.harness.clone();
    h.train_negatives = cfg.algorithms.nar.train_negatives;
    h
}

/// Evaluates every enabled algorithm on prepared data.
pub fn evaluate(cfg: &RunConfig, data: &Prepared) -> Result<EvalReport, PipelineError> {
    cfg.validate()?;
    let mut algs = build_algorithms(cfg, data)?;
    Ok(harness::run(&data.catalog, &data.sessions, &mut algs, &harness_config(cfg))?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mrr: Option<f64>,
    pub esi_r: Option<f64>,
    pub cov: Option<f64>,
}

/// One neural run per β on the same data.
pub fn sweep_beta(cfg: &RunConfig, data: &Prepared, betas: &[f64]) -> Result<Vec<SweepRow>, PipelineError> {
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0)) {
        return Err(ConfigError::Invalid(vec![format!("beta {b} must be >= 0")]).into());
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut c = cfg.clone();
        c.algorithms.enabled = vec!["nar".into()];
        c.algorithms.nar.beta = beta;
        let r = evaluate(&c, data)?;
        let row = SweepRow {
            beta,
            mrr: r.mean("nar", Metric::Mrr),
            esi_r: r.mean("nar", Metric::EsiR),
            cov: r.mean("nar", Metric::Cov),
        };
        info!("beta {beta}: {row:?}");
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], cutoff: usize, w: W) -> Result<(), PipelineError> {
    let mut out = csv::Writer::from_writer(w);
    let f = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
    let map = |e: csv::Error| PipelineError::Harness(e.into());
    out.write_record(["beta".to_string(), Metric::Mrr.column(cutoff), Metric::EsiR.column(cutoff), Metric::Cov.column(cutoff)])
        .map_err(map)?;
    for r in rows {
        out.write_record([r.beta.to_string(), f(r.mrr), f(r.esi_r), f(r.cov)]).map_err(map)?;
    }
    out.flush().map_err(|e| PipelineError::Io { path: "sweep".into(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SyntheticConfig;

    #[test]
    fn dataset_file_round_trips_exactly() {
        let portal = generate_synthetic(&SyntheticConfig { n_articles: 80, n_hours: 3, sessions_per_hour: 40, ..Default::default() }).unwrap();
        let (mut clicks, mut articles) = (Vec::new(), Vec::new());
        portal.write_jsonl(&mut clicks, &mut articles).unwrap();
        let d = ingest(clicks.as_slice(), articles.as_slice()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        d.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), d);
    }
}
