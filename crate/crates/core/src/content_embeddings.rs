//! Article content embeddings learned by predicting article metadata from
//! text.
//!
//! The encoder averages word embeddings and feeds them through one leaky
//! hidden layer; that hidden layer is the article's content embedding
//! (ACE). Two heads sit on top during training: a softmax over categories
//! and independent sigmoids over keywords.

use std::io::{BufRead, Write};

use log::warn;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Catalog, CorpusError, Vocab};
use crate::nn::{init_uniform, Activation, Adam, AdamConfig, Dense, ParamId, ParamStore};

#[derive(Debug, Error)]
pub enum AcrError {
    #[error("no article has both text and a category")]
    NoTrainingData,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown article {0}")]
    UnknownArticle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcrConfig {
    pub ace_dim: usize,
    pub word_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub category_weight: f64,
    pub keyword_weight: f64,
    pub seed: u64,
}

impl Default for AcrConfig {
    fn default() -> Self {
        Self {
            ace_dim: 250,
            word_dim: 64,
            epochs: 10,
            batch_size: 32,
            learning_rate: 3e-3,
            category_weight: 1.0,
            keyword_weight: 1.0,
            seed: 11,
        }
    }
}

/// One labeled training article.
#[derive(Clone, Debug, PartialEq)]
pub struct AcrExample {
    pub tokens: Vec<u32>,
    pub category: u32,
    pub keywords: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct AcrModel {
    pub config: AcrConfig,
    pub store: ParamStore,
    words: ParamId,
    encoder: Dense,
    category_head: Dense,
    keyword_head: Option<Dense>,
}

struct Forward {
    mean: Array2<f64>,
    pre: Array2<f64>,
    ace: Array2<f64>,
    cat_probs: Array2<f64>,
    kw_probs: Option<Array2<f64>>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

impl AcrModel {
    /// `pretrained` rows, when given, initialize the word table.
    pub fn new(
        config: AcrConfig,
        n_words: usize,
        n_categories: usize,
        n_keywords: usize,
        pretrained: Option<Array2<f64>>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let table = match pretrained {
            Some(t) if t.dim() == (n_words, config.word_dim) => t,
            _ => init_uniform(&mut rng, n_words.max(1), config.word_dim, 1),
        };
        let words = store.add("acr.words", table);
        let encoder =
            Dense::new(&mut store, "acr.encoder", config.word_dim, config.ace_dim, Activation::Leaky, &mut rng);
        let category_head = Dense::new(
            &mut store,
            "acr.category",
            config.ace_dim,
            n_categories.max(1),
            Activation::Linear,
            &mut rng,
        );
        let keyword_head = (n_keywords > 0).then(|| {
            Dense::new(&mut store, "acr.keywords", config.ace_dim, n_keywords, Activation::Sigmoid, &mut rng)
        });
        Self { config, store, words, encoder, category_head, keyword_head }
    }

    fn n_words(&self) -> usize {
        self.store.value(self.words).nrows()
    }

    fn mean_embedding(&self, store: &ParamStore, tokens: &[u32]) -> Option<ndarray::Array1<f64>> {
        let table = store.value(self.words);
        let known: Vec<usize> = tokens.iter().map(|&t| t as usize).filter(|&t| t < table.nrows()).collect();
        if known.is_empty() {
            return None;
        }
        let mut acc = ndarray::Array1::zeros(table.ncols());
        for t in &known {
            acc += &table.row(*t);
        }
        Some(acc / known.len() as f64)
    }

    fn forward(&self, store: &ParamStore, batch: &[AcrExample]) -> Forward {
        let d = self.config.word_dim;
        let mut mean = Array2::zeros((batch.len(), d));
        for (i, ex) in batch.iter().enumerate() {
            if let Some(m) = self.mean_embedding(store, &ex.tokens) {
                mean.row_mut(i).assign(&m);
            }
        }
        let pre = mean.dot(store.value(self.encoder.w)) + store.value(self.encoder.b);
        let ace = pre.mapv(|v| Activation::Leaky.apply(v));
        let cat_probs = softmax_rows(&self.category_head.forward(store, &ace));
        let kw_probs = self.keyword_head.map(|h| h.forward(store, &ace));
        Forward { mean, pre, ace, cat_probs, kw_probs }
    }

    fn loss_from(&self, f: &Forward, batch: &[AcrExample]) -> f64 {
        let b = batch.len() as f64;
        let mut cat = 0.0;
        let mut kw = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            cat -= f.cat_probs[[i, ex.category as usize]].max(1e-300).ln();
            if let Some(p) = &f.kw_probs {
                let k = p.ncols() as f64;
                let row = p.row(i);
                let mut s = 0.0;
                for (j, &q) in row.iter().enumerate() {
                    let y = ex.keywords.contains(&(j as u32));
                    s -= if y { q.max(1e-300).ln() } else { (1.0 - q).max(1e-300).ln() };
                }
                kw += s / k;
            }
        }
        (self.config.category_weight * cat + self.config.keyword_weight * kw) / b
    }

    /// Weighted classification loss of `batch` under `store`'s values.
    pub fn loss_with(&self, store: &ParamStore, batch: &[AcrExample]) -> f64 {
        self.loss_from(&self.forward(store, batch), batch)
    }

    pub fn loss(&self, batch: &[AcrExample]) -> f64 {
        self.loss_with(&self.store, batch)
    }

    /// Replaces the stored gradients with those of the batch loss.
    pub fn compute_gradients(&mut self, batch: &[AcrExample]) -> f64 {
        self.store.zero_grad();
        if batch.is_empty() {
            return 0.0;
        }
        let f = self.forward(&self.store, batch);
        let loss = self.loss_from(&f, batch);
        let b = batch.len() as f64;
        let mut dcat = f.cat_probs.clone();
        for (i, ex) in batch.iter().enumerate() {
            dcat[[i, ex.category as usize]] -= 1.0;
        }
        dcat *= self.config.category_weight / b;
        let mut dace = grad_linear(&mut self.store, self.category_head, &f.ace, &dcat);
        if let (Some(head), Some(p)) = (self.keyword_head, &f.kw_probs) {
            let k = p.ncols() as f64;
            let mut dlogit = p.clone();
            for (i, ex) in batch.iter().enumerate() {
                for &j in &ex.keywords {
                    if (j as usize) < dlogit.ncols() {
                        dlogit[[i, j as usize]] -= 1.0;
                    }
                }
            }
            dlogit *= self.config.keyword_weight / (b * k);
            dace += &grad_linear(&mut self.store, head, &f.ace, &dlogit);
        }
        let mut dpre = dace;
        ndarray::Zip::from(&mut dpre).and(&f.pre).for_each(|d, &p| {
            *d *= Activation::Leaky.derivative(p, 0.0);
        });
        let dmean = grad_linear(&mut self.store, self.encoder, &f.mean, &dpre);
        let n_words = self.n_words();
        let g = self.store.grad_mut(self.words);
        for (i, ex) in batch.iter().enumerate() {
            let known: Vec<usize> =
                ex.tokens.iter().map(|&t| t as usize).filter(|&t| t < n_words).collect();
            if known.is_empty() {
                continue;
            }
            let share = &dmean.row(i) / known.len() as f64;
            for t in known {
                let mut dst = g.row_mut(t);
                dst += &share;
            }
        }
        loss
    }

    /// The content embedding of a token list; zeros when no token is known.
    pub fn embed(&self, tokens: &[u32]) -> Vec<f64> {
        match self.mean_embedding(&self.store, tokens) {
            Some(m) => {
                let x = m.insert_axis(Axis(0));
                self.encoder.forward(&self.store, &x).row(0).to_vec()
            }
            None => {
                warn!("article without known tokens gets a zero content embedding");
                vec![0.0; self.config.ace_dim]
            }
        }
    }

    pub fn category_probs(&self, tokens: &[u32]) -> Vec<f64> {
        let ex = AcrExample { tokens: tokens.to_vec(), category: 0, keywords: Vec::new() };
        self.forward(&self.store, &[ex]).cat_probs.row(0).to_vec()
    }

    pub fn keyword_head_grad_norm(&self) -> f64 {
        self.keyword_head.map_or(0.0, |h| {
            self.store.grad(h.w).iter().chain(self.store.grad(h.b).iter()).map(|v| v.abs()).sum()
        })
    }
}

/// Gradient of a pre-activation-linear dense layer given the logit gradient.
fn grad_linear(store: &mut ParamStore, layer: Dense, x: &Array2<f64>, dlogit: &Array2<f64>) -> Array2<f64> {
    *store.grad_mut(layer.w) += &x.t().dot(dlogit);
    *store.grad_mut(layer.b) += &dlogit.sum_axis(Axis(0)).insert_axis(Axis(0));
    dlogit.dot(&store.value(layer.w).t())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AcrTrainReport {
    pub epoch_losses: Vec<f64>,
    pub n_examples: usize,
    pub excluded: usize,
}

/// Labeled examples from the catalog; articles lacking text or category
/// are skipped.
pub fn training_examples(catalog: &Catalog) -> (Vec<AcrExample>, usize) {
    let mut out = Vec::new();
    let mut excluded = 0;
    for a in catalog.articles().iter().filter(|a| a.in_catalog) {
        match a.category {
            Some(c) if !a.tokens.is_empty() => out.push(AcrExample {
                tokens: a.tokens.clone(),
                category: c,
                keywords: a.keywords.clone(),
            }),
            _ => excluded += 1,
        }
    }
    if excluded > 0 {
        warn!("{excluded} articles without text or category excluded from content training");
    }
    (out, excluded)
}

pub fn train_on(
    config: &AcrConfig,
    examples: &[AcrExample],
    n_words: usize,
    n_categories: usize,
    n_keywords: usize,
    pretrained: Option<Array2<f64>>,
) -> Result<(AcrModel, AcrTrainReport), AcrError> {
    if examples.is_empty() {
        return Err(AcrError::NoTrainingData);
    }
    let mut model = AcrModel::new(config.clone(), n_words, n_categories, n_keywords, pretrained);
    let mut adam = Adam::new(
        AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() },
        &model.store,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = AcrTrainReport { n_examples: examples.len(), ..AcrTrainReport::default() };
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<AcrExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            total += model.compute_gradients(&batch) * batch.len() as f64;
            adam.step(&mut model.store);
        }
        report.epoch_losses.push(total / examples.len() as f64);
    }
    Ok((model, report))
}

/// Trains on every labeled catalog article.
pub fn train_acr(
    catalog: &Catalog,
    config: &AcrConfig,
    pretrained: Option<Array2<f64>>,
) -> Result<(AcrModel, AcrTrainReport), AcrError> {
    let (examples, excluded) = training_examples(catalog);
    let (model, mut report) = train_on(
        config,
        &examples,
        catalog.words.len(),
        catalog.categories.len(),
        catalog.keywords.len(),
        pretrained,
    )?;
    report.excluded = excluded;
    Ok((model, report))
}

/// Stores an embedding for every article that has none yet; returns how
/// many were written.
pub fn embed_catalog(model: &AcrModel, catalog: &mut Catalog) -> Result<usize, AcrError> {
    let todo: Vec<_> = catalog
        .articles()
        .iter()
        .filter(|a| a.ace().is_none())
        .map(|a| (a.id, a.tokens.clone()))
        .collect();
    for (id, tokens) in &todo {
        catalog.set_ace(*id, model.embed(tokens))?;
    }
    Ok(todo.len())
}

/// One line per article: `key dim v1 .. vd`, six decimals.
pub fn write_ace_repository<W: Write>(catalog: &Catalog, mut w: W) -> Result<usize, AcrError> {
    let mut n = 0;
    for a in catalog.articles() {
        if let Some(v) = a.ace() {
            write!(w, "{} {}", a.key, v.len())?;
            for x in v {
                write!(w, " {x:.6}")?;
            }
            writeln!(w)?;
            n += 1;
        }
    }
    Ok(n)
}

pub fn read_ace_repository<R: BufRead>(r: R, catalog: &mut Catalog) -> Result<usize, AcrError> {
    let mut n = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let parse_err = |m: &str| AcrError::Parse { line: i + 1, message: m.to_string() };
        let mut f = line.split_whitespace();
        let Some(key) = f.next() else { continue };
        let dim: usize = f.next().and_then(|d| d.parse().ok()).ok_or_else(|| parse_err("bad dim"))?;
        let vals: Vec<f64> = f.map(str::parse).collect::<Result<_, _>>().map_err(|_| parse_err("bad value"))?;
        if vals.len() != dim {
            return Err(parse_err("value count differs from dim"));
        }
        let id = catalog.lookup(key).ok_or_else(|| AcrError::UnknownArticle(key.to_string()))?;
        catalog.set_ace(id, vals)?;
        n += 1;
    }
    Ok(n)
}

/// Reads `word v1 .. vd` lines into a table aligned with `vocab`. Words
/// missing from the file keep small random vectors.
pub fn load_word_vectors<R: BufRead>(r: R, vocab: &Vocab, dim: usize, seed: u64) -> Result<(Array2<f64>, usize), AcrError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = init_uniform(&mut rng, vocab.len().max(1), dim, 1);
    let mut found = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let mut f = line.split_whitespace();
        let Some(word) = f.next() else { continue };
        let vals: Vec<f64> = f.map(str::parse).collect::<Result<_, _>>().map_err(|_| AcrError::Parse {
            line: i + 1,
            message: "bad vector value".into(),
        })?;
        if vals.len() != dim {
            return Err(AcrError::Parse { line: i + 1, message: format!("expected {dim} values") });
        }
        if let Some(id) = vocab.get(word) {
            table.row_mut(id as usize).assign(&ndarray::Array1::from(vals));
            found += 1;
        }
    }
    Ok((table, found))
}
