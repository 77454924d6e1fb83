//! Neural next-article recommender.
//!
//! Each (article, context) pair is fused by Ψ into a contextual article
//! embedding (CAE). A stack of update-gate RNN layers reads the session's
//! CAE sequence and projects its last state to a predicted next-article
//! embedding (NAE). Candidates are scored by φ(nae ⊙ cae) and trained with
//! a listwise softmax loss plus a novelty term over the sampled negatives.

mod input;
mod loss;
mod rnn;

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use log::debug;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use input::{ArticleInput, Encoding, InputLayout};
pub use loss::{accuracy_loss, click_loss, novelty_loss, softmax_probs, ClickLoss};
pub use rnn::UgrnnLayer;

use crate::corpus::{ArticleId, Catalog, ContextVocabs, Session, UserContext};
use crate::nn::{Activation, Adam, AdamConfig, Dense, DenseCache, Mlp, ParamError, ParamStore};
use crate::recommender::{Env, Query, Recommender, ScoreError, SessionTrace};
use crate::stream_stats::ArticleFeatures;

#[derive(Debug, Error)]
pub enum NarError {
    #[error("positive article missing from the candidate set")]
    MissingPositive,
    #[error("no negative samples")]
    NoNegatives,
    #[error("empty session prefix")]
    EmptyPrefix,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
    #[error(transparent)]
    Checkpoint(#[from] ParamError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub reg_l2: f64,
    pub softmax_temperature: f64,
    #[serde(rename = "CAR_embedding_size")]
    pub car_embedding_size: usize,
    pub rnn_units: usize,
    pub rnn_num_layers: usize,
    pub beta: f64,
    /// Hidden widths of Ψ before its CAE output layer.
    pub psi_hidden: Vec<usize>,
    /// Hidden widths of φ before its scalar output layer.
    pub phi_hidden: Vec<usize>,
    pub id_embedding_size: usize,
    pub category_embedding_size: usize,
    pub context_embedding_size: usize,
    /// Categoricals with fewer values than this are one-hot encoded.
    pub one_hot_max: usize,
    pub train_negatives: usize,
    pub seed: u64,
}

impl Default for NarConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-4,
            reg_l2: 1e-5,
            softmax_temperature: 0.1,
            car_embedding_size: 1024,
            rnn_units: 255,
            rnn_num_layers: 2,
            beta: 0.0,
            psi_hidden: vec![1024],
            phi_hidden: vec![128, 64, 32],
            id_embedding_size: 128,
            category_embedding_size: 32,
            context_embedding_size: 8,
            one_hot_max: 10,
            train_negatives: 50,
            seed: 1,
        }
    }
}

impl NarConfig {
    pub fn validate(&self) -> Result<(), NarError> {
        let bad = |m: &str| Err(NarError::Config(m.to_string()));
        if !(self.softmax_temperature > 0.0) {
            return bad("softmax_temperature must be > 0");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be >= 0");
        }
        if self.reg_l2 < 0.0 || self.learning_rate < 0.0 {
            return bad("reg_l2 and learning_rate must be >= 0");
        }
        if self.car_embedding_size == 0 || self.rnn_units == 0 || self.rnn_num_layers == 0 {
            return bad("CAR_embedding_size, rnn_units and rnn_num_layers must be positive");
        }
        if self.batch_size == 0 || self.train_negatives == 0 {
            return bad("batch_size and train_negatives must be positive");
        }
        if self.psi_hidden.contains(&0) || self.phi_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.softmax_temperature
    }
}

/// Static input dimensions taken from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarInputSpec {
    pub n_articles: usize,
    pub ace_dim: usize,
    pub n_categories: usize,
    pub context_cardinalities: [usize; 7],
}

impl NarInputSpec {
    pub fn from_catalog(catalog: &Catalog, vocabs: &ContextVocabs) -> Self {
        Self {
            n_articles: catalog.len(),
            ace_dim: catalog.ace_dim().unwrap_or(0),
            n_categories: catalog.categories.len(),
            context_cardinalities: vocabs.cardinalities(),
        }
    }
}

/// One clicked article of a training session, with its click-time state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainClick {
    pub article: ArticleId,
    pub features: ArticleFeatures,
    pub context: UserContext,
}

/// Candidates for predicting click `t + 1` from the prefix ending at `t`;
/// the first candidate is the positive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStep {
    pub candidates: Vec<ArticleId>,
    pub features: Vec<ArticleFeatures>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSession {
    pub clicks: Vec<TrainClick>,
    pub steps: Vec<TrainStep>,
}

impl TrainSession {
    pub fn from_trace(session: &Session, trace: &SessionTrace) -> Self {
        let clicks = session
            .clicks
            .iter()
            .zip(&trace.steps)
            .map(|(c, st)| TrainClick { article: c.article, features: st.features, context: c.context })
            .collect();
        let steps = trace
            .steps
            .iter()
            .map(|st| TrainStep { candidates: st.candidates.clone(), features: st.candidate_features.clone() })
            .collect();
        Self { clicks, steps }
    }

    fn n_valid(&self) -> usize {
        (0..self.clicks.len().saturating_sub(1)).filter(|&t| self.valid_step(t)).count()
    }

    fn valid_step(&self, t: usize) -> bool {
        self.steps.get(t).is_some_and(|s| {
            s.candidates.len() >= 2
                && s.features.len() == s.candidates.len()
                && s.candidates[0] == self.clicks[t + 1].article
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub accuracy: f64,
    pub novelty: f64,
    pub l2: f64,
    pub total: f64,
    pub n_clicks: usize,
}

struct SessionPass {
    acc: f64,
    nov: f64,
    lookups: input::Lookups,
    psi_caches: Vec<DenseCache>,
    cae: Array2<f64>,
    rnn_caches: Vec<rnn::SeqCache>,
    nae_cache: DenseCache,
    nae: Array2<f64>,
    phi_caches: Vec<DenseCache>,
    /// (prefix step, CAE row) of each φ row.
    pairs: Vec<(usize, usize)>,
    dscores: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct NarModel {
    pub config: NarConfig,
    pub spec: NarInputSpec,
    pub store: ParamStore,
    layout: InputLayout,
    psi: Mlp,
    rnn: Vec<UgrnnLayer>,
    nae: Dense,
    phi: Mlp,
    trained: Vec<bool>,
}

impl NarModel {
    pub fn new(config: NarConfig, spec: NarInputSpec) -> Result<Self, NarError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let id_table = store.add(
            "nar.article_id.emb",
            crate::nn::init_uniform(&mut rng, spec.n_articles + 1, config.id_embedding_size, config.id_embedding_size),
        );
        store.value_mut(id_table).row_mut(0).fill(0.0);
        let oh = config.one_hot_max;
        let category =
            Encoding::new(&mut store, "nar.category", spec.n_categories, config.category_embedding_size, oh, &mut rng);
        let names = ["country", "region", "city", "device", "os", "platform", "referrer"];
        let context: [Encoding; 7] = std::array::from_fn(|i| {
            Encoding::new(
                &mut store,
                &format!("nar.ctx.{}", names[i]),
                spec.context_cardinalities[i],
                config.context_embedding_size,
                oh,
                &mut rng,
            )
        });
        let weekday = Encoding::new(&mut store, "nar.weekday", 7, config.context_embedding_size, oh, &mut rng);
        let layout = InputLayout {
            id_table,
            id_dim: config.id_embedding_size,
            ace_dim: spec.ace_dim,
            category,
            context,
            weekday,
        };
        let car = config.car_embedding_size;
        let mut psi_widths = config.psi_hidden.clone();
        psi_widths.push(car);
        let psi = Mlp::new(&mut store, "nar.psi", layout.width(), &psi_widths, Activation::Leaky, Activation::Tanh, &mut rng);
        let mut rnn = Vec::new();
        let mut n_in = car;
        for l in 0..config.rnn_num_layers {
            rnn.push(UgrnnLayer::new(&mut store, &format!("nar.rnn.{l}"), n_in, config.rnn_units, &mut rng));
            n_in = config.rnn_units;
        }
        let nae = Dense::new(&mut store, "nar.nae", config.rnn_units, car, Activation::Tanh, &mut rng);
        let mut phi_widths = config.phi_hidden.clone();
        phi_widths.push(1);
        let phi = Mlp::new(&mut store, "nar.phi", car, &phi_widths, Activation::Leaky, Activation::Linear, &mut rng);
        Ok(Self { trained: vec![false; spec.n_articles], config, spec, store, layout, psi, rnn, nae, phi })
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma()
    }

    pub fn input_width(&self) -> usize {
        self.layout.width()
    }

    pub fn is_trained(&self, a: ArticleId) -> bool {
        self.trained.get(a.index()).copied().unwrap_or(false)
    }

    fn id_row(&self, a: ArticleId, training: bool) -> usize {
        let i = a.index();
        if i < self.spec.n_articles && (training || self.trained[i]) {
            i + 1
        } else {
            0
        }
    }

    pub fn article_input<'a>(
        &self,
        catalog: &'a Catalog,
        a: ArticleId,
        f: &ArticleFeatures,
        context: &'a UserContext,
        training: bool,
    ) -> ArticleInput<'a> {
        ArticleInput {
            id_row: self.id_row(a, training),
            ace: catalog.ace(a),
            category: catalog.get(a).and_then(|x| x.category).unwrap_or(0),
            novelty_z: f.novelty_z,
            recency_z: f.recency_z,
            context,
        }
    }

    /// Contextual article embeddings, one row per input.
    pub fn build_cae(&self, store: &ParamStore, inputs: &[ArticleInput<'_>]) -> Array2<f64> {
        let (x, _) = self.layout.assemble(store, inputs);
        self.psi.forward(store, &x)
    }

    fn rnn_states(&self, store: &ParamStore, caes: &Array2<f64>) -> Array2<f64> {
        let mut h = caes.clone();
        for l in &self.rnn {
            h = l.forward(store, &h);
        }
        h
    }

    /// Predicted next-article embedding after reading `caes` in order.
    pub fn predict_nae(&self, store: &ParamStore, caes: &Array2<f64>) -> Result<Array1<f64>, NarError> {
        if caes.nrows() == 0 {
            return Err(NarError::EmptyPrefix);
        }
        let h = self.rnn_states(store, caes);
        let last = h.slice(s![h.nrows() - 1.., ..]).to_owned();
        Ok(self.nae.forward(store, &last).row(0).to_owned())
    }

    /// φ(nae ⊙ cae) for each CAE row.
    pub fn relevance(&self, store: &ParamStore, nae: ArrayView1<'_, f64>, caes: &Array2<f64>) -> Vec<f64> {
        let x = caes * &nae.insert_axis(Axis(0));
        self.phi.forward(store, &x).column(0).to_vec()
    }

    pub fn score_inputs(&self, prefix: &[ArticleInput<'_>], candidates: &[ArticleInput<'_>]) -> Result<Vec<f64>, NarError> {
        let nae = self.predict_nae(&self.store, &self.build_cae(&self.store, prefix))?;
        let caes = self.build_cae(&self.store, candidates);
        Ok(self.relevance(&self.store, nae.view(), &caes))
    }

    fn session_forward(
        &self,
        store: &ParamStore,
        catalog: &Catalog,
        s: &TrainSession,
        weight: f64,
    ) -> Result<Option<SessionPass>, NarError> {
        let t_in = s.clicks.len().saturating_sub(1);
        let valid: Vec<usize> = (0..t_in).filter(|&t| s.valid_step(t)).collect();
        if valid.is_empty() {
            return Ok(None);
        }
        let mut inputs: Vec<ArticleInput<'_>> = s.clicks[..t_in]
            .iter()
            .map(|c| self.article_input(catalog, c.article, &c.features, &c.context, true))
            .collect();
        let mut pairs = Vec::new();
        let mut spans = Vec::new();
        for &t in &valid {
            let step = &s.steps[t];
            let start = pairs.len();
            for (a, f) in step.candidates.iter().zip(&step.features) {
                pairs.push((t, inputs.len()));
                inputs.push(self.article_input(catalog, *a, f, &s.clicks[t].context, true));
            }
            spans.push((t, start, pairs.len()));
        }
        let (x, lookups) = self.layout.assemble(store, &inputs);
        let (cae, psi_caches) = self.psi.forward_train(store, &x);

        let mut h = cae.slice(s![..t_in, ..]).to_owned();
        let mut rnn_caches = Vec::with_capacity(self.rnn.len());
        for l in &self.rnn {
            let (o, c) = l.forward_train(store, &h);
            rnn_caches.push(c);
            h = o;
        }
        let (nae, nae_cache) = self.nae.forward_train(store, &h);

        let car = self.config.car_embedding_size;
        let mut phi_in = Array2::zeros((pairs.len(), car));
        for (i, &(t, r)) in pairs.iter().enumerate() {
            phi_in.row_mut(i).assign(&(&nae.row(t) * &cae.row(r)));
        }
        let (scores, phi_caches) = self.phi.forward_train(store, &phi_in);

        let gamma = self.gamma();
        let mut dscores = Array2::zeros((pairs.len(), 1));
        let (mut acc, mut nov) = (0.0, 0.0);
        for &(t, a, b) in &spans {
            let sc: Vec<f64> = scores.slice(s![a..b, 0]).to_vec();
            let novelty: Vec<f64> = s.steps[t].features[1..].iter().map(|f| f.novelty).collect();
            let cl = click_loss(&sc, &novelty, gamma, self.config.beta, weight)?;
            acc += cl.acc;
            nov += cl.nov;
            for (i, d) in cl.dscores.into_iter().enumerate() {
                dscores[[a + i, 0]] = d;
            }
        }
        Ok(Some(SessionPass {
            acc,
            nov,
            lookups,
            psi_caches,
            cae,
            rnn_caches,
            nae_cache,
            nae,
            phi_caches,
            pairs,
            dscores,
        }))
    }

    fn session_backward(&mut self, p: SessionPass) {
        let dphi = self.phi.backward(&mut self.store, &p.phi_caches, &p.dscores);
        let mut dcae = Array2::zeros(p.cae.raw_dim());
        let mut dnae = Array2::zeros(p.nae.raw_dim());
        for (i, &(t, r)) in p.pairs.iter().enumerate() {
            let g = dphi.row(i);
            let mut dn = dnae.row_mut(t);
            dn += &(&g * &p.cae.row(r));
            let mut dc = dcae.row_mut(r);
            dc += &(&g * &p.nae.row(t));
        }
        let mut dh = self.nae.backward(&mut self.store, &p.nae_cache, &dnae);
        for (l, c) in self.rnn.iter().zip(&p.rnn_caches).rev() {
            dh = l.backward(&mut self.store, c, &dh);
        }
        let t_in = dh.nrows();
        let mut head = dcae.slice_mut(s![..t_in, ..]);
        head += &dh;
        let dx = self.psi.backward(&mut self.store, &p.psi_caches, &dcae);
        self.layout.backward(&mut self.store, &p.lookups, &dx);
    }

    fn l2_value(&self, store: &ParamStore) -> f64 {
        let sq: f64 = store.params().iter().map(|p| p.value.iter().map(|v| v * v).sum::<f64>()).sum();
        0.5 * self.config.reg_l2 * sq
    }

    /// Total loss of `batch` under `store`'s values, without gradients.
    pub fn batch_loss(&self, store: &ParamStore, catalog: &Catalog, batch: &[TrainSession]) -> Result<LossParts, NarError> {
        let n: usize = batch.iter().map(TrainSession::n_valid).sum();
        let mut out = LossParts { n_clicks: n, l2: self.l2_value(store), ..LossParts::default() };
        if n > 0 {
            for s in batch {
                if let Some(p) = self.session_forward(store, catalog, s, 1.0 / n as f64)? {
                    out.accuracy += p.acc;
                    out.novelty += p.nov;
                }
            }
            out.accuracy /= n as f64;
            out.novelty /= n as f64;
        }
        out.total = out.accuracy - self.config.beta * out.novelty + out.l2;
        Ok(out)
    }

    /// Replaces the stored gradients with those of the batch's total loss.
    pub fn compute_gradients(&mut self, catalog: &Catalog, batch: &[TrainSession]) -> Result<LossParts, NarError> {
        self.store.zero_grad();
        let n: usize = batch.iter().map(TrainSession::n_valid).sum();
        let mut out = LossParts { n_clicks: n, ..LossParts::default() };
        if n > 0 {
            for s in batch {
                if let Some(p) = self.session_forward(&self.store, catalog, s, 1.0 / n as f64)? {
                    out.accuracy += p.acc;
                    out.novelty += p.nov;
                    self.session_backward(p);
                }
            }
            out.accuracy /= n as f64;
            out.novelty /= n as f64;
        }
        out.l2 = self.store.apply_l2(self.config.reg_l2);
        out.total = out.accuracy - self.config.beta * out.novelty + out.l2;
        Ok(out)
    }

    /// One optimizer update on `batch`.
    pub fn train_step(&mut self, adam: &mut Adam, catalog: &Catalog, batch: &[TrainSession]) -> Result<LossParts, NarError> {
        let loss = self.compute_gradients(catalog, batch)?;
        if !loss.total.is_finite() {
            return Err(NarError::NonFinite {
                step: adam.steps(),
                detail: format!("{loss:?}, parameters finite: {}", self.store.all_finite()),
            });
        }
        adam.step(&mut self.store);
        if !self.store.all_finite() {
            return Err(NarError::NonFinite { step: adam.steps(), detail: "parameters diverged".into() });
        }
        for s in batch {
            for c in &s.clicks {
                self.mark_trained(c.article);
            }
            for st in &s.steps {
                for &a in &st.candidates {
                    self.mark_trained(a);
                }
            }
        }
        Ok(loss)
    }

    fn mark_trained(&mut self, a: ArticleId) {
        if let Some(t) = self.trained.get_mut(a.index()) {
            *t = true;
        }
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), NarError> {
        self.store.save(w).map_err(Into::into)
    }

    /// Loads parameters saved from a model with the same config and spec.
    /// Every article row in the checkpoint is treated as trained.
    pub fn load<R: BufRead>(&mut self, r: R) -> Result<(), NarError> {
        self.store.load(r)?;
        self.trained.fill(true);
        Ok(())
    }
}

/// The neural model behind the [`Recommender`] interface. Sessions queue up
/// on `observe` and are consumed once each by `fit`.
#[derive(Clone, Debug)]
pub struct NarRecommender {
    pub model: NarModel,
    adam: Adam,
    pending: VecDeque<TrainSession>,
    pub losses: Vec<LossParts>,
}

impl NarRecommender {
    pub fn new(config: NarConfig, spec: NarInputSpec) -> Result<Self, NarError> {
        let model = NarModel::new(config, spec)?;
        let adam = Adam::new(
            AdamConfig { learning_rate: model.config.learning_rate, ..AdamConfig::default() },
            &model.store,
        );
        Ok(Self { model, adam, pending: VecDeque::new(), losses: Vec::new() })
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn enqueue(&mut self, s: TrainSession) {
        self.pending.push_back(s);
    }

    pub fn train_pending(&mut self, catalog: &Catalog, flush: bool) -> Result<usize, NarError> {
        let bs = self.model.config.batch_size;
        let mut steps = 0;
        while self.pending.len() >= bs || (flush && !self.pending.is_empty()) {
            let take = bs.min(self.pending.len());
            let batch: Vec<TrainSession> = self.pending.drain(..take).collect();
            let loss = self.model.train_step(&mut self.adam, catalog, &batch)?;
            debug!("nar step {}: loss {:.5} acc {:.5} nov {:.5}", self.adam.steps(), loss.total, loss.accuracy, loss.novelty);
            self.losses.push(loss);
            steps += 1;
        }
        Ok(steps)
    }
}

impl Recommender for NarRecommender {
    fn name(&self) -> &str {
        "nar"
    }

    fn needs_trace(&self) -> bool {
        true
    }

    fn observe(&mut self, session: &Session, trace: Option<&SessionTrace>, _: &Env<'_>) {
        if let Some(t) = trace {
            self.enqueue(TrainSession::from_trace(session, t));
        }
    }

    fn fit(&mut self, env: &Env<'_>, flush: bool) -> Result<(), ScoreError> {
        self.train_pending(env.catalog, flush).map(|_| ()).map_err(|e| ScoreError::Model(e.to_string()))
    }

    fn score(&self, query: &Query<'_>, env: &Env<'_>) -> Result<Vec<f64>, ScoreError> {
        let last = query.last()?;
        let m = &self.model;
        let prefix: Vec<ArticleInput<'_>> = query
            .prefix
            .iter()
            .zip(query.prefix_features)
            .map(|(c, f)| m.article_input(env.catalog, c.article, f, &c.context, false))
            .collect();
        let cands: Vec<ArticleInput<'_>> = query
            .candidates
            .iter()
            .zip(query.candidate_features)
            .map(|(a, f)| m.article_input(env.catalog, *a, f, &last.context, false))
            .collect();
        let scores = m.score_inputs(&prefix, &cands).map_err(|e| ScoreError::Model(e.to_string()))?;
        if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
            return Err(ScoreError::NonFinite(query.candidates[i]));
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests;
