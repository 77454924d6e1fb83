//! Run configuration and bundled profiles.
//!
//! A config is one TOML document. Algorithm sections use the hyper-parameter
//! names of the original implementations verbatim (`batch_size`,
//! `softmax_temperature`, `CAR_embedding_size`, `max_clicks_dist`, ...).
//! A file is layered over a profile, so it only needs the keys it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{ItemKnnConfig, SrConfig, VsknnConfig};
use crate::content_embeddings::AcrConfig;
use crate::corpus::SyntheticConfig;
use crate::harness::HarnessConfig;
use crate::nar::NarConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown profile {0:?}; expected one of {PROFILES:?}")]
    UnknownProfile(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

pub const PROFILES: [&str; 3] = ["g1-like", "adressa-like", "quick"];

pub const ALGORITHMS: [&str; 8] = ["nar", "co", "sr", "itemknn", "vsknn", "rp", "cb", "random"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    /// A dataset file written by `ingest`.
    Ingested,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    /// Precomputed content embeddings; articles missing from it are
    /// embedded by a freshly trained encoder.
    pub ace_repository: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmsConfig {
    pub enabled: Vec<String>,
    pub nar: NarConfig,
    pub sr: SrConfig,
    pub itemknn: ItemKnnConfig,
    pub vsknn: VsknnConfig,
}

impl Default for AlgorithmsConfig {
    fn default() -> Self {
        Self {
            enabled: ["nar", "co", "sr", "itemknn", "vsknn", "rp", "cb"].map(String::from).to_vec(),
            nar: NarConfig::default(),
            sr: SrConfig::default(),
            itemknn: ItemKnnConfig::default(),
            vsknn: VsknnConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub harness: HarnessConfig,
    pub acr: AcrConfig,
    pub algorithms: AlgorithmsConfig,
}

const G1_LIKE: &str = r#"
seed = 1

[harness]
warmup_hours = 48

[algorithms.nar]
batch_size = 256
learning_rate = 1e-4
reg_l2 = 1e-5
softmax_temperature = 0.1
CAR_embedding_size = 1024
rnn_units = 255
rnn_num_layers = 2

[algorithms.sr]
max_clicks_dist = 10
dist_between_clicks_decay = "div"

[algorithms.itemknn]
reg_lambda = 20.0
alpha = 0.75

[algorithms.vsknn]
sessions_buffer_size = 3000
candidate_sessions_sample_size = 1000
nearest_neighbor_session_for_scoring = 500
similarity = "cosine"
sampling_strategy = "recent"
first_session_clicks_decay = "div"
"#;

const ADRESSA_LIKE: &str = r#"
seed = 1

[harness]
warmup_hours = 48

[algorithms.nar]
batch_size = 64
learning_rate = 3e-4
reg_l2 = 1e-4
softmax_temperature = 0.2
CAR_embedding_size = 1024
rnn_units = 255
rnn_num_layers = 2

[algorithms.sr]
max_clicks_dist = 10
dist_between_clicks_decay = "div"

[algorithms.itemknn]
reg_lambda = 20.0
alpha = 0.5

[algorithms.vsknn]
sessions_buffer_size = 3000
candidate_sessions_sample_size = 2000
nearest_neighbor_session_for_scoring = 500
similarity = "cosine"
sampling_strategy = "recent"
first_session_clicks_decay = "div"
"#;

/// Small network and a shorter warm-up for single-core runs on the bundled
/// synthetic portal.
const QUICK: &str = r#"
seed = 1

[harness]
warmup_hours = 24

[acr]
ace_dim = 32
word_dim = 32
epochs = 8

[algorithms.nar]
batch_size = 64
learning_rate = 3e-3
reg_l2 = 1e-5
softmax_temperature = 0.2
CAR_embedding_size = 32
rnn_units = 32
rnn_num_layers = 2
psi_hidden = [64]
phi_hidden = [32, 16]
id_embedding_size = 16
category_embedding_size = 8
context_embedding_size = 4
train_negatives = 20
"#;

fn profile_source(name: &str) -> Result<&'static str, ConfigError> {
    match name {
        "g1-like" => Ok(G1_LIKE),
        "adressa-like" => Ok(ADRESSA_LIKE),
        "quick" => Ok(QUICK),
        _ => Err(ConfigError::UnknownProfile(name.to_string())),
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(format!("{origin}: {e}")))
}

impl RunConfig {
    pub fn profile(name: &str) -> Result<Self, ConfigError> {
        Self::layered(name, None)
    }

    /// `profile` with the TOML document `overlay` applied on top.
    pub fn layered(profile: &str, overlay: Option<&str>) -> Result<Self, ConfigError> {
        let mut table = parse_table(profile_source(profile)?, profile)?;
        if let Some(text) = overlay {
            merge(&mut table, parse_table(text, "config")?);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(profile: &str, path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = path
            .map(|p| std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source }))
            .transpose()?;
        Self::layered(profile, text.as_deref())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        for a in &self.algorithms.enabled {
            if !ALGORITHMS.contains(&a.as_str()) {
                errs.push(format!("unknown algorithm {a:?}; valid: {}", ALGORITHMS.join(", ")));
            }
        }
        if self.algorithms.enabled.is_empty() {
            errs.push("algorithms.enabled is empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.algorithms.enabled {
            if !seen.insert(a) {
                errs.push(format!("algorithm {a:?} listed twice"));
            }
        }
        if self.algorithms.enabled.iter().any(|a| a == "nar") {
            if let Err(e) = self.algorithms.nar.validate() {
                errs.push(format!("algorithms.nar: {e}"));
            }
        }
        match self.dataset.source {
            DataSource::Synthetic => {
                if let Err(e) = self.dataset.synthetic.validate() {
                    errs.push(format!("dataset.synthetic: {e}"));
                }
            }
            DataSource::Ingested if self.dataset.path.is_none() => {
                errs.push("dataset.path is required for source = \"ingested\"".into())
            }
            DataSource::Ingested => {}
        }
        let h = &self.harness;
        if h.cutoff == 0 || h.negatives == 0 || h.eval_stride == 0 {
            errs.push("harness.cutoff, harness.negatives and harness.eval_stride must be positive".into());
        }
        if !(0.0..=1.0).contains(&h.background_relevance) {
            errs.push("harness.background_relevance must be in [0, 1]".into());
        }
        if h.tracker.bucket_secs <= 0 || h.tracker.window_secs < h.tracker.bucket_secs {
            errs.push("harness.tracker needs 0 < bucket_secs <= window_secs".into());
        }
        if self.acr.ace_dim == 0 || self.acr.word_dim == 0 || self.acr.batch_size == 0 {
            errs.push("acr dimensions and batch_size must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Propagates the top-level seed into every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.harness.seed = seed;
        self.algorithms.nar.seed = seed;
        self.acr.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_load_and_validate() {
        for p in PROFILES {
            let c = RunConfig::profile(p).unwrap();
            c.validate().unwrap();
        }
        let g1 = RunConfig::profile("g1-like").unwrap();
        assert_eq!(g1.algorithms.nar.car_embedding_size, 1024);
        assert_eq!(g1.algorithms.nar.softmax_temperature, 0.1);
        let ad = RunConfig::profile("adressa-like").unwrap();
        assert_eq!(ad.algorithms.nar.batch_size, 64);
        assert_eq!(ad.algorithms.itemknn.alpha, 0.5);
        assert_eq!(ad.algorithms.vsknn.candidate_sessions_sample_size, 2000);
        assert!(matches!(RunConfig::profile("nope"), Err(ConfigError::UnknownProfile(_))));
    }

    #[test]
    fn round_trip() {
        for p in PROFILES {
            let c = RunConfig::profile(p).unwrap();
            let again: RunConfig = toml::from_str(&c.to_toml()).unwrap();
            assert_eq!(c, again);
        }
    }

    #[test]
    fn overlay_changes_only_named_keys() {
        let c = RunConfig::layered("quick", Some("[algorithms.nar]\nbeta = 0.3\n")).unwrap();
        let q = RunConfig::profile("quick").unwrap();
        assert_eq!(c.algorithms.nar.beta, 0.3);
        assert_eq!(c.algorithms.nar.rnn_units, q.algorithms.nar.rnn_units);
    }

    #[test]
    fn unknown_keys_and_algorithms_are_reported() {
        assert!(RunConfig::layered("quick", Some("[algorithms.sr]\nmax_click_dist = 3\n")).is_err());
        let c = RunConfig::layered("quick", Some("[algorithms]\nenabled = [\"sr\", \"gru4rec\", \"sr\"]\n")).unwrap();
        let ConfigError::Invalid(errs) = c.validate().unwrap_err() else { panic!() };
        assert_eq!(errs.len(), 2);
        assert!(errs[0].contains("gru4rec") && errs[0].contains("vsknn"));
        let c = RunConfig::layered("quick", Some("[dataset]\nsource = \"ingested\"\n[algorithms.nar]\nsoftmax_temperature = 0.0\n")).unwrap();
        let ConfigError::Invalid(errs) = c.validate().unwrap_err() else { panic!() };
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn seed_reaches_components() {
        let c = RunConfig::profile("quick").unwrap().with_seed(9);
        assert_eq!((c.harness.seed, c.algorithms.nar.seed, c.acr.seed), (9, 9, 9));
    }
}
