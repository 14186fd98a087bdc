//! TOML run configuration.
//!
//! Every section is optional and falls back to the library defaults:
//!
//! ```toml
//! seed = 7
//! embedder = "builtin-hash"      # or "sidecar" / "sidecar(http://host:port)"
//! predictor = "keyword"          # or "sidecar"
//!
//! [graph]
//! alpha = 0.4
//!
//! [training]
//! n_samples = 20000
//! hidden = [128, 32, 4]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chargegraph::DEFAULT_ALPHA as DEFAULT_GRAPH_ALPHA;
use crate::corpus::{ChargeVocabulary, GeneratorConfig};
use crate::experiment::{EvalConfig, TrainingConfig};
use crate::features::FeatureConfig;
use crate::predictor::{ChargePredictor, KeywordPredictor};
use crate::ranker::Bm25;
use crate::sidecar::{SidecarClient, SidecarConfig, SidecarError, SIDECAR_URL_ENV};
use crate::textsim::{EmbeddingProvider, HashEmbedder};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum EmbedderChoice {
    #[default]
    BuiltinHash,
    /// A remote service; without a URL the environment variable is used.
    Sidecar(Option<String>),
}

impl fmt::Display for EmbedderChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedderChoice::BuiltinHash => f.write_str("builtin-hash"),
            EmbedderChoice::Sidecar(None) => f.write_str("sidecar"),
            EmbedderChoice::Sidecar(Some(url)) => write!(f, "sidecar({url})"),
        }
    }
}

impl FromStr for EmbedderChoice {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "builtin-hash" {
            return Ok(EmbedderChoice::BuiltinHash);
        }
        if s == "sidecar" {
            return Ok(EmbedderChoice::Sidecar(None));
        }
        match s.strip_prefix("sidecar(").and_then(|r| r.strip_suffix(')')) {
            Some(url) if !url.trim().is_empty() => Ok(EmbedderChoice::Sidecar(Some(url.trim().to_string()))),
            _ => Err(ConfigError::Invalid(format!(
                "embedder must be builtin-hash, sidecar or sidecar(<url>), got {s:?}"
            ))),
        }
    }
}

impl Serialize for EmbedderChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EmbedderChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorChoice {
    #[default]
    Keyword,
    Sidecar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Self-loop weight of the charge graph.
    pub alpha: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_GRAPH_ALPHA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required by every seeded command; may also come from the command line.
    pub seed: Option<u64>,
    pub dataset: Option<PathBuf>,
    pub embedder: EmbedderChoice,
    /// Dimension of the built-in hashing embedder.
    pub embed_dim: usize,
    pub predictor: PredictorChoice,
    pub graph: GraphConfig,
    pub features: FeatureConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub bm25: Bm25,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            dataset: None,
            embedder: EmbedderChoice::default(),
            embed_dim: HashEmbedder::default().dim(),
            predictor: PredictorChoice::default(),
            graph: GraphConfig::default(),
            features: FeatureConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
            bm25: Bm25::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.embed_dim == 0 {
            return Err(ConfigError::Invalid("embed_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.graph.alpha) {
            return Err(ConfigError::Invalid(format!("graph.alpha must lie in [0, 1], got {}", self.graph.alpha)));
        }
        if self.training.hidden.contains(&0) {
            return Err(ConfigError::Invalid("training.hidden widths must be positive".into()));
        }
        if self.eval.cutoffs.is_empty() || self.eval.cutoffs.contains(&0) {
            return Err(ConfigError::Invalid("eval.cutoffs must be non-empty and positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.alpha) {
            return Err(ConfigError::Invalid(format!("eval.alpha must lie in [0, 1], got {}", self.eval.alpha)));
        }
        self.generator.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| ConfigError::Invalid("a seed is required (--seed or `seed = ...`)".into()))
    }

    /// The sidecar settings, when any component uses the sidecar. A URL in
    /// the embedder choice wins over the environment variable.
    pub fn sidecar(&self) -> Result<Option<SidecarConfig>, ConfigError> {
        let wanted = matches!(self.embedder, EmbedderChoice::Sidecar(_)) || self.predictor == PredictorChoice::Sidecar;
        if !wanted {
            return Ok(None);
        }
        if let EmbedderChoice::Sidecar(Some(url)) = &self.embedder {
            return Ok(Some(SidecarConfig::new(url.clone())));
        }
        SidecarConfig::from_env()
            .map(Some)
            .ok_or_else(|| ConfigError::Invalid(format!("sidecar selected but no URL given and {SIDECAR_URL_ENV} is unset")))
    }

    /// Instantiates the embedding provider and charge predictor.
    pub fn providers(&self, vocab: &ChargeVocabulary) -> Result<Providers, ConfigError> {
        let client = match self.sidecar()? {
            Some(cfg) => Some(SidecarClient::connect(&cfg, vocab.len())?),
            None => None,
        };
        let embedder: Box<dyn EmbeddingProvider> = match (&self.embedder, &client) {
            (EmbedderChoice::Sidecar(_), Some(c)) => Box::new(c.clone()),
            _ => Box::new(HashEmbedder::new(self.embed_dim)),
        };
        let predictor: Box<dyn ChargePredictor> = match (self.predictor, &client) {
            (PredictorChoice::Sidecar, Some(c)) => Box::new(c.clone()),
            _ => Box::new(KeywordPredictor::new(vocab)),
        };
        Ok(Providers { embedder, predictor })
    }
}

pub struct Providers {
    pub embedder: Box<dyn EmbeddingProvider>,
    pub predictor: Box<dyn ChargePredictor>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(cfg.seed().is_err());
        assert!(cfg.sidecar().unwrap().is_none());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = parse(
            r#"
seed = 9
embedder = "sidecar(http://localhost:8000)"
predictor = "sidecar"
[graph]
alpha = 0.25
[features]
walk_steps = 3
[training]
n_samples = 500
hidden = [16, 4]
[training.optimizer]
lr = 0.001
[training.reward]
mc_samples = 8
metric = "alpha-ndcg"
[eval]
cutoffs = [5, 10]
[generator]
test_queries = 4
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed().unwrap(), 9);
        assert_eq!(cfg.embedder, EmbedderChoice::Sidecar(Some("http://localhost:8000".into())));
        assert_eq!(cfg.graph.alpha, 0.25);
        assert_eq!(cfg.features.walk_steps, 3);
        assert_eq!(cfg.features.text_len, FeatureConfig::default().text_len);
        assert_eq!(cfg.training.hidden, vec![16, 4]);
        assert_eq!(cfg.training.optimizer.lr, 0.001);
        assert_eq!(cfg.training.reward.mc_samples, 8);
        assert_eq!(cfg.eval.cutoffs, vec![5, 10]);
        assert_eq!(cfg.generator.test_queries, 4);
        assert_eq!(cfg.sidecar().unwrap().unwrap().url, "http://localhost:8000");
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig { seed: Some(3), embedder: EmbedderChoice::Sidecar(None), ..Default::default() };
        assert_eq!(parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(parse("sede = 1"), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse("[graph]\nalpha = 1.5"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("[eval]\ncutoffs = []"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("embedder = \"bert\""), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse("[generator]\nnum_charges = 0"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn embedder_choice_strings() {
        for s in ["builtin-hash", "sidecar", "sidecar(http://h:1)"] {
            assert_eq!(s.parse::<EmbedderChoice>().unwrap().to_string(), s);
        }
        assert!("sidecar()".parse::<EmbedderChoice>().is_err());
    }
}
