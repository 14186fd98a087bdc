//! HTTP client for an external embedding and charge-prediction service.
//!
//! The service speaks JSON over HTTP:
//!
//! - `GET /health` returns `{status, dim, vocab_size}`.
//! - `POST /embed` takes `{texts}` and returns `{dim, vectors}`.
//! - `POST /predict_charges` takes `{text}` and returns `{charges: [{id, prob}]}`.
//!
//! Every response is checked against that contract before it reaches the
//! pipeline, so a misbehaving service fails loudly instead of skewing
//! features.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use crate::predictor::{ChargePredictor, ChargeScore, PredictorError};
use crate::textsim::{EmbeddingProvider, TextSimError};

/// Environment variable naming the service base URL.
pub const SIDECAR_URL_ENV: &str = "DIVLEX_SIDECAR_URL";
/// Fewest charges a prediction must contain.
pub const MIN_PREDICTED: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum SidecarError {
    #[error("request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("{endpoint} answered {status}: {body}")]
    Status { endpoint: String, status: u16, body: String },
    #[error("service is not ready (status {0:?})")]
    NotReady(String),
    #[error("service vocabulary has {service} charges, expected {expected}")]
    VocabMismatch { service: usize, expected: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub dim: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Serialize)]
struct PredictRequest<'a> {
    text: &'a str,
}

#[derive(Debug, Deserialize)]
struct PredictResponse {
    charges: Vec<ChargeScore>,
}

#[derive(Debug, Clone)]
pub struct SidecarConfig {
    pub url: String,
    pub timeout: Duration,
    /// Texts per `/embed` request.
    pub batch_size: usize,
}

impl SidecarConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), timeout: Duration::from_secs(30), batch_size: 64 }
    }

    /// Reads the base URL from [`SIDECAR_URL_ENV`], if set and non-empty.
    pub fn from_env() -> Option<Self> {
        std::env::var(SIDECAR_URL_ENV).ok().filter(|u| !u.trim().is_empty()).map(Self::new)
    }
}

/// A connected client. Construction checks `/health`, so a client always
/// knows the advertised embedding dimension.
#[derive(Debug, Clone)]
pub struct SidecarClient {
    base: String,
    agent: Agent,
    batch_size: usize,
    dim: usize,
    vocab_size: usize,
}

impl SidecarClient {
    /// Connects and requires a ready service whose vocabulary has
    /// `expected_vocab` charges.
    pub fn connect(cfg: &SidecarConfig, expected_vocab: usize) -> Result<Self, SidecarError> {
        let agent: Agent =
            Agent::config_builder().timeout_global(Some(cfg.timeout)).http_status_as_error(false).build().into();
        let mut client = Self {
            base: cfg.url.trim_end_matches('/').to_string(),
            agent,
            batch_size: cfg.batch_size.max(1),
            dim: 0,
            vocab_size: 0,
        };
        let health = client.health()?;
        if health.status != "ready" {
            return Err(SidecarError::NotReady(health.status));
        }
        if health.dim == 0 {
            return Err(SidecarError::Contract("advertised dim is 0".into()));
        }
        if health.vocab_size != expected_vocab {
            return Err(SidecarError::VocabMismatch { service: health.vocab_size, expected: expected_vocab });
        }
        client.dim = health.dim;
        client.vocab_size = health.vocab_size;
        Ok(client)
    }

    pub fn url(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<Health, SidecarError> {
        let endpoint = format!("{}/health", self.base);
        let resp = self.agent.get(&endpoint).call().map_err(|e| transport(&endpoint, e))?;
        read_json(&endpoint, resp)
    }

    /// Embeds `texts`, batching requests and validating every response.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, SidecarError> {
        let endpoint = format!("{}/embed", self.base);
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let resp = self
                .agent
                .post(&endpoint)
                .send_json(EmbedRequest { texts: chunk })
                .map_err(|e| transport(&endpoint, e))?;
            let body: EmbedResponse = read_json(&endpoint, resp)?;
            check_embeddings(&body, chunk.len(), self.dim)?;
            out.extend(body.vectors);
        }
        Ok(out)
    }

    pub fn predict_charges(&self, text: &str) -> Result<Vec<ChargeScore>, SidecarError> {
        let endpoint = format!("{}/predict_charges", self.base);
        let resp =
            self.agent.post(&endpoint).send_json(PredictRequest { text }).map_err(|e| transport(&endpoint, e))?;
        let body: PredictResponse = read_json(&endpoint, resp)?;
        check_prediction(&body.charges, self.vocab_size)?;
        Ok(body.charges)
    }
}

fn transport(endpoint: &str, e: ureq::Error) -> SidecarError {
    SidecarError::Transport { endpoint: endpoint.to_string(), message: e.to_string() }
}

fn read_json<T: serde::de::DeserializeOwned>(
    endpoint: &str,
    mut resp: ureq::http::Response<ureq::Body>,
) -> Result<T, SidecarError> {
    let status = resp.status().as_u16();
    if status != 200 {
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(SidecarError::Status { endpoint: endpoint.to_string(), status, body });
    }
    resp.body_mut()
        .read_json()
        .map_err(|e| SidecarError::Contract(format!("{endpoint}: malformed body: {e}")))
}

fn check_embeddings(body: &EmbedResponse, texts: usize, dim: usize) -> Result<(), SidecarError> {
    if body.dim != dim {
        return Err(SidecarError::Contract(format!("response dim {} differs from advertised {dim}", body.dim)));
    }
    if body.vectors.len() != texts {
        return Err(SidecarError::Contract(format!("{} vectors for {texts} texts", body.vectors.len())));
    }
    for (i, v) in body.vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(SidecarError::Contract(format!("vector {i} has length {}, expected {dim}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SidecarError::Contract(format!("vector {i} is not finite")));
        }
    }
    Ok(())
}

fn check_prediction(charges: &[ChargeScore], vocab_size: usize) -> Result<(), SidecarError> {
    if charges.len() < MIN_PREDICTED.min(vocab_size) {
        return Err(SidecarError::Contract(format!("{} charges predicted, need {MIN_PREDICTED}", charges.len())));
    }
    for c in charges {
        if c.id >= vocab_size {
            return Err(SidecarError::Contract(format!("charge id {} outside vocabulary of {vocab_size}", c.id)));
        }
        if !(0.0..=1.0).contains(&c.prob) {
            return Err(SidecarError::Contract(format!("charge {} has probability {}", c.id, c.prob)));
        }
    }
    if charges.windows(2).any(|w| w[0].prob < w[1].prob) {
        return Err(SidecarError::Contract("charges are not sorted by descending probability".into()));
    }
    Ok(())
}

impl EmbeddingProvider for SidecarClient {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, TextSimError> {
        self.embed_texts(texts).map_err(|e| TextSimError::Provider(e.to_string()))
    }
}

impl ChargePredictor for SidecarClient {
    fn predict(&self, text: &str) -> Result<Vec<ChargeScore>, PredictorError> {
        let mut scores = self.predict_charges(text).map_err(|e| match e {
            SidecarError::Contract(m) => PredictorError::Contract(m),
            other => PredictorError::Unavailable(other.to_string()),
        })?;
        crate::predictor::sort_scores(&mut scores);
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(id: usize, prob: f64) -> ChargeScore {
        ChargeScore { id, prob }
    }

    #[test]
    fn prediction_contract() {
        let good: Vec<_> = (0..5).map(|i| score(i, 0.5 - 0.1 * i as f64)).collect();
        assert!(check_prediction(&good, 10).is_ok());
        assert!(check_prediction(&good[..4], 10).is_err());
        assert!(check_prediction(&good[..3], 3).is_ok());
        let mut unsorted = good.clone();
        unsorted.swap(0, 1);
        assert!(check_prediction(&unsorted, 10).is_err());
        let mut out_of_range = good.clone();
        out_of_range[0].prob = 1.5;
        assert!(check_prediction(&out_of_range, 10).is_err());
        assert!(check_prediction(&good, 4).is_err());
    }

    #[test]
    fn embedding_contract() {
        let ok = EmbedResponse { dim: 2, vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        assert!(check_embeddings(&ok, 2, 2).is_ok());
        assert!(check_embeddings(&ok, 3, 2).is_err());
        assert!(check_embeddings(&ok, 2, 3).is_err());
        let ragged = EmbedResponse { dim: 2, vectors: vec![vec![1.0], vec![0.0, 1.0]] };
        assert!(check_embeddings(&ragged, 2, 2).is_err());
        let nan = EmbedResponse { dim: 1, vectors: vec![vec![f32::NAN]] };
        assert!(check_embeddings(&nan, 1, 1).is_err());
    }
}
