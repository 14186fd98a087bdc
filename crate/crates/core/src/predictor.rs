//! Charge prediction and charge-name extraction.
//!
//! [`ChargePredictor`] stands in for a legal judgment prediction model. The
//! built-in [`KeywordPredictor`] scores charges by keyword occurrences; a
//! remote model can be plugged in through [`crate::sidecar`].

use std::collections::{BTreeSet, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{ChargeId, ChargeVocabulary};
use crate::tokenize::words;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeScore {
    pub id: ChargeId,
    pub prob: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("{0}")]
    Unavailable(String),
    #[error("provider broke its contract: {0}")]
    Contract(String),
}

pub trait ChargePredictor: Send + Sync {
    /// Scores sorted by descending probability, ties by ascending id.
    fn predict(&self, text: &str) -> Result<Vec<ChargeScore>, PredictorError>;
}

/// The first `k` charge ids of a sorted prediction.
pub fn top_k(scores: &[ChargeScore], k: usize) -> Vec<ChargeId> {
    scores.iter().take(k).map(|s| s.id).collect()
}

pub(crate) fn sort_scores(scores: &mut [ChargeScore]) {
    scores.sort_by(|a, b| b.prob.total_cmp(&a.prob).then(a.id.cmp(&b.id)));
}

/// Finds literal charge names in text.
#[derive(Debug, Clone)]
pub struct ChargeNameExtractor {
    pattern: Option<Regex>,
    ids: HashMap<String, ChargeId>,
}

impl ChargeNameExtractor {
    pub fn new(vocab: &ChargeVocabulary) -> Self {
        Self::from_names(vocab.charges().iter().map(|c| c.name.as_str()))
    }

    /// Names are matched longest first so that a name contained in a longer
    /// one does not shadow it. Ids follow iteration order.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let ids: HashMap<String, ChargeId> = names.into_iter().enumerate().map(|(i, n)| (n.to_string(), i)).collect();
        let mut sorted: Vec<&String> = ids.keys().collect();
        sorted.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let pattern = (!sorted.is_empty()).then(|| {
            let alternation = sorted.iter().map(|n| regex::escape(n)).collect::<Vec<_>>().join("|");
            Regex::new(&alternation).expect("escaped alternation is a valid regex")
        });
        Self { pattern, ids }
    }

    pub fn extract(&self, text: &str) -> BTreeSet<ChargeId> {
        self.matches(text).collect()
    }

    fn matches<'t>(&'t self, text: &'t str) -> impl Iterator<Item = ChargeId> + 't {
        self.pattern.iter().flat_map(move |re| re.find_iter(text).map(|m| self.ids[m.as_str()]))
    }
}

/// Scores each charge by the keywords of its vocabulary entry found in the
/// text. A keyword shared by several charges is split between them, and a
/// literal charge name counts [`KeywordPredictor::NAME_WEIGHT`]. Scores are
/// normalised to sum to one.
#[derive(Debug, Clone)]
pub struct KeywordPredictor {
    num_charges: usize,
    weights: HashMap<String, Vec<(ChargeId, f64)>>,
    names: ChargeNameExtractor,
}

impl KeywordPredictor {
    pub const NAME_WEIGHT: f64 = 2.0;

    pub fn new(vocab: &ChargeVocabulary) -> Self {
        let mut owners: HashMap<String, Vec<ChargeId>> = HashMap::new();
        for c in vocab.charges() {
            for kw in &c.keywords {
                let kw = kw.to_lowercase();
                let list = owners.entry(kw).or_default();
                if !list.contains(&c.id) {
                    list.push(c.id);
                }
            }
        }
        let weights = owners
            .into_iter()
            .map(|(kw, ids)| {
                let w = 1.0 / ids.len() as f64;
                (kw, ids.into_iter().map(|id| (id, w)).collect())
            })
            .collect();
        Self { num_charges: vocab.len(), weights, names: ChargeNameExtractor::new(vocab) }
    }

    pub fn raw_scores(&self, text: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.num_charges];
        for token in words(text) {
            if let Some(owners) = self.weights.get(&token) {
                for &(id, w) in owners {
                    scores[id] += w;
                }
            }
        }
        for id in self.names.matches(text) {
            scores[id] += Self::NAME_WEIGHT;
        }
        scores
    }
}

impl ChargePredictor for KeywordPredictor {
    fn predict(&self, text: &str) -> Result<Vec<ChargeScore>, PredictorError> {
        let raw = self.raw_scores(text);
        let total: f64 = raw.iter().sum();
        let mut out: Vec<ChargeScore> = raw
            .iter()
            .enumerate()
            .map(|(id, &s)| ChargeScore { id, prob: if total > 0.0 { s / total } else { 0.0 } })
            .collect();
        sort_scores(&mut out);
        Ok(out)
    }
}
