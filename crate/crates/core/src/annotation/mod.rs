//! Dataset-construction math: candidate charge sets, intent distributions
//! from select-and-sort annotator answers, label aggregation, the triple
//! filter and inter-annotator agreement.

mod agreement;

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{CandidateDoc, ChargeId, Grade, QueryCase};
use crate::predictor::{top_k, ChargeNameExtractor, ChargePredictor, PredictorError};

pub use agreement::{
    agreement, agreement_from_records, cohen_kappa, fleiss_kappa, kendall_tau_b, write_agreement_tsv,
    AgreementReport, AnnotatorLabels, AnnotatorRankings, GroupAgreement,
};

pub type IntentMap = BTreeMap<ChargeId, f64>;

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("charge predictor unavailable: {0}")]
    PredictorUnavailable(#[from] PredictorError),
    #[error("preference has no levels and no unselected charges")]
    EmptyPreference,
    #[error("invalid preference: {0}")]
    InvalidPreference(String),
    #[error("intent maps cover different charges")]
    MismatchedKeys,
    #[error("empty input")]
    EmptyInput,
    #[error("need at least two annotators, got {0}")]
    InsufficientAnnotators(usize),
    #[error("annotators labelled different item sets: {0}")]
    MismatchedItems(String),
}

/// An annotator's select-and-sort answer, best level first.
///
/// `I2=I3>I1>I5=I6` with `I4` left out is `levels = [{2,3},{1},{5,6}]`,
/// `unselected = {4}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedPreference {
    levels: Vec<BTreeSet<ChargeId>>,
    unselected: BTreeSet<ChargeId>,
}

impl SortedPreference {
    pub fn new(
        levels: Vec<BTreeSet<ChargeId>>,
        unselected: BTreeSet<ChargeId>,
    ) -> Result<Self, AnnotationError> {
        let mut seen = unselected.clone();
        for (i, level) in levels.iter().enumerate() {
            if level.is_empty() {
                return Err(AnnotationError::InvalidPreference(format!("level {i} is empty")));
            }
            for &c in level {
                if !seen.insert(c) {
                    return Err(AnnotationError::InvalidPreference(format!("charge {c} listed twice")));
                }
            }
        }
        Ok(Self { levels, unselected })
    }

    /// Builds a preference from per-charge level indices, dropping gaps.
    /// `None` means unselected.
    pub fn from_levels(assignments: impl IntoIterator<Item = (ChargeId, Option<usize>)>) -> Self {
        let mut by_level: BTreeMap<usize, BTreeSet<ChargeId>> = BTreeMap::new();
        let mut unselected = BTreeSet::new();
        for (c, level) in assignments {
            match level {
                Some(l) => {
                    by_level.entry(l).or_default().insert(c);
                }
                None => {
                    unselected.insert(c);
                }
            }
        }
        Self { levels: by_level.into_values().collect(), unselected }
    }

    pub fn levels(&self) -> &[BTreeSet<ChargeId>] {
        &self.levels
    }

    pub fn unselected(&self) -> &BTreeSet<ChargeId> {
        &self.unselected
    }

    /// Rank position of every charge; unselected charges share the last rank.
    pub fn rank_positions(&self) -> BTreeMap<ChargeId, usize> {
        let mut out = BTreeMap::new();
        for (j, level) in self.levels.iter().enumerate() {
            for &c in level {
                out.insert(c, j);
            }
        }
        for &c in &self.unselected {
            out.insert(c, self.levels.len());
        }
        out
    }
}

/// Regex-matched charge names in `text` united with the predictor's top
/// `k` charges.
pub fn candidate_charge_set(
    text: &str,
    extractor: &ChargeNameExtractor,
    predictor: &dyn ChargePredictor,
    k: usize,
) -> Result<BTreeSet<ChargeId>, AnnotationError> {
    let mut ccs = extractor.extract(text);
    let scores = predictor.predict(text)?;
    ccs.extend(top_k(&scores, k));
    Ok(ccs)
}

/// With `k` levels, level `j` (0 = best) maps to `(k - j) / k`; unselected
/// charges map to 0.
pub fn intent_distribution(pref: &SortedPreference) -> Result<IntentMap, AnnotationError> {
    if pref.levels.is_empty() && pref.unselected.is_empty() {
        return Err(AnnotationError::EmptyPreference);
    }
    let k = pref.levels.len() as f64;
    let mut out = IntentMap::new();
    for (j, level) in pref.levels.iter().enumerate() {
        let value = (k - j as f64) / k;
        out.extend(level.iter().map(|&c| (c, value)));
    }
    out.extend(pref.unselected.iter().map(|&c| (c, 0.0)));
    Ok(out)
}

/// Per-charge arithmetic mean over annotators.
pub fn aggregate_intent(dists: &[IntentMap]) -> Result<IntentMap, AnnotationError> {
    let first = dists.first().ok_or(AnnotationError::EmptyInput)?;
    if dists.iter().any(|d| !d.keys().eq(first.keys())) {
        return Err(AnnotationError::MismatchedKeys);
    }
    let n = dists.len() as f64;
    Ok(first
        .keys()
        .map(|c| (*c, dists.iter().map(|d| d[c]).sum::<f64>() / n))
        .collect())
}

/// Median grade; the lower median for even counts.
pub fn median_label(grades: &[Grade]) -> Result<Grade, AnnotationError> {
    if grades.is_empty() {
        return Err(AnnotationError::EmptyInput);
    }
    let mut sorted = grades.to_vec();
    sorted.sort_unstable();
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Whether a (query, charge, document) triple goes to annotators: the charge
/// must be a query intent, the document relevant to the query and the charge
/// among the document's charges.
pub fn triple_needs_annotation(q: &QueryCase, charge: ChargeId, d: &CandidateDoc) -> bool {
    q.intent_prob(charge) > 0.0 && d.qrel > Grade::IRRELEVANT && d.charges.contains(&charge)
}
