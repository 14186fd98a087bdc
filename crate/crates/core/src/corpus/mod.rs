//! Data model and on-disk layout of a diversified retrieval dataset.
//!
//! A dataset directory holds one JSONL file per record type plus the
//! train/test split:
//!
//! ```text
//! vocab.jsonl        {"id":0,"name":"...","keywords":["..."]}
//! queries.jsonl      {"id":"q000","sentences":[..],"ccs":[..],"intent_dist":{"3":1.0}}
//! docs.jsonl         {"id":"q000-d00","query_id":"q000","sentences":[..],"charges":[..],"qrel":2}
//! triples.jsonl      {"query_id":"q000","charge_id":3,"doc_id":"q000-d00","grade":3}
//! split.json         {"train":[..],"test":[..]}
//! reversals.jsonl    {"from":3,"to":5,"count":41}            (optional)
//! annotations.jsonl  per-annotator raw labels                 (optional)
//! ```

mod io;
mod segment;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, save_dataset};
pub use segment::{split_sentences, split_sentences_with, DEFAULT_TERMINATORS};
pub use synth::{dataset_stats, generate_synthetic, DatasetStats, GeneratorConfig};

/// Dense charge index in `0..s`.
pub type ChargeId = usize;

/// Four-level relevance grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Grade(u8);

impl Grade {
    pub const IRRELEVANT: Grade = Grade(0);
    pub const FAIR: Grade = Grade(1);
    pub const EXCELLENT: Grade = Grade(2);
    pub const PERFECT: Grade = Grade(3);

    pub fn new(value: u8) -> Option<Grade> {
        (value <= 3).then_some(Grade(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Grade {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        u8::try_from(v)
            .ok()
            .and_then(Grade::new)
            .ok_or_else(|| format!("grade {v} outside 0..=3"))
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.0
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Charge {
    pub id: ChargeId,
    pub name: String,
    /// Vocabulary the keyword predictor associates with this charge.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
}

/// The charge space. Ids are dense `0..s` and names are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChargeVocabulary {
    charges: Vec<Charge>,
}

impl ChargeVocabulary {
    pub fn new(mut charges: Vec<Charge>) -> Result<Self, CorpusError> {
        charges.sort_by_key(|c| c.id);
        let mut names = BTreeSet::new();
        for (i, c) in charges.iter().enumerate() {
            if c.id != i {
                return Err(CorpusError::Integrity(format!(
                    "charge ids must be dense 0..{}, missing {i}",
                    charges.len()
                )));
            }
            if c.name.trim().is_empty() {
                return Err(CorpusError::Integrity(format!("charge {i} has an empty name")));
            }
            if !names.insert(c.name.as_str()) {
                return Err(CorpusError::Integrity(format!("duplicate charge name {:?}", c.name)));
            }
        }
        Ok(Self { charges })
    }

    pub fn len(&self) -> usize {
        self.charges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charges.is_empty()
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    pub fn get(&self, id: ChargeId) -> Option<&Charge> {
        self.charges.get(id)
    }

    pub fn contains(&self, id: ChargeId) -> bool {
        id < self.charges.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCase {
    pub id: String,
    pub sentences: Vec<String>,
    /// Candidate charge set.
    pub ccs: BTreeSet<ChargeId>,
    /// P(I_k | Q) for each charge of the candidate set.
    pub intent_dist: BTreeMap<ChargeId, f64>,
}

impl QueryCase {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }

    /// Charges with positive intent probability, ascending by id.
    pub fn intents(&self) -> impl Iterator<Item = (ChargeId, f64)> + '_ {
        self.intent_dist.iter().filter(|(_, p)| **p > 0.0).map(|(c, p)| (*c, *p))
    }

    pub fn intent_prob(&self, charge: ChargeId) -> f64 {
        self.intent_dist.get(&charge).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDoc {
    pub id: String,
    pub query_id: String,
    pub sentences: Vec<String>,
    pub charges: BTreeSet<ChargeId>,
    /// Relevance of the document to its parent query as a whole.
    pub qrel: Grade,
}

impl CandidateDoc {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedTriple {
    pub query_id: String,
    pub charge_id: ChargeId,
    pub doc_id: String,
    pub grade: Grade,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// How often a judgment with charge `from` was reversed to charge `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reversal {
    pub from: ChargeId,
    pub to: ChargeId,
    pub count: i64,
}

/// One raw annotator judgment, kept so agreement can be recomputed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotationRecord {
    /// A select-and-sort answer over a query's candidate charge set.
    Preference {
        group: String,
        annotator: String,
        query_id: String,
        levels: Vec<Vec<ChargeId>>,
        unselected: Vec<ChargeId>,
    },
    /// A four-level grade for one (query, charge, document) triple.
    Grade {
        group: String,
        annotator: String,
        query_id: String,
        charge_id: ChargeId,
        doc_id: String,
        grade: Grade,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub vocab: ChargeVocabulary,
    pub queries: Vec<QueryCase>,
    pub docs: Vec<CandidateDoc>,
    pub triples: Vec<GradedTriple>,
    pub split: DatasetSplit,
    pub reversals: Vec<Reversal>,
    pub annotations: Vec<AnnotationRecord>,
}

impl Dataset {
    pub fn query(&self, id: &str) -> Option<&QueryCase> {
        self.queries.iter().find(|q| q.id == id)
    }

    pub fn index(&self) -> DatasetIndex<'_> {
        DatasetIndex::new(self)
    }

    /// Checks referential integrity across all record types.
    pub fn check_integrity(&self) -> Result<(), CorpusError> {
        let s = self.vocab.len();
        let check_charge = |c: ChargeId, ctx: &dyn fmt::Display| {
            if c < s {
                Ok(())
            } else {
                Err(CorpusError::Integrity(format!("{ctx} references unknown charge {c}")))
            }
        };
        let mut query_ids = BTreeSet::new();
        for q in &self.queries {
            if !query_ids.insert(q.id.as_str()) {
                return Err(CorpusError::Integrity(format!("duplicate query id {}", q.id)));
            }
            for &c in &q.ccs {
                check_charge(c, &format_args!("query {}", q.id))?;
            }
        }
        let mut doc_ids = BTreeSet::new();
        for d in &self.docs {
            if !doc_ids.insert(d.id.as_str()) {
                return Err(CorpusError::Integrity(format!("duplicate doc id {}", d.id)));
            }
            if !query_ids.contains(d.query_id.as_str()) {
                return Err(CorpusError::Integrity(format!(
                    "doc {} references unknown query {}",
                    d.id, d.query_id
                )));
            }
            for &c in &d.charges {
                check_charge(c, &format_args!("doc {}", d.id))?;
            }
        }
        for t in &self.triples {
            if !query_ids.contains(t.query_id.as_str()) {
                return Err(CorpusError::Integrity(format!(
                    "triple references unknown query {}",
                    t.query_id
                )));
            }
            if !doc_ids.contains(t.doc_id.as_str()) {
                return Err(CorpusError::Integrity(format!(
                    "triple references unknown doc {}",
                    t.doc_id
                )));
            }
            check_charge(t.charge_id, &format_args!("triple ({}, {})", t.query_id, t.doc_id))?;
        }
        for r in &self.reversals {
            check_charge(r.from, &"reversal")?;
            check_charge(r.to, &"reversal")?;
        }
        let mut seen = BTreeSet::new();
        for id in self.split.train.iter().chain(&self.split.test) {
            if !query_ids.contains(id.as_str()) {
                return Err(CorpusError::Integrity(format!("split references unknown query {id}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::Integrity(format!("query {id} appears twice in the split")));
            }
        }
        if seen.len() != query_ids.len() {
            return Err(CorpusError::Integrity(format!(
                "split covers {} of {} queries",
                seen.len(),
                query_ids.len()
            )));
        }
        Ok(())
    }
}

/// Lookup tables over a loaded dataset.
#[derive(Debug)]
pub struct DatasetIndex<'a> {
    pub dataset: &'a Dataset,
    query_pos: HashMap<&'a str, usize>,
    docs_by_query: HashMap<&'a str, Vec<usize>>,
    triples_by_query: HashMap<&'a str, Vec<usize>>,
}

impl<'a> DatasetIndex<'a> {
    fn new(dataset: &'a Dataset) -> Self {
        let query_pos = dataset.queries.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
        let mut docs_by_query: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, d) in dataset.docs.iter().enumerate() {
            docs_by_query.entry(d.query_id.as_str()).or_default().push(i);
        }
        let mut triples_by_query: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, t) in dataset.triples.iter().enumerate() {
            triples_by_query.entry(t.query_id.as_str()).or_default().push(i);
        }
        Self { dataset, query_pos, docs_by_query, triples_by_query }
    }

    pub fn query(&self, id: &str) -> Option<&'a QueryCase> {
        self.query_pos.get(id).map(|&i| &self.dataset.queries[i])
    }

    /// Candidate documents of a query, in file order.
    pub fn docs(&self, query_id: &str) -> Vec<&'a CandidateDoc> {
        self.docs_by_query
            .get(query_id)
            .map(|v| v.iter().map(|&i| &self.dataset.docs[i]).collect())
            .unwrap_or_default()
    }

    pub fn triples(&self, query_id: &str) -> Vec<&'a GradedTriple> {
        self.triples_by_query
            .get(query_id)
            .map(|v| v.iter().map(|&i| &self.dataset.triples[i]).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Schema { file: String, line: usize, message: String },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("invalid generator config: {0}")]
    Config(String),
}
