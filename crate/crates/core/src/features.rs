//! Per-pair ranking features: the padded text similarity vector and the
//! Kronecker product of walked query and document charge distributions.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chargegraph::{init_doc_dist, init_query_dist, rwog, ChargeDistribution, ChargeGraph, GraphError, SparseVec};
use crate::corpus::{CandidateDoc, Dataset, QueryCase};
use crate::exec::Exec;
use crate::hash::{derive_seed, fnv1a};
use crate::predictor::{ChargePredictor, PredictorError};
use crate::textsim::{csw_slice, max_pool_similarity, pad_fixed, EmbeddingProvider, TextSimError, WindowConfig};

/// Nonzero entries in the charge part of a random ablation vector.
const RANDOM_CHARGE_NNZ: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error(transparent)]
    Text(#[from] TextSimError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("unknown {kind} {id}")]
    Unknown { kind: &'static str, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub windows: WindowConfig,
    pub text_len: usize,
    pub walk_steps: usize,
    /// Predictor charges that receive `boost` in the initial query distribution.
    pub top_k: usize,
    pub boost: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            windows: WindowConfig::default(),
            text_len: crate::textsim::DEFAULT_TEXT_LEN,
            walk_steps: crate::chargegraph::DEFAULT_STEPS,
            top_k: 5,
            boost: 0.3,
        }
    }
}

/// Which parts of the feature vector a ranker sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMask {
    #[default]
    Full,
    TextOnly,
    ChargeOnly,
    /// Both parts replaced by seeded random values per query-document pair.
    Random,
}

impl FeatureMask {
    pub const ALL: [FeatureMask; 4] = [FeatureMask::Full, FeatureMask::TextOnly, FeatureMask::ChargeOnly, FeatureMask::Random];

    pub fn label(self) -> &'static str {
        match self {
            FeatureMask::Full => "DLRM",
            FeatureMask::TextOnly => "DLRM (Text Only)",
            FeatureMask::ChargeOnly => "DLRM (Charge Only)",
            FeatureMask::Random => "DLRM (Random)",
        }
    }
}

/// Model input: a dense text part followed by a sparse charge part whose
/// indices are relative to the end of the dense part.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelInput {
    pub dense: Vec<f64>,
    pub sparse: SparseVec,
}

impl ModelInput {
    pub fn to_dense(&self, charge_len: usize) -> Vec<f64> {
        let mut out = self.dense.clone();
        out.extend(crate::chargegraph::sparse_to_dense(&self.sparse, charge_len));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryFeatures {
    pub passages: Vec<Vec<f32>>,
    pub whole: Vec<f32>,
    /// Initial distribution from the predictor (`C_qo`).
    pub initial: ChargeDistribution,
    /// After the walk (`C_q`).
    pub walked: ChargeDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocFeatures {
    pub passages: Vec<Vec<f32>>,
    pub whole: Vec<f32>,
    pub walked: ChargeDistribution,
}

/// Text part and charge part of one query-document pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub text: Vec<f64>,
    pub charge: SparseVec,
}

impl PairFeatures {
    pub fn masked(&self, mask: FeatureMask, seed: u64, query_id: &str, doc_id: &str, num_charges: usize) -> ModelInput {
        match mask {
            FeatureMask::Full => ModelInput { dense: self.text.clone(), sparse: self.charge.clone() },
            FeatureMask::TextOnly => ModelInput { dense: self.text.clone(), sparse: Vec::new() },
            FeatureMask::ChargeOnly => ModelInput { dense: vec![0.0; self.text.len()], sparse: self.charge.clone() },
            FeatureMask::Random => {
                let pair = fnv1a(format!("{query_id}\u{1f}{doc_id}").as_bytes());
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, pair));
                let dense = (0..self.text.len()).map(|_| rng.random::<f64>()).collect();
                let len = num_charges * num_charges;
                let mut idx: Vec<usize> =
                    (0..RANDOM_CHARGE_NNZ.min(len)).map(|_| rng.random_range(0..len)).collect();
                idx.sort_unstable();
                idx.dedup();
                let sparse = idx.into_iter().map(|i| (i, rng.random::<f64>() / RANDOM_CHARGE_NNZ as f64)).collect();
                ModelInput { dense, sparse }
            }
        }
    }
}

/// Turns queries and documents into features with one embedding provider,
/// one charge predictor and one charge graph.
pub struct FeatureExtractor<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub predictor: &'a dyn ChargePredictor,
    pub graph: &'a ChargeGraph,
    pub config: FeatureConfig,
}

impl FeatureExtractor<'_> {
    fn embed_with_whole(&self, sentences: &[String], w: usize, d: usize) -> Result<(Vec<Vec<f32>>, Vec<f32>), FeatureError> {
        let passages = csw_slice(sentences, w, d)?;
        let mut texts: Vec<String> = passages.iter().map(|p| p.text()).collect();
        texts.push(sentences.join(" "));
        let mut vecs = self.provider.embed(&texts)?;
        if vecs.len() != texts.len() {
            return Err(TextSimError::Provider(format!("{} vectors for {} texts", vecs.len(), texts.len())).into());
        }
        let whole = vecs.pop().expect("at least the whole text");
        Ok((vecs, whole))
    }

    pub fn query(&self, q: &QueryCase) -> Result<QueryFeatures, FeatureError> {
        let w = &self.config.windows;
        let (passages, whole) = self.embed_with_whole(&q.sentences, w.query_window, w.query_step)?;
        if 2 * passages.len() > self.config.text_len {
            return Err(TextSimError::InputTooLong(passages.len(), self.config.text_len).into());
        }
        let scores = self.predictor.predict(&q.text())?;
        let initial = init_query_dist(self.graph.size(), &q.ccs, &scores, self.config.top_k, self.config.boost)?;
        let walked = rwog(&initial, self.graph, self.config.walk_steps)?;
        Ok(QueryFeatures { passages, whole, initial, walked })
    }

    pub fn doc(&self, d: &CandidateDoc) -> Result<DocFeatures, FeatureError> {
        let w = &self.config.windows;
        let (passages, whole) = self.embed_with_whole(&d.sentences, w.doc_window, w.doc_step)?;
        let initial = init_doc_dist(self.graph.size(), &d.charges)?;
        let walked = rwog(&initial, self.graph, self.config.walk_steps)?;
        Ok(DocFeatures { passages, whole, walked })
    }

    pub fn pair(&self, q: &QueryFeatures, d: &DocFeatures) -> Result<PairFeatures, FeatureError> {
        let ts = max_pool_similarity(&q.passages, &d.passages);
        let text = pad_fixed(&ts, self.config.text_len)?;
        let charge = crate::chargegraph::kron_feature(&q.walked, &d.walked)?;
        Ok(PairFeatures { text, charge })
    }
}

/// Features of every query and document of a dataset, computed once.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    num_charges: usize,
    text_len: usize,
    query_pos: HashMap<String, usize>,
    doc_pos: HashMap<String, usize>,
    queries: Vec<QueryFeatures>,
    docs: Vec<DocFeatures>,
    pairs: HashMap<(usize, usize), PairFeatures>,
}

impl FeatureStore {
    /// Extracts features for all queries, all documents and every
    /// (query, own candidate) pair.
    pub fn build(ds: &Dataset, ex: &FeatureExtractor<'_>, exec: Exec) -> Result<Self, FeatureError> {
        let queries = exec.try_map_range(ds.queries.len(), |i| ex.query(&ds.queries[i]))?;
        let docs = exec.try_map_range(ds.docs.len(), |i| ex.doc(&ds.docs[i]))?;
        let query_pos: HashMap<String, usize> =
            ds.queries.iter().enumerate().map(|(i, q)| (q.id.clone(), i)).collect();
        let doc_pos: HashMap<String, usize> = ds.docs.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        let pair_list = exec.try_map_range(ds.docs.len(), |i| {
            let qi = query_pos[&ds.docs[i].query_id];
            ex.pair(&queries[qi], &docs[i]).map(|p| ((qi, i), p))
        })?;
        Ok(Self {
            num_charges: ds.vocab.len(),
            text_len: ex.config.text_len,
            query_pos,
            doc_pos,
            queries,
            docs,
            pairs: pair_list.into_iter().collect(),
        })
    }

    pub fn num_charges(&self) -> usize {
        self.num_charges
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    /// Length of a full model input.
    pub fn input_dim(&self) -> usize {
        self.text_len + self.num_charges * self.num_charges
    }

    pub fn query(&self, id: &str) -> Result<&QueryFeatures, FeatureError> {
        self.query_pos
            .get(id)
            .map(|&i| &self.queries[i])
            .ok_or_else(|| FeatureError::Unknown { kind: "query", id: id.to_string() })
    }

    pub fn doc(&self, id: &str) -> Result<&DocFeatures, FeatureError> {
        self.doc_pos
            .get(id)
            .map(|&i| &self.docs[i])
            .ok_or_else(|| FeatureError::Unknown { kind: "doc", id: id.to_string() })
    }

    pub fn pair(&self, query_id: &str, doc_id: &str) -> Result<&PairFeatures, FeatureError> {
        let q = *self.query_pos.get(query_id).ok_or_else(|| FeatureError::Unknown { kind: "query", id: query_id.to_string() })?;
        let d = *self.doc_pos.get(doc_id).ok_or_else(|| FeatureError::Unknown { kind: "doc", id: doc_id.to_string() })?;
        self.pairs
            .get(&(q, d))
            .ok_or_else(|| FeatureError::Unknown { kind: "pair", id: format!("{query_id}/{doc_id}") })
    }

    pub fn input(&self, query_id: &str, doc_id: &str, mask: FeatureMask, seed: u64) -> Result<ModelInput, FeatureError> {
        Ok(self.pair(query_id, doc_id)?.masked(mask, seed, query_id, doc_id, self.num_charges))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chargegraph::{build_graph, ReversalMatrix};
    use crate::corpus::{generate_synthetic, GeneratorConfig};
    use crate::predictor::KeywordPredictor;
    use crate::textsim::HashEmbedder;

    fn setup() -> (Dataset, ChargeGraph) {
        let cfg = GeneratorConfig { num_charges: 12, train_queries: 3, test_queries: 2, docs_per_query: 6, ..Default::default() };
        let ds = generate_synthetic(&cfg, 11).unwrap();
        let g = ReversalMatrix::from_reversals(ds.vocab.len(), &ds.reversals).unwrap();
        let graph = build_graph(&g, 0.4).unwrap();
        (ds, graph)
    }

    #[test]
    fn store_covers_every_pair_with_expected_shapes() {
        let (ds, graph) = setup();
        let emb = HashEmbedder::default();
        let pred = KeywordPredictor::new(&ds.vocab);
        let ex = FeatureExtractor { provider: &emb, predictor: &pred, graph: &graph, config: FeatureConfig::default() };
        let store = FeatureStore::build(&ds, &ex, Exec::Sequential).unwrap();
        assert_eq!(store.input_dim(), 54 + 144);
        for d in &ds.docs {
            let p = store.pair(&d.query_id, &d.id).unwrap();
            assert_eq!(p.text.len(), 54);
            let mass: f64 = p.charge.iter().map(|(_, v)| v).sum();
            assert!((mass - 1.0).abs() < 1e-9);
            assert!(p.charge.iter().all(|(i, _)| *i < 144));
        }
        let par = FeatureStore::build(&ds, &ex, Exec::Parallel).unwrap();
        let d = &ds.docs[3];
        assert_eq!(store.pair(&d.query_id, &d.id).unwrap(), par.pair(&d.query_id, &d.id).unwrap());
    }

    #[test]
    fn masks_zero_the_right_part() {
        let p = PairFeatures { text: vec![0.5; 4], charge: vec![(1, 0.25), (3, 0.75)] };
        assert_eq!(p.masked(FeatureMask::TextOnly, 0, "q", "d", 2).sparse, vec![]);
        let c = p.masked(FeatureMask::ChargeOnly, 0, "q", "d", 2);
        assert_eq!(c.dense, vec![0.0; 4]);
        assert_eq!(c.sparse, p.charge);
        let r1 = p.masked(FeatureMask::Random, 9, "q", "d", 2);
        let r2 = p.masked(FeatureMask::Random, 9, "q", "d", 2);
        let r3 = p.masked(FeatureMask::Random, 9, "q", "e", 2);
        assert_eq!(r1, r2);
        assert_ne!(r1.dense, r3.dense);
        assert_eq!(r1.to_dense(4).len(), 8);
    }
}
