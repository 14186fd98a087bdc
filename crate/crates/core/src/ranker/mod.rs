//! Ranking: the MLP fusion ranker, its training labels and the baselines.

mod baselines;
mod labels;
mod mlp;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::features::{FeatureError, FeatureMask, FeatureStore, ModelInput};

pub use baselines::{ia_select_rank, mmr_rank, Bm25};
pub use labels::{
    build_training_set, min_max_labels, query_oracles, LabelledSample, RewardOracle, RewardSpec, DEFAULT_DEPTH,
    DEFAULT_MC_SAMPLES,
};
pub use mlp::{train, Layer, Mlp, TrainConfig, TrainReport, HIDDEN};

pub const CHECKPOINT_FORMAT: &str = "divlex-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RankerError {
    #[error("model expects {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pool of {pool} cannot fill a list of depth {depth}")]
    PoolTooSmall { pool: usize, depth: usize },
    #[error("position {position} outside 1..={depth}")]
    InvalidPosition { position: usize, depth: usize },
    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),
    #[error("query has no terms")]
    EmptyQuery,
    #[error("no training samples")]
    NoSamples,
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Indices of `ids` by descending score, ties by ascending id.
pub fn rank_by_scores(ids: &[&str], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(ids[b])));
    order
}

/// A trained fusion ranker together with the feature layout it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlrmModel {
    pub format: String,
    pub version: u32,
    pub variant: FeatureMask,
    pub text_len: usize,
    pub num_charges: usize,
    /// Seed of the random ablation inputs.
    pub mask_seed: u64,
    pub layer_sizes: Vec<usize>,
    pub mlp: Mlp,
}

impl DlrmModel {
    pub fn new(mlp: Mlp, variant: FeatureMask, text_len: usize, num_charges: usize, mask_seed: u64) -> Result<Self, RankerError> {
        let expected = text_len + num_charges * num_charges;
        if mlp.input_dim() != expected {
            return Err(RankerError::DimensionMismatch { expected, got: mlp.input_dim() });
        }
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            variant,
            text_len,
            num_charges,
            mask_seed,
            layer_sizes: mlp.layer_sizes(),
            mlp,
        })
    }

    /// Untrained model with the standard hidden layers.
    pub fn init(variant: FeatureMask, text_len: usize, num_charges: usize, seed: u64) -> Result<Self, RankerError> {
        Self::init_with_hidden(variant, text_len, num_charges, &HIDDEN, seed)
    }

    pub fn init_with_hidden(
        variant: FeatureMask,
        text_len: usize,
        num_charges: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self, RankerError> {
        let mut sizes = vec![text_len + num_charges * num_charges];
        sizes.extend(hidden);
        sizes.push(1);
        Self::new(Mlp::new(&sizes, seed)?, variant, text_len, num_charges, seed)
    }

    pub fn score(&self, x: &ModelInput) -> Result<f64, RankerError> {
        if x.dense.len() != self.text_len {
            return Err(RankerError::DimensionMismatch { expected: self.text_len, got: x.dense.len() });
        }
        self.mlp.forward(x)
    }

    pub fn input(&self, store: &FeatureStore, query_id: &str, doc_id: &str) -> Result<ModelInput, RankerError> {
        Ok(store.input(query_id, doc_id, self.variant, self.mask_seed)?)
    }

    /// Scores every candidate and sorts by descending score, ties by id.
    pub fn rank(&self, store: &FeatureStore, query_id: &str, doc_ids: &[&str]) -> Result<Vec<(usize, f64)>, RankerError> {
        let scores = doc_ids
            .iter()
            .map(|d| self.score(&self.input(store, query_id, d)?))
            .collect::<Result<Vec<f64>, RankerError>>()?;
        Ok(rank_by_scores(doc_ids, &scores).into_iter().map(|i| (i, scores[i])).collect())
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), RankerError> {
        serde_json::to_writer(w, self).map_err(|e| RankerError::Checkpoint(e.to_string()))
    }

    pub fn load<R: Read>(r: R) -> Result<Self, RankerError> {
        let m: DlrmModel = serde_json::from_reader(r).map_err(|e| RankerError::Checkpoint(e.to_string()))?;
        if m.format != CHECKPOINT_FORMAT || m.version != CHECKPOINT_VERSION {
            return Err(RankerError::Checkpoint(format!("unsupported checkpoint {} v{}", m.format, m.version)));
        }
        let mlp = Mlp::from_layers(m.mlp.layers().to_vec())?;
        if mlp.layer_sizes() != m.layer_sizes {
            return Err(RankerError::Checkpoint(format!(
                "header layer sizes {:?} disagree with weights {:?}",
                m.layer_sizes,
                mlp.layer_sizes()
            )));
        }
        Self::new(mlp, m.variant, m.text_len, m.num_charges, m.mask_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_by_scores(&["a", "b"], &[0.9, 0.1]), vec![0, 1]);
        assert_eq!(rank_by_scores(&["c", "a", "b"], &[0.5, 0.5, 0.5]), vec![1, 2, 0]);
        let ids: Vec<String> = (0..30).map(|i| format!("d{i:02}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let scores: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let mut r = rank_by_scores(&refs, &scores);
        r.sort_unstable();
        assert_eq!(r, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = DlrmModel::init(FeatureMask::ChargeOnly, 6, 3, 42).unwrap();
        assert_eq!(m.layer_sizes, vec![15, 128, 32, 4, 1]);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = DlrmModel::load(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let x = ModelInput { dense: vec![0.1; 6], sparse: vec![(4, 0.5)] };
        assert_eq!(back.score(&x).unwrap(), m.score(&x).unwrap());
    }

    #[test]
    fn checkpoint_rejects_bad_header() {
        let m = DlrmModel::init(FeatureMask::Full, 2, 2, 1).unwrap();
        let mut v = serde_json::to_value(&m).unwrap();
        v["layer_sizes"] = serde_json::json!([6, 128, 32, 4, 2]);
        assert!(DlrmModel::load(v.to_string().as_bytes()).is_err());
        v["layer_sizes"] = serde_json::json!([6, 128, 32, 4, 1]);
        v["version"] = serde_json::json!(99);
        assert!(DlrmModel::load(v.to_string().as_bytes()).is_err());
        let x = ModelInput { dense: vec![0.1; 3], sparse: vec![] };
        assert!(matches!(m.score(&x), Err(RankerError::DimensionMismatch { expected: 2, got: 3 })));
    }
}
