//! Expected-metric training labels.
//!
//! A sample fixes a query, a position `k` and a random prefix of `k - 1`
//! candidates. Every remaining candidate `a` is placed at `k`, the rest of
//! the list is filled uniformly at random, and the metric of the completed
//! list is averaged over Monte-Carlo draws. All candidates share the same
//! draws. The label of a candidate is its expected reward min-max
//! normalised over all candidates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RankerError;
use crate::corpus::Dataset;
use crate::exec::Exec;
use crate::hash::derive_seed;
use crate::metrics::{Judgments, TargetMetric};

/// Default Monte-Carlo draws per expected reward.
pub const DEFAULT_MC_SAMPLES: usize = 32;
/// Default list depth, also the metric cutoff.
pub const DEFAULT_DEPTH: usize = 10;
const LABEL_STREAM: u64 = 0x6c61_6265_6c73;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    pub metric: TargetMetric,
    pub depth: usize,
    pub alpha: f64,
    pub mc_samples: usize,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            metric: TargetMetric::NdcgIa,
            depth: DEFAULT_DEPTH,
            alpha: crate::metrics::DEFAULT_ALPHA,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

/// The metric of a query, ready to score lists of candidate indices.
#[derive(Debug, Clone)]
pub struct RewardOracle {
    judgments: Judgments,
    spec: RewardSpec,
    ideal_alpha: f64,
}

impl RewardOracle {
    pub fn new(judgments: Judgments, spec: RewardSpec) -> Self {
        let ideal_alpha = match spec.metric {
            TargetMetric::AlphaNdcg => judgments.ideal_alpha_dcg(spec.depth, spec.alpha),
            TargetMetric::NdcgIa => 0.0,
        };
        Self { judgments, spec, ideal_alpha }
    }

    pub fn judgments(&self) -> &Judgments {
        &self.judgments
    }

    pub fn spec(&self) -> &RewardSpec {
        &self.spec
    }

    pub fn score(&self, list: &[usize]) -> f64 {
        match self.spec.metric {
            TargetMetric::NdcgIa => self.judgments.ndcg_ia_idx(list, self.spec.depth),
            TargetMetric::AlphaNdcg => self.judgments.alpha_ndcg_with_ideal(
                list.iter().map(|&d| Some(d)),
                self.spec.depth,
                self.spec.alpha,
                self.ideal_alpha,
            ),
        }
    }

    fn check(&self, prefix: &[usize], pool: &[usize]) -> Result<(), RankerError> {
        if pool.len() < self.spec.depth {
            return Err(RankerError::PoolTooSmall { pool: pool.len(), depth: self.spec.depth });
        }
        if prefix.len() >= self.spec.depth {
            return Err(RankerError::InvalidPosition { position: prefix.len() + 1, depth: self.spec.depth });
        }
        if prefix.iter().any(|p| !pool.contains(p)) {
            return Err(RankerError::InvalidPrefix("prefix document outside the pool".into()));
        }
        Ok(())
    }

    /// Expected reward of every candidate of `pool` not in `prefix`, placed
    /// right after the prefix. Returned in pool order.
    pub fn expected_rewards(&self, prefix: &[usize], pool: &[usize], seed: u64) -> Result<Vec<(usize, f64)>, RankerError> {
        self.check(prefix, pool)?;
        let rest: Vec<usize> = pool.iter().copied().filter(|d| !prefix.contains(d)).collect();
        let fill = self.spec.depth - prefix.len() - 1;
        let draws = self.spec.mc_samples.max(1);
        let mut sums = vec![0.0; rest.len()];
        let mut list = Vec::with_capacity(self.spec.depth);
        let mut order = rest.clone();
        for s in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s as u64));
            order.copy_from_slice(&rest);
            order.shuffle(&mut rng);
            for (slot, &a) in rest.iter().enumerate() {
                list.clear();
                list.extend_from_slice(prefix);
                list.push(a);
                list.extend(order.iter().copied().filter(|&o| o != a).take(fill));
                sums[slot] += self.score(&list);
            }
        }
        Ok(rest.into_iter().zip(sums).map(|(d, s)| (d, s / draws as f64)).collect())
    }

    fn check_candidate(prefix: &[usize], d: usize, pool: &[usize]) -> Result<(), RankerError> {
        if prefix.contains(&d) || !pool.contains(&d) {
            return Err(RankerError::InvalidPrefix(format!("candidate {d} is in the prefix or outside the pool")));
        }
        Ok(())
    }

    pub fn expected_reward(&self, prefix: &[usize], d: usize, pool: &[usize], seed: u64) -> Result<f64, RankerError> {
        Self::check_candidate(prefix, d, pool)?;
        let all = self.expected_rewards(prefix, pool, seed)?;
        Ok(all.into_iter().find(|(a, _)| *a == d).expect("d is a remaining candidate").1)
    }

    pub fn training_label(&self, prefix: &[usize], d: usize, pool: &[usize], seed: u64) -> Result<f64, RankerError> {
        Self::check_candidate(prefix, d, pool)?;
        let all = self.expected_rewards(prefix, pool, seed)?;
        Ok(min_max_labels(&all).into_iter().find(|(a, _)| *a == d).expect("d is a remaining candidate").1)
    }
}

/// `(r - min) / (max - min)`, or 0.5 for every entry when all are equal.
pub fn min_max_labels(rewards: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let min = rewards.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max = rewards.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    rewards
        .iter()
        .map(|&(d, r)| (d, if max > min { ((r - min) / (max - min)).clamp(0.0, 1.0) } else { 0.5 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledSample {
    pub query_id: String,
    pub doc_id: String,
    /// 1-based list position.
    pub position: usize,
    pub label: f64,
}

/// One reward oracle per query over its candidates in file order.
pub fn query_oracles(ds: &Dataset, query_ids: &[String], spec: RewardSpec) -> Result<Vec<(String, Vec<String>, RewardOracle)>, RankerError> {
    let idx = ds.index();
    query_ids
        .iter()
        .map(|qid| {
            let q = idx.query(qid).ok_or_else(|| RankerError::UnknownQuery(qid.clone()))?;
            let docs: Vec<String> = idx.docs(qid).iter().map(|d| d.id.clone()).collect();
            let triples = idx.triples(qid);
            let j = Judgments::new(&q.intent_dist, docs.iter().map(String::as_str), triples);
            Ok((qid.clone(), docs, RewardOracle::new(j, spec)))
        })
        .collect()
}

/// Draws `n_samples` labelled samples from the queries `query_ids`. The
/// stream depends only on the seed; samples are produced in parallel but
/// returned in draw order.
pub fn build_training_set(
    ds: &Dataset,
    query_ids: &[String],
    n_samples: usize,
    spec: RewardSpec,
    seed: u64,
    exec: Exec,
) -> Result<Vec<LabelledSample>, RankerError> {
    if n_samples == 0 {
        return Ok(Vec::new());
    }
    if query_ids.is_empty() {
        return Err(RankerError::NoSamples);
    }
    let oracles = query_oracles(ds, query_ids, spec)?;
    if let Some((qid, docs, _)) = oracles.iter().find(|o| o.1.len() < spec.depth) {
        log::warn!("query {qid} has only {} candidates", docs.len());
        return Err(RankerError::PoolTooSmall { pool: docs.len(), depth: spec.depth });
    }
    exec.try_map_range(n_samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let (qid, docs, oracle) = &oracles[rng.random_range(0..oracles.len())];
        let pool: Vec<usize> = (0..docs.len()).collect();
        let position = rng.random_range(1..=spec.depth);
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut rng);
        let prefix = &shuffled[..position - 1];
        let d = shuffled[rng.random_range(position - 1..shuffled.len())];
        let label = oracle.training_label(prefix, d, &pool, derive_seed(seed ^ LABEL_STREAM, i as u64))?;
        Ok(LabelledSample { query_id: qid.clone(), doc_id: docs[d].clone(), position, label })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, GeneratorConfig, Grade, GradedTriple};
    use std::collections::BTreeMap;

    fn oracle(grades: &[u8], depth: usize, mc: usize) -> RewardOracle {
        let ids: Vec<String> = (0..grades.len()).map(|i| format!("d{i}")).collect();
        let triples: Vec<GradedTriple> = grades
            .iter()
            .enumerate()
            .map(|(i, &g)| GradedTriple { query_id: "q".into(), charge_id: 0, doc_id: ids[i].clone(), grade: Grade::new(g).unwrap() })
            .collect();
        let j = Judgments::new(&BTreeMap::from([(0, 1.0)]), ids.iter().map(String::as_str), &triples);
        RewardOracle::new(j, RewardSpec { depth, mc_samples: mc, ..Default::default() })
    }

    #[test]
    fn constant_metric_gives_constant_reward() {
        let o = oracle(&[2; 5], 3, 16);
        let pool: Vec<usize> = (0..5).collect();
        assert_eq!(o.expected_reward(&[1], 3, &pool, 4).unwrap(), 1.0);
        assert_eq!(o.training_label(&[1], 3, &pool, 4).unwrap(), 0.5);
    }

    #[test]
    fn labels_span_zero_to_one() {
        let o = oracle(&[3, 0, 1, 2, 0, 0], 4, 64);
        let pool: Vec<usize> = (0..6).collect();
        assert_eq!(o.training_label(&[], 0, &pool, 1).unwrap(), 1.0);
        let all = min_max_labels(&o.expected_rewards(&[], &pool, 1).unwrap());
        assert!(all.iter().all(|(_, l)| (0.0..=1.0).contains(l)));
        assert_eq!(all.iter().filter(|(_, l)| *l == 1.0).count(), 1);
    }

    #[test]
    fn errors_on_small_pool_and_bad_prefix() {
        let o = oracle(&[1, 2, 3], 4, 4);
        assert!(matches!(o.expected_reward(&[], 0, &[0, 1, 2], 0), Err(RankerError::PoolTooSmall { pool: 3, depth: 4 })));
        let o = oracle(&[1, 2, 3, 0], 2, 4);
        assert!(o.expected_reward(&[0], 0, &[0, 1, 2, 3], 0).is_err());
        assert!(matches!(o.expected_reward(&[0, 1], 2, &[0, 1, 2, 3], 0), Err(RankerError::InvalidPosition { .. })));
    }

    #[test]
    fn same_seed_same_estimate() {
        let o = oracle(&[3, 0, 1, 2, 0, 1, 2], 4, 8);
        let pool: Vec<usize> = (0..7).collect();
        assert_eq!(o.expected_reward(&[2], 4, &pool, 77).unwrap(), o.expected_reward(&[2], 4, &pool, 77).unwrap());
    }

    #[test]
    fn training_set_is_deterministic_and_bounded() {
        let cfg = GeneratorConfig { num_charges: 12, train_queries: 4, test_queries: 2, docs_per_query: 12, ..Default::default() };
        let ds = generate_synthetic(&cfg, 2).unwrap();
        let spec = RewardSpec { mc_samples: 4, ..Default::default() };
        assert!(build_training_set(&ds, &ds.split.train, 0, spec, 1, Exec::Sequential).unwrap().is_empty());
        let a = build_training_set(&ds, &ds.split.train, 200, spec, 1, Exec::Sequential).unwrap();
        let b = build_training_set(&ds, &ds.split.train, 200, spec, 1, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| (0.0..=1.0).contains(&s.label) && (1..=10).contains(&s.position)));
        assert!(a.iter().all(|s| ds.split.train.contains(&s.query_id)));
    }
}
