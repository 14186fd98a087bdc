//! BM25, MMR and IA-select rankers.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{rank_by_scores, RankerError};
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
    pub tokenizer: Tokenizer,
}

impl Default for Bm25 {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75, tokenizer: Tokenizer::default() }
    }
}

impl Bm25 {
    /// Okapi BM25 of `query` against each document, with
    /// `idf = ln(1 + (N - df + 0.5) / (df + 0.5))` over the given documents
    /// and each distinct query term counted once.
    pub fn scores(&self, query: &str, docs: &[&str]) -> Result<Vec<f64>, RankerError> {
        let terms: BTreeSet<String> = self.tokenizer.tokenize(query).into_iter().collect();
        if terms.is_empty() {
            return Err(RankerError::EmptyQuery);
        }
        let tokenized: Vec<Vec<String>> = docs.iter().map(|d| self.tokenizer.tokenize(d)).collect();
        let n = docs.len() as f64;
        let avgdl = if docs.is_empty() { 0.0 } else { tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n };
        let tfs: Vec<HashMap<&str, usize>> = tokenized
            .iter()
            .map(|toks| {
                let mut m = HashMap::new();
                for t in toks {
                    if terms.contains(t) {
                        *m.entry(t.as_str()).or_insert(0) += 1;
                    }
                }
                m
            })
            .collect();
        let idf: HashMap<&str, f64> = terms
            .iter()
            .map(|t| {
                let df = tfs.iter().filter(|m| m.contains_key(t.as_str())).count() as f64;
                (t.as_str(), (1.0 + (n - df + 0.5) / (df + 0.5)).ln())
            })
            .collect();
        Ok(tfs
            .iter()
            .zip(&tokenized)
            .map(|(tf, toks)| {
                let norm = if avgdl > 0.0 { 1.0 - self.b + self.b * toks.len() as f64 / avgdl } else { 1.0 };
                tf.iter()
                    .map(|(t, &f)| {
                        let f = f as f64;
                        idf[t] * f * (self.k1 + 1.0) / (f + self.k1 * norm)
                    })
                    .sum()
            })
            .collect())
    }

    /// Candidate indices by descending score, ties by ascending id.
    pub fn rank(&self, query: &str, ids: &[&str], docs: &[&str]) -> Result<Vec<(usize, f64)>, RankerError> {
        let scores = self.scores(query, docs)?;
        Ok(rank_by_scores(ids, &scores).into_iter().map(|i| (i, scores[i])).collect())
    }
}

/// Greedy MMR: the first pick is the most relevant document, each later
/// pick maximises `(1 - λ)·rel(d) - λ·mean_{s ∈ S} sim(d, s)`.
pub fn mmr_rank(
    ids: &[&str],
    relevance: &[f64],
    sim: impl Fn(usize, usize) -> f64,
    lambda: f64,
) -> Result<Vec<usize>, RankerError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RankerError::InvalidConfig(format!("MMR lambda {lambda} outside [0, 1]")));
    }
    let n = ids.len();
    let mut selected: Vec<usize> = Vec::with_capacity(n);
    let mut sim_sum = vec![0.0; n];
    let mut left: Vec<usize> = (0..n).collect();
    while !left.is_empty() {
        let value = |d: usize| {
            if selected.is_empty() {
                relevance[d]
            } else {
                (1.0 - lambda) * relevance[d] - lambda * sim_sum[d] / selected.len() as f64
            }
        };
        let (pos, &best) = left
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| value(a).total_cmp(&value(b)).then(ids[b].cmp(ids[a])))
            .expect("non-empty");
        left.swap_remove(pos);
        for &d in &left {
            sim_sum[d] += sim(d, best);
        }
        selected.push(best);
    }
    Ok(selected)
}

/// Greedy IA-select: pick `argmax_d Σ_k U_k·V(d|k)`, then `U_k ← U_k·(1 - V(d|k))`.
/// `v[d][k]` is the relevance of document `d` to intent `k`.
pub fn ia_select_rank(ids: &[&str], intent_weights: &[f64], v: &[Vec<f64>]) -> Vec<usize> {
    let mut u = intent_weights.to_vec();
    let mut left: Vec<usize> = (0..ids.len()).collect();
    let mut out = Vec::with_capacity(ids.len());
    while !left.is_empty() {
        let value = |d: usize| u.iter().zip(&v[d]).map(|(w, r)| w * r).sum::<f64>();
        let (pos, &best) = left
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| value(a).total_cmp(&value(b)).then(ids[b].cmp(ids[a])))
            .expect("non-empty");
        left.swap_remove(pos);
        for (w, r) in u.iter_mut().zip(&v[best]) {
            *w *= 1.0 - r;
        }
        out.push(best);
    }
    out
}
