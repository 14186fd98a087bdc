//! Diversity evaluation metrics.
//!
//! Gains are `2^g - 1` and the discount at 1-based rank `r` is
//! `log2(r + 1)`. Intent-aware NDCG weights each intent's NDCG by its
//! intent probability, normalised over intents with positive probability.
//! α-NDCG keeps only intents with probability above 0.5 and counts a
//! document as covering an intent when its grade is at least 2.

mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{ChargeId, Grade, GradedTriple, QueryCase};

pub use stats::{paired_t_test, TTest};

/// Cutoffs reported by default.
pub const DEFAULT_CUTOFFS: [usize; 4] = [1, 3, 5, 10];
/// Default redundancy penalty for α-NDCG.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Intents at or below this probability are dropped for α-NDCG.
pub const ALPHA_INTENT_THRESHOLD: f64 = 0.5;
/// Ideal α-DCG lists are searched exhaustively up to this many covering
/// documents and built greedily beyond it.
pub const EXACT_IDEAL_LIMIT: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("no graded triple for doc {doc} on charge {charge}")]
    MissingTriples { doc: String, charge: ChargeId },
}

/// Which metric a ranker is trained towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMetric {
    #[default]
    NdcgIa,
    AlphaNdcg,
}

fn gain(g: Grade) -> f64 {
    f64::from((1u32 << g.value()) - 1)
}

fn discount(rank0: usize) -> f64 {
    ((rank0 + 2) as f64).log2()
}

pub fn dcg(grades: &[Grade], k: usize) -> f64 {
    grades.iter().take(k).enumerate().map(|(r, &g)| gain(g) / discount(r)).sum()
}

/// Graded NDCG@k of a ranked list against its own ideal reordering; 0 when
/// the ideal is 0.
pub fn ndcg(grades: &[Grade], k: usize) -> f64 {
    let mut ideal = grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(grades, k) / idcg
    }
}

/// Graded judgments of one query over a fixed set of documents, laid out
/// for repeated metric evaluation.
#[derive(Debug, Clone)]
pub struct Judgments {
    intents: Vec<ChargeId>,
    weights: Vec<f64>,
    alpha_intents: Vec<usize>,
    doc_ids: Vec<String>,
    doc_pos: HashMap<String, usize>,
    rows: Vec<Vec<Grade>>,
    labelled: Vec<Vec<bool>>,
    ideal_dcg: Vec<Vec<f64>>,
}

impl Judgments {
    /// Judgments for `doc_ids` (usually a query's candidate pool; documents
    /// that only occur in triples are appended). Triples of other queries
    /// must be filtered out by the caller.
    pub fn new<'a>(
        intent_dist: &BTreeMap<ChargeId, f64>,
        doc_ids: impl IntoIterator<Item = &'a str>,
        triples: impl IntoIterator<Item = &'a GradedTriple>,
    ) -> Self {
        let intents: Vec<ChargeId> = intent_dist.iter().filter(|(_, p)| **p > 0.0).map(|(c, _)| *c).collect();
        let total: f64 = intents.iter().map(|c| intent_dist[c]).sum();
        let weights = intents.iter().map(|c| intent_dist[c] / total).collect();
        let alpha_intents =
            (0..intents.len()).filter(|&i| intent_dist[&intents[i]] > ALPHA_INTENT_THRESHOLD).collect();
        let intent_pos: HashMap<ChargeId, usize> = intents.iter().enumerate().map(|(i, c)| (*c, i)).collect();

        let mut j = Judgments {
            intents,
            weights,
            alpha_intents,
            doc_ids: Vec::new(),
            doc_pos: HashMap::new(),
            rows: Vec::new(),
            labelled: Vec::new(),
            ideal_dcg: Vec::new(),
        };
        for id in doc_ids {
            j.doc_index_or_insert(id);
        }
        for t in triples {
            let d = j.doc_index_or_insert(&t.doc_id);
            if let Some(&i) = intent_pos.get(&t.charge_id) {
                j.rows[d][i] = t.grade;
                j.labelled[d][i] = true;
            }
        }
        j.ideal_dcg = (0..j.intents.len())
            .map(|i| {
                let mut col: Vec<Grade> = j.rows.iter().map(|r| r[i]).collect();
                col.sort_unstable_by(|a, b| b.cmp(a));
                let mut acc = 0.0;
                let mut prefix = vec![0.0];
                for (r, g) in col.iter().enumerate() {
                    acc += gain(*g) / discount(r);
                    prefix.push(acc);
                }
                prefix
            })
            .collect();
        j
    }

    pub fn for_query<'a>(
        query: &QueryCase,
        doc_ids: impl IntoIterator<Item = &'a str>,
        triples: impl IntoIterator<Item = &'a GradedTriple>,
    ) -> Self {
        Self::new(&query.intent_dist, doc_ids, triples.into_iter().filter(|t| t.query_id == query.id))
    }

    fn doc_index_or_insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.doc_pos.get(id) {
            return i;
        }
        let i = self.doc_ids.len();
        self.doc_ids.push(id.to_string());
        self.doc_pos.insert(id.to_string(), i);
        self.rows.push(vec![Grade::IRRELEVANT; self.intents.len()]);
        self.labelled.push(vec![false; self.intents.len()]);
        i
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.doc_pos.get(id).copied()
    }

    pub fn intents(&self) -> &[ChargeId] {
        &self.intents
    }

    /// Grade of a document for a charge; 0 when unlabelled.
    pub fn grade(&self, doc: usize, charge: ChargeId) -> Grade {
        self.intents.iter().position(|c| *c == charge).map(|i| self.rows[doc][i]).unwrap_or_default()
    }

    fn ideal(&self, intent: usize, k: usize) -> f64 {
        let prefix = &self.ideal_dcg[intent];
        prefix[k.min(prefix.len() - 1)]
    }

    fn indices(&self, ranked: &[&str]) -> Vec<Option<usize>> {
        ranked.iter().map(|id| self.doc_index(id)).collect()
    }

    /// NDCG-IA@k over documents given by index.
    pub fn ndcg_ia_idx(&self, ranked: &[usize], k: usize) -> f64 {
        self.ndcg_ia_opt(ranked.iter().map(|&d| Some(d)), k)
    }

    fn ndcg_ia_opt(&self, ranked: impl Iterator<Item = Option<usize>> + Clone, k: usize) -> f64 {
        let mut total = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            let idcg = self.ideal(i, k);
            if idcg == 0.0 {
                continue;
            }
            let dcg: f64 = ranked
                .clone()
                .take(k)
                .enumerate()
                .map(|(r, d)| d.map_or(0.0, |d| gain(self.rows[d][i]) / discount(r)))
                .sum();
            total += w * dcg / idcg;
        }
        total
    }

    /// Intent-aware NDCG@k. Unknown documents and missing triples count as
    /// grade 0.
    pub fn ndcg_ia(&self, ranked: &[&str], k: usize) -> f64 {
        self.ndcg_ia_opt(self.indices(ranked).into_iter(), k)
    }

    /// As [`Judgments::ndcg_ia`] but fails on the first top-k document that
    /// lacks a triple for a weighted intent.
    pub fn ndcg_ia_strict(&self, ranked: &[&str], k: usize) -> Result<f64, MetricError> {
        for id in ranked.iter().take(k) {
            let d = self.doc_index(id);
            for (i, c) in self.intents.iter().enumerate() {
                if d.is_none_or(|d| !self.labelled[d][i]) {
                    return Err(MetricError::MissingTriples { doc: id.to_string(), charge: *c });
                }
            }
        }
        Ok(self.ndcg_ia(ranked, k))
    }

    fn covers(&self, d: usize) -> impl Iterator<Item = usize> + '_ {
        self.alpha_intents.iter().enumerate().filter(move |(_, &i)| self.rows[d][i] >= Grade::EXCELLENT).map(|(a, _)| a)
    }

    fn alpha_dcg(&self, ranked: impl Iterator<Item = Option<usize>>, k: usize, alpha: f64) -> f64 {
        let mut seen = vec![0i32; self.alpha_intents.len()];
        let mut total = 0.0;
        for (r, d) in ranked.take(k).enumerate() {
            let Some(d) = d else { continue };
            let mut g = 0.0;
            for a in self.covers(d) {
                g += (1.0 - alpha).powi(seen[a]);
                seen[a] += 1;
            }
            total += g / discount(r);
        }
        total
    }

    /// Best achievable α-DCG@k.
    pub fn ideal_alpha_dcg(&self, k: usize, alpha: f64) -> f64 {
        let covering: Vec<Vec<usize>> =
            (0..self.num_docs()).map(|d| self.covers(d).collect::<Vec<_>>()).filter(|c| !c.is_empty()).collect();
        if covering.is_empty() || self.alpha_intents.is_empty() {
            return 0.0;
        }
        let depth = k.min(covering.len());
        let mut seen = vec![0i32; self.alpha_intents.len()];
        if covering.len() <= EXACT_IDEAL_LIMIT {
            let mut used = vec![false; covering.len()];
            exact_alpha_search(&covering, &mut used, &mut seen, 0, depth, alpha)
        } else {
            greedy_alpha(&covering, &mut seen, depth, alpha)
        }
    }

    /// α-NDCG@k over documents given by index.
    pub fn alpha_ndcg_idx(&self, ranked: &[usize], k: usize, alpha: f64) -> f64 {
        let ideal = self.ideal_alpha_dcg(k, alpha);
        self.alpha_ndcg_with_ideal(ranked.iter().map(|&d| Some(d)), k, alpha, ideal)
    }

    pub(crate) fn alpha_ndcg_with_ideal(
        &self,
        ranked: impl Iterator<Item = Option<usize>>,
        k: usize,
        alpha: f64,
        ideal: f64,
    ) -> f64 {
        if ideal == 0.0 {
            0.0
        } else {
            self.alpha_dcg(ranked, k, alpha) / ideal
        }
    }

    /// α-NDCG@k; 0 when no intent passes the probability filter.
    pub fn alpha_ndcg(&self, ranked: &[&str], k: usize, alpha: f64) -> f64 {
        let ideal = self.ideal_alpha_dcg(k, alpha);
        self.alpha_ndcg_with_ideal(self.indices(ranked).into_iter(), k, alpha, ideal)
    }
}

fn step_gain(cover: &[usize], seen: &[i32], alpha: f64) -> f64 {
    cover.iter().map(|&a| (1.0 - alpha).powi(seen[a])).sum()
}

fn exact_alpha_search(
    covering: &[Vec<usize>],
    used: &mut [bool],
    seen: &mut [i32],
    rank: usize,
    depth: usize,
    alpha: f64,
) -> f64 {
    if rank == depth {
        return 0.0;
    }
    let mut best = 0.0f64;
    for d in 0..covering.len() {
        if used[d] {
            continue;
        }
        let g = step_gain(&covering[d], seen, alpha) / discount(rank);
        used[d] = true;
        covering[d].iter().for_each(|&a| seen[a] += 1);
        let rest = exact_alpha_search(covering, used, seen, rank + 1, depth, alpha);
        covering[d].iter().for_each(|&a| seen[a] -= 1);
        used[d] = false;
        best = best.max(g + rest);
    }
    best
}

fn greedy_alpha(covering: &[Vec<usize>], seen: &mut [i32], depth: usize, alpha: f64) -> f64 {
    let mut used = vec![false; covering.len()];
    let mut total = 0.0;
    for rank in 0..depth {
        let mut best: Option<(usize, f64)> = None;
        for (d, cover) in covering.iter().enumerate() {
            if used[d] {
                continue;
            }
            let g = step_gain(cover, seen, alpha);
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((d, g));
            }
        }
        let Some((d, g)) = best else { break };
        used[d] = true;
        covering[d].iter().for_each(|&a| seen[a] += 1);
        total += g / discount(rank);
    }
    total
}

/// Intent-aware NDCG@k of `ranked` for `query`, from the query's triples.
pub fn ndcg_ia(query: &QueryCase, ranked: &[&str], triples: &[GradedTriple], k: usize) -> f64 {
    Judgments::for_query(query, ranked.iter().copied(), triples).ndcg_ia(ranked, k)
}

/// α-NDCG@k of `ranked` for `query`, from the query's triples.
pub fn alpha_ndcg(query: &QueryCase, ranked: &[&str], triples: &[GradedTriple], k: usize, alpha: f64) -> f64 {
    Judgments::for_query(query, ranked.iter().copied(), triples).alpha_ndcg(ranked, k, alpha)
}
