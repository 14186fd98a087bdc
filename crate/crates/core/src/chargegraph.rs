//! Charge similarity: a transition graph built from how often one charge is
//! reversed to another on appeal, random walks over it, and the Kronecker
//! feature pairing a query's and a document's charge distributions.
//!
//! Walks move probability along the reversal direction: mass on an
//! original charge flows to the charges that replaced it, `p' = Eᵀ p`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::corpus::{ChargeId, Reversal};
use crate::predictor::{top_k, ChargeScore};

/// Default self-loop weight.
pub const DEFAULT_ALPHA: f64 = 0.4;
/// Default number of walk steps.
pub const DEFAULT_STEPS: usize = 2;

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("negative reversal frequency {count} at ({from}, {to})")]
    NegativeFrequency { from: ChargeId, to: ChargeId, count: i64 },
    #[error("charge {0} outside a graph of {1} charges")]
    OutOfRange(ChargeId, usize),
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("distribution has no mass")]
    AllZero,
    #[error("document has no charges")]
    NoCharges,
    #[error("candidate charge set is empty")]
    EmptyCandidateSet,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("graph file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse reversal counts `G[i][j]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReversalMatrix {
    size: usize,
    rows: Vec<BTreeMap<ChargeId, u64>>,
}

impl ReversalMatrix {
    pub fn new(size: usize) -> Self {
        Self { size, rows: vec![BTreeMap::new(); size] }
    }

    pub fn from_dense(g: &[Vec<i64>]) -> Result<Self, GraphError> {
        let mut m = Self::new(g.len());
        for (i, row) in g.iter().enumerate() {
            if row.len() != g.len() {
                return Err(GraphError::DimensionMismatch(row.len(), g.len()));
            }
            for (j, &count) in row.iter().enumerate() {
                m.add(i, j, count)?;
            }
        }
        Ok(m)
    }

    pub fn from_reversals(size: usize, reversals: &[Reversal]) -> Result<Self, GraphError> {
        let mut m = Self::new(size);
        for r in reversals {
            m.add(r.from, r.to, r.count)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, from: ChargeId, to: ChargeId, count: i64) -> Result<(), GraphError> {
        if count < 0 {
            return Err(GraphError::NegativeFrequency { from, to, count });
        }
        for c in [from, to] {
            if c >= self.size {
                return Err(GraphError::OutOfRange(c, self.size));
            }
        }
        if count > 0 {
            *self.rows[from].entry(to).or_insert(0) += count as u64;
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, from: ChargeId, to: ChargeId) -> u64 {
        self.rows.get(from).and_then(|r| r.get(&to)).copied().unwrap_or(0)
    }

    pub fn row(&self, from: ChargeId) -> &BTreeMap<ChargeId, u64> {
        &self.rows[from]
    }

    pub fn to_reversals(&self) -> Vec<Reversal> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |(&j, &c)| Reversal { from: i, to: j, count: c as i64 }))
            .collect()
    }
}

/// Row-stochastic transition weights over charges, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeGraph {
    alpha: f64,
    rows: Vec<Vec<(ChargeId, f64)>>,
}

/// Builds the transition graph.
///
/// A charge never reversed to another charge keeps a single self loop of
/// weight 1. Otherwise it keeps `alpha` on itself and spreads `1 - alpha`
/// over the charges it was reversed to, proportionally to frequency.
/// Self-reversal counts carry no information and are ignored.
pub fn build_graph(g: &ReversalMatrix, alpha: f64) -> Result<ChargeGraph, GraphError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GraphError::InvalidAlpha(alpha));
    }
    let rows = (0..g.size())
        .map(|i| {
            let off: Vec<(ChargeId, u64)> = g.row(i).iter().filter(|(&j, _)| j != i).map(|(&j, &c)| (j, c)).collect();
            let total: u64 = off.iter().map(|(_, c)| c).sum();
            if total == 0 || alpha == 1.0 {
                return vec![(i, 1.0)];
            }
            let mut row = Vec::with_capacity(off.len() + 1);
            row.push((i, alpha));
            row.extend(off.into_iter().map(|(j, c)| (j, (1.0 - alpha) * c as f64 / total as f64)));
            row.sort_by_key(|(j, _)| *j);
            row
        })
        .collect();
    Ok(ChargeGraph { alpha, rows })
}

impl ChargeGraph {
    /// A graph where every charge only loops to itself.
    pub fn identity(size: usize) -> Self {
        Self { alpha: 1.0, rows: (0..size).map(|i| vec![(i, 1.0)]).collect() }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn row(&self, i: ChargeId) -> &[(ChargeId, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: ChargeId, j: ChargeId) -> f64 {
        self.rows[i].iter().find(|(k, _)| *k == j).map(|(_, w)| *w).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let s = self.size();
        let mut out = vec![vec![0.0; s]; s];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[i][j] = w;
            }
        }
        out
    }

    /// Writes the graph as a sparse triplet file.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        writeln!(w, "# charge graph s={} alpha={}", self.size(), self.alpha)?;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, weight) in row {
                writeln!(w, "{i}\t{j}\t{weight}")?;
            }
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, GraphError> {
        let mut lines = r.lines().enumerate();
        let parse_err = |line: usize, message: String| GraphError::Parse { line, message };
        let (size, alpha) = match lines.next() {
            Some((_, header)) => {
                let header = header?;
                let field = |key: &str| {
                    header
                        .split_whitespace()
                        .find_map(|t| t.strip_prefix(key))
                        .ok_or_else(|| parse_err(1, format!("header lacks {key}")))
                };
                let size: usize = field("s=")?.parse().map_err(|e| parse_err(1, format!("{e}")))?;
                let alpha: f64 = field("alpha=")?.parse().map_err(|e| parse_err(1, format!("{e}")))?;
                (size, alpha)
            }
            None => return Err(parse_err(1, "empty graph file".into())),
        };
        let mut rows = vec![Vec::new(); size];
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_err(i + 1, format!("expected 3 columns, got {}", cols.len())));
            }
            let from: usize = cols[0].parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
            let to: usize = cols[1].parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
            let w: f64 = cols[2].parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
            if from >= size || to >= size {
                return Err(parse_err(i + 1, format!("edge ({from},{to}) outside s={size}")));
            }
            rows[from].push((to, w));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|(j, _)| *j);
            let sum: f64 = row.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(parse_err(0, format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { alpha, rows })
    }
}

/// A probability vector over the charge space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeDistribution {
    p: Vec<f64>,
}

impl ChargeDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self, GraphError> {
        if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(GraphError::InvalidDistribution(format!("entry {x}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(GraphError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { p })
    }

    /// Scales nonnegative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self, GraphError> {
        if let Some(x) = weights.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(GraphError::InvalidDistribution(format!("entry {x}")));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(GraphError::AllZero);
        }
        Ok(Self { p: weights.into_iter().map(|w| w / sum).collect() })
    }

    pub fn one_hot(size: usize, at: ChargeId) -> Self {
        let mut p = vec![0.0; size];
        p[at] = 1.0;
        Self { p }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn get(&self, i: ChargeId) -> f64 {
        self.p[i]
    }

    /// Nonzero entries in index order.
    pub fn support(&self) -> impl Iterator<Item = (ChargeId, f64)> + '_ {
        self.p.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i, v))
    }
}

/// `steps` applications of `p ← Eᵀ p`.
pub fn rwog(p0: &ChargeDistribution, graph: &ChargeGraph, steps: usize) -> Result<ChargeDistribution, GraphError> {
    if p0.len() != graph.size() {
        return Err(GraphError::DimensionMismatch(p0.len(), graph.size()));
    }
    let mut p = p0.p.clone();
    let mut next = vec![0.0; p.len()];
    for _ in 0..steps {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(j, w) in &graph.rows[i] {
                next[j] += mass * w;
            }
        }
        std::mem::swap(&mut p, &mut next);
    }
    Ok(ChargeDistribution { p })
}

/// Initial query distribution: predictor scores restricted to the candidate
/// charge set, `boost` added to the predictor's top `k`, then normalised.
pub fn init_query_dist(
    size: usize,
    ccs: &BTreeSet<ChargeId>,
    scores: &[ChargeScore],
    k: usize,
    boost: f64,
) -> Result<ChargeDistribution, GraphError> {
    if ccs.is_empty() {
        return Err(GraphError::EmptyCandidateSet);
    }
    let mut w = vec![0.0; size];
    for s in scores {
        if s.id >= size {
            return Err(GraphError::OutOfRange(s.id, size));
        }
        if ccs.contains(&s.id) {
            w[s.id] = s.prob;
        }
    }
    for id in top_k(scores, k) {
        w[id] += boost;
    }
    ChargeDistribution::normalized(w)
}

/// Uniform distribution over a document's charges.
pub fn init_doc_dist(size: usize, charges: &BTreeSet<ChargeId>) -> Result<ChargeDistribution, GraphError> {
    if charges.is_empty() {
        return Err(GraphError::NoCharges);
    }
    let mut p = vec![0.0; size];
    let share = 1.0 / charges.len() as f64;
    for &c in charges {
        if c >= size {
            return Err(GraphError::OutOfRange(c, size));
        }
        p[c] = share;
    }
    Ok(ChargeDistribution { p })
}

/// Sparse vector as sorted `(index, value)` pairs.
pub type SparseVec = Vec<(usize, f64)>;

/// Kronecker product `out[i·s + j] = Cq[i]·Cd[j]`, nonzeros only.
pub fn kron_feature(cq: &ChargeDistribution, cd: &ChargeDistribution) -> Result<SparseVec, GraphError> {
    if cq.len() != cd.len() {
        return Err(GraphError::DimensionMismatch(cq.len(), cd.len()));
    }
    let s = cq.len();
    let d: Vec<(ChargeId, f64)> = cd.support().collect();
    Ok(cq.support().flat_map(|(i, a)| d.iter().map(move |&(j, b)| (i * s + j, a * b))).collect())
}

pub fn sparse_to_dense(v: &[(usize, f64)], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for &(i, x) in v {
        out[i] += x;
    }
    out
}

/// Human-readable summary of the heaviest outgoing edges, for CLI output.
pub fn describe_top_edges(graph: &ChargeGraph, limit: usize) -> String {
    let mut edges: Vec<(ChargeId, ChargeId, f64)> = (0..graph.size())
        .flat_map(|i| graph.row(i).iter().filter(move |(j, _)| *j != i).map(move |&(j, w)| (i, j, w)))
        .collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut out = String::new();
    for (i, j, w) in edges.into_iter().take(limit) {
        let _ = writeln!(out, "{i} -> {j}\t{w:.4}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dense_matvec_t(e: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
        let s = p.len();
        (0..s).map(|j| (0..s).map(|i| e[i][j] * p[i]).sum()).collect()
    }

    #[test]
    fn zero_row_is_identity() {
        let g = ReversalMatrix::from_dense(&[vec![0, 0], vec![5, 0]]).unwrap();
        let e = build_graph(&g, 0.4).unwrap();
        assert_eq!(e.row(0), &[(0, 1.0)]);
    }

    #[test]
    fn hand_evaluated_row() {
        let g = ReversalMatrix::from_dense(&[vec![0, 3, 1], vec![0, 0, 0], vec![0, 0, 0]]).unwrap();
        let e = build_graph(&g, 0.4).unwrap().to_dense();
        assert_abs_diff_eq!(e[0][0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(e[0][1], 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(e[0][2], 0.15, epsilon = 1e-15);
    }

    #[test]
    fn alpha_one_gives_identity_rows() {
        let g = ReversalMatrix::from_dense(&[vec![0, 3], vec![2, 0]]).unwrap();
        let e = build_graph(&g, 1.0).unwrap();
        assert_eq!(e.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn self_reversal_only_row_is_identity() {
        let g = ReversalMatrix::from_dense(&[vec![4, 0], vec![0, 0]]).unwrap();
        assert_eq!(build_graph(&g, 0.4).unwrap().row(0), &[(0, 1.0)]);
    }

    #[test]
    fn rejects_negative_counts_and_bad_alpha() {
        assert!(matches!(
            ReversalMatrix::from_dense(&[vec![0, -1], vec![0, 0]]),
            Err(GraphError::NegativeFrequency { from: 0, to: 1, count: -1 })
        ));
        assert!(matches!(build_graph(&ReversalMatrix::new(2), 1.5), Err(GraphError::InvalidAlpha(_))));
    }

    #[test]
    fn identity_walk_is_noop() {
        let p = ChargeDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        for steps in 0..4 {
            assert_eq!(rwog(&p, &ChargeGraph::identity(3), steps).unwrap(), p);
        }
    }

    #[test]
    fn two_node_walk() {
        let g = ReversalMatrix::from_dense(&[vec![0, 1], vec![0, 0]]).unwrap();
        let e = build_graph(&g, 0.4).unwrap();
        let p0 = ChargeDistribution::one_hot(2, 0);
        let p1 = rwog(&p0, &e, 1).unwrap();
        assert_abs_diff_eq!(p1.get(0), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(p1.get(1), 0.6, epsilon = 1e-15);
        let p2 = rwog(&p0, &e, 2).unwrap();
        assert_abs_diff_eq!(p2.get(0), 0.16, epsilon = 1e-15);
        assert_abs_diff_eq!(p2.get(1), 0.84, epsilon = 1e-15);
    }

    #[test]
    fn query_init_examples() {
        let scores = vec![
            ChargeScore { id: 0, prob: 0.4 },
            ChargeScore { id: 1, prob: 0.1 },
            ChargeScore { id: 2, prob: 0.0 },
            ChargeScore { id: 3, prob: 0.0 },
            ChargeScore { id: 4, prob: 0.0 },
            ChargeScore { id: 5, prob: 0.0 },
        ];
        let ccs: BTreeSet<_> = (0..5).collect();
        let d = init_query_dist(6, &ccs, &scores, 5, 0.3).unwrap();
        for (got, want) in d.as_slice().iter().zip([0.35, 0.2, 0.15, 0.15, 0.15, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }

        let uniform: Vec<ChargeScore> = (0..5).map(|id| ChargeScore { id, prob: 0.2 }).collect();
        let d = init_query_dist(7, &ccs, &uniform, 5, 0.3).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(d.get(i), 0.2, epsilon = 1e-12);
        }

        // charge 6 found by regex but outside the predictor's top 5 with score 0
        let ccs2: BTreeSet<_> = [0, 1, 2, 3, 4, 6].into_iter().collect();
        let d = init_query_dist(7, &ccs2, &uniform, 5, 0.3).unwrap();
        assert_eq!(d.get(6), 0.0);
        assert!(matches!(init_query_dist(7, &BTreeSet::new(), &uniform, 5, 0.3), Err(GraphError::EmptyCandidateSet)));
    }

    #[test]
    fn doc_init_examples() {
        assert_eq!(init_doc_dist(4, &BTreeSet::from([3])).unwrap().as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(init_doc_dist(4, &BTreeSet::from([1, 2])).unwrap().as_slice(), &[0.0, 0.5, 0.5, 0.0]);
        assert!(matches!(init_doc_dist(4, &BTreeSet::new()), Err(GraphError::NoCharges)));
    }

    #[test]
    fn kron_examples() {
        let cq = ChargeDistribution::new(vec![0.5, 0.5]).unwrap();
        let cd = ChargeDistribution::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(sparse_to_dense(&kron_feature(&cq, &cd).unwrap(), 4), vec![0.5, 0.0, 0.5, 0.0]);
        let k = kron_feature(&ChargeDistribution::one_hot(3, 1), &ChargeDistribution::one_hot(3, 2)).unwrap();
        assert_eq!(k, vec![(5, 1.0)]);
        let bad = kron_feature(&cq, &ChargeDistribution::one_hot(3, 0));
        assert!(matches!(bad, Err(GraphError::DimensionMismatch(2, 3))));
    }

    #[test]
    fn dump_and_load_round_trip() {
        let g = ReversalMatrix::from_dense(&[vec![0, 3, 1], vec![2, 0, 0], vec![0, 0, 0]]).unwrap();
        let e = build_graph(&g, 0.4).unwrap();
        let mut buf = Vec::new();
        e.dump(&mut buf).unwrap();
        let back = ChargeGraph::load(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, e);
        assert!(ChargeGraph::load(std::io::Cursor::new("# charge graph s=2 alpha=0.4\n0\t1\t0.5\n")).is_err());
    }

    fn random_matrix() -> impl Strategy<Value = Vec<Vec<i64>>> {
        (1usize..9).prop_flat_map(|s| prop::collection::vec(prop::collection::vec(prop_oneof![3 => Just(0i64), 1 => 0i64..50], s), s))
    }

    fn random_dist(s: usize) -> impl Strategy<Value = ChargeDistribution> {
        prop::collection::vec(0.0f64..1.0, s)
            .prop_filter("mass", |v| v.iter().sum::<f64>() > 1e-3)
            .prop_map(|v| ChargeDistribution::normalized(v).unwrap())
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(g in random_matrix(), alpha in 0.0f64..=1.0) {
            let e = build_graph(&ReversalMatrix::from_dense(&g).unwrap(), alpha).unwrap();
            for i in 0..e.size() {
                let sum: f64 = e.row(i).iter().map(|(_, w)| w).sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn walk_preserves_mass_and_composes((g, p) in random_matrix().prop_flat_map(|g| { let s = g.len(); (Just(g), random_dist(s)) }), a in 0usize..4, b in 0usize..4) {
            let e = build_graph(&ReversalMatrix::from_dense(&g).unwrap(), 0.4).unwrap();
            let mut cur = p.clone();
            for _ in 0..3 {
                cur = rwog(&cur, &e, 1).unwrap();
                prop_assert!((cur.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(cur.as_slice().iter().all(|x| *x >= 0.0));
            }
            let joint = rwog(&p, &e, a + b).unwrap();
            let split = rwog(&rwog(&p, &e, a).unwrap(), &e, b).unwrap();
            for (x, y) in joint.as_slice().iter().zip(split.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let dense = e.to_dense();
            let brute = dense_matvec_t(&dense, &dense_matvec_t(&dense, p.as_slice()));
            for (x, y) in rwog(&p, &e, 2).unwrap().as_slice().iter().zip(&brute) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn kron_matches_double_loop((cq, cd) in (1usize..7).prop_flat_map(|s| (random_dist(s), random_dist(s)))) {
            let s = cq.len();
            let sparse = sparse_to_dense(&kron_feature(&cq, &cd).unwrap(), s * s);
            let mut brute = vec![0.0; s * s];
            for i in 0..s {
                for j in 0..s {
                    brute[i * s + j] = cq.get(i) * cd.get(j);
                }
            }
            prop_assert_eq!(&sparse, &brute);
            prop_assert!((sparse.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
