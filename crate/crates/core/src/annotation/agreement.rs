use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use crate::corpus::{AnnotationRecord, ChargeId, Grade};

use super::{AnnotationError, SortedPreference};

/// One annotator's grades over a shared, identically ordered item list.
#[derive(Debug, Clone)]
pub struct AnnotatorLabels {
    pub annotator: String,
    pub grades: Vec<Grade>,
}

/// One annotator's rank positions, per query, over identically ordered items.
/// Lower is better; ties share a position.
#[derive(Debug, Clone)]
pub struct AnnotatorRankings {
    pub annotator: String,
    pub per_query: Vec<Vec<f64>>,
}

/// Pairwise agreement within one annotator group. Keys are ordered
/// `(a, b)` with `a < b`; lookups through [`AgreementReport::kappa`] are
/// symmetric.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgreementReport {
    pub pairwise_kappa: BTreeMap<(String, String), f64>,
    pub pairwise_kendall_tau: BTreeMap<(String, String), f64>,
    /// Fleiss' kappa over all annotators of the group.
    pub fleiss_kappa: Option<f64>,
}

impl AgreementReport {
    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn kappa(&self, a: &str, b: &str) -> Option<f64> {
        self.pairwise_kappa.get(&Self::key(a, b)).copied()
    }

    pub fn kendall_tau(&self, a: &str, b: &str) -> Option<f64> {
        self.pairwise_kendall_tau.get(&Self::key(a, b)).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAgreement {
    pub group: String,
    pub report: AgreementReport,
}

/// Cohen's kappa over four-level grades. Two constant, identical raters
/// count as perfect agreement.
pub fn cohen_kappa(a: &[Grade], b: &[Grade]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let mut ca = [0.0; 4];
    let mut cb = [0.0; 4];
    let mut agree = 0.0;
    for (x, y) in a.iter().zip(b) {
        ca[x.value() as usize] += 1.0;
        cb[y.value() as usize] += 1.0;
        if x == y {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = ca.iter().zip(&cb).map(|(x, y)| (x / n) * (y / n)).sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Some(if po == 1.0 { 1.0 } else { 0.0 });
    }
    Some((po - pe) / (1.0 - pe))
}

/// Fleiss' kappa; `ratings[i]` holds every rater's grade for item `i`.
pub fn fleiss_kappa(ratings: &[Vec<Grade>]) -> Option<f64> {
    let raters = ratings.first()?.len();
    if raters < 2 || ratings.iter().any(|r| r.len() != raters) {
        return None;
    }
    let n = raters as f64;
    let items = ratings.len() as f64;
    let mut totals = [0.0; 4];
    let mut p_bar = 0.0;
    for item in ratings {
        let mut counts = [0.0; 4];
        for g in item {
            counts[g.value() as usize] += 1.0;
        }
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
        p_bar += (counts.iter().map(|c| c * c).sum::<f64>() - n) / (n * (n - 1.0));
    }
    p_bar /= items;
    let pe: f64 = totals.iter().map(|t| (t / (items * n)).powi(2)).sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Some(if (p_bar - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Some((p_bar - pe) / (1.0 - pe))
}

/// Kendall's τ-b with tie correction. `None` when either side is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                ties_x += 1;
            }
            if dy == 0.0 {
                ties_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (x.len() * (x.len() - 1) / 2) as i64;
    let denom = (((n0 - ties_x) * (n0 - ties_y)) as f64).sqrt();
    if denom == 0.0 {
        None
    } else {
        Some((concordant - discordant) as f64 / denom)
    }
}

/// Pairwise Cohen's kappa on grades and mean per-query Kendall τ-b on
/// rankings for every annotator pair, plus Fleiss' kappa for the group.
pub fn agreement(
    labels: &[AnnotatorLabels],
    rankings: &[AnnotatorRankings],
) -> Result<AgreementReport, AnnotationError> {
    if labels.len() < 2 && rankings.len() < 2 {
        return Err(AnnotationError::InsufficientAnnotators(labels.len().max(rankings.len())));
    }
    let mut report = AgreementReport::default();
    if labels.len() >= 2 {
        let n = labels[0].grades.len();
        if let Some(bad) = labels.iter().find(|l| l.grades.len() != n) {
            return Err(AnnotationError::MismatchedItems(format!(
                "{} labelled {} items, expected {n}",
                bad.annotator,
                bad.grades.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            for b in &labels[i + 1..] {
                if let Some(k) = cohen_kappa(&a.grades, &b.grades) {
                    report.pairwise_kappa.insert(AgreementReport::key(&a.annotator, &b.annotator), k);
                }
            }
        }
        let items: Vec<Vec<Grade>> = (0..n).map(|i| labels.iter().map(|l| l.grades[i]).collect()).collect();
        report.fleiss_kappa = fleiss_kappa(&items);
    }
    if rankings.len() >= 2 {
        let queries = rankings[0].per_query.len();
        for r in rankings {
            let same_shape = r.per_query.len() == queries
                && r.per_query.iter().zip(&rankings[0].per_query).all(|(x, y)| x.len() == y.len());
            if !same_shape {
                return Err(AnnotationError::MismatchedItems(format!(
                    "{} ranked a different item set",
                    r.annotator
                )));
            }
        }
        for (i, a) in rankings.iter().enumerate() {
            for b in &rankings[i + 1..] {
                let taus: Vec<f64> = a
                    .per_query
                    .iter()
                    .zip(&b.per_query)
                    .filter_map(|(x, y)| kendall_tau_b(x, y))
                    .collect();
                if !taus.is_empty() {
                    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
                    report.pairwise_kendall_tau.insert(AgreementReport::key(&a.annotator, &b.annotator), mean);
                }
            }
        }
    }
    Ok(report)
}

/// Groups raw annotation records and computes agreement per group. Only
/// items every annotator of the group labelled take part.
pub fn agreement_from_records(records: &[AnnotationRecord]) -> Result<Vec<GroupAgreement>, AnnotationError> {
    type GradeKey = (String, ChargeId, String);
    let mut grades: BTreeMap<&str, BTreeMap<&str, BTreeMap<GradeKey, Grade>>> = BTreeMap::new();
    let mut prefs: BTreeMap<&str, BTreeMap<&str, BTreeMap<&str, SortedPreference>>> = BTreeMap::new();
    let mut groups = BTreeSet::new();
    for r in records {
        match r {
            AnnotationRecord::Grade { group, annotator, query_id, charge_id, doc_id, grade } => {
                groups.insert(group.as_str());
                grades
                    .entry(group)
                    .or_default()
                    .entry(annotator)
                    .or_default()
                    .insert((query_id.clone(), *charge_id, doc_id.clone()), *grade);
            }
            AnnotationRecord::Preference { group, annotator, query_id, levels, unselected } => {
                groups.insert(group.as_str());
                let pref = SortedPreference::new(
                    levels.iter().map(|l| l.iter().copied().collect()).collect(),
                    unselected.iter().copied().collect(),
                )?;
                prefs.entry(group).or_default().entry(annotator).or_default().insert(query_id, pref);
            }
        }
    }

    let mut out = Vec::new();
    for group in groups {
        let mut labels = Vec::new();
        if let Some(by_annotator) = grades.get(group) {
            let mut shared: Option<BTreeSet<&GradeKey>> = None;
            for items in by_annotator.values() {
                let keys: BTreeSet<&GradeKey> = items.keys().collect();
                shared = Some(match shared {
                    None => keys,
                    Some(s) => s.intersection(&keys).copied().collect(),
                });
            }
            let shared = shared.unwrap_or_default();
            for (annotator, items) in by_annotator {
                labels.push(AnnotatorLabels {
                    annotator: annotator.to_string(),
                    grades: shared.iter().map(|k| items[*k]).collect(),
                });
            }
        }
        let mut rankings = Vec::new();
        if let Some(by_annotator) = prefs.get(group) {
            let mut shared: Option<BTreeSet<&str>> = None;
            for qs in by_annotator.values() {
                let keys: BTreeSet<&str> = qs.keys().copied().collect();
                shared = Some(match shared {
                    None => keys,
                    Some(s) => s.intersection(&keys).copied().collect(),
                });
            }
            let shared = shared.unwrap_or_default();
            for (annotator, qs) in by_annotator {
                let per_query = shared
                    .iter()
                    .map(|q| qs[q].rank_positions().values().map(|&r| r as f64).collect())
                    .collect();
                rankings.push(AnnotatorRankings { annotator: annotator.to_string(), per_query });
            }
        }
        let report = agreement(&labels, &rankings)?;
        out.push(GroupAgreement { group: group.to_string(), report });
    }
    Ok(out)
}

/// Writes one row per (measure, group, annotator pair); Fleiss' kappa rows
/// use `*` for both annotators.
pub fn write_agreement_tsv<W: Write>(mut w: W, groups: &[GroupAgreement]) -> io::Result<()> {
    writeln!(w, "measure\tgroup\tannotator_a\tannotator_b\tvalue")?;
    for g in groups {
        for ((a, b), v) in &g.report.pairwise_kappa {
            writeln!(w, "kappa\t{}\t{a}\t{b}\t{v:.4}", g.group)?;
        }
        for ((a, b), v) in &g.report.pairwise_kendall_tau {
            writeln!(w, "kendall_tau\t{}\t{a}\t{b}\t{v:.4}", g.group)?;
        }
        if let Some(v) = g.report.fleiss_kappa {
            writeln!(w, "fleiss_kappa\t{}\t*\t*\t{v:.4}", g.group)?;
        }
    }
    Ok(())
}
