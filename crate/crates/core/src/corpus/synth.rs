//! Seeded synthetic corpus generator.
//!
//! Charges are grouped into clusters that share part of their keyword
//! vocabulary, and the reversal matrix links every ordered pair inside a
//! cluster. A query is written around one seed charge, mentions the
//! keywords of one or two unrelated "noise" charges and carries a few
//! query-specific detail sentences. Its intents are the seed charge and the
//! cluster mates that reach the candidate charge set. Candidate documents
//! copy a share of the query's details proportional to a latent closeness
//! level, which also drives their grades.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    AnnotationRecord, CandidateDoc, Charge, ChargeId, ChargeVocabulary, CorpusError, Dataset, DatasetSplit, Grade,
    GradedTriple, QueryCase, Reversal,
};
use crate::annotation::{aggregate_intent, candidate_charge_set, intent_distribution, median_label, SortedPreference};
use crate::predictor::{ChargeNameExtractor, KeywordPredictor};

const CONSONANTS: &[u8] = b"bdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const FILLER_WORDS: usize = 600;
const QUERY_TEMPLATES: usize = 2;
const DOC_TEMPLATES: usize = 2;
const CLOSENESS_ON_TOPIC: [f64; 4] = [0.05, 0.2, 0.4, 0.35];
const CLOSENESS_OFF_TOPIC: [f64; 4] = [0.5, 0.3, 0.15, 0.05];
const CLOSENESS_DISTRACTOR: [f64; 4] = [0.05, 0.15, 0.4, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_charges: usize,
    /// Inclusive range of charges per correlated cluster.
    pub cluster_size: (usize, usize),
    pub train_queries: usize,
    pub test_queries: usize,
    pub docs_per_query: usize,
    pub query_sentences: (usize, usize),
    pub doc_sentences: (usize, usize),
    pub keywords_per_charge: usize,
    pub cluster_keywords: usize,
    /// Unrelated charges whose keywords appear in each query.
    pub noise_charges: (usize, usize),
    pub ccs_top_k: usize,
    pub annotator_groups: usize,
    pub annotators_per_group: usize,
    /// Share of candidates whose primary charge is a query intent.
    pub on_topic_rate: f64,
    /// Share of off-topic candidates built on the query's noise charges.
    pub distractor_rate: f64,
    pub second_charge_rate: f64,
    /// Inclusive range of reversal counts between cluster mates.
    pub planted_count: (i64, i64),
    /// Number of random cross-cluster reversal entries.
    pub noise_reversals: usize,
    /// Per-annotator probability of deviating from the latent label.
    pub label_noise: f64,
    /// Probability that a query names its seed charge.
    pub query_name_rate: f64,
    /// Half-width of the uniform jitter on a document's closeness level
    /// before it decides how much query detail the document copies.
    pub detail_jitter: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_charges: 36,
            cluster_size: (3, 5),
            train_queries: 70,
            test_queries: 36,
            docs_per_query: 30,
            query_sentences: (7, 10),
            doc_sentences: (16, 28),
            keywords_per_charge: 4,
            cluster_keywords: 3,
            noise_charges: (1, 2),
            ccs_top_k: 5,
            annotator_groups: 3,
            annotators_per_group: 3,
            on_topic_rate: 0.5,
            distractor_rate: 0.6,
            second_charge_rate: 0.3,
            planted_count: (10, 60),
            noise_reversals: 36,
            label_noise: 0.2,
            query_name_rate: 0.3,
            detail_jitter: 1.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |m: String| Err(CorpusError::Config(m));
        let positive = [
            ("num_charges", self.num_charges),
            ("train_queries", self.train_queries),
            ("test_queries", self.test_queries),
            ("docs_per_query", self.docs_per_query),
            ("keywords_per_charge", self.keywords_per_charge),
            ("cluster_keywords", self.cluster_keywords),
            ("ccs_top_k", self.ccs_top_k),
            ("annotator_groups", self.annotator_groups),
            ("annotators_per_group", self.annotators_per_group),
        ];
        for (name, v) in positive {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        let ranges = [
            ("cluster_size", self.cluster_size),
            ("query_sentences", self.query_sentences),
            ("doc_sentences", self.doc_sentences),
            ("noise_charges", self.noise_charges),
        ];
        for (name, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return err(format!("{name} must be a non-empty positive range, got ({lo}, {hi})"));
            }
        }
        if self.cluster_size.0 < 2 {
            return err("clusters need at least two charges".into());
        }
        if self.num_charges < self.cluster_size.1 + self.noise_charges.1 + 1 {
            return err(format!(
                "num_charges {} leaves no room for a cluster of {} plus {} noise charges",
                self.num_charges, self.cluster_size.1, self.noise_charges.1
            ));
        }
        if self.keywords_per_charge < 2 {
            return err("keywords_per_charge must be at least 2".into());
        }
        let fixed = 1 + QUERY_TEMPLATES + self.noise_charges.1 + 2;
        if self.query_sentences.0 < fixed {
            return err(format!("query_sentences must start at {fixed} or more"));
        }
        if self.planted_count.0 < 1 || self.planted_count.0 > self.planted_count.1 {
            return err(format!("planted_count must be a positive range, got {:?}", self.planted_count));
        }
        for (name, p) in [
            ("on_topic_rate", self.on_topic_rate),
            ("distractor_rate", self.distractor_rate),
            ("second_charge_rate", self.second_charge_rate),
            ("label_noise", self.label_noise),
            ("query_name_rate", self.query_name_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.detail_jitter.is_nan() || self.detail_jitter < 0.0 {
            return err(format!("detail_jitter must be non-negative, got {}", self.detail_jitter));
        }
        Ok(())
    }
}

/// Summary counts of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub charges: usize,
    pub queries: usize,
    pub train_queries: usize,
    pub test_queries: usize,
    pub docs: usize,
    pub min_docs_per_query: usize,
    pub max_docs_per_query: usize,
    pub triples: usize,
    pub mean_intents: f64,
    pub mean_query_sentences: f64,
    pub reversal_entries: usize,
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let mut per_query: BTreeMap<&str, usize> = ds.queries.iter().map(|q| (q.id.as_str(), 0)).collect();
    for d in &ds.docs {
        *per_query.entry(d.query_id.as_str()).or_default() += 1;
    }
    let nq = ds.queries.len().max(1) as f64;
    DatasetStats {
        charges: ds.vocab.len(),
        queries: ds.queries.len(),
        train_queries: ds.split.train.len(),
        test_queries: ds.split.test.len(),
        docs: ds.docs.len(),
        min_docs_per_query: per_query.values().copied().min().unwrap_or(0),
        max_docs_per_query: per_query.values().copied().max().unwrap_or(0),
        triples: ds.triples.len(),
        mean_intents: ds.queries.iter().map(|q| q.intents().count()).sum::<usize>() as f64 / nq,
        mean_query_sentences: ds.queries.iter().map(|q| q.sentences.len()).sum::<usize>() as f64 / nq,
        reversal_entries: ds.reversals.len(),
    }
}

struct Lexicon {
    used: HashSet<String>,
}

impl Lexicon {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let mut w = String::with_capacity(6);
            for _ in 0..3 {
                w.push(*CONSONANTS.choose(rng).unwrap() as char);
                w.push(*VOWELS.choose(rng).unwrap() as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

struct ChargeSpec {
    unique: Vec<String>,
    cluster: usize,
}

struct World {
    charges: Vec<ChargeSpec>,
    names: Vec<String>,
    clusters: Vec<Vec<ChargeId>>,
    shared: Vec<Vec<String>>,
    counts: BTreeMap<(ChargeId, ChargeId), i64>,
    filler: Vec<String>,
}

impl World {
    fn mates(&self, c: ChargeId) -> impl Iterator<Item = ChargeId> + '_ {
        self.clusters[self.charges[c].cluster].iter().copied().filter(move |&m| m != c)
    }

    fn count(&self, from: ChargeId, to: ChargeId) -> i64 {
        self.counts.get(&(from, to)).copied().unwrap_or(0)
    }

    fn name_sentence(&self, c: ChargeId, lead: &str) -> String {
        format!("{lead} {}.", self.names[c])
    }

    fn template_sentence(&self, c: ChargeId, rng: &mut ChaCha8Rng) -> String {
        self.keyword_sentence(c, 2, rng)
    }

    /// A sentence with `unique` of the charge's own keywords and `4 - unique`
    /// of its cluster's shared ones.
    fn keyword_sentence(&self, c: ChargeId, unique: usize, rng: &mut ChaCha8Rng) -> String {
        let spec = &self.charges[c];
        let mut words: Vec<&str> = spec.unique.choose_multiple(rng, unique).map(String::as_str).collect();
        words.extend(self.shared[spec.cluster].choose_multiple(rng, 4 - unique).map(String::as_str));
        words.extend(self.filler.choose_multiple(rng, 2).map(String::as_str));
        words.shuffle(rng);
        sentence(&words)
    }

    fn filler_sentence(&self, rng: &mut ChaCha8Rng) -> String {
        let words: Vec<&str> = self.filler.choose_multiple(rng, 6).map(String::as_str).collect();
        sentence(&words)
    }
}

fn sentence(words: &[&str]) -> String {
    format!("{}.", words.join(" "))
}

fn build_world(cfg: &GeneratorConfig, lex: &mut Lexicon, rng: &mut ChaCha8Rng) -> World {
    let s = cfg.num_charges;
    let mut order: Vec<ChargeId> = (0..s).collect();
    order.shuffle(rng);
    let mut clusters: Vec<Vec<ChargeId>> = Vec::new();
    let mut rest = &order[..];
    while !rest.is_empty() {
        let size = rng.random_range(cfg.cluster_size.0..=cfg.cluster_size.1).min(rest.len());
        let (head, tail) = rest.split_at(size);
        if head.len() < cfg.cluster_size.0 && !clusters.is_empty() {
            clusters.last_mut().unwrap().extend_from_slice(head);
        } else {
            clusters.push(head.to_vec());
        }
        rest = tail;
    }
    for c in &mut clusters {
        c.sort_unstable();
    }

    let mut cluster_of = vec![0; s];
    for (k, members) in clusters.iter().enumerate() {
        for &c in members {
            cluster_of[c] = k;
        }
    }
    let names = (0..s).map(|_| format!("{} offense", lex.word(rng))).collect();
    let shared = clusters.iter().map(|_| lex.words(cfg.cluster_keywords, rng)).collect();
    let charges = (0..s)
        .map(|c| ChargeSpec { unique: lex.words(cfg.keywords_per_charge, rng), cluster: cluster_of[c] })
        .collect();

    let mut counts = BTreeMap::new();
    for members in &clusters {
        for &i in members {
            for &j in members {
                if i != j {
                    counts.insert((i, j), rng.random_range(cfg.planted_count.0..=cfg.planted_count.1));
                }
            }
        }
    }
    let mut added = 0;
    while added < cfg.noise_reversals && clusters.len() > 1 {
        let i = rng.random_range(0..s);
        let j = rng.random_range(0..s);
        if cluster_of[i] == cluster_of[j] {
            continue;
        }
        *counts.entry((i, j)).or_insert(0) += rng.random_range(1..=3);
        added += 1;
    }

    let filler = lex.words(FILLER_WORDS, rng);
    World { charges, names, clusters, shared, counts, filler }
}

fn draw_level(probs: &[f64; 4], rng: &mut ChaCha8Rng) -> u8 {
    WeightedIndex::new(probs).expect("static weights").sample(rng) as u8
}

fn noisy_grade(base: u8, noise: f64, rng: &mut ChaCha8Rng) -> Grade {
    let g = if rng.random_bool(noise) {
        if rng.random_bool(0.5) {
            base.saturating_sub(1)
        } else {
            (base + 1).min(3)
        }
    } else {
        base
    };
    Grade::new(g).expect("clamped to 0..=3")
}

struct QueryPlan {
    seed: ChargeId,
    noise: Vec<ChargeId>,
    details: Vec<Vec<String>>,
}

/// Builds a synthetic dataset. Deterministic for a fixed config and seed.
pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<Dataset, CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lex = Lexicon { used: HashSet::new() };
    let world = build_world(cfg, &mut lex, &mut rng);

    let vocab = ChargeVocabulary::new(
        (0..cfg.num_charges)
            .map(|c| {
                let spec = &world.charges[c];
                let mut keywords = spec.unique.clone();
                keywords.extend(world.shared[spec.cluster].iter().cloned());
                Charge { id: c, name: world.names[c].clone(), keywords }
            })
            .collect(),
    )?;
    let extractor = ChargeNameExtractor::new(&vocab);
    let predictor = KeywordPredictor::new(&vocab);

    let n_queries = cfg.train_queries + cfg.test_queries;
    let qwidth = (n_queries.max(2) - 1).to_string().len().max(3);
    let dwidth = (cfg.docs_per_query.max(2) - 1).to_string().len().max(2);

    let mut ds = Dataset { vocab, ..Dataset::default() };
    for qi in 0..n_queries {
        let qid = format!("q{qi:0qwidth$}");
        let group = format!("g{}", qi % cfg.annotator_groups);
        let annotators: Vec<String> =
            (0..cfg.annotators_per_group).map(|a| format!("{group}-a{a}")).collect();

        let seed_charge = rng.random_range(0..cfg.num_charges);
        let cluster = world.charges[seed_charge].cluster;
        let outside: Vec<ChargeId> =
            (0..cfg.num_charges).filter(|&c| world.charges[c].cluster != cluster).collect();
        let n_noise = rng.random_range(cfg.noise_charges.0..=cfg.noise_charges.1);
        let noise: Vec<ChargeId> = outside.choose_multiple(&mut rng, n_noise).copied().collect();
        let named = rng.random_bool(cfg.query_name_rate);
        let n_sent = rng.random_range(cfg.query_sentences.0..=cfg.query_sentences.1);
        let n_detail = n_sent - usize::from(named) - QUERY_TEMPLATES - noise.len();
        let plan = QueryPlan {
            seed: seed_charge,
            details: (0..n_detail).map(|_| lex.words(rng.random_range(5..=7), &mut rng)).collect(),
            noise,
        };

        let mut body: Vec<String> = (0..QUERY_TEMPLATES).map(|_| world.template_sentence(plan.seed, &mut rng)).collect();
        body.extend(plan.noise.iter().map(|&n| world.keyword_sentence(n, 3, &mut rng)));
        body.extend(plan.details.iter().map(|d| sentence(&d.iter().map(String::as_str).collect::<Vec<_>>())));
        body.shuffle(&mut rng);
        let mut sentences = Vec::with_capacity(body.len() + 1);
        if named {
            sentences.push(world.name_sentence(plan.seed, "the accused stands charged with"));
        }
        sentences.extend(body);
        let text = sentences.join(" ");

        let ccs = candidate_charge_set(&text, &extractor, &predictor, cfg.ccs_top_k)
            .map_err(|e| CorpusError::Config(e.to_string()))?;
        let ccs_mates: Vec<ChargeId> = world.mates(plan.seed).filter(|m| ccs.contains(m)).collect();
        let strongest = ccs_mates.iter().map(|&m| world.count(plan.seed, m)).max().unwrap_or(0);
        let latent = |c: ChargeId| -> Option<usize> {
            if c == plan.seed {
                Some(0)
            } else if ccs_mates.contains(&c) {
                Some(if 2 * world.count(plan.seed, c) >= strongest { 0 } else { 1 })
            } else {
                None
            }
        };

        let mut dists = Vec::with_capacity(annotators.len());
        for a in &annotators {
            let assignment: Vec<(ChargeId, Option<usize>)> = ccs
                .iter()
                .map(|&c| {
                    let mut level = latent(c);
                    if c != plan.seed && level.is_some() && rng.random_bool(cfg.label_noise) {
                        level = Some(rng.random_range(0..=2));
                    }
                    (c, level)
                })
                .collect();
            let pref = SortedPreference::from_levels(assignment);
            dists.push(intent_distribution(&pref).map_err(|e| CorpusError::Config(e.to_string()))?);
            ds.annotations.push(AnnotationRecord::Preference {
                group: group.clone(),
                annotator: a.clone(),
                query_id: qid.clone(),
                levels: pref.levels().iter().map(|l| l.iter().copied().collect()).collect(),
                unselected: pref.unselected().iter().copied().collect(),
            });
        }
        let intent_dist = aggregate_intent(&dists).map_err(|e| CorpusError::Config(e.to_string()))?;
        let query = QueryCase { id: qid.clone(), sentences, ccs: ccs.clone(), intent_dist };
        let intents: Vec<ChargeId> = query.intents().map(|(c, _)| c).collect();
        let distractors: Vec<ChargeId> = ccs.iter().copied().filter(|c| !intents.contains(c)).collect();
        let touched: BTreeSet<usize> =
            ccs.iter().chain(&plan.noise).map(|&c| world.charges[c].cluster).chain([cluster]).collect();
        let unrelated: Vec<ChargeId> =
            outside.iter().copied().filter(|&c| !touched.contains(&world.charges[c].cluster)).collect();

        for di in 0..cfg.docs_per_query {
            let did = format!("{qid}-d{di:0dwidth$}");
            let on_topic = rng.random_bool(cfg.on_topic_rate);
            let (primary, closeness) = if on_topic {
                (*intents.choose(&mut rng).unwrap(), draw_level(&CLOSENESS_ON_TOPIC, &mut rng))
            } else if !distractors.is_empty() && rng.random_bool(cfg.distractor_rate) {
                (*distractors.choose(&mut rng).unwrap(), draw_level(&CLOSENESS_DISTRACTOR, &mut rng))
            } else {
                let pool = if unrelated.is_empty() { &outside } else { &unrelated };
                (*pool.choose(&mut rng).unwrap(), draw_level(&CLOSENESS_OFF_TOPIC, &mut rng))
            };
            let mut charges = BTreeSet::from([primary]);
            let mut secondary = None;
            if rng.random_bool(cfg.second_charge_rate) {
                let mates: Vec<ChargeId> = world.mates(primary).collect();
                let weights: Vec<i64> = mates.iter().map(|&m| world.count(primary, m)).collect();
                let m = mates[WeightedIndex::new(&weights).expect("planted counts are positive").sample(&mut rng)];
                charges.insert(m);
                secondary = Some(m);
            }

            let mut body = vec![world.name_sentence(primary, "the defendant was convicted of")];
            body.extend((0..DOC_TEMPLATES).map(|_| world.template_sentence(primary, &mut rng)));
            if let Some(m) = secondary {
                body.push(world.name_sentence(m, "the defendant was also convicted of"));
                body.push(world.template_sentence(m, &mut rng));
            }
            let jitter = if cfg.detail_jitter > 0.0 { rng.random_range(-cfg.detail_jitter..=cfg.detail_jitter) } else { 0.0 };
            let share = ((f64::from(closeness) + jitter) / 3.0).clamp(0.0, 1.0);
            for detail in &plan.details {
                let keep = (share * detail.len() as f64).round() as usize;
                if keep == 0 {
                    continue;
                }
                let mut words: Vec<&str> = detail[..keep].iter().map(String::as_str).collect();
                words.extend(world.filler.choose_multiple(&mut rng, detail.len() - keep).map(String::as_str));
                body.push(sentence(&words));
            }
            let target = rng.random_range(cfg.doc_sentences.0..=cfg.doc_sentences.1);
            while body.len() < target {
                body.push(world.filler_sentence(&mut rng));
            }
            body.shuffle(&mut rng);

            let doc = CandidateDoc {
                id: did.clone(),
                query_id: qid.clone(),
                sentences: body,
                charges,
                qrel: Grade::new(closeness).expect("closeness in 0..=3"),
            };
            for &c in &doc.charges {
                if !crate::annotation::triple_needs_annotation(&query, c, &doc) {
                    continue;
                }
                let base = if c == primary { closeness } else { closeness.saturating_sub(1) };
                let grades: Vec<Grade> = annotators.iter().map(|_| noisy_grade(base, cfg.label_noise, &mut rng)).collect();
                for (a, g) in annotators.iter().zip(&grades) {
                    ds.annotations.push(AnnotationRecord::Grade {
                        group: group.clone(),
                        annotator: a.clone(),
                        query_id: qid.clone(),
                        charge_id: c,
                        doc_id: did.clone(),
                        grade: *g,
                    });
                }
                ds.triples.push(GradedTriple {
                    query_id: qid.clone(),
                    charge_id: c,
                    doc_id: did.clone(),
                    grade: median_label(&grades).expect("at least one annotator"),
                });
            }
            ds.docs.push(doc);
        }
        ds.queries.push(query);
    }

    let mut ids: Vec<String> = ds.queries.iter().map(|q| q.id.clone()).collect();
    ids.shuffle(&mut rng);
    let mut test = ids.split_off(cfg.train_queries);
    ids.sort();
    test.sort();
    ds.split = DatasetSplit { train: ids, test };
    ds.reversals = world.counts.iter().map(|(&(from, to), &count)| Reversal { from, to, count }).collect();
    ds.check_integrity()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{top_k, ChargePredictor};

    fn small() -> GeneratorConfig {
        GeneratorConfig { num_charges: 12, train_queries: 6, test_queries: 3, docs_per_query: 8, ..Default::default() }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate_synthetic(&small(), 1).unwrap();
        let b = generate_synthetic(&small(), 1).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(), 2).unwrap();
        assert_ne!(a.queries, c.queries);
    }

    #[test]
    fn default_config_matches_summary_stats() {
        let ds = generate_synthetic(&GeneratorConfig::default(), 7).unwrap();
        let st = dataset_stats(&ds);
        assert_eq!(st.charges, 36);
        assert_eq!((st.train_queries, st.test_queries), (70, 36));
        assert_eq!((st.min_docs_per_query, st.max_docs_per_query), (30, 30));
        assert!((2.5..=4.5).contains(&st.mean_intents), "{st:?}");
    }

    #[test]
    fn doc_charges_are_recoverable_from_text() {
        let ds = generate_synthetic(&small(), 3).unwrap();
        let ex = ChargeNameExtractor::new(&ds.vocab);
        let kp = KeywordPredictor::new(&ds.vocab);
        for d in &ds.docs {
            assert_eq!(ex.extract(&d.text()), d.charges, "{}", d.id);
            let top = top_k(&kp.predict(&d.text()).unwrap(), 5);
            assert!(d.charges.iter().all(|c| top.contains(c)), "{}", d.id);
        }
    }

    #[test]
    fn triples_only_on_doc_charges() {
        let ds = generate_synthetic(&small(), 4).unwrap();
        let idx = ds.index();
        for t in &ds.triples {
            let d = ds.docs.iter().find(|d| d.id == t.doc_id).unwrap();
            assert!(d.charges.contains(&t.charge_id));
            assert!(idx.query(&t.query_id).unwrap().intent_prob(t.charge_id) > 0.0);
        }
    }

    #[test]
    fn intent_keys_match_ccs() {
        let ds = generate_synthetic(&small(), 5).unwrap();
        for q in &ds.queries {
            assert!(q.intent_dist.keys().eq(q.ccs.iter()));
            assert_eq!(q.intents().map(|(_, p)| p).fold(0.0, f64::max), 1.0);
        }
    }

    #[test]
    fn rejects_nonpositive_sizes() {
        for cfg in [
            GeneratorConfig { num_charges: 0, ..small() },
            GeneratorConfig { docs_per_query: 0, ..small() },
            GeneratorConfig { train_queries: 0, ..small() },
            GeneratorConfig { cluster_size: (4, 3), ..small() },
            GeneratorConfig { label_noise: 1.5, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&cfg, 0), Err(CorpusError::Config(_))), "{cfg:?}");
        }
    }
}
