//! End-to-end evaluation: baselines and trained rankers on the test split.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::exec::Exec;
use crate::features::{FeatureError, FeatureMask, FeatureStore};
use crate::metrics::{paired_t_test, Judgments, MetricError, DEFAULT_ALPHA, DEFAULT_CUTOFFS};
use crate::ranker::{
    build_training_set, ia_select_rank, mmr_rank, train, Bm25, DlrmModel, RankerError, RewardSpec, TrainConfig,
    TrainReport, HIDDEN,
};
use crate::textsim::cosine;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Ranker(#[from] RankerError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("query {query}: {source}")]
    Metric {
        query: String,
        #[source]
        source: MetricError,
    },
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error("unknown method {0}")]
    UnknownMethod(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const BM25: &str = "BM25";
pub const MMR: &str = "MMR";
pub const IA_SELECT: &str = "IA-select";
pub const EX_IA_SELECT: &str = "exIA-select";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    /// Redundancy penalty of α-NDCG.
    pub alpha: f64,
    /// Grid searched for the MMR trade-off on the training queries.
    pub mmr_lambdas: Vec<f64>,
    /// Fail on ranked documents without a triple for a weighted intent.
    pub strict: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            alpha: DEFAULT_ALPHA,
            mmr_lambdas: vec![0.0, 0.02, 0.04, 0.06, 0.08, 0.1],
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_samples: usize,
    /// Hidden layer widths of the MLP.
    pub hidden: Vec<usize>,
    pub reward: RewardSpec,
    pub optimizer: TrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { n_samples: 1_000_000, hidden: HIDDEN.to_vec(), reward: RewardSpec::default(), optimizer: TrainConfig::default() }
    }
}

/// Builds one training stream from the train split and fits a ranker per
/// feature mask on it.
pub fn train_models(
    ds: &Dataset,
    store: &FeatureStore,
    cfg: &TrainingConfig,
    masks: &[FeatureMask],
    seed: u64,
    exec: Exec,
) -> Result<Vec<(DlrmModel, TrainReport)>, ExperimentError> {
    let samples = build_training_set(ds, &ds.split.train, cfg.n_samples, cfg.reward, seed, exec)?;
    log::info!("built {} training samples", samples.len());
    masks
        .iter()
        .map(|&mask| {
            let mut model = DlrmModel::init_with_hidden(mask, store.text_len(), store.num_charges(), &cfg.hidden, seed)?;
            let inputs = exec.try_map_range(samples.len(), |i| model.input(store, &samples[i].query_id, &samples[i].doc_id))?;
            let data: Vec<_> = inputs.iter().zip(&samples).map(|(x, s)| (x, s.label)).collect();
            let opt = TrainConfig { seed, ..cfg.optimizer };
            let report = train(&mut model.mlp, &data, &opt)?;
            log::info!(
                "{}: holdout mse {:.5} -> {:.5}",
                mask.label(),
                report.initial_holdout_mse,
                report.final_holdout_mse
            );
            Ok((model, report))
        })
        .collect()
}

/// Metric values of one method on one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub ranking: Vec<String>,
    /// NDCG-IA at each cutoff.
    pub ndcg_ia: Vec<f64>,
    /// α-NDCG at each cutoff.
    pub alpha_ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub per_query: Vec<QueryResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    NdcgIa,
    AlphaNdcg,
}

impl Measure {
    pub fn column(self, k: usize) -> String {
        match self {
            Measure::NdcgIa => format!("N-IA@{k}"),
            Measure::AlphaNdcg => format!("α-N@{k}"),
        }
    }
}

impl MethodResult {
    pub fn values(&self, measure: Measure, cutoff_index: usize) -> Vec<f64> {
        self.per_query
            .iter()
            .map(|q| match measure {
                Measure::NdcgIa => q.ndcg_ia[cutoff_index],
                Measure::AlphaNdcg => q.alpha_ndcg[cutoff_index],
            })
            .collect()
    }

    pub fn mean(&self, measure: Measure, cutoff_index: usize) -> f64 {
        let v = self.values(measure, cutoff_index);
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cutoffs: Vec<usize>,
    pub mmr_lambda: f64,
    pub methods: Vec<MethodResult>,
}

impl Report {
    pub fn method(&self, name: &str) -> Result<&MethodResult, ExperimentError> {
        self.methods.iter().find(|m| m.method == name).ok_or_else(|| ExperimentError::UnknownMethod(name.into()))
    }

    pub fn cutoff_index(&self, k: usize) -> Option<usize> {
        self.cutoffs.iter().position(|&c| c == k)
    }

    /// Mean of `measure@k` for a method.
    pub fn mean(&self, method: &str, measure: Measure, k: usize) -> Result<f64, ExperimentError> {
        let i = self.cutoff_index(k).ok_or_else(|| ExperimentError::UnknownMethod(format!("cutoff {k}")))?;
        Ok(self.method(method)?.mean(measure, i))
    }

    /// Method rows with N-IA and α-N columns for every cutoff.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<(), ExperimentError> {
        let mut header = vec!["method".to_string()];
        for m in [Measure::NdcgIa, Measure::AlphaNdcg] {
            header.extend(self.cutoffs.iter().map(|&k| m.column(k)));
        }
        writeln!(w, "{}", header.join("\t"))?;
        for method in &self.methods {
            let mut row = vec![method.method.clone()];
            for m in [Measure::NdcgIa, Measure::AlphaNdcg] {
                row.extend((0..self.cutoffs.len()).map(|i| format!("{:.4}", method.mean(m, i))));
            }
            writeln!(w, "{}", row.join("\t"))?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Paired two-sided t-tests between every ordered pair of methods on
    /// every measure and cutoff.
    pub fn write_pvalues_tsv<W: Write>(&self, mut w: W) -> Result<(), ExperimentError> {
        writeln!(w, "measure\tmethod_a\tmethod_b\tmean_diff\tt\tp_value")?;
        for m in [Measure::NdcgIa, Measure::AlphaNdcg] {
            for (i, &k) in self.cutoffs.iter().enumerate() {
                for a in &self.methods {
                    for b in &self.methods {
                        if a.method >= b.method {
                            continue;
                        }
                        let t = paired_t_test(&a.values(m, i), &b.values(m, i));
                        writeln!(w, "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6e}", m.column(k), a.method, b.method, t.mean_diff, t.t, t.p_value)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ranks candidates of one query with each non-learned method.
struct QueryContext<'a> {
    query_id: &'a str,
    text: String,
    ids: Vec<&'a str>,
    texts: Vec<String>,
    judgments: Judgments,
}

fn contexts<'a>(ds: &'a Dataset, query_ids: &'a [String]) -> Result<Vec<QueryContext<'a>>, ExperimentError> {
    let idx = ds.index();
    query_ids
        .iter()
        .map(|qid| {
            let q = idx.query(qid).ok_or_else(|| ExperimentError::UnknownQuery(qid.clone()))?;
            let docs = idx.docs(qid);
            let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            let judgments = Judgments::new(&q.intent_dist, ids.iter().copied(), idx.triples(qid));
            Ok(QueryContext { query_id: qid, text: q.text(), ids, texts: docs.iter().map(|d| d.text()).collect(), judgments })
        })
        .collect()
}

fn score_ranking(ctx: &QueryContext<'_>, order: &[usize], cfg: &EvalConfig) -> Result<QueryResult, ExperimentError> {
    let ranked: Vec<&str> = order.iter().map(|&i| ctx.ids[i]).collect();
    let mut ndcg_ia = Vec::with_capacity(cfg.cutoffs.len());
    let mut alpha_ndcg = Vec::with_capacity(cfg.cutoffs.len());
    for &k in &cfg.cutoffs {
        let v = if cfg.strict {
            ctx.judgments
                .ndcg_ia_strict(&ranked, k)
                .map_err(|source| ExperimentError::Metric { query: ctx.query_id.to_string(), source })?
        } else {
            ctx.judgments.ndcg_ia(&ranked, k)
        };
        ndcg_ia.push(v);
        alpha_ndcg.push(ctx.judgments.alpha_ndcg_idx(order, k, cfg.alpha));
    }
    Ok(QueryResult { query_id: ctx.query_id.to_string(), ranking: ranked.iter().map(|s| s.to_string()).collect(), ndcg_ia, alpha_ndcg })
}

fn bm25_order(ctx: &QueryContext<'_>, bm25: &Bm25) -> Result<(Vec<usize>, Vec<f64>), ExperimentError> {
    let texts: Vec<&str> = ctx.texts.iter().map(String::as_str).collect();
    let ranked = bm25.rank(&ctx.text, &ctx.ids, &texts)?;
    let mut scores = vec![0.0; ctx.ids.len()];
    for &(i, s) in &ranked {
        scores[i] = s;
    }
    Ok((ranked.into_iter().map(|(i, _)| i).collect(), scores))
}

fn mmr_order(ctx: &QueryContext<'_>, store: &FeatureStore, bm25_scores: &[f64], lambda: f64) -> Result<Vec<usize>, ExperimentError> {
    let max = bm25_scores.iter().copied().fold(0.0, f64::max);
    let rel: Vec<f64> = bm25_scores.iter().map(|s| if max > 0.0 { s / max } else { 0.0 }).collect();
    let embs = ctx.ids.iter().map(|d| Ok(&store.doc(d)?.whole)).collect::<Result<Vec<_>, FeatureError>>()?;
    Ok(mmr_rank(&ctx.ids, &rel, |a, b| cosine(embs[a], embs[b]), lambda)?)
}

/// Intent weights come from the query's candidate charges, the support of
/// its initial distribution; the walked variant reweights them by the walked
/// distribution.
fn ia_order(ctx: &QueryContext<'_>, store: &FeatureStore, ds_docs: &BTreeMap<&str, &crate::corpus::CandidateDoc>, walked: bool) -> Result<Vec<usize>, ExperimentError> {
    let qf = store.query(ctx.query_id)?;
    let intents: Vec<(usize, f64)> = if walked {
        qf.initial.support().map(|(k, _)| (k, qf.walked.get(k))).collect()
    } else {
        qf.initial.support().collect()
    };
    let total: f64 = intents.iter().map(|(_, p)| p).sum();
    let weights: Vec<f64> = intents.iter().map(|(_, p)| if total > 0.0 { p / total } else { 0.0 }).collect();
    let v = ctx
        .ids
        .iter()
        .map(|d| {
            let df = store.doc(d)?;
            let rel = (cosine(&qf.whole, &df.whole) + 1.0) / 2.0;
            let charges = &ds_docs[d].charges;
            Ok(intents.iter().map(|(k, _)| if charges.contains(k) { rel } else { 0.0 }).collect())
        })
        .collect::<Result<Vec<Vec<f64>>, FeatureError>>()?;
    Ok(ia_select_rank(&ctx.ids, &weights, &v))
}

/// Picks the MMR trade-off with the best mean NDCG-IA at the largest
/// cutoff on `tune_ids`; ties go to the smaller value.
pub fn tune_mmr_lambda(
    ds: &Dataset,
    store: &FeatureStore,
    tune_ids: &[String],
    bm25: &Bm25,
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<f64, ExperimentError> {
    let ctxs = contexts(ds, tune_ids)?;
    let k = cfg.cutoffs.iter().copied().max().unwrap_or(10);
    let mut best = (f64::NEG_INFINITY, cfg.mmr_lambdas.first().copied().unwrap_or(0.0));
    for &lambda in &cfg.mmr_lambdas {
        let vals = exec.try_map_range(ctxs.len(), |i| {
            let (_, scores) = bm25_order(&ctxs[i], bm25)?;
            let order = mmr_order(&ctxs[i], store, &scores, lambda)?;
            Ok::<f64, ExperimentError>(ctxs[i].judgments.ndcg_ia_idx(&order, k))
        })?;
        let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
        log::debug!("mmr lambda {lambda}: {mean:.4}");
        if mean > best.0 {
            best = (mean, lambda);
        }
    }
    Ok(best.1)
}

/// Ranks the candidates of one query with a named baseline method.
pub fn baseline_ranking(
    ds: &Dataset,
    store: &FeatureStore,
    query_id: &str,
    method: &str,
    baselines: &Baselines,
) -> Result<Vec<String>, ExperimentError> {
    let ids = [query_id.to_string()];
    let ctxs = contexts(ds, &ids)?;
    let ctx = &ctxs[0];
    let docs: BTreeMap<&str, &crate::corpus::CandidateDoc> = ds.docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let (bm25_rank, bm25_scores) = bm25_order(ctx, &baselines.bm25)?;
    let order = match method {
        BM25 => bm25_rank,
        MMR => mmr_order(ctx, store, &bm25_scores, baselines.mmr_lambda)?,
        IA_SELECT => ia_order(ctx, store, &docs, false)?,
        EX_IA_SELECT => ia_order(ctx, store, &docs, true)?,
        other => return Err(ExperimentError::UnknownMethod(other.into())),
    };
    Ok(order.into_iter().map(|i| ctx.ids[i].to_string()).collect())
}

/// Settings of the non-learned rankers.
#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    pub bm25: Bm25,
    pub mmr_lambda: f64,
}

/// Evaluates the baselines and `models` on `query_ids`.
pub fn evaluate(
    ds: &Dataset,
    store: &FeatureStore,
    query_ids: &[String],
    models: &[DlrmModel],
    baselines: &Baselines,
    cfg: &EvalConfig,
    exec: Exec,
) -> Result<Report, ExperimentError> {
    let Baselines { bm25, mmr_lambda } = baselines;
    let mmr_lambda = *mmr_lambda;
    let ctxs = contexts(ds, query_ids)?;
    let docs: BTreeMap<&str, &crate::corpus::CandidateDoc> = ds.docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let per_query = exec.try_map_range(ctxs.len(), |i| {
        let ctx = &ctxs[i];
        let (bm25_rank, bm25_scores) = bm25_order(ctx, bm25)?;
        let mut rows = vec![
            (BM25.to_string(), score_ranking(ctx, &bm25_rank, cfg)?),
            (MMR.to_string(), score_ranking(ctx, &mmr_order(ctx, store, &bm25_scores, mmr_lambda)?, cfg)?),
            (IA_SELECT.to_string(), score_ranking(ctx, &ia_order(ctx, store, &docs, false)?, cfg)?),
            (EX_IA_SELECT.to_string(), score_ranking(ctx, &ia_order(ctx, store, &docs, true)?, cfg)?),
        ];
        for m in models {
            let order: Vec<usize> = m.rank(store, ctx.query_id, &ctx.ids)?.into_iter().map(|(i, _)| i).collect();
            rows.push((m.variant.label().to_string(), score_ranking(ctx, &order, cfg)?));
        }
        Ok::<_, ExperimentError>(rows)
    })?;

    let mut methods: Vec<MethodResult> = Vec::new();
    for rows in per_query {
        for (name, result) in rows {
            match methods.iter_mut().find(|m| m.method == name) {
                Some(m) => m.per_query.push(result),
                None => methods.push(MethodResult { method: name, per_query: vec![result] }),
            }
        }
    }
    Ok(Report { cutoffs: cfg.cutoffs.clone(), mmr_lambda, methods })
}
