//! `divlex` command-line interface.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use divlex::annotation::{agreement_from_records, candidate_charge_set, triple_needs_annotation, write_agreement_tsv};
use divlex::chargegraph::{build_graph, describe_top_edges, ChargeGraph, ReversalMatrix};
use divlex::config::RunConfig;
use divlex::corpus::{dataset_stats, generate_synthetic, load_dataset, save_dataset};
use divlex::experiment::{
    baseline_ranking, evaluate, train_models, tune_mmr_lambda, Baselines, BM25, EX_IA_SELECT, IA_SELECT, MMR,
};
use divlex::features::{FeatureExtractor, FeatureMask, FeatureStore};
use divlex::predictor::ChargeNameExtractor;
use divlex::ranker::DlrmModel;
use divlex::{Dataset, Exec};

#[derive(Parser)]
#[command(name = "divlex", version, about = "Diversified legal case retrieval")]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially, 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a dataset directory against the schema.
    Validate(DatasetArg),
    /// Build the charge graph and write its edges.
    Graph {
        #[command(flatten)]
        data: DatasetArg,
        /// Self-loop weight.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the strongest edges to standard error.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Write the text and charge features of every query-candidate pair as JSON lines.
    Features {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train ranker checkpoints on the training split.
    Train {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint file, or a directory when several variants are trained.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "full")]
        variant: Vec<Variant>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Rank the candidates of one query.
    Rank {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value = "dlrm")]
        method: Method,
        /// Checkpoint for the dlrm method.
        #[arg(long)]
        model: Option<PathBuf>,
        /// MMR trade-off.
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Evaluate the baselines and trained checkpoints on the test split.
    Eval {
        #[command(flatten)]
        data: DatasetArg,
        /// Checkpoints to evaluate next to the baselines.
        #[arg(long)]
        model: Vec<PathBuf>,
        /// Metric table; per-query JSON and p-values go next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_query: Option<PathBuf>,
        #[arg(long)]
        pvalues: Option<PathBuf>,
    },
    /// Inter-annotator agreement of the dataset's annotation records.
    Agreement {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Candidate charge sets and the triples that need grading.
    AnnotatePrep {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DatasetArg {
    /// Dataset directory; falls back to `dataset` in the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Full,
    TextOnly,
    ChargeOnly,
    Random,
    All,
}

impl Variant {
    fn masks(self) -> Vec<FeatureMask> {
        match self {
            Variant::Full => vec![FeatureMask::Full],
            Variant::TextOnly => vec![FeatureMask::TextOnly],
            Variant::ChargeOnly => vec![FeatureMask::ChargeOnly],
            Variant::Random => vec![FeatureMask::Random],
            Variant::All => FeatureMask::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Dlrm,
    Bm25,
    Mmr,
    IaSelect,
    ExiaSelect,
}

/// A command-line mistake, reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("run `divlex --help` for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", chain_message(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain joined with ": ", skipping causes already spelled out by
/// the message above them.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

struct Ctx {
    cfg: RunConfig,
    exec: Exec,
}

impl Ctx {
    fn dataset(&self, arg: &DatasetArg) -> Result<(PathBuf, Dataset)> {
        let dir = arg
            .dataset
            .clone()
            .or_else(|| self.cfg.dataset.clone())
            .ok_or_else(|| usage("--dataset is required"))?;
        let ds = load_dataset(&dir).with_context(|| format!("loading dataset {}", dir.display()))?;
        Ok((dir, ds))
    }

    fn seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.cfg.seed).ok_or_else(|| usage("--seed is required"))
    }

    fn graph(&self, ds: &Dataset, alpha: f64) -> Result<ChargeGraph> {
        let g = ReversalMatrix::from_reversals(ds.vocab.len(), &ds.reversals)?;
        Ok(build_graph(&g, alpha)?)
    }

    fn features(&self, ds: &Dataset) -> Result<FeatureStore> {
        let graph = self.graph(ds, self.cfg.graph.alpha)?;
        let providers = self.cfg.providers(&ds.vocab)?;
        let ex = FeatureExtractor {
            provider: providers.embedder.as_ref(),
            predictor: providers.predictor.as_ref(),
            graph: &graph,
            config: self.cfg.features,
        };
        Ok(FeatureStore::build(ds, &ex, self.exec)?)
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let exec = if cli.jobs == 1 { Exec::Sequential } else { Exec::Parallel };
    #[cfg(feature = "parallel")]
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global().context("starting worker pool")?;
    }
    let ctx = Ctx { cfg, exec };
    match cli.command {
        Command::Gen { seed, out } => gen(&ctx, seed, &out),
        Command::Validate(data) => validate(&ctx, &data),
        Command::Graph { data, alpha, out, top } => graph(&ctx, &data, alpha, out.as_deref(), top),
        Command::Features { data, out } => features(&ctx, &data, out.as_deref()),
        Command::Train { data, seed, out, variant, n_samples, lr, epochs } => {
            let mut ctx = ctx;
            if let Some(n) = n_samples {
                ctx.cfg.training.n_samples = n;
            }
            if let Some(lr) = lr {
                ctx.cfg.training.optimizer.lr = lr;
            }
            if let Some(e) = epochs {
                ctx.cfg.training.optimizer.epochs = e;
            }
            ctx.cfg.validate()?;
            train(&ctx, &data, seed, &out, &variant)
        }
        Command::Rank { data, query, method, model, lambda, top } => {
            rank(&ctx, &data, &query, method, model.as_deref(), lambda, top)
        }
        Command::Eval { data, model, out, per_query, pvalues } => {
            eval(&ctx, &data, &model, &out, per_query.as_deref(), pvalues.as_deref())
        }
        Command::Agreement { data, out } => agreement(&ctx, &data, out.as_deref()),
        Command::AnnotatePrep { data, out } => annotate_prep(&ctx, &data, out.as_deref()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut w = output(None)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn gen(ctx: &Ctx, seed: Option<u64>, out: &Path) -> Result<()> {
    let seed = ctx.seed(seed)?;
    let ds = generate_synthetic(&ctx.cfg.generator, seed)?;
    save_dataset(&ds, out).with_context(|| format!("writing {}", out.display()))?;
    print_json(&dataset_stats(&ds))
}

fn validate(ctx: &Ctx, data: &DatasetArg) -> Result<()> {
    let (dir, ds) = ctx.dataset(data)?;
    let stats = dataset_stats(&ds);
    let mut w = output(None)?;
    writeln!(
        w,
        "{}: ok ({} charges, {} queries, {} documents, {} triples)",
        dir.display(),
        stats.charges,
        stats.queries,
        stats.docs,
        stats.triples
    )?;
    w.flush()?;
    Ok(())
}

fn graph(ctx: &Ctx, data: &DatasetArg, alpha: Option<f64>, out: Option<&Path>, top: usize) -> Result<()> {
    let (_, ds) = ctx.dataset(data)?;
    let alpha = alpha.unwrap_or(ctx.cfg.graph.alpha);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(usage(format!("--alpha must lie in [0, 1], got {alpha}")));
    }
    let g = ctx.graph(&ds, alpha)?;
    let mut w = output(out)?;
    g.dump(&mut w)?;
    w.flush()?;
    if top > 0 {
        eprint!("{}", describe_top_edges(&g, top));
    }
    Ok(())
}

fn features(ctx: &Ctx, data: &DatasetArg, out: Option<&Path>) -> Result<()> {
    let (_, ds) = ctx.dataset(data)?;
    let store = ctx.features(&ds)?;
    let mut w = output(out)?;
    for d in &ds.docs {
        let p = store.pair(&d.query_id, &d.id)?;
        let line = json!({"query_id": d.query_id, "doc_id": d.id, "text": p.text, "charge": p.charge});
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn train(ctx: &Ctx, data: &DatasetArg, seed: Option<u64>, out: &Path, variants: &[Variant]) -> Result<()> {
    let seed = ctx.seed(seed)?;
    let mut masks: Vec<FeatureMask> = Vec::new();
    for m in variants.iter().flat_map(|v| v.masks()) {
        if !masks.contains(&m) {
            masks.push(m);
        }
    }
    let (_, ds) = ctx.dataset(data)?;
    let store = ctx.features(&ds)?;
    let models = train_models(&ds, &store, &ctx.cfg.training, &masks, seed, ctx.exec)?;
    let single = models.len() == 1;
    if !single {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    let mut reports = serde_json::Map::new();
    for (model, report) in &models {
        let path = if single { out.to_path_buf() } else { out.join(format!("{}.ckpt", mask_name(model.variant))) };
        let mut w = output(Some(&path))?;
        model.save(&mut w)?;
        w.flush()?;
        reports.insert(
            mask_name(model.variant).to_string(),
            json!({
                "checkpoint": path,
                "train_samples": report.train_samples,
                "holdout_samples": report.holdout_samples,
                "initial_holdout_mse": report.initial_holdout_mse,
                "final_holdout_mse": report.final_holdout_mse,
                "final_train_mse": report.final_train_mse,
                "steps": report.steps,
            }),
        );
    }
    print_json(&reports)
}

fn mask_name(mask: FeatureMask) -> &'static str {
    match mask {
        FeatureMask::Full => "full",
        FeatureMask::TextOnly => "text-only",
        FeatureMask::ChargeOnly => "charge-only",
        FeatureMask::Random => "random",
    }
}

fn load_model(path: &Path, ds: &Dataset, ctx: &Ctx) -> Result<DlrmModel> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let model = DlrmModel::load(io::BufReader::new(f)).with_context(|| format!("loading {}", path.display()))?;
    if model.num_charges != ds.vocab.len() || model.text_len != ctx.cfg.features.text_len {
        bail!(
            "{} expects {} charges and text length {}, dataset has {} charges and config text length {}",
            path.display(),
            model.num_charges,
            model.text_len,
            ds.vocab.len(),
            ctx.cfg.features.text_len
        );
    }
    Ok(model)
}

fn rank(
    ctx: &Ctx,
    data: &DatasetArg,
    query: &str,
    method: Method,
    model: Option<&Path>,
    lambda: f64,
    top: Option<usize>,
) -> Result<()> {
    let (_, ds) = ctx.dataset(data)?;
    if ds.query(query).is_none() {
        bail!("unknown query {query}");
    }
    let store = ctx.features(&ds)?;
    let ids: Vec<&str> = ds.docs.iter().filter(|d| d.query_id == query).map(|d| d.id.as_str()).collect();
    let ranked: Vec<(String, Option<f64>)> = match method {
        Method::Dlrm => {
            let path = model.ok_or_else(|| usage("--model is required for the dlrm method"))?;
            let m = load_model(path, &ds, ctx)?;
            m.rank(&store, query, &ids)?.into_iter().map(|(i, s)| (ids[i].to_string(), Some(s))).collect()
        }
        other => {
            let name = match other {
                Method::Bm25 => BM25,
                Method::Mmr => MMR,
                Method::IaSelect => IA_SELECT,
                _ => EX_IA_SELECT,
            };
            let baselines = Baselines { bm25: ctx.cfg.bm25.clone(), mmr_lambda: lambda };
            baseline_ranking(&ds, &store, query, name, &baselines)?.into_iter().map(|d| (d, None)).collect()
        }
    };
    let mut w = output(None)?;
    for (r, (doc, score)) in ranked.iter().take(top.unwrap_or(usize::MAX)).enumerate() {
        match score {
            Some(s) => writeln!(w, "{}\t{doc}\t{s:.6}", r + 1)?,
            None => writeln!(w, "{}\t{doc}", r + 1)?,
        }
    }
    w.flush()?;
    Ok(())
}

fn eval(
    ctx: &Ctx,
    data: &DatasetArg,
    models: &[PathBuf],
    out: &Path,
    per_query: Option<&Path>,
    pvalues: Option<&Path>,
) -> Result<()> {
    let (_, ds) = ctx.dataset(data)?;
    let models = models.iter().map(|p| load_model(p, &ds, ctx)).collect::<Result<Vec<_>>>()?;
    let store = ctx.features(&ds)?;
    let lambda = tune_mmr_lambda(&ds, &store, &ds.split.train, &ctx.cfg.bm25, &ctx.cfg.eval, ctx.exec)?;
    log::info!("mmr lambda {lambda}");
    let baselines = Baselines { bm25: ctx.cfg.bm25.clone(), mmr_lambda: lambda };
    let report = evaluate(&ds, &store, &ds.split.test, &models, &baselines, &ctx.cfg.eval, ctx.exec)?;

    let mut w = output(Some(out))?;
    report.write_tsv(&mut w)?;
    w.flush()?;
    let json_path = per_query.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("json"));
    let mut w = output(Some(&json_path))?;
    report.write_json(&mut w)?;
    w.flush()?;
    let p_path = pvalues.map(Path::to_path_buf).unwrap_or_else(|| sibling(out, ".pvalues.tsv"));
    let mut w = output(Some(&p_path))?;
    report.write_pvalues_tsv(&mut w)?;
    w.flush()?;
    let mut w = output(None)?;
    report.write_tsv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn agreement(ctx: &Ctx, data: &DatasetArg, out: Option<&Path>) -> Result<()> {
    let (_, ds) = ctx.dataset(data)?;
    if ds.annotations.is_empty() {
        bail!("dataset has no annotation records");
    }
    let groups = agreement_from_records(&ds.annotations)?;
    let mut w = output(out)?;
    write_agreement_tsv(&mut w, &groups)?;
    w.flush()?;
    Ok(())
}

fn annotate_prep(ctx: &Ctx, data: &DatasetArg, out: Option<&Path>) -> Result<()> {
    let (_, ds) = ctx.dataset(data)?;
    let providers = ctx.cfg.providers(&ds.vocab)?;
    let extractor = ChargeNameExtractor::new(&ds.vocab);
    let idx = ds.index();
    let name = |c: usize| ds.vocab.get(c).map(|ch| ch.name.clone()).unwrap_or_default();
    let lines = ctx.exec.try_map_range(ds.queries.len(), |i| {
        let q = &ds.queries[i];
        let ccs = candidate_charge_set(&q.text(), &extractor, providers.predictor.as_ref(), ctx.cfg.features.top_k)?;
        let mut triples = Vec::new();
        for d in idx.docs(&q.id) {
            for &c in &d.charges {
                if triple_needs_annotation(q, c, d) {
                    triples.push(json!({"doc_id": d.id, "charge_id": c, "charge": name(c)}));
                }
            }
        }
        let ccs: Vec<_> = ccs.into_iter().map(|c| json!({"id": c, "name": name(c)})).collect();
        Ok::<_, anyhow::Error>(json!({"query_id": q.id, "ccs": ccs, "triples": triples}).to_string())
    })?;
    let mut w = output(out)?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
