use std::fmt::Display;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use serde_json::json;

use negminer_core::baselines::{self, Bm25Params};
use negminer_core::corpus::{self, Document, DocumentSet, LoadOptions, QrelSet, Query, QuerySet};
use negminer_core::embed::{self, EmbedError, EmbeddingStore, Ensemble, ProviderSpec, VectorTable};
use negminer_core::eval::{self, MissingPolicy, DEFAULT_KS, DEFAULT_LENGTH_THRESHOLD};
use negminer_core::fixture::{self, FixtureConfig};
use negminer_core::miner::{self, DistanceSpace, MiningConfig};
use negminer_core::objective::{self, Reduction, DEFAULT_MARGIN};
use negminer_core::pca::{self, PcaModel, DEFAULT_VARIANCE_THRESHOLD};
use negminer_core::triplets::{self, TripletMeta, TripletRecord};
use negminer_core::{atomic, verify as verifier};

use crate::config::PipelineConfig;
use crate::{
    EmbedArgs, EvalArgs, FixtureArgs, LossArgs, MineArgs, PcaFitArgs, PcaTransformArgs, SampleArgs,
    SpaceArgs, StatsArgs, VerifyArgs,
};

/// Prefixes an error with the module it came from.
trait Tag<T> {
    fn tag(self, module: &str) -> Result<T>;
}

impl<T, E: Display> Tag<T> for std::result::Result<T, E> {
    fn tag(self, module: &str) -> Result<T> {
        self.map_err(|e| anyhow!("{module}: {e}"))
    }
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("cli: missing --{flag}"))
}

fn need_path(flag: Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let p = need(flag.or_else(|| cfg.clone()), name)?;
    if !p.exists() {
        bail!("cli: --{name} {} does not exist", p.display());
    }
    Ok(p)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => atomic::write_bytes(p, text.as_bytes()).tag("io"),
        None => io::stdout().write_all(text.as_bytes()).tag("io"),
    }
}

fn load_text_inputs(corpus_path: &Path, queries_path: &Path) -> Result<(DocumentSet, QuerySet)> {
    let docs = corpus::load_documents(corpus_path).tag("corpus")?;
    let queries = corpus::load_queries(queries_path).tag("corpus")?;
    Ok((docs, queries))
}

/// Id-only record sets, enough to validate qrels against stored vectors.
fn id_sets(ens: &Ensemble) -> Result<(QuerySet, DocumentSet)> {
    let queries = ens.query_stores()[0]
        .ids()
        .iter()
        .map(|id| Query { id: id.clone(), text: String::new() })
        .collect();
    let docs = ens.doc_stores()[0]
        .ids()
        .iter()
        .map(|id| Document { id: id.clone(), text: String::new(), meta: None })
        .collect();
    Ok((
        QuerySet::from_records(queries).tag("corpus")?,
        DocumentSet::from_records(docs).tag("corpus")?,
    ))
}

fn gather(store: &EmbeddingStore, ids: &[String]) -> Result<EmbeddingStore> {
    let mut matrix = Vec::with_capacity(ids.len() * store.dim());
    for id in ids {
        let row = store.get(id).ok_or_else(|| EmbedError::MissingId {
            model: store.model_name().to_string(),
            id: id.clone(),
        });
        matrix.extend_from_slice(row.tag("embed")?);
    }
    EmbeddingStore::new(store.model_name(), store.dim(), ids.to_vec(), matrix, store.is_normalized())
        .tag("embed")
}

pub fn embed(cfg: &PipelineConfig, a: EmbedArgs) -> Result<()> {
    let (docs, queries) = load_text_inputs(
        &need_path(a.corpus, &cfg.paths.corpus, "corpus")?,
        &need_path(a.queries, &cfg.paths.queries, "queries")?,
    )?;
    let out = need(a.out.or_else(|| cfg.paths.stores.clone()), "out")?;
    let normalize = !a.no_normalize && cfg.normalize.unwrap_or(true);
    let models = a.models.or_else(|| cfg.provider.models.clone());
    let doc_ids: Vec<String> = docs.ids().map(String::from).collect();
    let query_ids: Vec<String> = queries.ids().map(String::from).collect();

    let (doc_stores, query_stores) = if let Some(src) = a.precomputed {
        let ens = Ensemble::read(&src).tag("embed")?;
        let names: Vec<String> = match models {
            Some(m) => m,
            None => ens.models().into_iter().map(String::from).collect(),
        };
        let mut ds = Vec::new();
        let mut qs = Vec::new();
        for name in &names {
            let i = ens
                .models()
                .iter()
                .position(|m| m == name)
                .ok_or_else(|| anyhow!("embed: model {name:?} not in {}", src.display()))?;
            ds.push(gather(&ens.doc_stores()[i], &doc_ids)?);
            qs.push(gather(&ens.query_stores()[i], &query_ids)?);
        }
        (ds, qs)
    } else {
        let url = a
            .provider_url
            .or_else(|| cfg.provider.url.clone())
            .ok_or_else(|| anyhow!("cli: no provider URL (--provider-url or NEGMINER_PROVIDER_URL) and no --precomputed stores"))?;
        let names = need(models, "models")?;
        let mut spec = ProviderSpec::new(url, names.clone());
        if let Some(b) = a.batch_size.or(cfg.provider.batch_size) {
            spec.batch_size = b;
        }
        if let Some(t) = a.timeout_ms.or(cfg.provider.timeout_ms) {
            spec.timeout = std::time::Duration::from_millis(t);
        }
        if let Some(r) = a.max_retries.or(cfg.provider.max_retries) {
            spec.max_retries = r;
        }
        if let Some(p) = a.parallelism.or(cfg.provider.parallelism) {
            spec.parallelism = p;
        }
        let doc_texts: Vec<&str> = docs.texts().collect();
        let query_texts: Vec<&str> = queries.texts().collect();
        let mut ds = Vec::new();
        let mut qs = Vec::new();
        for name in &names {
            log::info!("embedding {} documents with {name}", doc_ids.len());
            ds.push(embed::fetch_embeddings(&spec, name, &doc_ids, &doc_texts).tag("embed")?);
            log::info!("embedding {} queries with {name}", query_ids.len());
            qs.push(embed::fetch_embeddings(&spec, name, &query_ids, &query_texts).tag("embed")?);
        }
        (ds, qs)
    };
    let ens = Ensemble::new(doc_stores, query_stores, normalize).tag("embed")?;
    // fail here rather than later if any vector cannot be concatenated
    ens.concat_tables().tag("embed")?;
    ens.write(&out).tag("embed")?;
    println!(
        "{}",
        json!({
            "models": ens.models(),
            "total_dim": ens.total_dim(),
            "docs": doc_ids.len(),
            "queries": query_ids.len(),
            "normalize": normalize,
            "out": out,
        })
    );
    Ok(())
}

fn stores_dir(cfg: &PipelineConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    need_path(flag, &cfg.paths.stores, "stores")
}

fn fit_union(docs: &VectorTable, queries: &VectorTable, variance: f64) -> Result<PcaModel> {
    let mut data = Vec::with_capacity(docs.data().len() + queries.data().len());
    data.extend_from_slice(docs.data());
    data.extend_from_slice(queries.data());
    PcaModel::fit(&data, docs.dim(), variance).tag("pca")
}

fn check_variance(v: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        bail!("cli: --variance must be in (0, 1], got {v}");
    }
    Ok(v)
}

pub fn pca_fit(cfg: &PipelineConfig, a: PcaFitArgs) -> Result<()> {
    let ens = Ensemble::read(&stores_dir(cfg, a.stores)?).tag("embed")?;
    let out = need(a.out.or_else(|| cfg.paths.pca_model.clone()), "out")?;
    let variance = check_variance(a.variance.or(cfg.pca.variance).unwrap_or(DEFAULT_VARIANCE_THRESHOLD))?;
    let (docs, queries) = ens.concat_tables().tag("embed")?;
    let model = fit_union(&docs, &queries, variance)?;
    pca::save_model(&model, &out).tag("pca")?;
    println!(
        "{}",
        json!({
            "input_dim": model.input_dim(),
            "n_components": model.n_components(),
            "variance_threshold": variance,
            "cumulative_variance": model.cumulative_variance(),
            "explained_variance_ratio": model.explained_variance_ratio(),
        })
    );
    Ok(())
}

fn table_to_store(name: &str, t: &VectorTable) -> Result<EmbeddingStore> {
    let matrix = t.data().iter().map(|&v| v as f32).collect();
    EmbeddingStore::new(name, t.dim(), t.ids().to_vec(), matrix, false).tag("embed")
}

pub fn pca_transform(cfg: &PipelineConfig, a: PcaTransformArgs) -> Result<()> {
    let ens = Ensemble::read(&stores_dir(cfg, a.stores)?).tag("embed")?;
    let model = pca::load_model(need_path(a.model, &cfg.paths.pca_model, "model")?).tag("pca")?;
    let out = need(a.out, "out")?;
    let (docs, queries) = ens.concat_tables().tag("embed")?;
    let name = format!("pca-{}", model.n_components());
    for (sub, table) in [("docs", &docs), ("queries", &queries)] {
        let projected = model.transform_table(table).tag("pca")?;
        embed::write_store(&table_to_store(&name, &projected)?, out.join(sub)).tag("embed")?;
    }
    println!("{}", json!({"n_components": model.n_components(), "out": out}));
    Ok(())
}

/// Query and document vectors in the requested space.
struct Vectors {
    space: DistanceSpace,
    variance: Option<f64>,
    queries: VectorTable,
    docs: VectorTable,
    ensemble: Ensemble,
}

fn resolve_space(
    cfg: &PipelineConfig,
    a: &SpaceArgs,
    meta: Option<&TripletMeta>,
) -> Result<Vectors> {
    let space: DistanceSpace = match a
        .space
        .clone()
        .or_else(|| meta.and_then(|m| m.distance_space.clone()))
        .or_else(|| cfg.mining.distance_space.clone())
    {
        Some(s) => s.parse().tag("cli")?,
        None => DistanceSpace::default(),
    };
    let ensemble = Ensemble::read(&stores_dir(cfg, a.stores.clone())?).tag("embed")?;
    let (docs, queries) = ensemble.concat_tables().tag("embed")?;
    if space == DistanceSpace::Concat {
        return Ok(Vectors { space, variance: None, queries, docs, ensemble });
    }
    let model = match a.pca.clone().or_else(|| cfg.paths.pca_model.clone()) {
        Some(p) => pca::load_model(p).tag("pca")?,
        None => {
            let v = a
                .variance
                .or_else(|| meta.and_then(|m| m.pca_variance_threshold))
                .or(cfg.pca.variance)
                .unwrap_or(DEFAULT_VARIANCE_THRESHOLD);
            fit_union(&docs, &queries, check_variance(v)?)?
        }
    };
    log::info!("pca space: {} -> {} dims", model.input_dim(), model.n_components());
    Ok(Vectors {
        space,
        variance: Some(model.variance_threshold()),
        queries: model.transform_table(&queries).tag("pca")?,
        docs: model.transform_table(&docs).tag("pca")?,
        ensemble,
    })
}

pub fn mine(cfg: &PipelineConfig, a: MineArgs) -> Result<()> {
    let qrels_path = need_path(a.qrels, &cfg.paths.qrels, "qrels")?;
    let out = need(cfg.output(a.out, "triplets.jsonl"), "out")?;
    let v = resolve_space(cfg, &a.space, None)?;
    let (query_ids, doc_ids) = id_sets(&v.ensemble)?;
    let qrels = corpus::load_qrels(&qrels_path, &query_ids, &doc_ids).tag("corpus")?;
    let config = MiningConfig {
        k_negatives: a.k.or(cfg.mining.k_negatives).unwrap_or(1),
        exclude_cross_query_positives: a.exclude_cross_query_positives
            || cfg.mining.exclude_cross_query_positives.unwrap_or(false),
        distance_space: v.space,
        epsilon: a.epsilon.or(cfg.mining.epsilon).unwrap_or(0.0),
    };
    let records = miner::mine_all(&qrels, &v.queries, &v.docs, &config).tag("miner")?;
    let meta = TripletMeta {
        method: "dual-criteria".into(),
        distance_space: Some(v.space.to_string()),
        k_negatives: Some(config.k_negatives),
        epsilon: Some(config.epsilon),
        pca_variance_threshold: v.variance,
        seed: None,
        margin: a.margin.or(cfg.mining.margin).unwrap_or(DEFAULT_MARGIN),
    };
    triplets::write_triplets(&out, &records, Some(&meta)).tag("triplets")?;
    let empty = records.iter().filter(|r| r.negatives.is_empty()).count();
    let negatives: usize = records.iter().map(|r| r.negatives.len()).sum();
    println!(
        "{}",
        json!({
            "pairs": records.len(),
            "negatives": negatives,
            "pairs_without_negative": empty,
            "space": v.space.to_string(),
            "dim": v.docs.dim(),
            "out": out,
        })
    );
    Ok(())
}

fn parse_ratio(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("cli: ratio must look like 1:1, got {s:?}"))?;
    let a: u32 = a.trim().parse().tag("cli")?;
    let b: u32 = b.trim().parse().tag("cli")?;
    if a + b == 0 {
        bail!("cli: ratio {s:?} has no weight");
    }
    Ok((a, b))
}

struct SampleCtx<'a> {
    docs: &'a DocumentSet,
    queries: &'a QuerySet,
    qrels: &'a QrelSet,
    k: usize,
    seed: u64,
    batch_size: usize,
    params: Bm25Params,
}

fn sample_one(ctx: &SampleCtx, method: &str) -> Result<Vec<TripletRecord>> {
    match method {
        "random" => {
            let ids: Vec<String> = ctx.docs.ids().map(String::from).collect();
            baselines::sample_random(ctx.qrels, &ids, ctx.k, ctx.seed).tag("baselines")
        }
        "bm25" => {
            let index = baselines::build_bm25_index(ctx.docs).tag("baselines")?;
            baselines::sample_bm25(ctx.qrels, ctx.queries, &index, &ctx.params, ctx.k).tag("baselines")
        }
        "inbatch" => baselines::sample_in_batch_all(ctx.qrels, ctx.batch_size).tag("baselines"),
        other => bail!("cli: unknown sampling method {other:?} (random|bm25|inbatch|hybrid)"),
    }
}

pub fn sample(cfg: &PipelineConfig, a: SampleArgs) -> Result<()> {
    let method = need(a.method.or_else(|| cfg.sampler.method.clone()), "method")?;
    let (docs, queries) = load_text_inputs(
        &need_path(a.corpus, &cfg.paths.corpus, "corpus")?,
        &need_path(a.queries, &cfg.paths.queries, "queries")?,
    )?;
    let qrels = corpus::load_qrels(need_path(a.qrels, &cfg.paths.qrels, "qrels")?, &queries, &docs)
        .tag("corpus")?;
    let out = need(cfg.output(a.out, &format!("{method}.jsonl")), "out")?;
    let defaults = Bm25Params::default();
    let ctx = SampleCtx {
        docs: &docs,
        queries: &queries,
        qrels: &qrels,
        k: a.k.or(cfg.sampler.k).or(cfg.mining.k_negatives).unwrap_or(1),
        seed: a.seed.or(cfg.sampler.seed).unwrap_or(0),
        batch_size: a.batch_size.or(cfg.sampler.batch_size).unwrap_or(baselines::DEFAULT_BATCH_SIZE),
        params: Bm25Params {
            k1: a.k1.unwrap_or(defaults.k1),
            b: a.b.unwrap_or(defaults.b),
        },
    };
    let (records, label) = if method == "hybrid" {
        let parts = a
            .hybrid
            .or_else(|| cfg.sampler.hybrid.clone())
            .unwrap_or_else(|| vec!["bm25".into(), "inbatch".into()]);
        let [first, second] = parts.as_slice() else {
            bail!("cli: --hybrid takes exactly two methods, got {}", parts.len());
        };
        let (w1, w2) = parse_ratio(a.ratio.as_deref().or(cfg.sampler.ratio.as_deref()).unwrap_or("1:1"))?;
        let x = sample_one(&ctx, first)?;
        let y = sample_one(&ctx, second)?;
        (
            baselines::combine(&x, &y, ctx.k, w1, w2),
            format!("hybrid:{first}+{second}@{w1}:{w2}"),
        )
    } else {
        (sample_one(&ctx, &method)?, method.clone())
    };
    let meta = TripletMeta {
        method: label,
        k_negatives: Some(ctx.k),
        seed: Some(ctx.seed),
        margin: a.margin.or(cfg.mining.margin).unwrap_or(DEFAULT_MARGIN),
        ..Default::default()
    };
    triplets::write_triplets(&out, &records, Some(&meta)).tag("triplets")?;
    let negatives: usize = records.iter().map(|r| r.negatives.len()).sum();
    println!("{}", json!({"pairs": records.len(), "negatives": negatives, "out": out}));
    Ok(())
}

pub fn loss(cfg: &PipelineConfig, a: LossArgs) -> Result<()> {
    let records = triplets::read_triplets(&a.triplets).tag("triplets")?;
    let meta = triplets::read_meta(&a.triplets);
    let margin = a
        .margin
        .or_else(|| meta.as_ref().map(|m| m.margin))
        .or(cfg.mining.margin)
        .unwrap_or(DEFAULT_MARGIN);
    if margin < 0.0 {
        bail!("objective: margin must be nonnegative, got {margin}");
    }
    let reduction = match a.reduction.as_str() {
        "sum" => Reduction::Sum,
        "mean" => Reduction::Mean,
        other => bail!("cli: unknown reduction {other:?} (sum|mean)"),
    };
    let complete = records
        .iter()
        .all(|r| r.d_q_pd.is_some() && r.negatives.iter().all(|n| n.d_q_d.is_some()));
    let vectors = if complete && a.space.stores.is_none() {
        None
    } else if a.space.stores.is_some() || cfg.paths.stores.is_some() {
        Some(resolve_space(cfg, &a.space, meta.as_ref())?)
    } else {
        bail!("objective: triplet file lacks distances; pass --stores to recompute them");
    };
    let dist = |qid: &str, did: &str, recorded: Option<f64>| -> Result<f64> {
        match &vectors {
            None => Ok(recorded.expect("checked above")),
            Some(v) => {
                let q = v.queries.get(qid).ok_or_else(|| anyhow!("objective: no vector for {qid}"))?;
                let d = v.docs.get(did).ok_or_else(|| anyhow!("objective: no vector for {did}"))?;
                objective::bi_encoder_distance(q, d).tag("objective")
            }
        }
    };
    let mut tsv = String::from("query_id\tpositive_id\tnegative_id\td_q_pd\td_q_hn\tloss\n");
    let mut pairs = Vec::new();
    for r in &records {
        let d_pos = dist(&r.query_id, &r.positive_id, r.d_q_pd)?;
        for n in &r.negatives {
            let d_neg = dist(&r.query_id, &n.doc_id, n.d_q_d)?;
            let l = objective::triplet_loss(d_pos, d_neg, margin);
            tsv.push_str(&format!(
                "{}\t{}\t{}\t{d_pos}\t{d_neg}\t{l}\n",
                r.query_id, r.positive_id, n.doc_id
            ));
            pairs.push((d_pos, d_neg));
        }
    }
    let total = objective::batch_loss(pairs.iter().copied(), margin, reduction);
    tsv.push_str(&format!("# {}\t{total}\t{} triplets\tmargin {margin}\n", a.reduction, pairs.len()));
    write_text(a.out.as_deref(), &tsv)?;
    if a.out.is_some() {
        println!(
            "{}",
            json!({"loss": total, "reduction": a.reduction, "triplets": pairs.len(), "margin": margin})
        );
    }
    Ok(())
}

pub fn eval(cfg: &PipelineConfig, a: EvalArgs) -> Result<()> {
    let (docs, queries) = load_text_inputs(
        &need_path(a.corpus, &cfg.paths.corpus, "corpus")?,
        &need_path(a.queries, &cfg.paths.queries, "queries")?,
    )?;
    let qrels = corpus::load_qrels(need_path(a.qrels, &cfg.paths.qrels, "qrels")?, &queries, &docs)
        .tag("corpus")?;
    let run = eval::load_run(need_path(a.run, &cfg.paths.run, "run")?).tag("eval")?;
    let ks = a.ks.or_else(|| cfg.eval.ks.clone()).unwrap_or_else(|| DEFAULT_KS.to_vec());
    if ks.is_empty() {
        bail!("cli: --ks must not be empty");
    }
    let threshold = a
        .length_threshold
        .or(cfg.eval.length_threshold)
        .unwrap_or(DEFAULT_LENGTH_THRESHOLD);
    let policy = match a.missing.as_deref().or(cfg.eval.missing.as_deref()).unwrap_or("error") {
        "error" => MissingPolicy::Error,
        "zero" => MissingPolicy::Zero,
        other => bail!("cli: unknown missing-query policy {other:?} (error|zero)"),
    };
    let report = eval::eval_report(&run, &qrels, &docs, &ks, threshold, policy).tag("eval")?;
    let json = serde_json::to_string_pretty(&report).tag("eval")? + "\n";
    print!("{}", eval::format_table(&report));
    match cfg.output(a.out, "report.json") {
        Some(p) => atomic::write_bytes(&p, json.as_bytes()).tag("io")?,
        None => print!("{json}"),
    }
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let docs = corpus::load_documents_with(&a.input, LoadOptions { allow_empty_text: true }).tag("corpus")?;
    let h = corpus::length_stats(docs.iter(), &a.edges).tag("corpus")?;
    let text = format!(
        "# count={} min={} max={} mean={:.2} median={}\n{}",
        h.total(),
        h.min,
        h.max,
        h.mean,
        h.median,
        h.to_tsv()
    );
    write_text(a.out.as_deref(), &text)
}

pub fn verify(cfg: &PipelineConfig, a: VerifyArgs) -> Result<()> {
    let records = triplets::read_triplets(&a.triplets).tag("triplets")?;
    let meta = triplets::read_meta(&a.triplets);
    let v = resolve_space(cfg, &a.space, meta.as_ref())?;
    let qrels = match a.qrels {
        Some(p) => {
            let (q, d) = id_sets(&v.ensemble)?;
            Some(corpus::load_qrels(p, &q, &d).tag("corpus")?)
        }
        None => None,
    };
    let epsilon = a
        .epsilon
        .or_else(|| meta.as_ref().and_then(|m| m.epsilon))
        .or(cfg.mining.epsilon)
        .unwrap_or(0.0);
    let report = verifier::verify(&records, &v.queries, &v.docs, qrels.as_ref(), epsilon);
    if let Some(out) = &a.out {
        let json = serde_json::to_vec_pretty(&report).tag("verify")?;
        atomic::write_bytes(out, &json).tag("io")?;
    }
    println!(
        "{}",
        json!({
            "triplets": report.triplets,
            "negatives": report.negatives,
            "violations": report.violations.len(),
            "drift": report.drift.len(),
            "max_drift": report.max_drift,
            "unresolved_ids": report.unresolved_ids.len(),
            "space": v.space.to_string(),
            "passed": report.passed(),
        })
    );
    if report.passed() {
        return Ok(());
    }
    let first = if let Some(x) = report.violations.first() {
        format!("line {}: {} {}: {}", x.line, x.query_id, x.doc_id, x.kind)
    } else if let Some(d) = report.drift.first() {
        format!("line {}: {} {} recorded {} recomputed {}", d.line, d.doc_id, d.field, d.recorded, d.recomputed)
    } else {
        format!("unresolved id {}", report.unresolved_ids[0])
    };
    bail!(
        "verify: {} violations, {} drifted distances, {} unresolved ids; first at {first}",
        report.violations.len(),
        report.drift.len(),
        report.unresolved_ids.len()
    )
}

pub fn fixture(a: FixtureArgs) -> Result<()> {
    let config = FixtureConfig {
        n_docs: a.docs,
        n_queries: a.queries,
        n_clusters: a.clusters,
        seed: a.seed,
        ..Default::default()
    };
    if config.n_clusters == 0 || config.n_docs < config.n_clusters || config.n_queries == 0 {
        bail!("cli: fixture needs at least one query and one document per cluster");
    }
    let f = fixture::generate(&config);
    f.write(&a.out).tag("fixture")?;
    println!(
        "{}",
        json!({
            "docs": f.docs.len(),
            "queries": f.queries.len(),
            "clusters": config.n_clusters,
            "models": f.ensemble.models(),
            "out": a.out,
        })
    );
    Ok(())
}
