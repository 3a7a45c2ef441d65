use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::workspace::{read_json, write_file, write_json, RunManifest, Status, Workspace};
use crate::corpus::{
    build_queries, dataset_stats, load_dataset, load_documents, load_taxonomy, Dataset, Format,
    NarrativeQuery,
};
use crate::dense::{build_dense_index, DenseIndex};
use crate::embedding::{Embedder, EmbeddingCache, MockEmbedder};
use crate::error::{Error, Result};
use crate::graph::{
    build_graph, leiden_partition, summarize_communities, Extractor, Graph, LlmExtractor,
    LlmSummarizer, MockExtractor, MockSummarizer, Summarizer,
};
use crate::ir_metrics::{EvalResult, NarrativeScores};
use crate::llm::{ChatModel, HttpChatModel, MockLlm};
use crate::narrative_metrics::{build_sets, MetricTable};
use crate::pipeline::{
    average_runs, digest_of, run_pipeline, PipelineInputs, RefusalLexicon, RunArtifact, RunAverage,
    Variant,
};
use crate::sparse::InvertedIndex;
use crate::stats::{analyze, render_correlation_table, AnalysisReport};
use crate::synthetic;

/// Everything a command needs: the workspace, the effective config and the dataset name.
pub struct Context {
    pub workspace: Workspace,
    pub config: Config,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub digest: String,
    pub documents: usize,
    pub queries: usize,
}

impl Context {
    pub fn config_digest(&self) -> Result<String> {
        digest_of(&self.config)
    }

    fn cache(&self) -> Result<EmbeddingCache> {
        EmbeddingCache::on_disk(self.workspace.cache_dir())
    }

    pub fn embedder(&self) -> Result<Embedder> {
        if self.config.mock.enabled {
            let m = &self.config.mock;
            Ok(Embedder::new(Arc::new(MockEmbedder::new(m.seed, m.dimension)), self.cache()?))
        } else {
            Embedder::from_config(&self.config.embedding, self.cache()?)
        }
    }

    pub fn metric_embedder(&self) -> Result<Embedder> {
        if self.config.mock.enabled {
            let m = &self.config.mock;
            Ok(Embedder::new(Arc::new(MockEmbedder::new(m.metric_seed, m.dimension)), self.cache()?))
        } else {
            Embedder::from_config(&self.config.metric_embedding, self.cache()?)
        }
    }

    pub fn chat_model(&self) -> Arc<dyn ChatModel> {
        if self.config.mock.enabled {
            Arc::new(MockLlm::new())
        } else {
            Arc::new(HttpChatModel::new(self.config.llm.clone()))
        }
    }

    /// Identity of the providers an artifact depends on, without secrets.
    fn provider_identity(&self, with_llm: bool) -> Result<String> {
        #[derive(Serialize)]
        struct Id<'a> {
            mock: Option<&'a super::config::MockConfig>,
            embedding: Option<(&'a str, usize, &'a str)>,
            llm: Option<(&'a str, &'a str)>,
        }
        let c = &self.config;
        let id = if c.mock.enabled {
            Id { mock: Some(&c.mock), embedding: None, llm: None }
        } else {
            Id {
                mock: None,
                embedding: Some((&c.embedding.model, c.embedding.dimension, &c.embedding.endpoint)),
                llm: with_llm.then_some((c.llm.model.as_str(), c.llm.endpoint.as_str())),
            }
        };
        digest_of(&id)
    }

    pub fn load_dataset(&self) -> Result<(Dataset, DatasetMeta, PathBuf)> {
        let dir = self
            .workspace
            .require_ref(&self.dataset, "dataset", "specfi ingest")?;
        let meta: DatasetMeta = read_json(&dir.join("dataset.json"))?;
        let queries: Vec<NarrativeQuery> = read_json(&dir.join("queries.json"))?;
        let ds = load_dataset(&dir.join("documents.jsonl"), Format::Jsonl, queries)?;
        Ok((Dataset { name: meta.name.clone(), ..ds }, meta, dir))
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(self.workspace.root()).unwrap_or(p).display().to_string()
    }
}

/// Loads a corpus and taxonomy (or the shipped synthetic pair) into the workspace.
pub fn cmd_ingest(
    ctx: &Context,
    documents: Option<&Path>,
    taxonomy: Option<&Path>,
    format: Option<Format>,
) -> Result<PathBuf> {
    let (docs_path, tax_path) = match (documents, taxonomy) {
        (Some(d), Some(t)) => (d.to_path_buf(), t.to_path_buf()),
        (None, None) if ctx.dataset == synthetic::DATASET_NAME => {
            let dir = synthetic::shipped_dir();
            (dir.join("documents.jsonl"), dir.join("taxonomy.json"))
        }
        _ => {
            return Err(Error::InvalidInput(
                "ingest needs both --documents and --taxonomy (only `synthetic` has built-in files)".into(),
            ))
        }
    };
    let started = Instant::now();
    let queries = build_queries(&load_taxonomy(&tax_path)?)?;
    let format = format.unwrap_or_else(|| Format::from_path(&docs_path));
    let ds = Dataset::new(ctx.dataset.clone(), load_documents(&docs_path, format)?, queries)?;

    let tmp = tempfile_path(ctx, "ingest");
    ds.write_jsonl(&tmp)?;
    let docs_bytes = std::fs::read(&tmp).map_err(|e| Error::io("reading staged documents", e))?;
    std::fs::remove_file(&tmp).ok();
    let queries_json = serde_json::to_vec_pretty(&ds.queries)?;
    let digest = digest_of(&(&ctx.dataset, hex_sha(&docs_bytes), hex_sha(&queries_json)))?;

    let dir = ctx.workspace.artifact_dir("datasets", &ctx.dataset, &digest)?;
    write_file(&dir.join("documents.jsonl"), &docs_bytes)?;
    write_file(&dir.join("queries.json"), &queries_json)?;
    let meta = DatasetMeta {
        name: ctx.dataset.clone(),
        digest: digest.clone(),
        documents: ds.documents.len(),
        queries: ds.queries.len(),
    };
    write_json(&dir.join("dataset.json"), &meta)?;
    write_json(&dir.join("stats.json"), &dataset_stats(&ds))?;
    let mut m = RunManifest::new("ingest", &digest, &ctx.dataset);
    m.seconds_per_narrative
        .insert("ingest".into(), started.elapsed().as_secs_f64() / ds.queries.len() as f64);
    m.finish(&dir)?;
    ctx.workspace.set_ref(&ctx.dataset, "dataset", &dir)?;
    info!("ingested {} documents, {} queries (digest {})", meta.documents, meta.queries, &digest[..12]);
    Ok(dir)
}

fn hex_sha(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn tempfile_path(ctx: &Context, tag: &str) -> PathBuf {
    ctx.workspace.root().join(format!(".{tag}.{}.tmp", std::process::id()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BuildTarget {
    Sparse,
    Dense,
    Graph,
    All,
}

pub fn cmd_build(ctx: &Context, what: BuildTarget) -> Result<Vec<PathBuf>> {
    let targets: &[BuildTarget] = match what {
        BuildTarget::All => &[BuildTarget::Sparse, BuildTarget::Dense, BuildTarget::Graph],
        BuildTarget::Sparse => &[BuildTarget::Sparse],
        BuildTarget::Dense => &[BuildTarget::Dense],
        BuildTarget::Graph => &[BuildTarget::Graph],
    };
    let (ds, meta, ds_dir) = ctx.load_dataset()?;
    let mut out = Vec::new();
    for t in targets {
        out.push(match t {
            BuildTarget::Sparse => build_sparse(ctx, &ds, &meta, &ds_dir)?,
            BuildTarget::Dense => build_dense(ctx, &ds, &meta, &ds_dir)?,
            BuildTarget::Graph => build_graph_artifact(ctx, &ds, &meta, &ds_dir)?,
            BuildTarget::All => unreachable!(),
        });
    }
    Ok(out)
}

fn build_sparse(ctx: &Context, ds: &Dataset, meta: &DatasetMeta, ds_dir: &Path) -> Result<PathBuf> {
    let digest = digest_of(&("sparse", &meta.digest))?;
    let started = Instant::now();
    let index = InvertedIndex::build(ds.test_documents())?;
    let secs = started.elapsed().as_secs_f64();
    let dir = ctx.workspace.artifact_dir("indexes", "sparse", &digest)?;
    write_json(&dir.join("index.json"), &index)?;
    let mut m = RunManifest::new("build sparse", &digest, &ctx.dataset);
    m.seconds_per_narrative.insert("build".into(), secs / ds.attested_queries().len().max(1) as f64);
    m.inputs.push(ctx.rel(ds_dir));
    m.finish(&dir)?;
    ctx.workspace.set_ref(&ctx.dataset, "index_sparse", &dir)?;
    Ok(dir)
}

fn build_dense(ctx: &Context, ds: &Dataset, meta: &DatasetMeta, ds_dir: &Path) -> Result<PathBuf> {
    let digest = digest_of(&("dense", &meta.digest, ctx.provider_identity(false)?))?;
    let embedder = ctx.embedder()?;
    let started = Instant::now();
    let test = build_dense_index(ds.test_documents(), &embedder)?;
    let train_docs = ds.train_documents();
    let train = if train_docs.is_empty() {
        None
    } else {
        Some(build_dense_index(train_docs, &embedder)?)
    };
    let secs = started.elapsed().as_secs_f64();
    let dir = ctx.workspace.artifact_dir("indexes", "dense", &digest)?;
    test.save(&dir, "test")?;
    if let Some(train) = &train {
        train.save(&dir, "train")?;
    }
    let mut m = RunManifest::new("build dense", &digest, &ctx.dataset);
    m.seconds_per_narrative.insert("build".into(), secs / ds.attested_queries().len().max(1) as f64);
    m.embedding_calls = embedder.backend_calls();
    m.inputs.push(ctx.rel(ds_dir));
    m.finish(&dir)?;
    ctx.workspace.set_ref(&ctx.dataset, "index_dense", &dir)?;
    info!("dense index: {} test, {} train rows; {} backend calls", test.len(), train.as_ref().map_or(0, DenseIndex::len), embedder.backend_calls());
    Ok(dir)
}

fn build_graph_artifact(ctx: &Context, ds: &Dataset, meta: &DatasetMeta, ds_dir: &Path) -> Result<PathBuf> {
    let digest = digest_of(&("graph", &meta.digest, ctx.provider_identity(true)?, &ctx.config.graph))?;
    let embedder = ctx.embedder()?;
    let (extractor, summarizer): (Box<dyn Extractor>, Box<dyn Summarizer>) = if ctx.config.mock.enabled {
        (Box::new(MockExtractor), Box::new(MockSummarizer))
    } else {
        let llm = ctx.chat_model();
        (Box::new(LlmExtractor::new(llm.clone())), Box::new(LlmSummarizer::new(llm)))
    };
    // The reference corpus is read without labels.
    let stripped = ds.without_train_labels();
    let train = stripped.train_documents();
    let gc = &ctx.config.graph;
    let started = Instant::now();
    let (mut graph, report) = build_graph(train, extractor.as_ref(), &embedder, gc.max_in_flight)?;
    let communities = leiden_partition(&graph, gc.leiden);
    let summaries =
        summarize_communities(&mut graph, communities, summarizer.as_ref(), &embedder, gc.min_members, gc.max_in_flight)?;
    graph.check_invariants()?;
    let secs = started.elapsed().as_secs_f64();
    let dir = ctx.workspace.artifact_dir("graphs", "graph", &digest)?;
    graph.save(&dir, "graph")?;
    write_json(&dir.join("build_report.json"), &report)?;
    let mut m = RunManifest::new("build graph", &digest, &ctx.dataset);
    m.seconds_per_narrative.insert("build".into(), secs / ds.attested_queries().len().max(1) as f64);
    m.embedding_calls = embedder.backend_calls();
    m.inputs.push(ctx.rel(ds_dir));
    m.finish(&dir)?;
    ctx.workspace.set_ref(&ctx.dataset, "graph", &dir)?;
    info!(
        "graph: {} nodes, {} edges, {} communities, {summaries} summaries, {} extraction failures",
        graph.node_count(),
        graph.edge_count(),
        graph.communities.len(),
        report.failures.len()
    );
    Ok(dir)
}

pub fn cmd_run(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.config.pipeline;
    let variant = cfg.variant;
    let (ds, meta, ds_dir) = ctx.load_dataset()?;
    let mut inputs_used = vec![ctx.rel(&ds_dir)];

    let sparse = if variant == Variant::SparseBaseline {
        let dir = ctx.workspace.require_ref(&ctx.dataset, "index_sparse", "specfi build sparse")?;
        inputs_used.push(ctx.rel(&dir));
        Some(read_json::<InvertedIndex>(&dir.join("index.json"))?)
    } else {
        None
    };
    let (test_index, train_index) = if variant == Variant::SparseBaseline {
        (None, None)
    } else {
        let dir = ctx.workspace.require_ref(&ctx.dataset, "index_dense", "specfi build dense")?;
        inputs_used.push(ctx.rel(&dir));
        let train = if variant.needs_train_index() && dir.join("train.ids.json").exists() {
            Some(DenseIndex::load(&dir, "train")?)
        } else {
            None
        };
        (Some(DenseIndex::load(&dir, "test")?), train)
    };
    let graph = if variant.needs_graph() {
        let dir = ctx.workspace.require_ref(&ctx.dataset, "graph", "specfi build graph")?;
        inputs_used.push(ctx.rel(&dir));
        Some(Graph::load(&dir, "graph")?)
    } else {
        None
    };

    let embedder = ctx.embedder()?;
    let llm = ctx.chat_model();
    let templates = ctx.config.prompts.templates()?;
    let lexicon = RefusalLexicon::default();
    let inputs = PipelineInputs {
        dataset: &ds,
        embedder: &embedder,
        llm: Some(llm.as_ref()),
        templates: &templates,
        test_index: test_index.as_ref(),
        train_index: train_index.as_ref(),
        sparse_index: sparse.as_ref(),
        graph: graph.as_ref(),
        lexicon: &lexicon,
    };
    let digest = digest_of(&(ctx.config_digest()?, &meta.digest, &inputs_used))?;
    let dir = ctx.workspace.artifact_dir("runs", variant.as_str(), &digest)?;
    let mut manifest = RunManifest::new("run", &digest, &ctx.dataset);
    manifest.variant = Some(variant.to_string());
    manifest.inputs = inputs_used;
    manifest.seeds = (0..cfg.runs).map(|r| crate::pipeline::run_seed(cfg.base_seed, r)).collect();

    let (artifact, timings) = match run_pipeline(cfg, &inputs) {
        Ok(v) => v,
        Err(e) => {
            // Nothing partial is kept; the manifest records why the run is invalid.
            std::fs::remove_file(dir.join("artifact.json")).ok();
            manifest.status = Status::Failed;
            manifest.error = Some(e.to_string());
            manifest.finish(&dir)?;
            return Err(e);
        }
    };
    write_file(&dir.join("artifact.json"), &artifact.to_json()?)?;
    for r in &artifact.runs {
        write_json(&dir.join(format!("run_{:02}.json", r.run_index)), r)?;
    }
    manifest.seconds_per_narrative = timings.per_narrative();
    manifest.embedding_calls = embedder.backend_calls();
    manifest.llm_calls = llm.calls();
    manifest.finish(&dir)?;
    ctx.workspace.set_ref(&ctx.dataset, &format!("run_{variant}"), &dir)?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub variant: Variant,
    pub run_dir: String,
    pub average: RunAverage,
}

/// Evaluates the latest run of `variant`, or of every variant that has one.
pub fn cmd_eval(ctx: &Context, variant: Option<Variant>) -> Result<Vec<PathBuf>> {
    let (ds, meta, _) = ctx.load_dataset()?;
    let judgments = ds.all_judgments();
    let runs = selected_runs(ctx, variant)?;
    let mut out = Vec::new();
    for (v, run_dir) in runs {
        let artifact: RunArtifact = read_json(&run_dir.join("artifact.json"))?;
        let evals = artifact.evaluate(&judgments)?;
        let digest = digest_of(&(&meta.digest, ctx.rel(&run_dir)))?;
        let dir = ctx.workspace.artifact_dir("evals", v.as_str(), &digest)?;
        for (i, e) in evals.iter().enumerate() {
            write_json(&dir.join(format!("run_{i:02}.json")), e)?;
            write_file(&dir.join(format!("run_{i:02}.csv")), e.to_csv()?.as_bytes())?;
        }
        let summary = EvalSummary {
            variant: v,
            run_dir: ctx.rel(&run_dir),
            average: average_runs(&evals)?,
        };
        write_json(&dir.join("summary.json"), &summary)?;
        ctx.workspace.set_ref(&ctx.dataset, &format!("eval_{v}"), &dir)?;
        info!("{v}: MAP {:.4} over {} run(s)", summary.average.macro_scores.ap.mean, evals.len());
        out.push(dir);
    }
    Ok(out)
}

fn selected_runs(ctx: &Context, variant: Option<Variant>) -> Result<Vec<(Variant, PathBuf)>> {
    match variant {
        Some(v) => Ok(vec![(
            v,
            ctx.workspace.require_ref(&ctx.dataset, &format!("run_{v}"), &format!("specfi run --variant {v}"))?,
        )]),
        None => {
            let refs = ctx.workspace.refs_with_prefix(&ctx.dataset, "run_")?;
            if refs.is_empty() {
                return Err(Error::InvalidInput(format!("no runs for dataset `{}`; run `specfi run` first", ctx.dataset)));
            }
            refs.into_iter().map(|(name, p)| Ok((name.parse()?, p))).collect()
        }
    }
}

fn load_eval_summaries(ctx: &Context) -> Result<BTreeMap<Variant, EvalSummary>> {
    let mut out = BTreeMap::new();
    for (name, dir) in ctx.workspace.refs_with_prefix(&ctx.dataset, "eval_")? {
        let v: Variant = name.parse()?;
        out.insert(v, read_json(&dir.join("summary.json"))?);
    }
    Ok(out)
}

/// Per-narrative mean AP of every evaluated system, shaped as eval results.
fn mean_ap_results(summaries: &BTreeMap<Variant, EvalSummary>) -> Vec<EvalResult> {
    summaries
        .values()
        .map(|s| EvalResult {
            system: s.variant.to_string(),
            per_narrative: s
                .average
                .per_narrative
                .iter()
                .map(|(id, sc)| {
                    (
                        id.clone(),
                        NarrativeScores {
                            ap: sc.ap.mean,
                            ndcg10: sc.ndcg10.mean,
                            ndcg100: sc.ndcg100.mean,
                            r_precision: sc.r_precision.mean,
                            m_i: 0,
                        },
                    )
                })
                .collect(),
            macro_scores: Default::default(),
            excluded: vec![],
        })
        .collect()
}

/// Correlation analysis of a user-supplied metric table, or of the
/// workspace's own evaluations against freshly computed D_i and V_i.
pub fn cmd_analyze(ctx: &Context, table: Option<&Path>) -> Result<(PathBuf, AnalysisReport)> {
    let params = ctx.config.analysis;
    let (metric_table, name, mut inputs) = match table {
        Some(path) => (MetricTable::load(path)?, "table".to_string(), vec![path.display().to_string()]),
        None => {
            let (ds, _, ds_dir) = ctx.load_dataset()?;
            let summaries = load_eval_summaries(ctx)?;
            if summaries.is_empty() {
                return Err(Error::InvalidInput("no evaluations found; run `specfi eval` first".into()));
            }
            let embedder = ctx.metric_embedder()?;
            let sets = build_sets(&ds, &embedder)?;
            let t = MetricTable::from_sets(&sets, embedder.model(), &mean_ap_results(&summaries))?;
            let mut inputs = vec![ctx.rel(&ds_dir)];
            inputs.extend(summaries.values().map(|s| s.run_dir.clone()));
            (t, ctx.dataset.clone(), inputs)
        }
    };
    let report = analyze(&metric_table, params)?;
    let digest = digest_of(&(&metric_table, &params))?;
    let dir = ctx.workspace.artifact_dir("analysis", &name, &digest)?;
    write_json(&dir.join("metric_table.json"), &metric_table)?;
    write_file(&dir.join("metric_table.csv"), metric_table.to_csv()?.as_bytes())?;
    write_json(&dir.join("report.json"), &report)?;
    write_file(&dir.join("correlations.txt"), render_correlation_table(&report).as_bytes())?;
    let mut m = RunManifest::new("analyze", &digest, &ctx.dataset);
    m.seeds.push(params.seed);
    m.inputs.append(&mut inputs);
    m.finish(&dir)?;
    if table.is_none() {
        ctx.workspace.set_ref(&ctx.dataset, "analysis", &dir)?;
    }
    Ok((dir, report))
}

struct ReportInputs {
    summaries: BTreeMap<Variant, EvalSummary>,
    artifacts: BTreeMap<Variant, RunArtifact>,
    manifests: BTreeMap<Variant, RunManifest>,
    builds: BTreeMap<String, RunManifest>,
    analysis: Option<AnalysisReport>,
    other_datasets: BTreeMap<String, BTreeMap<Variant, f64>>,
}

fn pm(m: crate::pipeline::MeanStd) -> String {
    format!("{:.3} ± {:.3}", m.mean, m.std)
}

fn render_report(dataset: &str, r: &ReportInputs) -> (String, BTreeMap<&'static str, String>) {
    let mut out = String::new();
    let mut csv = BTreeMap::new();
    let _ = writeln!(out, "Dataset: {dataset}");
    if r.summaries.keys().any(|v| v.label_dependent()) {
        let _ = writeln!(
            out,
            "NOTE: `static` draws its few-shot examples from train-split labels; it is shown for reference only."
        );
    }
    let _ = writeln!(out);

    let runs = r.summaries.values().map(|s| s.average.runs).max().unwrap_or(0);
    let _ = writeln!(out, "Retrieval quality (mean ± population std over {runs} run(s))");
    let _ = writeln!(
        out,
        "{:<16} {:>15} {:>15} {:>15} {:>15}",
        "variant", "MAP", "nDCG@10", "nDCG@100", "avg R-Prec"
    );
    let mut quality = String::from("variant,runs,map,map_std,ndcg10,ndcg10_std,ndcg100,ndcg100_std,avg_r_precision,avg_r_precision_std\n");
    for (v, s) in &r.summaries {
        let m = &s.average.macro_scores;
        let _ = writeln!(
            out,
            "{:<16} {:>15} {:>15} {:>15} {:>15}",
            v.as_str(),
            pm(m.ap),
            pm(m.ndcg10),
            pm(m.ndcg100),
            pm(m.r_precision)
        );
        let _ = writeln!(
            quality,
            "{v},{},{},{},{},{},{},{},{},{}",
            s.average.runs,
            m.ap.mean,
            m.ap.std,
            m.ndcg10.mean,
            m.ndcg10.std,
            m.ndcg100.mean,
            m.ndcg100.std,
            m.r_precision.mean,
            m.r_precision.std
        );
    }
    csv.insert("quality.csv", quality);

    let mut per = String::from("narrative_id");
    for v in r.summaries.keys() {
        let _ = write!(per, ",ap_{v}");
    }
    per.push('\n');
    let ids: std::collections::BTreeSet<&String> =
        r.summaries.values().flat_map(|s| s.average.per_narrative.keys()).collect();
    for id in ids {
        per.push_str(id);
        for s in r.summaries.values() {
            let cell = s.average.per_narrative.get(id).map(|x| x.ap.mean.to_string()).unwrap_or_default();
            let _ = write!(per, ",{cell}");
        }
        per.push('\n');
    }
    csv.insert("per_narrative_ap.csv", per);

    if !r.other_datasets.is_empty() {
        let variants: std::collections::BTreeSet<Variant> =
            r.other_datasets.values().flat_map(|m| m.keys().copied()).collect();
        let _ = writeln!(out);
        let _ = writeln!(out, "MAP by dataset");
        let _ = write!(out, "{:<16}", "variant");
        for d in r.other_datasets.keys() {
            let _ = write!(out, " {d:>12}");
        }
        let _ = writeln!(out);
        let mut by_ds = String::from("variant");
        for d in r.other_datasets.keys() {
            let _ = write!(by_ds, ",{d}");
        }
        by_ds.push('\n');
        for v in variants {
            let _ = write!(out, "{:<16}", v.as_str());
            by_ds.push_str(v.as_str());
            for m in r.other_datasets.values() {
                let cell = m.get(&v).map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
                let _ = write!(out, " {cell:>12}");
                let _ = write!(by_ds, ",{}", m.get(&v).map(f64::to_string).unwrap_or_default());
            }
            let _ = writeln!(out);
            by_ds.push('\n');
        }
        csv.insert("map_by_dataset.csv", by_ds);
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "Runtime (wall-clock s / narrative / run)");
    let stages = ["example_selection", "generation", "embedding", "retrieval"];
    let _ = writeln!(
        out,
        "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "variant", "examples", "generation", "embedding", "retrieval", "total"
    );
    let mut timing = String::from("variant,example_selection,generation,embedding,retrieval,total\n");
    for (v, m) in &r.manifests {
        let get = |s: &str| m.seconds_per_narrative.get(s).copied().unwrap_or(0.0);
        let total: f64 = m.seconds_per_narrative.values().sum();
        let _ = writeln!(
            out,
            "{:<16} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            v.as_str(),
            get(stages[0]),
            get(stages[1]),
            get(stages[2]),
            get(stages[3]),
            total
        );
        let _ = writeln!(timing, "{v},{},{},{},{},{total}", get(stages[0]), get(stages[1]), get(stages[2]), get(stages[3]));
    }
    for (what, m) in &r.builds {
        let b = m.seconds_per_narrative.get("build").copied().unwrap_or(0.0);
        let _ = writeln!(out, "{:<16} {:>12.4} (one-off build, s / narrative)", format!("build {what}"), b);
        let _ = writeln!(timing, "build_{what},,,,,{b}");
    }
    csv.insert("timing.csv", timing);

    let gen: Vec<(&Variant, &RunArtifact)> = r.artifacts.iter().filter(|(v, _)| v.generates()).collect();
    if !gen.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Hypothetical documents");
        let mut refusals = String::from("variant,total,flagged,rate,mean_words,std_words\n");
        for (v, a) in gen {
            let rep = a.refusals.clone().unwrap_or_default();
            let w = a.hypothetical_words.unwrap_or_default();
            let _ = writeln!(
                out,
                "{:<16} refusal rate {:.1}% ({} of {} flagged); {:.1} ± {:.1} words",
                v.as_str(),
                100.0 * rep.rate,
                rep.flagged,
                rep.total,
                w.words.mean,
                w.words.std
            );
            let _ = writeln!(refusals, "{v},{},{},{},{},{}", rep.total, rep.flagged, rep.rate, w.words.mean, w.words.std);
        }
        csv.insert("refusals.csv", refusals);
    }

    if let Some(a) = &r.analysis {
        let _ = writeln!(out);
        out.push_str(&render_correlation_table(a));
    }
    (out, csv)
}

fn collect_report_inputs(ctx: &Context) -> Result<ReportInputs> {
    let summaries = load_eval_summaries(ctx)?;
    if summaries.is_empty() {
        return Err(Error::InvalidInput("nothing to report; run `specfi eval` first".into()));
    }
    let mut artifacts = BTreeMap::new();
    let mut manifests = BTreeMap::new();
    for (v, s) in &summaries {
        let dir = ctx.workspace.root().join(&s.run_dir);
        artifacts.insert(*v, read_json(&dir.join("artifact.json"))?);
        manifests.insert(*v, read_json(&dir.join("manifest.json"))?);
    }
    let mut builds = BTreeMap::new();
    for (name, what) in [("index_sparse", "sparse"), ("index_dense", "dense"), ("graph", "graph")] {
        if let Some(dir) = ctx.workspace.get_ref(&ctx.dataset, name)? {
            builds.insert(what.to_string(), read_json(&dir.join("manifest.json"))?);
        }
    }
    let analysis = match ctx.workspace.get_ref(&ctx.dataset, "analysis")? {
        Some(dir) => Some(read_json(&dir.join("report.json"))?),
        None => None,
    };
    let mut other_datasets = BTreeMap::new();
    let refs = ctx.workspace.root().join("refs");
    if let Ok(entries) = std::fs::read_dir(&refs) {
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for d in names {
            let mut row = BTreeMap::new();
            for (name, dir) in ctx.workspace.refs_with_prefix(&d, "eval_")? {
                let s: EvalSummary = read_json(&dir.join("summary.json"))?;
                row.insert(name.parse::<Variant>()?, s.average.macro_scores.ap.mean);
            }
            if !row.is_empty() {
                other_datasets.insert(d, row);
            }
        }
    }
    if other_datasets.len() < 2 {
        other_datasets.clear();
    }
    Ok(ReportInputs {
        summaries,
        artifacts,
        manifests,
        builds,
        analysis,
        other_datasets,
    })
}

/// Renders the text report and CSV bundle. Output depends only on the artifacts read.
pub fn cmd_report(ctx: &Context) -> Result<(PathBuf, String)> {
    let inputs = collect_report_inputs(ctx)?;
    let (text, csv) = render_report(&ctx.dataset, &inputs);
    let digest = digest_of(&(&text, &csv))?;
    let dir = ctx.workspace.artifact_dir("reports", &ctx.dataset, &digest)?;
    write_file(&dir.join("report.txt"), text.as_bytes())?;
    for (name, body) in &csv {
        write_file(&dir.join(name), body.as_bytes())?;
    }
    ctx.workspace.set_ref(&ctx.dataset, "report", &dir)?;
    Ok((dir, text))
}
