//! Hypothetical-document retrieval for narrative queries: few-shot example
//! selection, prompt assembly, generation, aggregation and ranking, plus the
//! baseline and direct-expansion variants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, Document, NarrativeQuery};
use crate::dense::{aggregate, DenseIndex, RankedList};
use crate::embedding::{Embedder, HYDE_INSTRUCTION, NARRATIVE_INSTRUCTION};
use crate::error::{Error, Result};
use crate::graph::{graph_search, top_high_level_element, Graph, SearchParams};
use crate::ir_metrics::{evaluate, EvalResult};
use crate::llm::{ChatModel, ChatRequest};
use crate::sparse::{Bm25Params, InvertedIndex};

pub const SYSTEM_PROMPT: &str = "You are a disinformation investigator. Your first step is to generate short disinformation texts that sound like actual ones. You get a disinformation narrative and return a disinformation text that aligns with that narrative. Return only 1 single text!";

pub const USER_TEMPLATE: &str = "You are a disinformation investigator. Given a disinformation narrative, generate a short, realistic text (such as a news excerpt, blog post, or social media post) that supports or aligns with that narrative. The text should sound plausible and could be found in the wild.\n\nHere are some examples: {examples}\n\nNarrative: {query}\nText:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub system: String,
    /// Must contain `{examples}` and `{query}`.
    pub user: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: SYSTEM_PROMPT.into(),
            user: USER_TEMPLATE.into(),
        }
    }
}

impl PromptTemplates {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Result<Self> {
        let t = PromptTemplates {
            system: system.into(),
            user: user.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for p in ["{examples}", "{query}"] {
            if !self.user.contains(p) {
                return Err(Error::MissingPlaceholder(if p == "{query}" { "query" } else { "examples" }));
            }
        }
        Ok(())
    }

    pub fn from_files(system: &Path, user: &Path) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading template {}", p.display()), e))
        };
        Self::new(read(system)?.trim_end().to_string(), read(user)?.trim_end().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ZeroShot,
    Static,
    SpecfiDr,
    SpecfiCs,
    CsDirect,
    DenseBaseline,
    SparseBaseline,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::ZeroShot,
        Variant::Static,
        Variant::SpecfiDr,
        Variant::SpecfiCs,
        Variant::CsDirect,
        Variant::DenseBaseline,
        Variant::SparseBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ZeroShot => "zero_shot",
            Variant::Static => "static",
            Variant::SpecfiDr => "specfi_dr",
            Variant::SpecfiCs => "specfi_cs",
            Variant::CsDirect => "cs_direct",
            Variant::DenseBaseline => "dense_baseline",
            Variant::SparseBaseline => "sparse_baseline",
        }
    }

    /// Variants that call the chat model.
    pub fn generates(self) -> bool {
        matches!(
            self,
            Variant::ZeroShot | Variant::Static | Variant::SpecfiDr | Variant::SpecfiCs
        )
    }

    pub fn needs_graph(self) -> bool {
        matches!(self, Variant::SpecfiCs | Variant::CsDirect)
    }

    pub fn needs_train_index(self) -> bool {
        matches!(self, Variant::SpecfiDr | Variant::SpecfiCs | Variant::CsDirect)
    }

    pub fn label_dependent(self) -> bool {
        self == Variant::Static
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleSource {
    DenseNearest,
    CommunitySummary,
    StaticLabeled,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub narrative_id: String,
    pub example_text: String,
    pub source: ExampleSource,
    /// Train document or graph node the text came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

impl FewShotExample {
    fn none(narrative_id: &str) -> Self {
        FewShotExample {
            narrative_id: narrative_id.to_string(),
            example_text: String::new(),
            source: ExampleSource::None,
            origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub n_hypotheticals: usize,
    pub runs: usize,
    pub k: usize,
    pub base_seed: u64,
    pub include_query_in_aggregate: bool,
    pub include_own_example: bool,
    pub include_unattested: bool,
    pub temperature: f64,
    pub max_tokens: u32,
    pub query_instruction: String,
    pub hyde_instruction: String,
    pub search: SearchParams,
    pub bm25: Bm25Params,
    pub max_in_flight: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: Variant::SpecfiDr,
            n_hypotheticals: 10,
            runs: 10,
            k: 100,
            base_seed: 0,
            include_query_in_aggregate: false,
            include_own_example: true,
            include_unattested: false,
            temperature: 1.0,
            max_tokens: 256,
            query_instruction: NARRATIVE_INSTRUCTION.into(),
            hyde_instruction: HYDE_INSTRUCTION.into(),
            search: SearchParams::default(),
            bm25: Bm25Params::default(),
            max_in_flight: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_hypotheticals == 0 {
            return Err(Error::InvalidInput("n_hypotheticals must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidInput("runs must be at least 1".into()));
        }
        if self.k < 100 {
            return Err(Error::InvalidInput(format!(
                "k = {} is below 100; nDCG@100 would not be computable",
                self.k
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::InvalidInput("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// Hex sha256 of the canonical JSON of `value`.
pub fn digest_of<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_parts(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

pub fn run_seed(base_seed: u64, run_index: usize) -> u64 {
    hash_parts(&[b"run", &base_seed.to_le_bytes(), &(run_index as u64).to_le_bytes()])
}

pub fn hypothetical_seed(seed_run: u64, narrative_id: &str, index: usize) -> u64 {
    hash_parts(&[
        b"hyp",
        &seed_run.to_le_bytes(),
        narrative_id.as_bytes(),
        &(index as u64).to_le_bytes(),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypotheticalDoc {
    pub narrative_id: String,
    pub text: String,
    pub run_index: usize,
    pub index: usize,
    pub seed: u64,
    pub refusal_flags: Vec<String>,
}

fn texts_by_id<'a>(docs: &[&'a Document]) -> BTreeMap<&'a str, &'a str> {
    docs.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect()
}

/// Top-1 train document per query by cosine similarity of the instructed
/// query embedding. Labels are never consulted.
pub fn select_examples_dr(
    queries: &[&NarrativeQuery],
    train_index: &DenseIndex,
    train_docs: &[&Document],
    embedder: &Embedder,
    instruction: &str,
) -> Result<Vec<FewShotExample>> {
    if train_index.is_empty() || train_docs.is_empty() {
        return Err(Error::InvalidInput("train split is empty".into()));
    }
    let texts = texts_by_id(train_docs);
    let descriptions: Vec<String> = queries.iter().map(|q| q.description.clone()).collect();
    let vectors = embedder.embed_with(&descriptions, instruction)?;
    queries
        .iter()
        .zip(&vectors)
        .map(|(q, v)| {
            let top = train_index.top_k(&q.id, v, 1, 0)?;
            let (id, _) = top
                .entries
                .first()
                .ok_or_else(|| Error::InvalidInput("train split is empty".into()))?;
            let text = texts.get(id.as_str()).ok_or_else(|| {
                Error::Invariant(format!("train index holds `{id}`, which is not a train document"))
            })?;
            Ok(FewShotExample {
                narrative_id: q.id.clone(),
                example_text: text.to_string(),
                source: ExampleSource::DenseNearest,
                origin: Some(id.clone()),
            })
        })
        .collect()
}

/// Dense-nearest fallback used by the community-summary selection.
pub struct DenseFallback<'a> {
    pub train_index: &'a DenseIndex,
    pub train_docs: &'a [&'a Document],
}

/// Top-ranked community summary per query. Queries whose search reaches no
/// summary node fall back to the dense-nearest train text, with a warning.
pub fn select_examples_cs(
    queries: &[&NarrativeQuery],
    graph: &Graph,
    embedder: &Embedder,
    instruction: &str,
    params: SearchParams,
    fallback: Option<&DenseFallback<'_>>,
) -> Result<(Vec<FewShotExample>, Vec<String>)> {
    let mut examples = Vec::with_capacity(queries.len());
    let mut warnings = Vec::new();
    let mut missing = Vec::new();
    for q in queries {
        let v = embedder.embed_one(&q.description, instruction)?;
        let result = graph_search(&q.description, &v, graph, params)?;
        if !result.converged {
            warn!("graph search for `{}` did not converge", q.id);
        }
        match top_high_level_element(&result, graph) {
            Some((text, node)) => examples.push(FewShotExample {
                narrative_id: q.id.clone(),
                example_text: text,
                source: ExampleSource::CommunitySummary,
                origin: Some(format!("node:{node}")),
            }),
            None => {
                missing.push(examples.len());
                examples.push(FewShotExample::none(&q.id));
            }
        }
    }
    if missing.is_empty() {
        return Ok((examples, warnings));
    }
    let fb = fallback.ok_or_else(|| {
        Error::InvalidInput("graph search found no summary and no train index is available for the fallback".into())
    })?;
    let fallback_queries: Vec<&NarrativeQuery> = missing.iter().map(|&i| queries[i]).collect();
    let dense = select_examples_dr(&fallback_queries, fb.train_index, fb.train_docs, embedder, instruction)?;
    for (&i, ex) in missing.iter().zip(dense) {
        let msg = format!("no community summary reached for `{}`; using the dense-nearest train text", ex.narrative_id);
        warn!("{msg}");
        warnings.push(msg);
        examples[i] = ex;
    }
    Ok((examples, warnings))
}

/// First train document labeled with each query, by ascending doc id.
pub fn select_examples_static(queries: &[&NarrativeQuery], train_docs: &[&Document]) -> Vec<FewShotExample> {
    let mut sorted: Vec<&&Document> = train_docs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    queries
        .iter()
        .map(|q| match sorted.iter().find(|d| d.labels.contains(&q.id)) {
            Some(d) => FewShotExample {
                narrative_id: q.id.clone(),
                example_text: d.text.clone(),
                source: ExampleSource::StaticLabeled,
                origin: Some(d.id.clone()),
            },
            None => FewShotExample::none(&q.id),
        })
        .collect()
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders the few-shot block and substitutes the target description.
///
/// `examples` are rendered in the order given; `descriptions` maps every
/// example's narrative id to its query text. Examples with source `none` are
/// skipped, as is the target's own pair when `include_own` is false.
pub fn assemble_prompt(
    target: &NarrativeQuery,
    examples: &[FewShotExample],
    descriptions: &BTreeMap<String, String>,
    templates: &PromptTemplates,
    include_own: bool,
) -> Result<(String, String)> {
    templates.validate()?;
    let mut blocks = Vec::new();
    for ex in examples {
        if ex.source == ExampleSource::None || (!include_own && ex.narrative_id == target.id) {
            continue;
        }
        let desc = descriptions
            .get(&ex.narrative_id)
            .ok_or_else(|| Error::UnknownNarrative(ex.narrative_id.clone()))?;
        blocks.push(format!("Narrative: {}\nText: {}", one_line(desc), one_line(&ex.example_text)));
    }
    let rendered = if blocks.is_empty() {
        String::new()
    } else {
        format!("\n{}", blocks.join("\n\n"))
    };
    let user = templates
        .user
        .replace("{examples}", &rendered)
        .replace("{query}", &one_line(&target.description));
    Ok((templates.system.clone(), user))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationParams {
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
}

fn complete_nonempty(llm: &dyn ChatModel, request: &ChatRequest) -> Result<String> {
    for attempt in 0..2 {
        let text = llm.complete(request)?;
        let text = text.trim();
        if !text.is_empty() {
            return Ok(text.to_string());
        }
        if attempt == 0 {
            warn!("empty completion (seed {:?}); retrying once", request.seed);
        }
    }
    Err(Error::Provider {
        attempts: 2,
        message: "model returned an empty completion twice".into(),
    })
}

/// `params.n` independent completions of one prompt, in index order.
pub fn generate_hypotheticals(
    system: &str,
    user: &str,
    llm: &dyn ChatModel,
    params: GenerationParams,
    seed_run: u64,
    narrative_id: &str,
    run_index: usize,
) -> Result<Vec<HypotheticalDoc>> {
    if params.n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let requests: Vec<ChatRequest> = (0..params.n)
        .map(|i| ChatRequest {
            system: system.to_string(),
            user: user.to_string(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            seed: Some(hypothetical_seed(seed_run, narrative_id, i)),
        })
        .collect();
    let workers = params.max_in_flight.clamp(1, params.n);
    let mut texts: Vec<Option<Result<String>>> = (0..params.n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let requests = &requests;
                s.spawn(move || {
                    (w..requests.len())
                        .step_by(workers)
                        .map(|i| (i, complete_nonempty(llm, &requests[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("generation worker panicked") {
                texts[i] = Some(r);
            }
        }
    });
    texts
        .into_iter()
        .zip(requests)
        .enumerate()
        .map(|(i, (text, req))| {
            Ok(HypotheticalDoc {
                narrative_id: narrative_id.to_string(),
                text: text.expect("every index generated")?,
                run_index,
                index: i,
                seed: req.seed.expect("seeded"),
                refusal_flags: Vec::new(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalPattern {
    pub category: String,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefusalLexicon {
    pub patterns: Vec<RefusalPattern>,
}

const DIRECT_REFUSAL: &[&str] = &[
    "i cannot",
    "i can't",
    "i can not",
    "i won't",
    "i will not",
    "i am unable",
    "i'm unable",
    "i am not able to",
    "i'm not able to",
    "i must decline",
    "i refuse",
    "i'm sorry, but",
    "i am sorry, but",
];

const ROLE_BREAKING: &[&str] = &[
    "as an ai",
    "as a language model",
    "as an assistant",
    "i am an ai",
    "i'm an ai",
    "my guidelines",
    "my programming",
];

const SAFETY_LANGUAGE: &[&str] = &[
    "this is disinformation",
    "this is misinformation",
    "spreading misinformation",
    "spreading disinformation",
    "harmful content",
    "scientific consensus is clear",
    "i must emphasize",
    "for educational purposes",
    "disclaimer:",
];

impl Default for RefusalLexicon {
    fn default() -> Self {
        let mut patterns = Vec::new();
        for (category, list) in [
            ("direct_refusal", DIRECT_REFUSAL),
            ("role_breaking", ROLE_BREAKING),
            ("safety_language", SAFETY_LANGUAGE),
        ] {
            patterns.extend(list.iter().map(|p| RefusalPattern {
                category: category.into(),
                pattern: p.to_string(),
            }));
        }
        RefusalLexicon { patterns }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefusalReport {
    pub total: usize,
    pub flagged: usize,
    pub rate: f64,
    pub by_category: BTreeMap<String, usize>,
}

/// Case-insensitive substring scan; writes each document's matched
/// categories into its `refusal_flags`.
pub fn scan_refusals(docs: &mut [HypotheticalDoc], lexicon: &RefusalLexicon) -> Result<RefusalReport> {
    if lexicon.patterns.is_empty() {
        return Err(Error::InvalidInput("refusal lexicon is empty".into()));
    }
    let patterns: Vec<(String, &str)> = lexicon
        .patterns
        .iter()
        .map(|p| (p.pattern.to_lowercase(), p.category.as_str()))
        .collect();
    let mut report = RefusalReport {
        total: docs.len(),
        ..Default::default()
    };
    for d in docs.iter_mut() {
        let lower = d.text.to_lowercase().replace('\u{2019}', "'");
        let hits: BTreeSet<&str> = patterns
            .iter()
            .filter(|(p, _)| lower.contains(p.as_str()))
            .map(|(_, c)| *c)
            .collect();
        d.refusal_flags = hits.iter().map(|c| c.to_string()).collect();
        if !hits.is_empty() {
            report.flagged += 1;
        }
        for c in hits {
            *report.by_category.entry(c.to_string()).or_default() += 1;
        }
    }
    report.rate = if report.total == 0 {
        0.0
    } else {
        report.flagged as f64 / report.total as f64
    };
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd::default();
        }
        // Summation rounding would otherwise leave a tiny spread on identical runs.
        if values.iter().all(|v| *v == values[0]) {
            return MeanStd { mean: values[0], std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WordStats {
    pub count: usize,
    pub words: MeanStd,
}

impl WordStats {
    pub fn of<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let counts: Vec<f64> = texts
            .into_iter()
            .map(|t| t.split_whitespace().count() as f64)
            .collect();
        WordStats {
            count: counts.len(),
            words: MeanStd::of(&counts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub lists: Vec<RankedList>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hypotheticals: Vec<HypotheticalDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub variant: Variant,
    pub dataset: String,
    pub config_digest: String,
    pub config: PipelineConfig,
    pub embedding_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_model: Option<String>,
    pub label_dependent: bool,
    pub examples: Vec<FewShotExample>,
    pub runs: Vec<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusals: Option<RefusalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothetical_words: Option<WordStats>,
    pub generation_calls: usize,
    pub warnings: Vec<String>,
}

impl RunArtifact {
    pub fn system_name(&self) -> String {
        self.variant.to_string()
    }

    /// One evaluation per run.
    pub fn evaluate(&self, judgments: &BTreeMap<String, BTreeSet<String>>) -> Result<Vec<EvalResult>> {
        self.runs
            .iter()
            .map(|r| evaluate(&self.system_name(), &r.lists, judgments))
            .collect()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}

/// Wall-clock seconds per pipeline stage, summed over all narratives and runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub narratives: usize,
    pub runs: usize,
    pub seconds: BTreeMap<String, f64>,
}

impl StageTimings {
    fn add(&mut self, stage: &str, since: Instant) {
        *self.seconds.entry(stage.to_string()).or_default() += since.elapsed().as_secs_f64();
    }

    /// Seconds per narrative per run, by stage.
    pub fn per_narrative(&self) -> BTreeMap<String, f64> {
        let denom = (self.narratives * self.runs.max(1)).max(1) as f64;
        self.seconds.iter().map(|(k, v)| (k.clone(), v / denom)).collect()
    }

    pub fn total_per_narrative(&self) -> f64 {
        self.per_narrative().values().sum()
    }
}

/// Everything a run may need; which fields are required depends on the variant.
pub struct PipelineInputs<'a> {
    pub dataset: &'a Dataset,
    pub embedder: &'a Embedder,
    pub llm: Option<&'a dyn ChatModel>,
    pub templates: &'a PromptTemplates,
    pub test_index: Option<&'a DenseIndex>,
    pub train_index: Option<&'a DenseIndex>,
    pub sparse_index: Option<&'a InvertedIndex>,
    pub graph: Option<&'a Graph>,
    pub lexicon: &'a RefusalLexicon,
}

fn require<'a, T: ?Sized>(v: Option<&'a T>, what: &str, variant: Variant) -> Result<&'a T> {
    v.ok_or_else(|| Error::InvalidInput(format!("variant `{variant}` requires {what}")))
}

#[derive(Serialize)]
struct DigestInput<'a> {
    config: &'a PipelineConfig,
    dataset: &'a str,
    embedding_model: &'a str,
    llm_model: Option<&'a str>,
    templates: &'a PromptTemplates,
}

/// Runs every configured run of one variant. Non-static variants only ever
/// see a label-stripped copy of the dataset.
pub fn run_pipeline(config: &PipelineConfig, inputs: &PipelineInputs<'_>) -> Result<(RunArtifact, StageTimings)> {
    config.validate()?;
    inputs.templates.validate()?;
    let variant = config.variant;
    let stripped;
    let ds: &Dataset = if variant.label_dependent() {
        inputs.dataset
    } else {
        stripped = inputs.dataset.without_train_labels();
        &stripped
    };
    let embedder = inputs.embedder;
    let llm = if variant.generates() {
        Some(require(inputs.llm, "a chat model", variant)?)
    } else {
        None
    };

    let targets = ds.attested_queries();
    if targets.is_empty() {
        return Err(Error::InvalidInput("no narrative has a relevant test document".into()));
    }
    let context: Vec<&NarrativeQuery> = if config.include_unattested {
        ds.queries.iter().collect()
    } else {
        targets.clone()
    };
    let descriptions: BTreeMap<String, String> =
        ds.queries.iter().map(|q| (q.id.clone(), q.description.clone())).collect();
    let train_docs = ds.train_documents();

    let mut timings = StageTimings {
        narratives: targets.len(),
        runs: config.runs,
        ..Default::default()
    };
    let mut warnings = Vec::new();

    let t = Instant::now();
    let examples = match variant {
        Variant::ZeroShot | Variant::DenseBaseline | Variant::SparseBaseline => Vec::new(),
        Variant::Static => select_examples_static(&context, &train_docs),
        Variant::SpecfiDr => select_examples_dr(
            &context,
            require(inputs.train_index, "the train dense index", variant)?,
            &train_docs,
            embedder,
            &config.query_instruction,
        )?,
        Variant::SpecfiCs | Variant::CsDirect => {
            let fallback = inputs.train_index.map(|train_index| DenseFallback {
                train_index,
                train_docs: &train_docs,
            });
            let (ex, w) = select_examples_cs(
                &context,
                require(inputs.graph, "a summarized graph", variant)?,
                embedder,
                &config.query_instruction,
                config.search,
                fallback.as_ref(),
            )?;
            warnings.extend(w);
            ex
        }
    };
    if !examples.is_empty() {
        timings.add("example_selection", t);
    }
    for ex in examples.iter().filter(|e| e.source == ExampleSource::None) {
        let msg = format!("no few-shot example for `{}`", ex.narrative_id);
        warn!("{msg}");
        warnings.push(msg);
    }

    let calls_before = llm.map(|l| l.calls()).unwrap_or(0);
    let gen = GenerationParams {
        n: config.n_hypotheticals,
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        max_in_flight: config.max_in_flight,
    };
    let mut runs = Vec::with_capacity(config.runs);
    for run_index in 0..config.runs {
        let seed = run_seed(config.base_seed, run_index);
        let mut lists = Vec::with_capacity(targets.len());
        let mut hypotheticals = Vec::new();
        for target in &targets {
            let list = match variant {
                Variant::SparseBaseline => {
                    let index = require(inputs.sparse_index, "the sparse index", variant)?;
                    let t = Instant::now();
                    let mut l = index.search(&target.id, &target.description, config.k, config.bm25);
                    timings.add("retrieval", t);
                    l.run_seed = seed;
                    l
                }
                Variant::DenseBaseline | Variant::CsDirect => {
                    let index = require(inputs.test_index, "the test dense index", variant)?;
                    let mut text = target.description.clone();
                    if variant == Variant::CsDirect {
                        if let Some(ex) = examples
                            .iter()
                            .find(|e| e.narrative_id == target.id && e.source != ExampleSource::None)
                        {
                            text.push(' ');
                            text.push_str(&ex.example_text);
                        }
                    }
                    let t = Instant::now();
                    let q = embedder.embed_one(&text, &config.query_instruction)?;
                    timings.add("embedding", t);
                    let t = Instant::now();
                    let l = index.top_k(&target.id, &q, config.k, seed)?;
                    timings.add("retrieval", t);
                    l
                }
                _ => {
                    let index = require(inputs.test_index, "the test dense index", variant)?;
                    let llm = llm.expect("generating variants have a chat model");
                    let (system, user) =
                        assemble_prompt(target, &examples, &descriptions, inputs.templates, config.include_own_example)?;
                    let t = Instant::now();
                    let docs = generate_hypotheticals(&system, &user, llm, gen, seed, &target.id, run_index)?;
                    timings.add("generation", t);
                    let t = Instant::now();
                    let texts: Vec<String> = docs.iter().map(|d| d.text.clone()).collect();
                    let vectors = embedder.embed_with(&texts, &config.hyde_instruction)?;
                    let query = if config.include_query_in_aggregate {
                        Some(embedder.embed_one(&target.description, &config.query_instruction)?)
                    } else {
                        None
                    };
                    let q = aggregate(&vectors, query.as_ref())?;
                    timings.add("embedding", t);
                    let t = Instant::now();
                    let l = index.top_k(&target.id, &q, config.k, seed)?;
                    timings.add("retrieval", t);
                    hypotheticals.extend(docs);
                    l
                }
            };
            lists.push(list);
        }
        info!("{variant} run {run_index} finished ({} narratives)", lists.len());
        runs.push(RunRecord {
            run_index,
            seed,
            lists,
            hypotheticals,
        });
    }

    let (refusals, hypothetical_words) = if variant.generates() {
        let mut all: Vec<HypotheticalDoc> = runs.iter_mut().flat_map(|r| r.hypotheticals.drain(..)).collect();
        let report = scan_refusals(&mut all, inputs.lexicon)?;
        let words = WordStats::of(all.iter().map(|d| d.text.as_str()));
        for d in all {
            runs[d.run_index].hypotheticals.push(d);
        }
        (Some(report), Some(words))
    } else {
        (None, None)
    };

    let llm_model = llm.map(|l| l.model().to_string());
    let config_digest = digest_of(&DigestInput {
        config,
        dataset: &ds.name,
        embedding_model: embedder.model(),
        llm_model: llm_model.as_deref(),
        templates: inputs.templates,
    })?;
    let artifact = RunArtifact {
        variant,
        dataset: ds.name.clone(),
        config_digest,
        config: config.clone(),
        embedding_model: embedder.model().to_string(),
        llm_model,
        label_dependent: variant.label_dependent(),
        examples,
        runs,
        refusals,
        hypothetical_words,
        generation_calls: llm.map(|l| l.calls()).unwrap_or(0) - calls_before,
        warnings,
    };
    Ok((artifact, timings))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub ap: MeanStd,
    pub ndcg10: MeanStd,
    pub ndcg100: MeanStd,
    pub r_precision: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAverage {
    pub system: String,
    pub runs: usize,
    pub per_narrative: BTreeMap<String, ScoreSummary>,
    /// `ap` holds MAP and `r_precision` the average R-Precision.
    #[serde(rename = "macro")]
    pub macro_scores: ScoreSummary,
}

/// Mean and population standard deviation across runs, per narrative and
/// for the macro scores.
pub fn average_runs(per_run: &[EvalResult]) -> Result<RunAverage> {
    let first = per_run
        .first()
        .ok_or_else(|| Error::InvalidInput("no runs to average".into()))?;
    let summarize = |get: &dyn Fn(&EvalResult) -> Option<[f64; 4]>| -> Result<ScoreSummary> {
        let mut cols: [Vec<f64>; 4] = Default::default();
        for r in per_run {
            let vals = get(r).ok_or_else(|| {
                Error::InvalidInput(format!("run of `{}` is missing a narrative present in the first run", r.system))
            })?;
            for (c, v) in cols.iter_mut().zip(vals) {
                c.push(v);
            }
        }
        Ok(ScoreSummary {
            ap: MeanStd::of(&cols[0]),
            ndcg10: MeanStd::of(&cols[1]),
            ndcg100: MeanStd::of(&cols[2]),
            r_precision: MeanStd::of(&cols[3]),
        })
    };
    let mut per_narrative = BTreeMap::new();
    for id in first.per_narrative.keys() {
        let s = summarize(&|r: &EvalResult| {
            r.per_narrative
                .get(id)
                .map(|s| [s.ap, s.ndcg10, s.ndcg100, s.r_precision])
        })?;
        per_narrative.insert(id.clone(), s);
    }
    let macro_scores = summarize(&|r: &EvalResult| {
        let m = &r.macro_scores;
        Some([m.map, m.ndcg10, m.ndcg100, m.avg_r_precision])
    })?;
    Ok(RunAverage {
        system: first.system.clone(),
        runs: per_run.len(),
        per_narrative,
        macro_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::ir_metrics::{MacroScores, NarrativeScores};
    use crate::llm::MockLlm;

    fn q(id: &str, d: &str) -> NarrativeQuery {
        NarrativeQuery {
            id: id.into(),
            description: d.into(),
        }
    }

    fn ex(id: &str, text: &str) -> FewShotExample {
        FewShotExample {
            narrative_id: id.into(),
            example_text: text.into(),
            source: ExampleSource::DenseNearest,
            origin: None,
        }
    }

    fn descs() -> BTreeMap<String, String> {
        [("a", "Alpha claim"), ("b", "Beta claim")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn variants_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        assert_eq!("specfi-cs".parse::<Variant>().unwrap(), Variant::SpecfiCs);
        assert!("hyde".parse::<Variant>().is_err());
    }

    #[test]
    fn templates_need_placeholders() {
        assert!(PromptTemplates::default().validate().is_ok());
        assert!(matches!(
            PromptTemplates::new("s", "Narrative: {query}"),
            Err(Error::MissingPlaceholder("examples"))
        ));
        assert!(matches!(PromptTemplates::new("s", "{examples}"), Err(Error::MissingPlaceholder("query"))));
    }

    #[test]
    fn zero_shot_prompt_has_empty_block() {
        let (sys, user) =
            assemble_prompt(&q("a", "Alpha claim"), &[], &descs(), &PromptTemplates::default(), true).unwrap();
        assert_eq!(sys, SYSTEM_PROMPT);
        assert!(user.contains("Here are some examples: \n\nNarrative: Alpha claim\nText:"));
        assert_eq!(crate::llm::parse_narrative_blocks(&user).len(), 1);
    }

    #[test]
    fn two_examples_in_order_and_deterministic() {
        let examples = [ex("a", "first\ntext"), ex("b", "second text")];
        let t = PromptTemplates::default();
        let (_, user) = assemble_prompt(&q("b", "Beta claim"), &examples, &descs(), &t, true).unwrap();
        let a = user.find("Narrative: Alpha claim\nText: first text").unwrap();
        let b = user.find("Narrative: Beta claim\nText: second text").unwrap();
        assert!(a < b);
        assert!(user.ends_with("\n\nNarrative: Beta claim\nText:"));
        let again = assemble_prompt(&q("b", "Beta claim"), &examples, &descs(), &t, true).unwrap();
        assert_eq!(user, again.1);
        let (_, without) = assemble_prompt(&q("b", "Beta claim"), &examples, &descs(), &t, false).unwrap();
        assert!(!without.contains("second text"));
        assert!(without.contains("first text"));
    }

    #[test]
    fn static_selection_takes_lowest_id() {
        let docs = [
            Document::new("t9", "later", ["a"], Split::Train),
            Document::new("t1", "earlier", ["a"], Split::Train),
            Document::new("t5", "other", ["c"], Split::Train),
        ];
        let refs: Vec<&Document> = docs.iter().collect();
        let out = select_examples_static(&[&q("a", "A"), &q("b", "B")], &refs);
        assert_eq!(out[0].example_text, "earlier");
        assert_eq!(out[0].source, ExampleSource::StaticLabeled);
        assert_eq!(out[1].source, ExampleSource::None);
        assert!(out[1].example_text.is_empty());
    }

    #[test]
    fn dense_selection_finds_identical_text() {
        let docs = [
            Document::new("t1", "ocean levels stable", Vec::<String>::new(), Split::Train),
            Document::new("t2", "sun drives climate", Vec::<String>::new(), Split::Train),
        ];
        let refs: Vec<&Document> = docs.iter().collect();
        let e = Embedder::mock(3, 64);
        let index = crate::dense::build_dense_index(refs.iter().copied(), &e).unwrap();
        let queries = [q("x", "sun drives climate"), q("y", "ocean levels stable")];
        let qs: Vec<&NarrativeQuery> = queries.iter().collect();
        let out = select_examples_dr(&qs, &index, &refs, &e, "").unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].origin.as_deref(), Some("t2"));
        assert_eq!(out[1].origin.as_deref(), Some("t1"));
        let empty = DenseIndex::new(vec![], vec![], e.model());
        if let Ok(empty) = empty {
            assert!(select_examples_dr(&qs, &empty, &[], &e, "").is_err());
        }
    }

    #[test]
    fn mock_generation_is_deterministic() {
        let llm = MockLlm::new();
        let examples = [ex("a", "one two three four five six seven eight")];
        let (s, u) =
            assemble_prompt(&q("a", "Alpha claim"), &examples, &descs(), &PromptTemplates::default(), true).unwrap();
        let params = GenerationParams {
            n: 3,
            temperature: 1.0,
            max_tokens: 256,
            max_in_flight: 2,
        };
        let a = generate_hypotheticals(&s, &u, &llm, params, 7, "a", 0).unwrap();
        let b = generate_hypotheticals(&s, &u, &llm, params, 7, "a", 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|d| d.index).collect::<Vec<_>>(), [0, 1, 2]);
        assert!(a.iter().all(|d| d.text.starts_with("Alpha claim")));
        assert_eq!(llm.calls(), 6);
    }

    struct Blank(std::sync::atomic::AtomicUsize);

    impl ChatModel for Blank {
        fn model(&self) -> &str {
            "blank"
        }
        fn complete(&self, _: &ChatRequest) -> Result<String> {
            self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok("  ".into())
        }
        fn calls(&self) -> usize {
            self.0.load(std::sync::atomic::Ordering::SeqCst)
        }
    }

    #[test]
    fn empty_completion_retried_once() {
        let llm = Blank(Default::default());
        let params = GenerationParams {
            n: 1,
            temperature: 1.0,
            max_tokens: 8,
            max_in_flight: 1,
        };
        assert!(generate_hypotheticals("s", "u", &llm, params, 0, "a", 0).is_err());
        assert_eq!(llm.calls(), 2);
    }

    #[test]
    fn seeds_differ_by_part() {
        let r0 = run_seed(1, 0);
        assert_ne!(r0, run_seed(1, 1));
        assert_ne!(r0, run_seed(2, 0));
        assert_ne!(hypothetical_seed(r0, "a", 0), hypothetical_seed(r0, "a", 1));
        assert_ne!(hypothetical_seed(r0, "a", 0), hypothetical_seed(r0, "b", 0));
        assert_eq!(hypothetical_seed(r0, "a", 3), hypothetical_seed(r0, "a", 3));
    }

    fn hyp(text: &str) -> HypotheticalDoc {
        HypotheticalDoc {
            narrative_id: "a".into(),
            text: text.into(),
            run_index: 0,
            index: 0,
            seed: 0,
            refusal_flags: vec![],
        }
    }

    #[test]
    fn refusal_scan() {
        let mut docs = vec![
            hyp("I cannot help with that."),
            hyp("CO2 is plant food and greening the planet."),
            hyp("As an AI, I can\u{2019}t write this."),
        ];
        let r = scan_refusals(&mut docs, &RefusalLexicon::default()).unwrap();
        assert_eq!(docs[0].refusal_flags, ["direct_refusal"]);
        assert!(docs[1].refusal_flags.is_empty());
        assert_eq!(docs[2].refusal_flags, ["direct_refusal", "role_breaking"]);
        assert_eq!(r.flagged, 2);
        assert!((r.rate - 2.0 / 3.0).abs() < 1e-15);
        assert!(scan_refusals(&mut docs, &RefusalLexicon { patterns: vec![] }).is_err());
    }

    fn eval(map: f64) -> EvalResult {
        let s = NarrativeScores {
            ap: map,
            ndcg10: map,
            ndcg100: map,
            r_precision: map,
            m_i: 1,
        };
        EvalResult {
            system: "s".into(),
            per_narrative: [("a".to_string(), s)].into_iter().collect(),
            macro_scores: MacroScores {
                map,
                ndcg10: map,
                ndcg100: map,
                avg_r_precision: map,
            },
            excluded: vec![],
        }
    }

    #[test]
    fn averaging() {
        let one = average_runs(&[eval(0.3)]).unwrap();
        assert_eq!(one.macro_scores.ap.std, 0.0);
        let two = average_runs(&[eval(0.4), eval(0.6)]).unwrap();
        assert!((two.macro_scores.ap.mean - 0.5).abs() < 1e-15);
        assert!((two.macro_scores.ap.std - 0.1).abs() < 1e-15);
        assert!((two.per_narrative["a"].ndcg10.std - 0.1).abs() < 1e-15);
        let same = average_runs(&[eval(0.2), eval(0.2), eval(0.2)]).unwrap();
        assert_eq!(same.macro_scores.r_precision.std, 0.0);
        assert!(average_runs(&[]).is_err());
    }

    #[test]
    fn config_bounds() {
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        c.k = 99;
        assert!(c.validate().is_err());
        c = PipelineConfig {
            n_hypotheticals: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let a = digest_of(&PipelineConfig::default()).unwrap();
        let b = digest_of(&PipelineConfig {
            base_seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a, b);
    }
}
