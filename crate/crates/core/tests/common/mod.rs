#![allow(dead_code)]

use specfi::corpus::Dataset;
use specfi::dense::{build_dense_index, DenseIndex};
use specfi::embedding::Embedder;
use specfi::graph::{
    build_graph, leiden_partition, summarize_communities, Graph, LeidenParams, MockExtractor,
    MockSummarizer, MIN_COMMUNITY_MEMBERS,
};
use specfi::llm::MockLlm;
use specfi::pipeline::{
    run_pipeline, PipelineConfig, PipelineInputs, PromptTemplates, RefusalLexicon, RunArtifact,
};
use specfi::sparse::InvertedIndex;

pub const DIM: usize = 1024;

/// Indexes and graph over one dataset, built the way the CLI builds them.
pub struct Built {
    pub dataset: Dataset,
    pub embedder: Embedder,
    pub test: DenseIndex,
    pub train: DenseIndex,
    pub sparse: InvertedIndex,
    pub graph: Graph,
}

impl Built {
    pub fn new(dataset: Dataset) -> Self {
        let embedder = Embedder::mock(0, DIM);
        let test = build_dense_index(dataset.test_documents(), &embedder).unwrap();
        let train = build_dense_index(dataset.train_documents(), &embedder).unwrap();
        let sparse = InvertedIndex::build(dataset.test_documents()).unwrap();
        let stripped = dataset.without_train_labels();
        let (mut graph, _) = build_graph(stripped.train_documents(), &MockExtractor, &embedder, 4).unwrap();
        let communities = leiden_partition(&graph, LeidenParams::default());
        summarize_communities(&mut graph, communities, &MockSummarizer, &embedder, MIN_COMMUNITY_MEMBERS, 4).unwrap();
        Built { dataset, embedder, test, train, sparse, graph }
    }

    pub fn run(&self, config: &PipelineConfig) -> RunArtifact {
        let llm = MockLlm::new();
        let templates = PromptTemplates::default();
        let lexicon = RefusalLexicon::default();
        let inputs = PipelineInputs {
            dataset: &self.dataset,
            embedder: &self.embedder,
            llm: Some(&llm),
            templates: &templates,
            test_index: Some(&self.test),
            train_index: Some(&self.train),
            sparse_index: Some(&self.sparse),
            graph: Some(&self.graph),
            lexicon: &lexicon,
        };
        run_pipeline(config, &inputs).unwrap().0
    }
}

pub fn adjacency(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    adj
}
