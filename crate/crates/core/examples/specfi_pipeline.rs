//! Every retrieval variant on the synthetic corpus with offline providers.
//!
//!     cargo run --example specfi_pipeline

use specfi::dense::build_dense_index;
use specfi::embedding::Embedder;
use specfi::graph::{
    build_graph, leiden_partition, summarize_communities, LeidenParams, MockExtractor,
    MockSummarizer, MIN_COMMUNITY_MEMBERS,
};
use specfi::llm::MockLlm;
use specfi::pipeline::{
    average_runs, run_pipeline, PipelineConfig, PipelineInputs, PromptTemplates, RefusalLexicon,
    Variant,
};
use specfi::sparse::InvertedIndex;
use specfi::synthetic;

fn main() -> specfi::Result<()> {
    let ds = synthetic::dataset()?;
    let embedder = Embedder::mock(0, 1024);
    let test = build_dense_index(ds.test_documents(), &embedder)?;
    let train = build_dense_index(ds.train_documents(), &embedder)?;
    let sparse = InvertedIndex::build(ds.test_documents())?;
    let stripped = ds.without_train_labels();
    let (mut graph, _) = build_graph(stripped.train_documents(), &MockExtractor, &embedder, 4)?;
    let communities = leiden_partition(&graph, LeidenParams::default());
    summarize_communities(&mut graph, communities, &MockSummarizer, &embedder, MIN_COMMUNITY_MEMBERS, 4)?;

    let llm = MockLlm::new();
    let templates = PromptTemplates::default();
    let lexicon = RefusalLexicon::default();
    let inputs = PipelineInputs {
        dataset: &ds,
        embedder: &embedder,
        llm: Some(&llm),
        templates: &templates,
        test_index: Some(&test),
        train_index: Some(&train),
        sparse_index: Some(&sparse),
        graph: Some(&graph),
        lexicon: &lexicon,
    };
    let judgments = ds.all_judgments();

    println!("{:<16} {:>15} {:>8} {:>7}", "variant", "MAP", "nDCG@10", "calls");
    for variant in Variant::ALL {
        let config = PipelineConfig { variant, runs: 3, ..Default::default() };
        let (artifact, _) = run_pipeline(&config, &inputs)?;
        let avg = average_runs(&artifact.evaluate(&judgments)?)?;
        let m = avg.macro_scores;
        println!(
            "{:<16} {:>7.3} ± {:.3} {:>8.3} {:>7}",
            variant.as_str(),
            m.ap.mean,
            m.ap.std,
            m.ndcg10.mean,
            artifact.generation_calls
        );
    }

    let config = PipelineConfig { variant: Variant::SpecfiDr, runs: 1, n_hypotheticals: 2, ..Default::default() };
    let (artifact, _) = run_pipeline(&config, &inputs)?;
    let h = &artifact.runs[0].hypotheticals[0];
    println!("\nexample hypothetical for {}: {}", h.narrative_id, h.text);
    Ok(())
}
