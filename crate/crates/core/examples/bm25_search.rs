//! BM25 over the synthetic test split, one query per narrative.
//!
//!     cargo run --example bm25_search

use specfi::ir_metrics::evaluate;
use specfi::sparse::{tokenize, Bm25Params, InvertedIndex};
use specfi::synthetic;

fn main() -> specfi::Result<()> {
    let ds = synthetic::dataset()?;
    let index = InvertedIndex::build(ds.test_documents())?;
    println!("{} documents, {} distinct terms", index.doc_count(), index.postings.len());

    let q = &ds.queries[0];
    println!("\nquery {}: {}", q.id, q.description);
    for t in tokenize(&q.description) {
        println!("  {t:<10} df {:>2}  idf {:.3}", index.document_frequency(&t), index.idf(&t));
    }

    let list = index.search(&q.id, &q.description, 5, Bm25Params::default());
    for (rank, (id, score)) in list.entries.iter().enumerate() {
        let doc = ds.documents.iter().find(|d| &d.id == id).unwrap();
        println!("{:>2}. {id} {score:.3}  {}", rank + 1, doc.text);
    }

    let lists: Vec<_> = ds
        .attested_queries()
        .iter()
        .map(|q| index.search(&q.id, &q.description, 100, Bm25Params::default()))
        .collect();
    let eval = evaluate("bm25", &lists, &ds.all_judgments())?;
    println!("\nMAP {:.3}  nDCG@10 {:.3}", eval.macro_scores.map, eval.macro_scores.ndcg10);
    Ok(())
}
