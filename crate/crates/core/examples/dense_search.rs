//! Exact cosine top-k, with and without hypothetical-document aggregation.
//!
//!     cargo run --example dense_search

use specfi::dense::{aggregate, build_dense_index};
use specfi::embedding::{Embedder, HYDE_INSTRUCTION, NARRATIVE_INSTRUCTION};
use specfi::ir_metrics::average_precision;
use specfi::synthetic;

fn main() -> specfi::Result<()> {
    let ds = synthetic::dataset()?;
    let embedder = Embedder::mock(0, 1024);
    let index = build_dense_index(ds.test_documents(), &embedder)?;
    let q = ds.query("3_3").unwrap();
    let relevant = ds.judgments(&q.id)?;

    let plain = embedder.embed_one(&q.description, NARRATIVE_INSTRUCTION)?;
    let list = index.top_k(&q.id, &plain, 100, 0)?;
    println!("query only:      AP {:.3}", average_precision(&list, &relevant)?);

    // Stand-ins for generated texts: the query plus cluster vocabulary.
    let hypotheticals = [
        "CO2 is harmless. Growers love lush crops and harvest yields.",
        "Photosynthesis thrives. They see greening leaves and food.",
        "Greenhouses add ppm for fertilizer effect on growers.",
    ]
    .map(String::from);
    let vectors = embedder.embed_with(&hypotheticals, HYDE_INSTRUCTION)?;
    let hyde = aggregate(&vectors, None)?;
    let list = index.top_k(&q.id, &hyde, 100, 0)?;
    println!("hypotheticals:   AP {:.3}", average_precision(&list, &relevant)?);
    for (id, score) in list.entries.iter().take(3) {
        println!("  {id} {score:.3}");
    }

    let with_query = aggregate(&vectors, Some(&plain))?;
    let list = index.top_k(&q.id, &with_query, 100, 0)?;
    println!("both:            AP {:.3}", average_precision(&list, &relevant)?);
    Ok(())
}
