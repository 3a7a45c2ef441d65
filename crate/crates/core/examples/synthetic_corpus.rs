//! Regenerates the shipped synthetic corpus, or writes it elsewhere.
//!
//!     cargo run --example synthetic_corpus -- [out_dir]

use specfi::synthetic;

fn main() -> specfi::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(synthetic::shipped_dir);
    synthetic::write_files(&dir)?;
    let ds = synthetic::dataset()?;
    println!(
        "{} documents ({} train), {} narratives -> {}",
        ds.documents.len(),
        ds.train_documents().len(),
        ds.queries.len(),
        dir.display()
    );
    Ok(())
}
