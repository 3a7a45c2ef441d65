//! Talks to OpenAI-compatible embedding and chat endpoints.
//!
//!     SPECFI_EMBED_ENDPOINT=http://localhost:8080/v1/embeddings \
//!     SPECFI_CHAT_ENDPOINT=http://localhost:8081/v1/chat/completions \
//!     SPECFI_API_KEY=... cargo run --example remote_providers
//!
//! Without the endpoint variables it prints the default configuration as TOML.

use specfi::cli::Config;
use specfi::embedding::{Embedder, EmbeddingCache, NARRATIVE_INSTRUCTION};
use specfi::llm::{ChatModel, ChatRequest, HttpChatModel};
use specfi::pipeline::{SYSTEM_PROMPT, USER_TEMPLATE};

fn main() -> specfi::Result<()> {
    let mut config = Config::default();
    let embed = std::env::var("SPECFI_EMBED_ENDPOINT").ok();
    let chat = std::env::var("SPECFI_CHAT_ENDPOINT").ok();
    if embed.is_none() && chat.is_none() {
        print!("{}", config.to_toml()?);
        return Ok(());
    }

    if let Some(endpoint) = embed {
        config.embedding.endpoint = endpoint;
        if let Ok(model) = std::env::var("SPECFI_EMBED_MODEL") {
            config.embedding.model = model;
        }
        let cache = tempfile_dir().join("embeddings");
        let embedder = Embedder::from_config(&config.embedding, EmbeddingCache::on_disk(cache)?)?;
        let v = embedder.embed_one("CO2 is plant food", NARRATIVE_INSTRUCTION)?;
        println!("{}: dimension {}, norm {:.6}", embedder.model(), v.dimension(), v.norm());
    }

    if let Some(endpoint) = chat {
        config.llm.endpoint = endpoint;
        if let Ok(model) = std::env::var("SPECFI_CHAT_MODEL") {
            config.llm.model = model;
        }
        let llm = HttpChatModel::new(config.llm.clone());
        let user = USER_TEMPLATE
            .replace("{examples}", "")
            .replace("{query}", "Climate impacts are not bad. CO2 is harmless or even beneficial");
        let text = llm.complete(&ChatRequest {
            system: SYSTEM_PROMPT.into(),
            user,
            temperature: config.llm.temperature,
            max_tokens: config.llm.max_tokens,
            seed: Some(0),
        })?;
        println!("{}: {text}", llm.model());
    }
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    std::env::temp_dir().join("specfi-remote-example")
}
