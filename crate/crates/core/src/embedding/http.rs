//! Client for the de-facto `/v1/embeddings` wire shape.
//!
//! Request: `{"model": "<model>", "input": ["...", ...]}`.
//! Response: `{"data": [{"index": 0, "embedding": [f, ...]}, ...]}`; entries
//! may arrive in any order and are re-sorted by `index`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingBackend, ProviderConfig};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

pub struct HttpEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(config: &ProviderConfig) -> Self {
        HttpEmbedder {
            agent: http_agent(config.timeout),
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            dimension: config.dimension,
            api_key: config.api_key(),
        }
    }
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

/// POSTs a JSON body. Transport failures, 429 and 5xx are retryable
/// `Error::Provider`; other statuses are fatal input errors.
pub(crate) fn post_json<B: Serialize, R: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    endpoint: &str,
    api_key: Option<&str>,
    body: &B,
) -> Result<R> {
    let mut req = agent.post(endpoint).set("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    match req.send_json(body) {
        Ok(resp) => {
            let text = resp
                .into_string()
                .map_err(|e| Error::io(format!("reading response from {endpoint}"), e))?;
            serde_json::from_str(&text).map_err(|e| {
                Error::InvalidInput(format!("malformed response from {endpoint}: {e}"))
            })
        }
        Err(ureq::Error::Status(code, resp)) => {
            let body = resp.into_string().unwrap_or_default();
            let message = format!("{endpoint} returned HTTP {code}: {body}");
            if code == 429 || code >= 500 {
                Err(Error::Provider {
                    attempts: 1,
                    message,
                })
            } else {
                Err(Error::InvalidInput(message))
            }
        }
        Err(ureq::Error::Transport(t)) => Err(Error::Provider {
            attempts: 1,
            message: format!("{endpoint}: {t}"),
        }),
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = EmbeddingRequest {
            model: &self.model,
            input: texts,
        };
        let resp: EmbeddingResponse =
            post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)?;
        if resp.data.len() != texts.len() {
            return Err(Error::InvalidInput(format!(
                "embedding response has {} entries for {} inputs",
                resp.data.len(),
                texts.len()
            )));
        }
        let mut data = resp.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
