//! Chat-completion models: an HTTP client for the `/v1/chat/completions`
//! wire shape, a deterministic echo mock, and a replay model for recorded
//! responses.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{duration_secs, http_agent, post_json, with_retries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

pub trait ChatModel: Send + Sync {
    fn model(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String>;
    /// Completions requested so far.
    fn calls(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub api_key_env: String,
    pub backoff_ms: u64,
    pub supports_seed: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://localhost:8081/v1/chat/completions".into(),
            model: "gemma-3-27b-it".into(),
            temperature: 1.0,
            max_tokens: 256,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            api_key_env: "SPECFI_API_KEY".into(),
            backoff_ms: 500,
            supports_seed: true,
        }
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpChatModel {
    agent: ureq::Agent,
    config: LlmConfig,
    api_key: Option<String>,
    calls: AtomicUsize,
}

impl HttpChatModel {
    pub fn new(config: LlmConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        HttpChatModel {
            agent: http_agent(config.timeout),
            config,
            api_key,
            calls: AtomicUsize::new(0),
        }
    }
}

impl ChatModel for HttpChatModel {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let mut messages = Vec::with_capacity(2);
        if !request.system.is_empty() {
            messages.push(Message {
                role: "system",
                content: &request.system,
            });
        }
        messages.push(Message {
            role: "user",
            content: &request.user,
        });
        let body = CompletionBody {
            model: &self.config.model,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed.filter(|_| self.config.supports_seed),
        };
        with_retries(self.config.max_retries, self.config.backoff_ms, || {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let resp: CompletionResponse = post_json(
                &self.agent,
                &self.config.endpoint,
                self.api_key.as_deref(),
                &body,
            )?;
            Ok(resp
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .unwrap_or_default())
        })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Parsed `Narrative: …` / `Text: …` pairs of a rendered few-shot prompt.
/// The final pair, whose text is empty, is the generation target.
pub(crate) fn parse_narrative_blocks(user: &str) -> Vec<(String, String)> {
    let mut blocks: Vec<(String, String)> = Vec::new();
    let mut pending: Option<String> = None;
    for line in user.lines() {
        if let Some(rest) = line.strip_prefix("Narrative: ") {
            if let Some(n) = pending.take() {
                blocks.push((n, String::new()));
            }
            pending = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("Text:") {
            if let Some(n) = pending.take() {
                blocks.push((n, rest.trim().to_string()));
            }
        }
    }
    if let Some(n) = pending {
        blocks.push((n, String::new()));
    }
    blocks
}

/// Echoes the target narrative plus a seeded sample of the words of the
/// target's own few-shot example (when the prompt contains one).
#[derive(Debug, Default)]
pub struct MockLlm {
    calls: AtomicUsize,
}

impl MockLlm {
    pub fn new() -> Self {
        Self::default()
    }
}

const MOCK_KEEP_FRACTION: f64 = 0.75;

impl ChatModel for MockLlm {
    fn model(&self) -> &str {
        "mock-echo"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let blocks = parse_narrative_blocks(&request.user);
        let Some((target, _)) = blocks.last() else {
            return Ok(request.user.trim().to_string());
        };
        let example = blocks[..blocks.len() - 1]
            .iter()
            .find(|(n, t)| n == target && !t.is_empty())
            .map(|(_, t)| t.as_str())
            .unwrap_or("");
        let words: Vec<&str> = example.split_whitespace().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed.unwrap_or(0));
        let keep = ((words.len() as f64) * MOCK_KEEP_FRACTION).ceil() as usize;
        let mut picked: Vec<usize> = (0..words.len()).collect();
        picked.shuffle(&mut rng);
        picked.truncate(keep);
        picked.sort_unstable();
        let sampled: Vec<&str> = picked.into_iter().map(|i| words[i]).collect();
        let mut out = target.clone();
        if !sampled.is_empty() {
            out.push(' ');
            out.push_str(&sampled.join(" "));
        }
        let limit = request.max_tokens as usize;
        let truncated: Vec<&str> = out.split_whitespace().take(limit.max(1)).collect();
        Ok(truncated.join(" "))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Replays recorded completions in order.
#[derive(Debug)]
pub struct ReplayChatModel {
    responses: Mutex<VecDeque<String>>,
    calls: AtomicUsize,
}

impl ReplayChatModel {
    pub fn new(responses: impl IntoIterator<Item = String>) -> Self {
        ReplayChatModel {
            responses: Mutex::new(responses.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Reads the assistant contents out of recorded chat-completion response bodies.
    pub fn from_response_bodies(bodies: &[&str]) -> Result<Self> {
        let mut out = Vec::new();
        for body in bodies {
            let resp: CompletionResponse = serde_json::from_str(body)?;
            out.push(
                resp.choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .unwrap_or_default(),
            );
        }
        Ok(Self::new(out))
    }
}

impl ChatModel for ReplayChatModel {
    fn model(&self) -> &str {
        "replay"
    }

    fn complete(&self, _request: &ChatRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| Error::Provider {
                attempts: 1,
                message: "replay model has no recorded responses left".into(),
            })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}
