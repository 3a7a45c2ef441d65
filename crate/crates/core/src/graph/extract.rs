//! Unit extraction: entities, relationships and semantic units per text.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{ChatModel, ChatRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub source: String,
    pub predicate: String,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub relationships: Vec<Relationship>,
    #[serde(default)]
    pub semantic_units: Vec<String>,
}

pub trait Extractor: Send + Sync {
    fn extract(&self, text: &str) -> Result<Extraction>;
}

/// Case-folds, trims surrounding punctuation and collapses inner whitespace.
pub fn normalize_entity(surface: &str) -> String {
    surface
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Runs `extractor` and enforces the output contract: normalized, unique,
/// non-empty entities; relationships only between extracted entities.
pub fn extract_units(text: &str, extractor: &dyn Extractor) -> Result<Extraction> {
    if text.trim().is_empty() {
        return Err(Error::InvalidInput("cannot extract units from an empty text".into()));
    }
    let raw = extractor.extract(text)?;
    let mut seen = BTreeSet::new();
    let entities: Vec<String> = raw
        .entities
        .iter()
        .map(|e| normalize_entity(e))
        .filter(|e| !e.is_empty() && seen.insert(e.clone()))
        .collect();
    let relationships = raw
        .relationships
        .into_iter()
        .filter_map(|r| {
            let source = normalize_entity(&r.source);
            let target = normalize_entity(&r.target);
            let predicate = r.predicate.split_whitespace().collect::<Vec<_>>().join(" ");
            if source == target || !seen.contains(&source) || !seen.contains(&target) {
                log::debug!("dropping relationship {source:?} -> {target:?}");
                return None;
            }
            Some(Relationship {
                source,
                predicate: if predicate.is_empty() { "related_to".into() } else { predicate },
                target,
            })
        })
        .collect();
    let semantic_units = raw
        .semantic_units
        .iter()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect();
    Ok(Extraction {
        entities,
        relationships,
        semantic_units,
    })
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "as", "at", "but", "by", "for", "from", "he", "her", "his", "i", "if",
    "in", "is", "it", "its", "no", "not", "of", "on", "or", "our", "she", "so", "that", "the",
    "their", "there", "these", "they", "this", "those", "to", "we", "what", "when", "while",
    "with", "yes", "you",
];

fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word.to_lowercase().as_str())
}

pub(crate) fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        cur.push(c);
        let boundary = matches!(c, '.' | '!' | '?')
            && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if boundary || c == '\n' {
            let s = cur.split_whitespace().collect::<Vec<_>>().join(" ");
            if s.chars().any(char::is_alphanumeric) {
                out.push(s);
            }
            cur.clear();
        }
    }
    let s = cur.split_whitespace().collect::<Vec<_>>().join(" ");
    if s.chars().any(char::is_alphanumeric) {
        out.push(s);
    }
    out
}

/// Deterministic extractor: maximal runs of capitalized words are entities,
/// consecutive entities in a sentence are related by the words between
/// them, and each sentence is a semantic unit.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockExtractor;

impl Extractor for MockExtractor {
    fn extract(&self, text: &str) -> Result<Extraction> {
        let mut out = Extraction::default();
        for sentence in split_sentences(text) {
            // Each word, trimmed of punctuation, with whether it opens a new span.
            let words: Vec<&str> = sentence
                .split_whitespace()
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                .filter(|w| !w.is_empty())
                .collect();
            let mut spans: Vec<(usize, usize)> = Vec::new();
            let mut i = 0;
            while i < words.len() {
                let capital = |w: &str| w.chars().next().is_some_and(char::is_uppercase);
                if capital(words[i]) && !is_stopword(words[i]) {
                    let start = i;
                    while i < words.len() && capital(words[i]) && !is_stopword(words[i]) {
                        i += 1;
                    }
                    spans.push((start, i));
                } else {
                    i += 1;
                }
            }
            let names: Vec<String> = spans.iter().map(|&(s, e)| words[s..e].join(" ")).collect();
            out.entities.extend(names.iter().cloned());
            for (pair, names) in spans.windows(2).zip(names.windows(2)) {
                let between = words[pair[0].1..pair[1].0]
                    .iter()
                    .map(|w| w.to_lowercase())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.relationships.push(Relationship {
                    source: names[0].clone(),
                    predicate: between,
                    target: names[1].clone(),
                });
            }
            out.semantic_units.push(sentence);
        }
        Ok(out)
    }
}

pub const EXTRACTION_SYSTEM_PROMPT: &str = "You extract structured knowledge from short texts. Answer with a single JSON object and nothing else.";

pub const EXTRACTION_USER_TEMPLATE: &str = "Extract from the text below:\n- \"entities\": named entities, organisations, people, places and key concepts;\n- \"relationships\": objects {\"source\", \"predicate\", \"target\"} between those entities;\n- \"semantic_units\": short self-contained sentences that paraphrase each distinct claim.\n\nText: {text}";

/// Extraction through a chat model returning JSON.
pub struct LlmExtractor {
    llm: Arc<dyn ChatModel>,
    pub max_tokens: u32,
}

impl LlmExtractor {
    pub fn new(llm: Arc<dyn ChatModel>) -> Self {
        LlmExtractor { llm, max_tokens: 1024 }
    }
}

/// Parses a model reply, tolerating code fences and surrounding prose.
pub(crate) fn parse_extraction(raw: &str) -> Result<Extraction> {
    let fail = |message: String| Error::Extraction {
        message,
        raw: raw.to_string(),
    };
    let start = raw.find('{').ok_or_else(|| fail("no JSON object in reply".into()))?;
    let end = raw.rfind('}').ok_or_else(|| fail("unterminated JSON object".into()))?;
    if end < start {
        return Err(fail("unterminated JSON object".into()));
    }
    serde_json::from_str(&raw[start..=end]).map_err(|e| fail(e.to_string()))
}

impl Extractor for LlmExtractor {
    fn extract(&self, text: &str) -> Result<Extraction> {
        let request = ChatRequest {
            system: EXTRACTION_SYSTEM_PROMPT.into(),
            user: EXTRACTION_USER_TEMPLATE.replace("{text}", text),
            temperature: 0.0,
            max_tokens: self.max_tokens,
            seed: Some(0),
        };
        parse_extraction(&self.llm.complete(&request)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_rule_on_short_claim() {
        let e = extract_units("Solar panels beat Coal.", &MockExtractor).unwrap();
        assert_eq!(e.entities, ["solar", "coal"]);
        assert_eq!(e.semantic_units, ["Solar panels beat Coal."]);
        assert_eq!(
            e.relationships,
            [Relationship {
                source: "solar".into(),
                predicate: "panels beat".into(),
                target: "coal".into()
            }]
        );
    }

    #[test]
    fn multiword_spans_and_stopwords() {
        let e = extract_units(
            "The Intergovernmental Panel on Climate Change said so. It was the IPCC!",
            &MockExtractor,
        )
        .unwrap();
        assert_eq!(e.entities, ["intergovernmental panel", "climate change", "ipcc"]);
        assert_eq!(e.semantic_units.len(), 2);
        assert_eq!(e.relationships[0].predicate, "on");
    }

    #[test]
    fn empty_text_rejected() {
        assert!(extract_units("   ", &MockExtractor).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_entity("  The  IPCC, "), "the ipcc");
        assert_eq!(normalize_entity("\"CO2\""), "co2");
    }

    #[test]
    fn malformed_reply_keeps_raw() {
        match parse_extraction("sorry, no json here") {
            Err(Error::Extraction { raw, .. }) => assert_eq!(raw, "sorry, no json here"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_extraction("{\"entities\": 3}"), Err(Error::Extraction { .. })));
        let ok = parse_extraction("```json\n{\"entities\":[\"A\"]}\n```").unwrap();
        assert_eq!(ok.entities, ["A"]);
    }

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        assert_eq!(
            split_sentences("One. Two? 3.5 degrees!\nFour"),
            ["One.", "Two?", "3.5 degrees!", "Four"]
        );
    }
}
