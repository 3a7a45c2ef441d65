//! Deterministic bag-of-tokens embedder for offline runs and tests.
//!
//! Every token hashes to a sparse signed component vector; a text embeds to
//! the normalized sum over its tokens. Texts sharing tokens therefore share
//! components and have higher cosine similarity.

use crate::embedding::{EmbeddingBackend, EmbeddingVector};
use crate::error::Result;
use crate::sparse::tokenize;

const COMPONENTS_PER_TOKEN: usize = 4;
const EMPTY_TOKEN: &str = "\u{0}empty";

pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn add_token(acc: &mut [f64], token: &str, seed: u64) {
    let mut state = fnv1a(seed, token.as_bytes());
    let dim = acc.len() as u64;
    for _ in 0..COMPONENTS_PER_TOKEN {
        let r = splitmix64(&mut state);
        let idx = (r % dim) as usize;
        let sign = if (r >> 63) == 0 { 1.0 } else { -1.0 };
        acc[idx] += sign;
    }
}

/// Raw (unnormalized) token-bag sum. Falls back to a fixed sentinel token
/// when the text has no tokens or the sum cancels to zero.
pub fn mock_components(text: &str, seed: u64, dimension: usize) -> Vec<f64> {
    assert!(dimension >= 2, "mock embedding dimension must be >= 2");
    let mut acc = vec![0.0; dimension];
    for token in tokenize(text) {
        add_token(&mut acc, &token, seed);
    }
    if acc.iter().all(|&x| x == 0.0) {
        add_token(&mut acc, EMPTY_TOKEN, seed);
    }
    acc
}

pub fn mock_embed(text: &str, seed: u64, dimension: usize) -> EmbeddingVector {
    EmbeddingVector::normalized(mock_components(text, seed, dimension))
        .expect("mock components are finite and nonzero")
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    model: String,
    seed: u64,
    dimension: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64, dimension: usize) -> Self {
        MockEmbedder {
            model: format!("mock-bag-{seed}-{dimension}"),
            seed,
            dimension,
        }
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|t| mock_components(t, self.seed, self.dimension))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_distance;

    #[test]
    fn deterministic() {
        assert_eq!(mock_embed("climate cools", 7, 64), mock_embed("climate cools", 7, 64));
        assert_ne!(mock_embed("climate cools", 7, 64), mock_embed("climate cools", 8, 64));
    }

    #[test]
    fn identical_token_bags_have_zero_distance() {
        let a = mock_embed("b a c a", 1, 128);
        let b = mock_embed("A, c; a b!", 1, 128);
        assert_eq!(cosine_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn shared_tokens_are_closer() {
        // Oracle: the construction computed directly. Each token contributes
        // four signed unit components; the distance follows from the sums.
        let dim = 256;
        let direct = |text: &str| {
            let mut acc = vec![0.0f64; dim];
            for tok in text.split(' ') {
                let mut st = fnv1a(3, tok.as_bytes());
                for _ in 0..4 {
                    let r = splitmix64(&mut st);
                    acc[(r % dim as u64) as usize] += if r >> 63 == 0 { 1.0 } else { -1.0 };
                }
            }
            acc
        };
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            1.0 - d / (na * nb)
        };
        let (abc, abd, xyz) = (direct("a b c"), direct("a b d"), direct("x y z"));
        let near = cos(&abc, &abd);
        let far = cos(&abc, &xyz);
        assert!(near < far, "oracle: {near} vs {far}");

        let e = |t| mock_embed(t, 3, dim);
        let got_near = cosine_distance(&e("a b c"), &e("a b d")).unwrap();
        let got_far = cosine_distance(&e("a b c"), &e("x y z")).unwrap();
        assert!((got_near - near).abs() < 1e-12);
        assert!((got_far - far).abs() < 1e-12);
        assert!(got_near < got_far);
    }

    #[test]
    fn empty_text_still_embeds() {
        let v = mock_embed("", 0, 16);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
}
