//! Prompt tokenization and the hash-seeded token embedding table.
//!
//! There is no pretrained text encoder. Each token string owns a fixed random
//! vector derived from a stable hash of the string and the model seed, so the
//! same word always embeds the same way and changed words are detectable
//! token by token.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const PAD_TOKEN: &str = "<pad>";

/// Lowercased words with surrounding punctuation stripped.
pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    seed: u64,
    dim: usize,
    text_len: usize,
}

impl TextEncoder {
    pub fn new(seed: u64, dim: usize, text_len: usize) -> Self {
        Self {
            seed,
            dim,
            text_len,
        }
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(token.as_bytes()) ^ self.seed.rotate_left(17));
        (0..self.dim)
            .map(|_| {
                let v: f32 = StandardNormal.sample(&mut rng);
                v
            })
            .collect()
    }

    /// Embeds a prompt into `[text_len × dim]`. Longer prompts are truncated,
    /// shorter ones padded with the pad token.
    pub fn encode(&self, prompt: &str) -> Array2<f32> {
        let tokens = tokenize(prompt);
        if tokens.len() > self.text_len {
            log::warn!(
                "prompt has {} tokens, truncating to {}",
                tokens.len(),
                self.text_len
            );
        }
        let pad = self.token_vector(PAD_TOKEN);
        let mut out = Array2::zeros((self.text_len, self.dim));
        for i in 0..self.text_len {
            let v = match tokens.get(i) {
                Some(t) => self.token_vector(t),
                None => pad.clone(),
            };
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&v[..]));
        }
        out
    }
}
