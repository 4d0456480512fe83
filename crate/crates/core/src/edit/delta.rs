//! Tokens the target prompt adds to the source prompt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeltaTokens {
    /// Sorted indices into the tokenized target prompt.
    pub indices: Vec<usize>,
    pub words: Vec<String>,
}

impl DeltaTokens {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Maximal runs of consecutive indices, e.g. one run per added object.
    pub fn runs(&self) -> Vec<Vec<usize>> {
        let mut runs: Vec<Vec<usize>> = Vec::new();
        for &i in &self.indices {
            match runs.last_mut() {
                Some(run) if run.last() == Some(&(i - 1)) => run.push(i),
                _ => runs.push(vec![i]),
            }
        }
        runs
    }

    /// Drops indices the text encoder cannot see.
    pub fn truncated(&self, text_len: usize) -> Self {
        let (indices, words) = self
            .indices
            .iter()
            .zip(&self.words)
            .filter(|(&i, _)| i < text_len)
            .map(|(&i, w)| (i, w.clone()))
            .unzip();
        Self { indices, words }
    }

    /// Errors when there is nothing to add.
    pub fn require_non_empty(&self) -> Result<&Self> {
        if self.is_empty() {
            return Err(Error::NoEdit("target prompt adds no tokens to the source prompt".into()));
        }
        Ok(self)
    }
}

/// Target tokens outside a longest common subsequence with the source.
pub fn find_delta_tokens(source: &str, target: &str) -> Result<DeltaTokens> {
    let s = tokenize(source);
    let t = tokenize(target);
    if s.is_empty() || t.is_empty() {
        return Err(Error::config("delta detection needs two non-empty prompts"));
    }
    // lcs[i][j] = LCS length of s[i..] and t[j..]
    let mut lcs = vec![vec![0u32; t.len() + 1]; s.len() + 1];
    for i in (0..s.len()).rev() {
        for j in (0..t.len()).rev() {
            lcs[i][j] = if s[i] == t[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut delta = DeltaTokens::default();
    let (mut i, mut j) = (0, 0);
    while j < t.len() {
        if i < s.len() && s[i] == t[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1 {
            i += 1;
            j += 1;
        } else if i < s.len() && lcs[i + 1][j] == lcs[i][j] {
            i += 1;
        } else {
            delta.indices.push(j);
            delta.words.push(t[j].clone());
            j += 1;
        }
    }
    Ok(delta)
}
