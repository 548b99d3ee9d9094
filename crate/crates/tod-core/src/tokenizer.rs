//! Closed-vocabulary word-level tokenizer.
//!
//! The vocabulary is the set of whitespace tokens of the serialized training
//! sessions plus twelve special tokens on the lowest ids. Tokens unseen at
//! build time encode as `<unk>`; over-length sequences truncate from the left
//! so the most recent turns survive.

use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{serialize_session_full, CorpusSplit};
use crate::error::{CoreError, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// `<pad>`, `<unk>`, then the ten component delimiters.
pub const SPECIAL_TOKENS: [&str; 12] = [
    PAD, UNK, "<sos_u>", "<eos_u>", "<sos_b>", "<eos_b>", "<sos_db>", "<eos_db>", "<sos_a>",
    "<eos_a>", "<sos_r>", "<eos_r>",
];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Default max context, matching the longest input the full-size setup takes.
pub const DEFAULT_MAX_CONTEXT: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(id_to_token: Vec<String>) -> Result<Vocabulary> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if id_to_token.get(i).map(String::as_str) != Some(*special) {
                return Err(CoreError::Config(format!(
                    "vocabulary must start with the special tokens; id {i} is not {special}"
                )));
            }
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(CoreError::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary {
            id_to_token,
            token_to_id,
        })
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// Id of a token that must exist (special tokens, db buckets).
    pub fn expect_id(&self, token: &str) -> u32 {
        self.id(token)
            .unwrap_or_else(|| panic!("token `{token}` missing from vocabulary"))
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    /// Encode with the default context limit.
    pub fn encode(&self, text: &str) -> TokenSequence {
        self.encode_with_limit(text, DEFAULT_MAX_CONTEXT)
    }

    /// Encode whitespace tokens, mapping unknowns to `<unk>` and keeping the
    /// suffix when the sequence exceeds `max_len`.
    pub fn encode_with_limit(&self, text: &str, max_len: usize) -> TokenSequence {
        let mut ids: Vec<u32> = text
            .split_whitespace()
            .map(|t| self.id(t).unwrap_or(UNK_ID))
            .collect();
        if ids.len() > max_len {
            ids.drain(..ids.len() - max_len);
        }
        TokenSequence { ids }
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// SHA-256 over the token list; stored in checkpoints to detect mismatch.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.id_to_token {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hex_string(&hasher.finalize())
    }

    /// Plain-text persistence: one token per line, line number = id.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.id_to_token.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Vocabulary::from_tokens(tokens)
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Build the vocabulary from the train split: specials first, then all train
/// tokens in lexicographic order.
pub fn build_vocab(corpus: &CorpusSplit) -> Result<Vocabulary> {
    if corpus.train.is_empty() {
        return Err(CoreError::EmptyCorpus);
    }
    let mut words = std::collections::BTreeSet::new();
    for session in &corpus.train {
        for token in serialize_session_full(session).split_whitespace() {
            words.insert(token.to_string());
        }
    }
    let mut id_to_token: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    for w in words {
        if !SPECIAL_TOKENS.contains(&w.as_str()) {
            id_to_token.push(w);
        }
    }
    Vocabulary::from_tokens(id_to_token)
}
