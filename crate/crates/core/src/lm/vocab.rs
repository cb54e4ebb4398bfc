use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// Token space shared by a draft and its target.
///
/// Character vocabularies built by [`Vocabulary::from_chars`] put `<bos>` at
/// id 0 and `<eos>` at id 1, followed by characters in first-occurrence order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    bos_id: TokenId,
    eos_id: TokenId,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, bos_id: TokenId, eos_id: TokenId) -> Result<Self> {
        let size = tokens.len();
        if size < 2 {
            return Err(Error::invalid(format!(
                "vocabulary needs at least 2 tokens, got {size}"
            )));
        }
        if bos_id == eos_id {
            return Err(Error::invalid("bos and eos must be distinct token ids"));
        }
        if bos_id as usize >= size || eos_id as usize >= size {
            return Err(Error::invalid(format!(
                "bos ({bos_id}) and eos ({eos_id}) must be < vocabulary size {size}"
            )));
        }
        let mut seen = HashSet::with_capacity(size);
        for tok in &tokens {
            if !seen.insert(tok.as_str()) {
                return Err(Error::invalid(format!("duplicate token string {tok:?}")));
            }
        }
        Ok(Self {
            tokens,
            bos_id,
            eos_id,
        })
    }

    /// Builds a character vocabulary from `text`.
    pub fn from_chars(text: &str) -> Self {
        let mut vocab = Self {
            tokens: vec![BOS_TOKEN.to_string(), EOS_TOKEN.to_string()],
            bos_id: 0,
            eos_id: 1,
        };
        vocab.extend_chars(text);
        vocab
    }

    /// Appends characters of `text` that are not yet in the vocabulary.
    /// Existing ids are left untouched.
    pub fn extend_chars(&mut self, text: &str) {
        let mut seen: HashSet<String> = self.tokens.iter().cloned().collect();
        for ch in text.chars() {
            let s = ch.to_string();
            if seen.insert(s.clone()) {
                self.tokens.push(s);
            }
        }
    }

    /// Vocabulary of `size` anonymous tokens (`<bos>`, `<eos>`, `t2`, `t3`, ...).
    pub fn synthetic(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::invalid(format!(
                "vocabulary needs at least 2 tokens, got {size}"
            )));
        }
        let mut tokens = vec![BOS_TOKEN.to_string(), EOS_TOKEN.to_string()];
        tokens.extend((2..size).map(|i| format!("t{i}")));
        Self::new(tokens, 0, 1)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn bos_id(&self) -> TokenId {
        self.bos_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.tokens
            .iter()
            .position(|t| t == token)
            .map(|i| i as TokenId)
    }

    /// Encodes text character by character. Unknown characters are an error.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let index: std::collections::HashMap<&str, TokenId> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as TokenId))
            .collect();
        let mut buf = [0u8; 4];
        text.chars()
            .map(|ch| {
                let s: &str = ch.encode_utf8(&mut buf);
                index
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("character {ch:?} not in vocabulary")))
            })
            .collect()
    }

    /// Renders ids back to text, skipping `<bos>` and `<eos>`.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id != self.bos_id && id != self.eos_id)
            .filter_map(|&id| self.token(id))
            .collect()
    }
}
