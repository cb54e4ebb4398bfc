use crate::error::{Error, Result};
use crate::lm::{TokenId, Vocabulary};

/// A decoding context: starts with `<bos>`, holds only in-range ids, and
/// carries `<eos>` only as its final element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Context {
    tokens: Vec<TokenId>,
}

impl Context {
    pub fn new(vocab: &Vocabulary, tokens: Vec<TokenId>) -> Result<Self> {
        match tokens.first() {
            None => return Err(Error::invalid("context is empty")),
            Some(&first) if first != vocab.bos_id() => {
                return Err(Error::invalid(format!(
                    "context must start with bos ({}), got {first}",
                    vocab.bos_id()
                )))
            }
            _ => {}
        }
        check_tokens(vocab, &tokens)?;
        if let Some(pos) = tokens.iter().position(|&t| t == vocab.eos_id()) {
            if pos + 1 != tokens.len() {
                return Err(Error::invalid(format!(
                    "eos at position {pos} is not the final context element"
                )));
            }
        }
        Ok(Self { tokens })
    }

    /// `<bos>` followed by the character encoding of `text`.
    pub fn from_text(vocab: &Vocabulary, text: &str) -> Result<Self> {
        let mut tokens = vec![vocab.bos_id()];
        tokens.extend(vocab.encode(text)?);
        Self::new(vocab, tokens)
    }

    /// `<bos>` followed by `body`.
    pub fn with_bos(vocab: &Vocabulary, body: &[TokenId]) -> Result<Self> {
        let mut tokens = Vec::with_capacity(body.len() + 1);
        tokens.push(vocab.bos_id());
        tokens.extend_from_slice(body);
        Self::new(vocab, tokens)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ends_with(&self, token: TokenId) -> bool {
        self.tokens.last() == Some(&token)
    }
}

impl AsRef<[TokenId]> for Context {
    fn as_ref(&self) -> &[TokenId] {
        &self.tokens
    }
}

pub(crate) fn check_tokens(vocab: &Vocabulary, tokens: &[TokenId]) -> Result<()> {
    match tokens.iter().find(|&&t| t as usize >= vocab.size()) {
        Some(t) => Err(Error::invalid(format!(
            "token id {t} out of range for vocabulary of size {}",
            vocab.size()
        ))),
        None => Ok(()),
    }
}
