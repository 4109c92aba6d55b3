//! Closed token inventory with reserved pad/eos/bos entries.

use std::collections::HashMap;
use std::path::Path;

use super::{CoreError, TokenId};

pub const PAD_TOKEN: &str = "<pad>";
pub const EOS_TOKEN: &str = "<eos>";
pub const BOS_TOKEN: &str = "<bos>";

/// Token inventory. The first three entries are always pad, eos, bos, in that
/// order, so `pad_id == 0`, `eos_id == 1`, `bos_id == 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from content token strings (specials are prepended).
    pub fn new(content_tokens: &[&str]) -> Result<Vocabulary, CoreError> {
        let mut tokens: Vec<String> =
            vec![PAD_TOKEN.to_string(), EOS_TOKEN.to_string(), BOS_TOKEN.to_string()];
        tokens.extend(content_tokens.iter().map(|t| t.to_string()));
        Vocabulary::from_tokens(tokens)
    }

    /// Builds from a complete token list whose first three entries must be
    /// pad/eos/bos.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary, CoreError> {
        if tokens.len() < 4 {
            return Err(CoreError::invariant("vocabulary needs pad/eos/bos plus at least one content token"));
        }
        if tokens[0] != PAD_TOKEN || tokens[1] != EOS_TOKEN || tokens[2] != BOS_TOKEN {
            return Err(CoreError::invariant(format!(
                "first three tokens must be {PAD_TOKEN}/{EOS_TOKEN}/{BOS_TOKEN}, got {:?}",
                &tokens[..3.min(tokens.len())]
            )));
        }
        let mut index = HashMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(CoreError::invariant("empty token string"));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(CoreError::invariant(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Character vocabulary over the first `n` lowercase letters.
    pub fn ascii_alphabet(n: usize) -> Result<Vocabulary, CoreError> {
        if n == 0 || n > 26 {
            return Err(CoreError::invariant("alphabet size must be in 1..=26"));
        }
        let letters: Vec<String> =
            (0..n).map(|i| char::from(b'a' + i as u8).to_string()).collect();
        let refs: Vec<&str> = letters.iter().map(|s| s.as_str()).collect();
        Vocabulary::new(&refs)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn pad_id(&self) -> TokenId {
        0
    }

    pub fn eos_id(&self) -> TokenId {
        1
    }

    pub fn bos_id(&self) -> TokenId {
        2
    }

    /// Content token ids, i.e. everything past the three specials.
    pub fn content_ids(&self) -> impl Iterator<Item = TokenId> {
        3..self.tokens.len()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Greedy longest-match tokenization. Content tokens are usually single
    /// characters, but special tokens like `<eos>` may appear spelled out in
    /// text (dataset files store references with their explicit eos marker).
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, CoreError> {
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let best = self
                .tokens
                .iter()
                .enumerate()
                .filter(|(_, tok)| rest.starts_with(tok.as_str()))
                .max_by_key(|(_, tok)| tok.len());
            match best {
                Some((id, tok)) => {
                    ids.push(id);
                    pos += tok.len();
                }
                None => {
                    return Err(CoreError::UnknownToken { text: text.to_string(), position: pos })
                }
            }
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&id| self.tokens[id].as_str()).collect()
    }

    /// Writes one token per line; the first three lines are pad/eos/bos.
    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary, CoreError> {
        let text = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        Vocabulary::from_tokens(tokens)
    }
}
