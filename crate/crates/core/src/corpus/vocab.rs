use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize_statement, FunctionRecord};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

/// Dense token index. Index 0 is padding, index 1 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from every statement in `corpus`. Tokens seen at
    /// least `min_count` times get indices from 2 upwards, most frequent first
    /// and lexicographic among equals.
    pub fn build(corpus: &[FunctionRecord], min_count: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::data("cannot build a vocabulary from an empty corpus"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for rec in corpus {
            for stmt in &rec.statements {
                for tok in tokenize_statement(stmt) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(
            [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
                .into_iter()
                .chain(kept.into_iter().map(|(t, _)| t))
                .collect(),
        )
    }

    /// Builds from an ordered token list whose first two entries are the
    /// reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::data("vocabulary must start with <PAD> and <UNK>"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the index.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(statements: &[&str]) -> Vec<FunctionRecord> {
        vec![FunctionRecord::new("f", statements.iter().map(|s| s.to_string()).collect(), 0, []).unwrap()]
    }

    #[test]
    fn min_count_filters() {
        let c = corpus(&["a a", "a b"]);
        let v = Vocabulary::build(&c, 2).unwrap();
        assert_eq!(v.tokens(), ["<PAD>", "<UNK>", "a"]);
        assert_eq!(v.index_of("b"), UNK);
    }

    #[test]
    fn min_count_zero_keeps_everything() {
        let c = corpus(&["a a", "a b"]);
        let v = Vocabulary::build(&c, 0).unwrap();
        assert_eq!(v.tokens(), ["<PAD>", "<UNK>", "a", "b"]);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = Vocabulary::build(&corpus(&["c b a"]), 1).unwrap();
        assert_eq!(v.tokens(), ["<PAD>", "<UNK>", "a", "b", "c"]);
    }

    #[test]
    fn empty_token_stream_has_reserved_only() {
        let v = Vocabulary::build(&corpus(&["", "  "]), 0).unwrap();
        assert_eq!(v.tokens(), ["<PAD>", "<UNK>"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(Vocabulary::build(&[], 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::build(&corpus(&["x = y + 1;"]), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }
}
