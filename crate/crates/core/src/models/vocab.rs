use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const EOS: &str = "<eos>";

/// Token strings to contiguous ids. Ids 0..3 are `<unk>`, `<pad>`, `<eos>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const UNK_ID: usize = 0;
    pub const PAD_ID: usize = 1;
    pub const EOS_ID: usize = 2;

    /// Reserved tokens first, then `words` in first-seen order.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for w in [UNK, PAD, EOS] {
            v.insert(w);
        }
        for w in words {
            v.insert(w.as_ref());
        }
        v
    }

    fn insert(&mut self, word: &str) {
        if !self.index.contains_key(word) {
            self.index.insert(word.to_string(), self.tokens.len());
            self.tokens.push(word.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `<unk>` when absent.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != UNK || tokens[1] != PAD || tokens[2] != EOS {
            return Err(Error::invalid("vocabulary must start with <unk>, <pad>, <eos>"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
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

    #[test]
    fn ids_are_contiguous_and_bijective() {
        let v = Vocabulary::new(["the", "dog", "the", "barks"]);
        assert_eq!(v.len(), 6);
        for id in 0..v.len() {
            assert_eq!(v.get(v.token(id).unwrap()), Some(id));
        }
        assert_eq!(v.id("cat"), Vocabulary::UNK_ID);
    }

    #[test]
    fn rejects_duplicates_on_load() {
        let toks = vec![UNK.into(), PAD.into(), EOS.into(), "a".into(), "a".into()];
        assert!(Vocabulary::try_from(toks).is_err());
    }
}
