use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::TokenId;

pub const BOS_TEXT: &str = "<bos>";
pub const EOS_TEXT: &str = "<eos>";
pub const UNK_TEXT: &str = "<unk>";

/// Bidirectional token/string map. Ids 0..3 are always BOS, EOS, UNK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from non-reserved words, in the given order.
    pub fn from_words<I, W>(words: I) -> Self
    where
        I: IntoIterator<Item = W>,
        W: Into<String>,
    {
        let mut all = vec![BOS_TEXT.to_owned(), EOS_TEXT.to_owned(), UNK_TEXT.to_owned()];
        all.extend(words.into_iter().map(Into::into));
        Vocab::from(all)
    }

    /// `w3, w4, ...` placeholder names for models without a text vocabulary.
    pub fn placeholder(vocab_size: usize) -> Self {
        Vocab::from_words((TokenId::RESERVED..vocab_size.max(TokenId::RESERVED)).map(|i| format!("w{i}")))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.index.get(word).copied().unwrap_or(TokenId::UNK)
    }

    pub fn get(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.words.get(id.index()).map(String::as_str)
    }

    /// Whitespace tokenization; unknown words map to UNK.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// Joins tokens with single spaces, dropping BOS and EOS.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&t| t != TokenId::BOS && t != TokenId::EOS)
            .map(|&t| self.word(t).unwrap_or(UNK_TEXT))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), TokenId::from(i))).collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}
