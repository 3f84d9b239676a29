use serde::{Deserialize, Serialize};

/// Index into a model vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const BOS: TokenId = TokenId(0);
    pub const EOS: TokenId = TokenId(1);
    pub const UNK: TokenId = TokenId(2);
    /// Number of reserved ids at the start of every vocabulary.
    pub const RESERVED: usize = 3;

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_reserved(self) -> bool {
        self.index() < Self::RESERVED
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

/// A query prefix (always led by BOS) followed by generated tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sequence {
    tokens: Vec<TokenId>,
    query_len: usize,
}

impl Sequence {
    /// Starts a sequence `[BOS, query...]`. A leading BOS in `query` is not
    /// duplicated.
    pub fn from_query(query: &[TokenId]) -> Self {
        let mut tokens = Vec::with_capacity(query.len() + 1);
        if query.first() != Some(&TokenId::BOS) {
            tokens.push(TokenId::BOS);
        }
        tokens.extend_from_slice(query);
        let query_len = tokens.len();
        Sequence { tokens, query_len }
    }

    /// Rebuilds a sequence from its full token list and prefix length.
    pub fn from_parts(tokens: Vec<TokenId>, query_len: usize) -> Option<Self> {
        (query_len >= 1 && query_len <= tokens.len()).then_some(Sequence { tokens, query_len })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Query portion including the leading BOS.
    pub fn query(&self) -> &[TokenId] {
        &self.tokens[..self.query_len]
    }

    pub fn query_len(&self) -> usize {
        self.query_len
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.query_len..]
    }

    /// Generated token count, EOS excluded.
    pub fn content_len(&self) -> usize {
        self.generated().iter().filter(|&&t| t != TokenId::EOS).count()
    }

    pub fn is_finished(&self) -> bool {
        self.generated().last() == Some(&TokenId::EOS)
    }

    pub fn push(&mut self, token: TokenId) {
        self.tokens.push(token);
    }

    pub fn with(&self, token: TokenId) -> Sequence {
        let mut next = self.clone();
        next.push(token);
        next
    }

    pub fn shares_query_with(&self, other: &Sequence) -> bool {
        self.query() == other.query()
    }
}
