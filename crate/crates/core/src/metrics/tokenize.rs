use serde::{Deserialize, Serialize};

/// Lowercased tokens with no empty entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }
}

impl From<Vec<&str>> for TokenSequence {
    /// Builds a sequence from pre-split tokens, lowercasing and dropping empties.
    fn from(tokens: Vec<&str>) -> Self {
        Self(
            tokens
                .into_iter()
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .collect(),
        )
    }
}

impl std::ops::Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

/// Shared tokenizer: lowercase, split on whitespace, trim non-alphanumeric
/// characters from both ends of each token, drop tokens left empty.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(
        text.split_whitespace()
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
    )
}
