//! Raw metadata text to canonical tags.
//!
//! A token is accent-folded (canonical decomposition, combining marks dropped),
//! lowercased, stripped of everything but ASCII letters, digits and the
//! configured preserved characters, then checked against the minimum length
//! and the stopword list. Stemming is available but off by default.

use std::collections::BTreeSet;
use std::fmt;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::ingest::StopwordList;

/// A normalized keyword token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tag(String);

impl Tag {
    /// Wraps text that is already in normalized form (lowercase, no
    /// whitespace). Returns `None` otherwise.
    pub fn from_normalized(text: &str) -> Option<Tag> {
        let ok = !text.is_empty()
            && text
                .chars()
                .all(|c| !c.is_whitespace() && !c.is_uppercase() && !c.is_control());
        ok.then(|| Tag(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Tag {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub type TagSet = BTreeSet<Tag>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    Stopword,
    TooShort,
    EmptyAfterStrip,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rejection::Stopword => "stopword",
            Rejection::TooShort => "too_short",
            Rejection::EmptyAfterStrip => "empty_after_strip",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemLanguage {
    #[default]
    English,
    Portuguese,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("min_token_length must be at least 1")]
    MinLength,
    #[error("preserved character `{0}` is a letter or digit")]
    PreservedAlphanumeric(char),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    pub stopwords: StopwordList,
    pub min_token_length: usize,
    pub preserved_characters: String,
    pub stemming_enabled: bool,
    #[serde(default)]
    pub stem_language: StemLanguage,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig {
            stopwords: StopwordList::default(),
            min_token_length: 2,
            preserved_characters: "+#".to_string(),
            stemming_enabled: false,
            stem_language: StemLanguage::English,
        }
    }
}

impl NormalizerConfig {
    pub fn with_stopwords(stopwords: StopwordList) -> Self {
        NormalizerConfig {
            stopwords,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_token_length < 1 {
            return Err(ConfigError::MinLength);
        }
        if let Some(c) = self
            .preserved_characters
            .chars()
            .find(|c| c.is_alphanumeric())
        {
            return Err(ConfigError::PreservedAlphanumeric(c));
        }
        Ok(())
    }
}

/// Accent-fold and lowercase, keeping every other character.
pub fn fold_text(raw: &str) -> String {
    raw.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

fn strip(folded: &str, preserved: &str) -> String {
    folded
        .chars()
        .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || preserved.contains(*c))
        .collect()
}

fn check(text: String, config: &NormalizerConfig) -> Result<Tag, Rejection> {
    if text.is_empty() {
        return Err(Rejection::EmptyAfterStrip);
    }
    if text.chars().count() < config.min_token_length {
        return Err(Rejection::TooShort);
    }
    if config.stopwords.contains(&text) {
        return Err(Rejection::Stopword);
    }
    Ok(Tag(text))
}

pub fn normalize_token(raw: &str, config: &NormalizerConfig) -> Result<Tag, Rejection> {
    let tag = check(strip(&fold_text(raw), &config.preserved_characters), config)?;
    if config.stemming_enabled {
        check(stem(&tag, config.stem_language).0, config)
    } else {
        Ok(tag)
    }
}

/// Whitespace tokenization followed by [`normalize_token`]; rejected tokens
/// are dropped and duplicates collapse.
pub fn extract_tags(raw_blob: &str, config: &NormalizerConfig) -> TagSet {
    raw_blob
        .split_whitespace()
        .filter_map(|tok| normalize_token(tok, config).ok())
        .collect()
}

/// Snowball suffix stripping for the configured language.
pub fn stem(tag: &Tag, language: StemLanguage) -> Tag {
    let algorithm = match language {
        StemLanguage::English => Algorithm::English,
        StemLanguage::Portuguese => Algorithm::Portuguese,
    };
    let stemmed = Stemmer::create(algorithm).stem(&tag.0).into_owned();
    if stemmed.is_empty() {
        tag.clone()
    } else {
        Tag(stemmed)
    }
}
