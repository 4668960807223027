//! Caption preprocessing and vocabulary construction.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use super::TrainError;

/// Strips ASCII punctuation, lowercases, and splits on whitespace runs.
/// The punctuation is removed rather than replaced, so "don't" becomes
/// "dont" and an empty result is possible (the caller drops those).
pub fn preprocess_caption(text: &str) -> Vec<String> {
    let stripped: String = text.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    stripped
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// The `k` most frequent tokens across all captions, ties broken
/// lexicographically. Tokens outside the returned list are dropped from
/// captions downstream, not replaced by a placeholder.
pub fn build_vocab<'a, I>(captions: I, k: usize) -> Result<Vec<String>, TrainError>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if k == 0 {
        return Err(TrainError::BadConfig {
            msg: "vocabulary size must be at least 1".into(),
        });
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for caption in captions {
        for token in caption {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(TrainError::EmptyVocab);
    }
    let mut entries: Vec<(&str, usize)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(entries
        .into_iter()
        .take(k)
        .map(|(w, _)| w.to_string())
        .collect())
}

static STOP_WORDS_RAW: &str = include_str!("../../assets/stopwords_en.txt");

/// The fixed English stop-word list shipped with the crate (see
/// `assets/stopwords_en.txt`), used by the word-level training path.
pub fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOP_WORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stop_word(word: &str) -> bool {
    stop_words().contains(word)
}
