use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::preprocess::is_stopword;
use super::TextError;

/// Word ↔ id map. Ids run from 1 to `len()`; id 0 is padding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i + 1)).collect();
        Self { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        id.checked_sub(1).and_then(|i| self.words.get(i)).map(String::as_str)
    }

    /// Words in id order.
    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Vocabulary of a training corpus.
///
/// Drops words that occur once in total, words present in more than
/// `max_doc_frac` of the documents, and stopwords. Survivors are numbered in
/// order of first appearance.
pub fn build_vocabulary(corpus: &[Vec<String>], max_doc_frac: f64) -> Result<Vocabulary, TextError> {
    if !(max_doc_frac > 0.0 && max_doc_frac <= 1.0) {
        return Err(TextError::Parameter(format!("maxDocFrac {max_doc_frac} outside (0, 1]")));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut total: HashMap<&str, usize> = HashMap::new();
    let mut docs: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        let mut seen = std::collections::HashSet::new();
        for w in doc {
            let count = total.entry(w).or_insert(0);
            if *count == 0 {
                order.push(w);
            }
            *count += 1;
            if seen.insert(w.as_str()) {
                *docs.entry(w).or_insert(0) += 1;
            }
        }
    }
    let limit = max_doc_frac * corpus.len() as f64;
    let words = order
        .into_iter()
        .filter(|w| total[w] > 1 && docs[w] as f64 <= limit && !is_stopword(w))
        .map(str::to_string)
        .collect::<Vec<_>>();
    Ok(Vocabulary::from(words))
}

/// Fixed-length id sequence; zeros form a trailing padding suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodedText(Vec<usize>);

impl EncodedText {
    pub fn padding(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_all_padding(&self) -> bool {
        self.0.iter().all(|&id| id == 0)
    }

    /// Number of leading non-padding ids.
    pub fn content_len(&self) -> usize {
        self.0.iter().take_while(|&&id| id != 0).count()
    }

    /// Words of the non-padding prefix.
    pub fn decode(&self, vocab: &Vocabulary) -> Vec<String> {
        self.0.iter().take_while(|&&id| id != 0).filter_map(|&id| vocab.word(id)).map(str::to_string).collect()
    }
}

/// Maps tokens to ids, dropping unknown words, then truncates to the first
/// `len` ids and pads with zeros.
pub fn encode(tokens: &[String], vocab: &Vocabulary, len: usize) -> EncodedText {
    let mut ids: Vec<usize> = tokens.iter().filter_map(|t| vocab.id(t)).take(len).collect();
    ids.resize(len, 0);
    EncodedText(ids)
}

/// Number of in-vocabulary tokens, i.e. the untruncated encoded length.
pub fn known_len(tokens: &[String], vocab: &Vocabulary) -> usize {
    tokens.iter().filter(|t| vocab.id(t).is_some()).count()
}
