//! Event text to fixed-length id sequences: cleaning, vocabulary, encoding
//! and the word embedding table.

mod embeddings;
mod lemmatize;
mod preprocess;
mod vocab;

pub use embeddings::{
    load_pretrained_embeddings, random_embeddings, read_vectors, EmbeddingMatrix, EMBEDDING_DIM, INIT_RANGE,
};
pub use lemmatize::lemmatize;
pub use preprocess::{is_stopword, preprocess, stopwords, strip_html, tokenize};
pub use vocab::{build_vocabulary, encode, known_len, EncodedText, Vocabulary};

use thiserror::Error;

/// Default document-frequency ceiling for vocabulary words.
pub const DEFAULT_MAX_DOC_FRAC: f64 = 0.9;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
