use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng as _;

use super::vocab::Vocabulary;
use super::TextError;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const EMBEDDING_DIM: usize = 300;

/// Half-width of the uniform distribution for words without a pretrained vector.
pub const INIT_RANGE: f64 = 0.05;

/// `(V+1)×dim` embedding table. Row 0 is the zero padding vector and is
/// never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    dim: usize,
    values: Vec<T>,
    trainable: Vec<bool>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    /// Table from row-major values. Row 0 must be zero.
    pub fn new(rows: usize, dim: usize, values: Vec<T>) -> Result<Self, TextError> {
        if rows == 0 || dim == 0 || values.len() != rows * dim {
            return Err(TextError::Parameter(format!(
                "{} values do not form a {rows}×{dim} table",
                values.len()
            )));
        }
        if values[..dim].iter().any(|v| !v.is_zero()) {
            return Err(TextError::Parameter("padding row must be zero".into()));
        }
        let mut trainable = vec![true; rows];
        trainable[0] = false;
        Ok(Self { dim, values, trainable })
    }

    pub fn rows(&self) -> usize {
        self.trainable.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, id: usize) -> &[T] {
        &self.values[id * self.dim..(id + 1) * self.dim]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn trainable_mask(&self) -> &[bool] {
        &self.trainable
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::matrix(self.rows(), self.dim, self.values.clone()).expect("consistent table")
    }
}

fn uniform_row<T: Scalar>(rng: &mut Rng, dim: usize) -> impl Iterator<Item = T> + '_ {
    (0..dim).map(|_| T::lit(rng.random_range(-INIT_RANGE..=INIT_RANGE)))
}

/// Table with every word row drawn uniformly from `[−0.05, 0.05]`.
pub fn random_embeddings<T: Scalar>(vocab: &Vocabulary, dim: usize, rng: &mut Rng) -> EmbeddingMatrix<T> {
    let mut values = vec![T::zero(); dim];
    for _ in 0..vocab.len() {
        values.extend(uniform_row::<T>(rng, dim));
    }
    EmbeddingMatrix::new(vocab.len() + 1, dim, values).expect("consistent table")
}

/// Parses `word v1 … v_dim` lines, keeping the vectors of vocabulary words.
/// Every line is validated, including lines for words outside the
/// vocabulary; blank lines are skipped.
pub fn read_vectors<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<HashMap<usize, Vec<f64>>, TextError> {
    let mut found = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let numbers: Vec<&str> = fields.collect();
        if numbers.len() != dim {
            return Err(TextError::Parse {
                line: line_no,
                message: format!("expected a word and {dim} numbers, found {} numbers", numbers.len()),
            });
        }
        let id = vocab.id(word);
        let mut vector = Vec::with_capacity(if id.is_some() { dim } else { 0 });
        for n in numbers {
            let v: f64 = n
                .parse()
                .map_err(|_| TextError::Parse { line: line_no, message: format!("invalid number {n:?}") })?;
            if !v.is_finite() {
                return Err(TextError::Parse { line: line_no, message: format!("non-finite value {n:?}") });
            }
            if id.is_some() {
                vector.push(v);
            }
        }
        if let Some(id) = id {
            found.entry(id).or_insert(vector);
        }
    }
    Ok(found)
}

/// Builds the embedding table from a pretrained vector file. Vocabulary
/// words missing from the file get uniform random rows. Random rows are
/// drawn for ids in increasing order, so the result is independent of the
/// file's line order.
pub fn load_pretrained_embeddings<T: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut Rng,
) -> Result<EmbeddingMatrix<T>, TextError> {
    let file = File::open(path)?;
    let found = read_vectors(BufReader::new(file), vocab, dim)?;
    Ok(assemble(vocab, dim, &found, rng))
}

fn assemble<T: Scalar>(
    vocab: &Vocabulary,
    dim: usize,
    found: &HashMap<usize, Vec<f64>>,
    rng: &mut Rng,
) -> EmbeddingMatrix<T> {
    let mut values = vec![T::zero(); dim];
    for id in 1..=vocab.len() {
        match found.get(&id) {
            Some(v) => values.extend(v.iter().map(|&x| T::lit(x))),
            None => values.extend(uniform_row::<T>(rng, dim)),
        }
    }
    EmbeddingMatrix::new(vocab.len() + 1, dim, values).expect("consistent table")
}
