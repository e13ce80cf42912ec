use std::io::Write;

use demandfuse::rng::seeded;
use demandfuse::text::{
    build_vocabulary, encode, is_stopword, load_pretrained_embeddings, preprocess, random_embeddings, read_vectors,
    EmbeddingMatrix, EncodedText, TextError, Vocabulary,
};
use proptest::prelude::*;

fn toks(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn vocab(words: &[&str]) -> Vocabulary {
    Vocabulary::from(toks(words))
}

// ----- preprocess --------------------------------------------------------------

#[test]
fn preprocess_html_title() {
    assert_eq!(preprocess("<p>The Rock Concerts</p>"), ["rock", "concert"]);
}

#[test]
fn preprocess_all_stopwords() {
    assert!(preprocess("the a and").is_empty());
}

#[test]
fn preprocess_band_name() {
    assert_eq!(preprocess("Arcade Fire"), ["arcade", "fire"]);
}

#[test]
fn preprocess_empty_and_markup_only() {
    assert!(preprocess("").is_empty());
    assert!(preprocess("<div><br/></div>&nbsp;").is_empty());
}

#[test]
fn preprocess_description() {
    let out = preprocess("<div class=\"desc\">Tickets for the Brooklyn Nets games are selling FAST!</div>");
    assert_eq!(out, ["ticket", "brooklyn", "net", "game", "sell", "fast"]);
}

proptest! {
    #[test]
    fn preprocess_ignores_case(s in "[a-zA-Z <>/.,!]{0,60}") {
        prop_assert_eq!(preprocess(&s), preprocess(&s.to_uppercase()));
        prop_assert_eq!(preprocess(&s), preprocess(&s.to_lowercase()));
    }

    #[test]
    fn preprocess_tokens_are_clean(s in "\\PC{0,80}") {
        for t in preprocess(&s) {
            prop_assert!(!t.is_empty());
            prop_assert!(!t.chars().any(|c| c.is_whitespace() || c == '<' || c == '>'));
            prop_assert!(!t.chars().any(char::is_uppercase), "{}", t);
        }
    }
}

// ----- build_vocabulary --------------------------------------------------------

#[test]
fn vocabulary_drops_hapaxes() {
    // "rock" is in every document, so the frequency ceiling must be lifted
    // for it to survive.
    let corpus = vec![toks(&["rock", "show"]), toks(&["rock", "night"])];
    let v = build_vocabulary(&corpus, 1.0).unwrap();
    assert_eq!(v.words(), ["rock"]);
    assert_eq!(v.id("rock"), Some(1));
    assert_eq!(v.id("show"), None);
}

#[test]
fn vocabulary_of_distinct_words_is_empty() {
    let corpus = vec![toks(&["a1", "b1"]), toks(&["c1"]), toks(&["d1", "e1"])];
    assert!(build_vocabulary(&corpus, 0.9).unwrap().is_empty());
}

#[test]
fn vocabulary_drops_ubiquitous_words() {
    let corpus: Vec<_> = (0..10).map(|i| toks(&["arena", if i % 2 == 0 { "hockey" } else { "ballet" }])).collect();
    let v = build_vocabulary(&corpus, 0.9).unwrap();
    assert_eq!(v.words(), ["hockey", "ballet"]);
}

#[test]
fn vocabulary_of_empty_corpus() {
    assert!(build_vocabulary(&[], 0.9).unwrap().is_empty());
}

#[test]
fn vocabulary_rejects_bad_fraction() {
    assert!(matches!(build_vocabulary(&[], 0.0), Err(TextError::Parameter(_))));
    assert!(matches!(build_vocabulary(&[], 1.5), Err(TextError::Parameter(_))));
}

#[test]
fn vocabulary_ids_are_contiguous_and_inverse() {
    let corpus = vec![toks(&["x", "k", "z"]), toks(&["z", "k", "x"]), toks(&["q"])];
    let v = build_vocabulary(&corpus, 1.0).unwrap();
    assert_eq!(v.words(), ["x", "k", "z"]);
    for (i, w) in v.words().iter().enumerate() {
        assert_eq!(v.id(w), Some(i + 1));
        assert_eq!(v.word(i + 1), Some(w.as_str()));
    }
    assert_eq!(v.word(0), None);
    assert_eq!(v.word(4), None);
}

#[test]
fn vocabulary_serde_roundtrip() {
    let v = vocab(&["rock", "night"]);
    let json = serde_json::to_string(&v).unwrap();
    assert_eq!(json, r#"["rock","night"]"#);
    let back: Vocabulary = serde_json::from_str(&json).unwrap();
    assert_eq!(back, v);
    assert_eq!(back.id("night"), Some(2));
}

proptest! {
    #[test]
    fn vocabulary_has_no_hapax_or_stopword(
        docs in prop::collection::vec(prop::collection::vec("(the|rock|jazz|[a-e]{1,2}|and|show)", 0..8), 0..12),
    ) {
        let corpus: Vec<Vec<String>> = docs;
        let v = build_vocabulary(&corpus, 0.9).unwrap();
        for w in v.words() {
            let total: usize = corpus.iter().map(|d| d.iter().filter(|t| *t == w).count()).sum();
            prop_assert!(total > 1);
            prop_assert!(!is_stopword(w));
            let df = corpus.iter().filter(|d| d.contains(w)).count();
            prop_assert!(df as f64 <= 0.9 * corpus.len() as f64);
        }
    }
}

// ----- encode --------------------------------------------------------------------

#[test]
fn encode_drops_oov_and_pads() {
    let v = vocab(&["rock", "night"]);
    assert_eq!(encode(&toks(&["rock", "zzz", "night"]), &v, 5).ids(), &[1, 2, 0, 0, 0]);
}

#[test]
fn encode_empty_is_padding() {
    let e = encode(&[], &vocab(&["rock"]), 4);
    assert_eq!(e.ids(), &[0, 0, 0, 0]);
    assert!(e.is_all_padding());
}

#[test]
fn encode_truncates_keeping_earliest() {
    assert_eq!(encode(&toks(&["rock", "night"]), &vocab(&["rock", "night"]), 1).ids(), &[1]);
}

#[test]
fn encoded_text_serializes_as_plain_list() {
    let e = encode(&toks(&["night"]), &vocab(&["rock", "night"]), 3);
    assert_eq!(serde_json::to_string(&e).unwrap(), "[2,0,0]");
    assert_eq!(serde_json::from_str::<EncodedText>("[2,0,0]").unwrap(), e);
}

proptest! {
    #[test]
    fn encode_invariants(tokens in prop::collection::vec("[a-f]", 0..20), len in 1usize..12) {
        let v = vocab(&["a", "b", "c", "d"]);
        let e = encode(&tokens, &v, len);
        prop_assert_eq!(e.len(), len);
        prop_assert!(e.ids().iter().all(|&id| id <= v.len()));
        // zeros only as a suffix
        let n = e.content_len();
        prop_assert!(e.ids()[n..].iter().all(|&id| id == 0));
        // re-encoding the decoded prefix is a fixed point
        prop_assert_eq!(encode(&e.decode(&v), &v, len), e);
    }
}

// ----- embeddings --------------------------------------------------------------

fn write_file(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

fn vector_line(word: &str, values: &[f64]) -> String {
    let nums: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("{word} {}\n", nums.join(" "))
}

#[test]
fn pretrained_row_roundtrip_at_full_width() {
    let v = vocab(&["rock", "night"]);
    let row: Vec<f64> = (0..300).map(|i| (i as f64 - 150.0) * 0.0123).collect();
    let other: Vec<f64> = vec![0.5; 300];
    let f = write_file(&(vector_line("rock", &row) + &vector_line("unrelated", &other)));
    let m: EmbeddingMatrix<f64> = load_pretrained_embeddings(f.path(), &v, 300, &mut seeded(1)).unwrap();
    assert_eq!(m.rows(), 3);
    assert_eq!(m.row(0), &[0.0; 300]);
    assert_eq!(m.row(1), row.as_slice());
    assert!(m.row(2).iter().all(|x| x.abs() <= 0.05));
    assert_eq!(m.trainable_mask(), &[false, true, true]);
}

#[test]
fn missing_words_are_uniform() {
    let words: Vec<String> = (0..1000).map(|i| format!("w{i}")).collect();
    let v = Vocabulary::from(words);
    let m: EmbeddingMatrix<f64> = random_embeddings(&v, 300, &mut seeded(7));
    let body = &m.values()[300..];
    assert!(body.iter().all(|x| (-0.05..=0.05).contains(x)));
    let mean = body.iter().sum::<f64>() / body.len() as f64;
    assert!(mean.abs() < 0.01, "{mean}");
    for id in 1..=1000 {
        let row_mean = m.row(id).iter().sum::<f64>() / 300.0;
        assert!(row_mean.abs() < 0.01, "row {id} mean {row_mean}");
    }
}

#[test]
fn short_line_is_a_parse_error_with_line_number() {
    let v = vocab(&["rock"]);
    let good = vector_line("rock", &[0.1; 300]);
    let bad = vector_line("night", &[0.1; 299]);
    let f = write_file(&(good + &bad));
    match load_pretrained_embeddings::<f64>(f.path(), &v, 300, &mut seeded(0)) {
        Err(TextError::Parse { line, message }) => {
            assert_eq!(line, 2);
            assert!(message.contains("299"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn bad_number_is_a_parse_error() {
    let err = read_vectors("rock 1 x\n".as_bytes(), &vocab(&["rock"]), 2).unwrap_err();
    assert!(matches!(err, TextError::Parse { line: 1, .. }));
}

#[test]
fn missing_file_is_io_error() {
    let r = load_pretrained_embeddings::<f64>("/nonexistent/vectors.txt".as_ref(), &vocab(&["a"]), 3, &mut seeded(0));
    assert!(matches!(r, Err(TextError::Io(_))));
}

#[test]
fn padding_row_must_be_zero() {
    assert!(EmbeddingMatrix::<f64>::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).is_err());
    assert!(EmbeddingMatrix::<f64>::new(2, 2, vec![0.0, 0.0, 2.0]).is_err());
}

#[test]
fn embeddings_in_single_precision() {
    let m: EmbeddingMatrix<f32> = random_embeddings(&vocab(&["a", "b"]), 4, &mut seeded(3));
    assert_eq!(m.to_tensor().shape(), &[3, 4]);
}
