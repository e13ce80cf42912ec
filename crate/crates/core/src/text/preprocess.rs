use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use super::lemmatize::lemmatize;

static STOPWORD_LIST: &str = include_str!("../../data/stopwords.txt");

static STOPWORDS: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| STOPWORD_LIST.lines().map(str::trim).filter(|w| !w.is_empty()).collect());

static SCRIPT_OR_STYLE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)<script\b.*?</script\s*>|<style\b.*?</style\s*>|<!--.*?-->").expect("valid regex")
});
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").expect("valid regex"));
static ENTITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&(#\d+|#x[0-9a-fA-F]+|[a-zA-Z]+);").expect("valid regex"));

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(word)
}

/// The bundled stopword list, in file order.
pub fn stopwords() -> impl Iterator<Item = &'static str> {
    STOPWORD_LIST.lines().map(str::trim).filter(|w| !w.is_empty())
}

/// Removes markup: script/style blocks, comments and tags become spaces and
/// character entities are dropped.
pub fn strip_html(raw: &str) -> String {
    let text = SCRIPT_OR_STYLE.replace_all(raw, " ");
    let text = TAG.replace_all(&text, " ");
    ENTITY.replace_all(&text, " ").into_owned()
}

/// Splits lowercase text on every non-alphanumeric character. Letters that
/// have no lowercase form (e.g. mathematical capitals) also act as separators.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() || c.is_uppercase()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Markup removal, lowercasing, tokenization, lemmatization and stopword
/// removal, in that order.
pub fn preprocess(raw: &str) -> Vec<String> {
    let text = strip_html(raw).to_lowercase();
    tokenize(&text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| lemmatize(&t))
        .filter(|t| !is_stopword(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_tags_and_entities() {
        assert_eq!(strip_html("<b>a</b>&amp;b").split_whitespace().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(strip_html("x<script>var y = 1;</script>z").split_whitespace().collect::<Vec<_>>(), ["x", "z"]);
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("rock-n-roll, 2014!"), ["rock", "n", "roll", "2014"]);
    }

    #[test]
    fn stopword_list_is_lowercase_and_unique() {
        let all: Vec<_> = stopwords().collect();
        assert!(all.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
        assert_eq!(all.len(), STOPWORDS.len());
    }
}
