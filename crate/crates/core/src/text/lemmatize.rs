//! Rule-based inflection stripping for English tokens.
//!
//! Handles plural `-s`/`-es`/`-ies` and verbal `-ing`/`-ed`, with guards for
//! short words, stems without a vowel, and a small table of irregular forms
//! and nouns that merely look inflected (`evening`, `hundred`, ...).

const IRREGULAR: &[(&str, &str)] = &[
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("went", "go"),
    ("gone", "go"),
    ("ran", "run"),
    ("sang", "sing"),
    ("sung", "sing"),
    ("held", "hold"),
    ("heroes", "hero"),
    ("potatoes", "potato"),
    ("tomatoes", "tomato"),
];

const UNCHANGED: &[&str] = &[
    "always", "anything", "bias", "building", "ceiling", "christmas", "during", "evening",
    "everything", "gas", "hundred", "kansas", "lens", "morning", "news", "nothing", "series",
    "something", "species", "texas", "wedding", "yes", "sled", "shed", "sacred", "naked",
    "wicked", "bed", "red", "offspring", "lightning", "pudding", "sterling", "viking",
];

fn is_vowel(word: &[u8], i: usize) -> bool {
    match word[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => true,
        b'y' => i > 0 && !is_vowel(word, i - 1),
        _ => false,
    }
}

fn has_vowel(stem: &str) -> bool {
    let b = stem.as_bytes();
    (0..b.len()).any(|i| is_vowel(b, i))
}

/// Number of vowel-consonant runs in `stem`.
fn measure(stem: &str) -> usize {
    let b = stem.as_bytes();
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..b.len() {
        let v = is_vowel(b, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

/// Consonant-vowel-consonant ending, last consonant not w, x or y.
fn ends_cvc(stem: &str) -> bool {
    let b = stem.as_bytes();
    let n = b.len();
    n >= 3
        && !is_vowel(b, n - 3)
        && is_vowel(b, n - 2)
        && !is_vowel(b, n - 1)
        && !matches!(b[n - 1], b'w' | b'x' | b'y')
}

fn ends_double_consonant(stem: &str) -> bool {
    let b = stem.as_bytes();
    let n = b.len();
    n >= 2 && b[n - 1] == b[n - 2] && !is_vowel(b, n - 1)
}

/// Repairs a stem left by removing `-ing` or `-ed`.
fn restore_stem(stem: &str) -> String {
    if stem.ends_with("at") || stem.ends_with("bl") || stem.ends_with("iz") {
        return format!("{stem}e");
    }
    if ends_double_consonant(stem) && !matches!(stem.as_bytes()[stem.len() - 1], b'l' | b's' | b'z') {
        return stem[..stem.len() - 1].to_string();
    }
    if measure(stem) == 1 && ends_cvc(stem) {
        return format!("{stem}e");
    }
    stem.to_string()
}

fn strip_plural(word: &str) -> Option<String> {
    if word.len() > 4 && word.ends_with("ies") {
        return Some(format!("{}y", &word[..word.len() - 3]));
    }
    if word.ends_with("sses") {
        return Some(word[..word.len() - 2].to_string());
    }
    for suffix in ["ches", "shes", "xes", "zzes"] {
        if word.ends_with(suffix) && word.len() > suffix.len() + 1 {
            return Some(word[..word.len() - 2].to_string());
        }
    }
    if word.ends_with('s') && !["ss", "us", "is", "ous"].iter().any(|s| word.ends_with(s)) {
        return Some(word[..word.len() - 1].to_string());
    }
    None
}

fn strip_verbal(word: &str) -> Option<String> {
    if word.ends_with("eed") {
        return None;
    }
    if word.len() > 4 && word.ends_with("ied") {
        return Some(format!("{}y", &word[..word.len() - 3]));
    }
    for suffix in ["ing", "ed"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.len() >= 3 && has_vowel(stem) {
                return Some(restore_stem(stem));
            }
        }
    }
    None
}

/// Lemma of a lowercase ASCII-or-Unicode token. Non-ASCII tokens and tokens
/// of three characters or fewer are returned unchanged.
pub fn lemmatize(word: &str) -> String {
    if let Some(&(_, lemma)) = IRREGULAR.iter().find(|(w, _)| *w == word) {
        return lemma.to_string();
    }
    if word.len() <= 3 || !word.is_ascii() || UNCHANGED.contains(&word) {
        return word.to_string();
    }
    if word.bytes().any(|b| b.is_ascii_digit()) {
        return word.to_string();
    }
    strip_plural(word).or_else(|| strip_verbal(word)).unwrap_or_else(|| word.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plurals() {
        for (w, l) in [
            ("concerts", "concert"),
            ("parties", "party"),
            ("boxes", "box"),
            ("matches", "match"),
            ("classes", "class"),
            ("games", "game"),
            ("class", "class"),
            ("famous", "famous"),
            ("tennis", "tennis"),
            ("bus", "bus"),
        ] {
            assert_eq!(lemmatize(w), l, "{w}");
        }
    }

    #[test]
    fn verbal_endings() {
        for (w, l) in [
            ("running", "run"),
            ("making", "make"),
            ("played", "play"),
            ("rated", "rate"),
            ("started", "start"),
            ("tried", "try"),
            ("celebrating", "celebrate"),
            ("singing", "sing"),
            ("filled", "fill"),
            ("need", "need"),
            ("speed", "speed"),
            ("king", "king"),
            ("string", "string"),
            ("evening", "evening"),
        ] {
            assert_eq!(lemmatize(w), l, "{w}");
        }
    }

    #[test]
    fn guards() {
        assert_eq!(lemmatize("its"), "its");
        assert_eq!(lemmatize("2014s"), "2014s");
        assert_eq!(lemmatize("cafés"), "cafés");
        assert_eq!(lemmatize("children"), "child");
    }
}
