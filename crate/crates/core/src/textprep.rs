//! Tokenization shared by the topic model, the hashing embedder and the
//! TF-IDF baseline.
//!
//! Text is lowercased and split on every character outside `[a-z0-9']`.
//! Leading and trailing apostrophes are trimmed, tokens shorter than two
//! characters are dropped, and stopwords are removed. Non-ASCII letters act as
//! separators.

use std::collections::HashSet;
use std::path::Path;
use std::sync::LazyLock;

use crate::{Error, Result};

/// Version tag of the bundled stopword list. Bump when `data/stopwords_en.txt`
/// changes so cached embeddings keyed on it are invalidated.
pub const STOPWORDS_VERSION: u32 = 1;

const MIN_TOKEN_LEN: usize = 2;

static DEFAULT_STOPWORDS: LazyLock<Stopwords> =
    LazyLock::new(|| Stopwords::parse(include_str!("../data/stopwords_en.txt")));

#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The bundled English list.
    pub fn english() -> &'static Stopwords {
        &DEFAULT_STOPWORDS
    }

    /// One word per line; blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stopwords { words }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in lexicographic order.
    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.words.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Ordered lowercase tokens produced by [`preprocess`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl std::ops::Deref for TokenStream {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl From<Vec<String>> for TokenStream {
    fn from(tokens: Vec<String>) -> Self {
        TokenStream(tokens)
    }
}

pub fn preprocess(text: &str) -> TokenStream {
    preprocess_with(text, Stopwords::english())
}

pub fn preprocess_with(text: &str, stopwords: &Stopwords) -> TokenStream {
    let lower = text.to_lowercase();
    let tokens = lower
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| t.len() >= MIN_TOKEN_LEN && !stopwords.contains(t))
        .map(str::to_owned)
        .collect();
    TokenStream(tokens)
}

/// Contiguous n-grams for every `n` in `n_min..=n_max`, grouped by `n` and in
/// scan order within each group.
pub fn ngrams(tokens: &[String], n_min: usize, n_max: usize) -> Vec<String> {
    assert!(
        n_min >= 1 && n_min <= n_max,
        "invalid n-gram range {n_min}..={n_max}"
    );
    let mut out = Vec::new();
    for n in n_min..=n_max {
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Light suffix-stripping stemmer used only by the TF-IDF baseline.
///
/// Rules are tried in order and the first match wins:
///
/// | suffix  | replacement | condition                         |
/// |---------|-------------|-----------------------------------|
/// | `sses`  | `ss`        |                                   |
/// | `ies`   | `y`         | remaining stem length >= 2        |
/// | `ingly` | ``          | remaining stem contains a vowel   |
/// | `edly`  | ``          | remaining stem contains a vowel   |
/// | `ing`   | ``          | remaining stem length >= 3, vowel |
/// | `ed`    | ``          | remaining stem length >= 3, vowel |
/// | `ly`    | ``          | remaining stem length >= 3        |
/// | `s`     | ``          | not `ss`/`us`/`is`, stem >= 3     |
///
/// After stripping `ing`/`ed`, a doubled final consonant (other than
/// `l`, `s`, `z`) is undoubled: `stopped` -> `stop`.
pub fn stem(word: &str) -> String {
    fn has_vowel(s: &str) -> bool {
        s.bytes().any(|b| matches!(b, b'a' | b'e' | b'i' | b'o' | b'u' | b'y'))
    }
    fn undouble(s: &str) -> String {
        let b = s.as_bytes();
        let n = b.len();
        if n >= 2 && b[n - 1] == b[n - 2] && !matches!(b[n - 1], b'l' | b's' | b'z')
            && !matches!(b[n - 1], b'a' | b'e' | b'i' | b'o' | b'u')
        {
            s[..n - 1].to_owned()
        } else {
            s.to_owned()
        }
    }

    if let Some(s) = word.strip_suffix("sses") {
        return format!("{s}ss");
    }
    if let Some(s) = word.strip_suffix("ies") {
        if s.len() >= 2 {
            return format!("{s}y");
        }
    }
    for suffix in ["ingly", "edly"] {
        if let Some(s) = word.strip_suffix(suffix) {
            if has_vowel(s) {
                return s.to_owned();
            }
        }
    }
    for suffix in ["ing", "ed"] {
        if let Some(s) = word.strip_suffix(suffix) {
            if s.len() >= 3 && has_vowel(s) {
                return undouble(s);
            }
        }
    }
    if let Some(s) = word.strip_suffix("ly") {
        if s.len() >= 3 {
            return s.to_owned();
        }
    }
    if word.ends_with('s') && !(word.ends_with("ss") || word.ends_with("us") || word.ends_with("is"))
    {
        let s = &word[..word.len() - 1];
        if s.len() >= 3 {
            return s.to_owned();
        }
    }
    word.to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn strips_punctuation_and_stopwords() {
        assert_eq!(preprocess("No SPAM!!").tokens(), toks(&["spam"]));
        assert_eq!(preprocess("Be polite; be kind.").tokens(), toks(&["polite", "kind"]));
        assert!(preprocess("").is_empty());
        assert!(preprocess("  \t\n").is_empty());
    }

    #[test]
    fn keeps_inner_apostrophes_and_digits() {
        assert_eq!(
            preprocess("'quoted' gamer's 2nd x 9").tokens(),
            toks(&["quoted", "gamer's", "2nd"])
        );
        assert_eq!(preprocess("café").tokens(), toks(&["caf"]));
    }

    #[test]
    fn bundled_list_has_expected_entries() {
        let sw = Stopwords::english();
        for w in ["no", "be", "the", "not", "do", "please"] {
            assert!(sw.contains(w), "{w}");
        }
        assert!(!sw.contains("spam"));
        assert!(!sw.contains("#"));
    }

    #[test]
    fn custom_stopwords() {
        let sw = Stopwords::parse("# header\nspam\n\n  Eggs \n");
        assert_eq!(sw.len(), 2);
        assert_eq!(preprocess_with("spam eggs ham", &sw).tokens(), toks(&["ham"]));
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(
            ngrams(&toks(&["a", "b", "c"]), 1, 2),
            toks(&["a", "b", "c", "a b", "b c"])
        );
        assert!(ngrams(&toks(&["a"]), 2, 3).is_empty());
        assert_eq!(ngrams(&toks(&["a", "b"]), 1, 1), toks(&["a", "b"]));
    }

    #[test]
    #[should_panic]
    fn ngram_range_validated() {
        ngrams(&toks(&["a"]), 2, 1);
    }

    #[test]
    fn stemmer_rules() {
        let cases = [
            ("dresses", "dress"),
            ("parties", "party"),
            ("posting", "post"),
            ("stopped", "stop"),
            ("banned", "ban"),
            ("quickly", "quick"),
            ("rules", "rule"),
            ("status", "status"),
            ("boss", "boss"),
            ("sing", "sing"),
            ("red", "red"),
            ("is", "is"),
        ];
        for (w, s) in cases {
            assert_eq!(stem(w), s, "{w}");
        }
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(text in "[ -~]{0,80}") {
            let once = preprocess(&text);
            let twice = preprocess(&once.join());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_satisfy_invariants(text in "\\PC{0,60}") {
            for t in preprocess(&text).tokens() {
                prop_assert!(t.len() >= 2);
                prop_assert!(t.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'\''));
                prop_assert!(!Stopwords::english().contains(t));
            }
        }

        #[test]
        fn ngram_count(words in proptest::collection::vec("[a-z]{2,4}", 0..12), n in 1usize..5) {
            let got = ngrams(&words, n, n).len();
            prop_assert_eq!(got, words.len().saturating_sub(n - 1).min(words.len()));
            prop_assert_eq!(got, (words.len() as i64 - n as i64 + 1).max(0) as usize);
        }
    }
}
