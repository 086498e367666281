//! Name normalization used everywhere two strings are compared:
//! gazetteer lookups, trigram extraction, merge-rule name equality and
//! query filters all go through [`normalize_name`].

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Casefold + Unicode compatibility decomposition + diacritic stripping +
/// whitespace collapse. Idempotent: `normalize_name(normalize_name(s)) ==
/// normalize_name(s)`.
///
/// Decomposition runs twice because lowercasing can itself produce
/// decomposable characters (e.g. `İ` → `i̇`).
pub fn normalize_name(s: &str) -> String {
    let stripped: String = s
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .collect::<String>()
        .to_lowercase()
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .collect();
    let mut out = String::with_capacity(stripped.len());
    for word in stripped.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}
