//! Tokenization, stemming and the text normalization used by the metrics.

mod porter;

use alloc::string::String;
use alloc::vec::Vec;

pub use porter::stem;

/// Splits a sentence into lowercase tokens.
///
/// Runs of alphanumeric characters form one token (digit runs stay intact),
/// every other non-whitespace character becomes a token on its own.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in sentence.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_lowercase().collect());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// True when the token carries no alphanumeric character.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_alphanumeric)
}

/// Drops punctuation tokens before sentence-level scoring.
pub fn content_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<&str> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_punctuation(t))
        .collect()
}

/// Lowercases and collapses internal whitespace of an ingredient name.
pub fn canonical_name(name: &str) -> String {
    let mut out = String::new();
    for word in name.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Re-joins tokens with single spaces.
pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizes_preheat_step() {
        assert_eq!(
            toks("Preheat oven to 325 degrees F ( 165 degrees C )."),
            [
                "preheat", "oven", "to", "325", "degrees", "f", "(", "165", "degrees", "c", ")",
                "."
            ]
        );
    }

    #[test]
    fn empty_sentence() {
        assert!(toks("").is_empty());
        assert!(toks("   ").is_empty());
    }

    #[test]
    fn punctuation_is_split() {
        assert_eq!(
            toks("Mix well, chill and enjoy!"),
            ["mix", "well", ",", "chill", "and", "enjoy", "!"]
        );
    }

    #[test]
    fn canonical_ingredient_names() {
        assert_eq!(canonical_name("  Green   Onions "), "green onions");
    }

    #[test]
    fn content_tokens_drop_punctuation() {
        let t = toks("Stir, then serve.");
        assert_eq!(content_tokens(&t), ["stir", "then", "serve"]);
    }

    proptest! {
        #[test]
        fn retokenizing_joined_tokens_is_identity(s in "[ -~]{0,60}") {
            let first = tokenize(&s);
            let again = tokenize(&join_tokens(&first));
            prop_assert_eq!(first, again);
        }
    }
}
