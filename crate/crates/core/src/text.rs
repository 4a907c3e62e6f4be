//! Tokenization shared by the surface-matching components (anchors, gazetteer,
//! ontology labels) and the bag-of-words model.
//!
//! Surface tokens are whitespace-separated chunks with leading and trailing
//! punctuation trimmed. Byte offsets always point into the original text so
//! that every match can be checked against the input.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Byte range of the trimmed token.
    pub span: Range<usize>,
    /// True when the token opens the document or follows `.`, `!` or `?`.
    pub sentence_start: bool,
}

/// Splits `text` into surface tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut sentence_break = true;
    for (chunk_start, chunk) in chunks(text) {
        let lead = chunk
            .char_indices()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, _)| i);
        let Some(lead) = lead else {
            if chunk.contains(['.', '!', '?']) {
                sentence_break = true;
            }
            continue;
        };
        let trail = chunk
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(chunk.len());
        if chunk[..lead].contains(['.', '!', '?']) {
            sentence_break = true;
        }
        tokens.push(Token {
            span: chunk_start + lead..chunk_start + trail,
            sentence_start: sentence_break,
        });
        sentence_break = chunk[trail..].contains(['.', '!', '?']);
    }
    tokens
}

fn chunks(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = text;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        if trimmed.is_empty() {
            return None;
        }
        let len = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        let out = (offset, &trimmed[..len]);
        offset += len;
        rest = &trimmed[len..];
        Some(out)
    })
}

/// True when only whitespace separates token `i` from token `i + 1`.
pub fn adjacent(text: &str, tokens: &[Token], i: usize) -> bool {
    text[tokens[i].span.end..tokens[i + 1].span.start]
        .chars()
        .all(char::is_whitespace)
}

/// A candidate n-gram: its byte span in the source text and a lookup key with
/// internal whitespace collapsed to single spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGram {
    pub span: Range<usize>,
    pub key: String,
}

/// Surface variants of the `n`-token n-gram starting at token `i`, longest
/// first. When a period directly follows the last token (as in "U.S.") the
/// variant including it is offered before the bare one. Returns nothing when
/// punctuation separates any two of the tokens.
pub fn ngram_variants(text: &str, tokens: &[Token], i: usize, n: usize) -> Vec<NGram> {
    if n == 0 || i + n > tokens.len() {
        return Vec::new();
    }
    if (i..i + n - 1).any(|k| !adjacent(text, tokens, k)) {
        return Vec::new();
    }
    let key = tokens[i..i + n]
        .iter()
        .map(|t| &text[t.span.clone()])
        .collect::<Vec<_>>()
        .join(" ");
    let span = tokens[i].span.start..tokens[i + n - 1].span.end;
    let mut out = Vec::with_capacity(2);
    if text[span.end..].starts_with('.') {
        out.push(NGram {
            span: span.start..span.end + 1,
            key: format!("{key}."),
        });
    }
    out.push(NGram { span, key });
    out
}

/// A match produced by [`scan_longest`].
#[derive(Debug, Clone, PartialEq)]
pub struct Match<T> {
    pub span: Range<usize>,
    pub first_token: usize,
    pub token_count: usize,
    pub value: T,
}

/// Leftmost-longest, non-overlapping scan over n-grams of up to `max_n`
/// tokens. `lookup` receives each candidate key and returns a value on a hit.
pub fn scan_longest<T>(
    text: &str,
    tokens: &[Token],
    max_n: usize,
    mut lookup: impl FnMut(&str) -> Option<T>,
) -> Vec<Match<T>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut hit = None;
        'outer: for n in (1..=max_n.min(tokens.len() - i)).rev() {
            for gram in ngram_variants(text, tokens, i, n) {
                if let Some(value) = lookup(&gram.key) {
                    hit = Some(Match {
                        span: gram.span,
                        first_token: i,
                        token_count: n,
                        value,
                    });
                    break 'outer;
                }
            }
        }
        match hit {
            Some(m) => {
                i += m.token_count;
                out.push(m);
            }
            None => i += 1,
        }
    }
    out
}

/// Bag-of-words tokens: split on non-alphanumerics, lowercased, shorter than
/// two characters dropped. Stopword filtering is left to the caller.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 2)
        .map(str::to_lowercase)
}

/// "PutOption" -> "put option", "USDollar" -> "us dollar".
pub fn split_camel_case(name: &str) -> String {
    let chars: Vec<char> = name.chars().collect();
    let mut out = String::with_capacity(name.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '-' || c.is_whitespace() {
            if !out.ends_with(' ') && !out.is_empty() {
                out.push(' ');
            }
            continue;
        }
        if i > 0 && c.is_uppercase() && !out.ends_with(' ') && !out.is_empty() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                out.push(' ');
            }
        }
        out.extend(c.to_lowercase());
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(text: &str) -> Vec<&str> {
        tokenize(text)
            .iter()
            .map(|t| &text[t.span.clone()])
            .collect()
    }

    #[test]
    fn trims_punctuation() {
        assert_eq!(
            surfaces("fraudulent telemarketing in the U.S."),
            vec!["fraudulent", "telemarketing", "in", "the", "U.S"]
        );
        assert_eq!(
            surfaces("(Fraud, or \"Regulation\")"),
            vec!["Fraud", "or", "Regulation"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ... ").is_empty());
    }

    #[test]
    fn sentence_starts() {
        let text = "Alpha beta. Gamma delta! epsilon ? Zeta";
        let starts: Vec<bool> = tokenize(text).iter().map(|t| t.sentence_start).collect();
        assert_eq!(starts, vec![true, false, true, false, true, true]);
    }

    #[test]
    fn period_variant_offered_first() {
        let text = "in the U.S. today";
        let tokens = tokenize(text);
        let grams = ngram_variants(text, &tokens, 2, 1);
        assert_eq!(grams[0].key, "U.S.");
        assert_eq!(&text[grams[0].span.clone()], "U.S.");
        assert_eq!(grams[1].key, "U.S");
    }

    #[test]
    fn punctuation_blocks_ngrams() {
        let text = "New, York";
        let tokens = tokenize(text);
        assert!(ngram_variants(text, &tokens, 0, 2).is_empty());
        let text = "New   York";
        let tokens = tokenize(text);
        assert_eq!(ngram_variants(text, &tokens, 0, 2)[0].key, "New York");
    }

    #[test]
    fn longest_match_wins() {
        let text = "I love New York City";
        let tokens = tokenize(text);
        let dict = ["New York", "York", "York City"];
        let hits = scan_longest(text, &tokens, 5, |k| {
            dict.contains(&k).then(|| k.to_string())
        });
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].value, "New York");
        assert_eq!(&text[hits[0].span.clone()], "New York");
    }

    #[test]
    fn bag_of_words() {
        let w: Vec<String> = words("The U.S. put-option, a X9 test").collect();
        assert_eq!(w, vec!["the", "put", "option", "x9", "test"]);
    }

    #[test]
    fn camel_case() {
        assert_eq!(split_camel_case("PutOption"), "put option");
        assert_eq!(split_camel_case("OptionContract"), "option contract");
        assert_eq!(split_camel_case("USDollar"), "us dollar");
        assert_eq!(split_camel_case("Fraud"), "fraud");
        assert_eq!(split_camel_case("trade_secret"), "trade secret");
    }
}
