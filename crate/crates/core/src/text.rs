//! Whitespace tokenizer shared by corpus loading and sentence transforms.
//!
//! Terminal sentence punctuation (`.`, `!`, `?`) is detached from the last
//! token and kept separately so shuffles can pin it to the sentence end.
//! Every other punctuation mark stays attached to its token.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    /// Detached terminal punctuation, possibly empty.
    pub terminal: String,
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

pub fn tokenize(sentence: &str) -> Tokenized {
    let mut tokens: Vec<String> = sentence.split_whitespace().map(str::to_owned).collect();
    let mut terminal = String::new();
    if let Some(last) = tokens.last_mut() {
        let core_len = last.trim_end_matches(is_terminal).len();
        terminal = last[core_len..].to_owned();
        last.truncate(core_len);
        if last.is_empty() {
            tokens.pop();
        }
    }
    Tokenized { tokens, terminal }
}

/// Joins tokens with single spaces and appends the terminal punctuation.
pub fn detokenize(tokens: &[String], terminal: &str) -> String {
    let mut out = tokens.join(" ");
    out.push_str(terminal);
    out
}

/// Splits leading and trailing non-alphanumeric characters off a token,
/// returning `(prefix, core, suffix)`.
pub fn split_affixes(token: &str) -> (&str, &str, &str) {
    let start = token
        .char_indices()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, _)| i)
        .unwrap_or(token.len());
    let end = token
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(start);
    (&token[..start], &token[start..end], &token[end..])
}

/// Whether `token` carries `word`, either verbatim or wrapped in punctuation.
pub fn token_matches(token: &str, word: &str) -> bool {
    token == word || split_affixes(token).1 == word
}
