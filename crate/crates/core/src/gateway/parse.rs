//! Turning raw model text into sentences, word lists, labels and choices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty output")]
    Empty,
    #[error("no usable item in output")]
    NoItems,
    #[error("no answer marker found")]
    NoMarker,
    #[error("conflicting answer markers")]
    Conflicting,
}

/// Detection label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Metaphor,
    Literal,
}

const QUOTES: &[char] = &['"', '\'', '“', '”', '‘', '’', '`', '«', '»'];

/// First non-empty line, with a leading `Answer:`-style label and
/// surrounding quotes removed.
pub fn parse_sentence(raw: &str) -> Result<String, ParseError> {
    let line = raw
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or(ParseError::Empty)?;
    let mut s = line;
    for label in ["answer:", "sentence:", "interpretation:", "output:"] {
        if s.len() >= label.len() && s[..label.len()].eq_ignore_ascii_case(label) {
            s = s[label.len()..].trim_start();
            break;
        }
    }
    let s = s.trim_matches(|c: char| QUOTES.contains(&c)).trim();
    if s.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(s.to_owned())
}

/// Strips a list marker: bullets (`-`, `*`, `•`) or numbering (`1.`, `2)`).
fn strip_list_marker(item: &str) -> &str {
    let item = item.trim_start();
    let item = item
        .trim_start_matches(['-', '*', '•', '–', '·'])
        .trim_start();
    let digits = item.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = item[digits..].strip_prefix(['.', ')', ':']) {
            return rest.trim_start();
        }
    }
    item
}

/// Parsed word list. `complete` is false when fewer than the requested
/// number of items survived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordList {
    pub words: Vec<String>,
    pub complete: bool,
}

pub fn parse_word_list(raw: &str, expected_n: usize) -> Result<WordList, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut words: Vec<String> = Vec::new();
    for item in raw.split(['\n', ',']) {
        let item = strip_list_marker(item);
        let item = item
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if item.is_empty() || words.contains(&item) {
            continue;
        }
        words.push(item);
        if words.len() == expected_n {
            break;
        }
    }
    if words.is_empty() {
        return Err(ParseError::NoItems);
    }
    let complete = words.len() >= expected_n;
    Ok(WordList { words, complete })
}

fn words_lower(raw: &str) -> Vec<String> {
    raw.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A leading yes/no decides. Otherwise every yes/no in the text must agree,
/// falling back to (possibly negated) "metaphorical"/"literal" wording.
pub fn parse_yes_no(raw: &str) -> Result<Label, ParseError> {
    let words = words_lower(raw);
    let first = words.first().ok_or(ParseError::Empty)?;
    match first.as_str() {
        "yes" => return Ok(Label::Metaphor),
        "no" => return Ok(Label::Literal),
        _ => {}
    }
    let agree = |labels: Vec<Label>| -> Result<Option<Label>, ParseError> {
        match labels.split_first() {
            None => Ok(None),
            Some((l, rest)) if rest.iter().all(|x| x == l) => Ok(Some(*l)),
            Some(_) => Err(ParseError::Conflicting),
        }
    };
    let direct: Vec<Label> = words
        .iter()
        .filter_map(|w| match w.as_str() {
            "yes" => Some(Label::Metaphor),
            "no" => Some(Label::Literal),
            _ => None,
        })
        .collect();
    if let Some(l) = agree(direct)? {
        return Ok(l);
    }
    let mut descriptive = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let base = match w.as_str() {
            "metaphorical" | "metaphoric" | "figurative" | "metaphor" => Label::Metaphor,
            "literal" | "non-metaphorical" | "nonmetaphorical" => Label::Literal,
            _ => continue,
        };
        let negated = i > 0 && matches!(words[i - 1].as_str(), "not" | "no" | "non");
        descriptive.push(match (base, negated) {
            (l, false) => l,
            (Label::Metaphor, true) => Label::Literal,
            (Label::Literal, true) => Label::Metaphor,
        });
    }
    agree(descriptive)?.ok_or(ParseError::NoMarker)
}

/// Maximal alphanumeric runs with their byte offsets.
fn alnum_runs(raw: &str) -> Vec<(usize, &str)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, c) in raw.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, &raw[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, &raw[s..]));
    }
    runs
}

/// Zero-based option index from a letter (`A`..) or a 1-based number.
/// The first marker in the text wins. Lower-case letters only count when
/// they stand alone or are formatted as an option (`b)`, `(c`, `d.`), since
/// a bare `a` is usually the article.
pub fn parse_choice(raw: &str, n_options: usize) -> Result<usize, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let whole = raw.trim().trim_end_matches(['.', ')']);
    for (at, tok) in alnum_runs(raw) {
        if tok.len() == 1 && tok.as_bytes()[0].is_ascii_alphabetic() {
            let c = tok.as_bytes()[0];
            let idx = (c.to_ascii_uppercase() - b'A') as usize;
            if idx >= n_options {
                continue;
            }
            let before = raw[..at].chars().next_back();
            let after = raw[at + 1..].chars().next();
            let formatted = matches!(after, Some(')' | '.' | ':')) || before == Some('(');
            if c.is_ascii_uppercase() || formatted || whole.len() == 1 {
                return Ok(idx);
            }
        } else if let Ok(n) = tok.parse::<usize>() {
            if (1..=n_options).contains(&n) {
                return Ok(n - 1);
            }
        }
    }
    Err(ParseError::NoMarker)
}
