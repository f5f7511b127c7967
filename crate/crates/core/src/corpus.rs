//! Fig-QA groups and MUNCH records: loading, span annotation, partitioning.
//!
//! Both datasets load from CSV (columns mapped by name) or from the
//! line-delimited JSON form that mirrors the record types. A bad row never
//! aborts a load; it lands in the rejects list with a reason, so
//! `rows == records + rejects` always holds.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{slots, Gateway, GatewayError, GenerationRecord, GenerationStatus};
use crate::text::{token_matches, tokenize, Tokenized};

/// Records with novelty strictly above this count as novel metaphors.
pub const DEFAULT_NOVELTY_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: missing required columns {missing:?}")]
    Schema { path: PathBuf, missing: Vec<String> },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Character range `[start, end)` into a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// First verbatim occurrence of `needle` in `sentence`.
    pub fn find(sentence: &str, needle: &str) -> Option<Self> {
        if needle.is_empty() {
            return None;
        }
        let byte = sentence.find(needle)?;
        let start = sentence[..byte].chars().count();
        Some(Self {
            start,
            end: start + needle.chars().count(),
        })
    }

    pub fn is_valid_for(&self, sentence: &str) -> bool {
        self.start < self.end && self.end <= sentence.chars().count()
    }

    pub fn slice<'a>(&self, sentence: &'a str) -> &'a str {
        let mut idx = sentence
            .char_indices()
            .map(|(i, _)| i)
            .chain([sentence.len()]);
        let from = idx.nth(self.start).unwrap_or(sentence.len());
        let to = sentence
            .char_indices()
            .map(|(i, _)| i)
            .chain([sentence.len()])
            .nth(self.end)
            .unwrap_or(sentence.len());
        &sentence[from..to]
    }
}

/// Two metaphors sharing a concept, each paired with its literal reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigQaGroup {
    pub id: String,
    #[serde(alias = "metaphor_1")]
    pub m1: String,
    #[serde(alias = "metaphor_2")]
    pub m2: String,
    #[serde(alias = "reference_1")]
    pub r1: String,
    #[serde(alias = "reference_2")]
    pub r2: String,
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "span_1")]
    pub span1: Option<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "span_2")]
    pub span2: Option<Span>,
}

impl FigQaGroup {
    /// Metaphor `i` (1 or 2).
    pub fn metaphor(&self, i: usize) -> &str {
        if i == 1 {
            &self.m1
        } else {
            &self.m2
        }
    }

    pub fn reference(&self, i: usize) -> &str {
        if i == 1 {
            &self.r1
        } else {
            &self.r2
        }
    }

    pub fn span(&self, i: usize) -> Option<Span> {
        if i == 1 {
            self.span1
        } else {
            self.span2
        }
    }

    pub fn span_text(&self, i: usize) -> Option<&str> {
        self.span(i).map(|s| s.slice(self.metaphor(i)))
    }

    pub fn has_spans(&self) -> bool {
        self.span1.is_some() && self.span2.is_some()
    }

    fn validate(&self) -> Result<(), (RejectReason, String)> {
        for (name, v) in [
            ("id", &self.id),
            ("m1", &self.m1),
            ("m2", &self.m2),
            ("r1", &self.r1),
            ("r2", &self.r2),
        ] {
            if v.trim().is_empty() {
                return Err((RejectReason::EmptyField, name.to_owned()));
            }
        }
        for i in [1, 2] {
            if let Some(s) = self.span(i) {
                if !s.is_valid_for(self.metaphor(i)) {
                    return Err((RejectReason::SpanOutOfRange, format!("span{i}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Genre {
    News,
    #[serde(alias = "fict")]
    Fiction,
    #[serde(alias = "acprose", alias = "acad")]
    Academic,
    #[serde(alias = "conv")]
    Conversation,
}

impl Genre {
    pub const ALL: [Genre; 4] = [
        Genre::News,
        Genre::Fiction,
        Genre::Academic,
        Genre::Conversation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Genre::News => "news",
            Genre::Fiction => "fiction",
            Genre::Academic => "academic",
            Genre::Conversation => "conversation",
        }
    }

    /// Capitalized name used in summary tables.
    pub fn title(self) -> &'static str {
        match self {
            Genre::News => "News",
            Genre::Fiction => "Fiction",
            Genre::Academic => "Academic",
            Genre::Conversation => "Conversation",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Genre {
    type Err = String;

    /// Accepts full names and the usual corpus register codes.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "news" => Ok(Genre::News),
            "fiction" | "fict" => Ok(Genre::Fiction),
            "academic" | "acprose" | "acad" => Ok(Genre::Academic),
            "conversation" | "conv" => Ok(Genre::Conversation),
            other => Err(format!("unknown genre `{other}`")),
        }
    }
}

/// A sentence with one metaphorical word and its literal substitutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MunchRecord {
    pub id: String,
    pub sentence: String,
    pub target_index: usize,
    pub target_word: String,
    #[serde(alias = "substitutes")]
    pub gold_substitutes: Vec<String>,
    pub genre: Genre,
    pub novelty: f64,
}

impl MunchRecord {
    pub fn tokenized(&self) -> Tokenized {
        tokenize(&self.sentence)
    }

    pub fn is_novel(&self, threshold: f64) -> bool {
        self.novelty > threshold
    }

    /// The sentence with the target replaced by the first gold substitute.
    pub fn literal_sentence(&self) -> String {
        let mut t = self.tokenized();
        if let (Some(tok), Some(sub)) = (
            t.tokens.get_mut(self.target_index),
            self.gold_substitutes.first(),
        ) {
            *tok = tok.replacen(&self.target_word, sub, 1);
        }
        crate::text::detokenize(&t.tokens, &t.terminal)
    }

    fn validate(&self) -> Result<(), (RejectReason, String)> {
        for (name, v) in [
            ("id", &self.id),
            ("sentence", &self.sentence),
            ("target_word", &self.target_word),
        ] {
            if v.trim().is_empty() {
                return Err((RejectReason::EmptyField, name.to_owned()));
            }
        }
        if self.gold_substitutes.iter().all(|s| s.trim().is_empty()) {
            return Err((RejectReason::NoSubstitutes, String::new()));
        }
        if !(0.0..=1.0).contains(&self.novelty) {
            return Err((RejectReason::BadNumber, format!("novelty {}", self.novelty)));
        }
        let t = self.tokenized();
        match t.tokens.get(self.target_index) {
            None => Err((
                RejectReason::IndexOutOfRange,
                format!("index {} of {} tokens", self.target_index, t.tokens.len()),
            )),
            Some(tok) if !token_matches(tok, &self.target_word) => Err((
                RejectReason::TokenMismatch,
                format!("token `{tok}` != `{}`", self.target_word),
            )),
            Some(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MalformedRow,
    EmptyField,
    BadNumber,
    UnknownGenre,
    NoSubstitutes,
    IndexOutOfRange,
    TokenMismatch,
    SpanNotFound,
    SpanOutOfRange,
    DuplicateId,
}

/// A row that did not become a record. `row` is the 1-based data row
/// (CSV, header excluded) or line number (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub row: usize,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
    pub rows: usize,
}

impl<T> LoadReport<T> {
    fn empty() -> Self {
        Self {
            records: Vec::new(),
            rejects: Vec::new(),
            rows: 0,
        }
    }
}

fn is_jsonl(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e, "jsonl" | "ndjson"))
}

fn read_source(path: &Path) -> Result<Option<String>, CorpusError> {
    let src = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    if src.trim().is_empty() {
        log::warn!("{} is empty", path.display());
        return Ok(None);
    }
    Ok(Some(src))
}

/// Column name to index, after checking the required ones are present.
fn column_map(
    path: &Path,
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<BTreeMap<String, usize>, CorpusError> {
    let map: BTreeMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
        .collect();
    let missing: Vec<String> = required
        .iter()
        .filter(|c| !map.contains_key(**c))
        .map(|c| (*c).to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::Schema {
            path: path.to_owned(),
            missing,
        });
    }
    Ok(map)
}

fn finish<T>(
    mut report: LoadReport<T>,
    id_of: impl Fn(&T) -> &str,
    rows_of: Vec<usize>,
    kind: &str,
    path: &Path,
) -> LoadReport<T> {
    // Keep the first occurrence of every id.
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(report.records.len());
    for (rec, row) in report.records.drain(..).zip(rows_of) {
        if seen.insert(id_of(&rec).to_owned()) {
            kept.push(rec);
        } else {
            report.rejects.push(Reject {
                row,
                reason: RejectReason::DuplicateId,
                detail: id_of(&rec).to_owned(),
            });
        }
    }
    report.records = kept;
    report.rejects.sort_by_key(|r| r.row);
    log::info!(
        "{}: {} {kind} records, {} rejects out of {} rows",
        path.display(),
        report.records.len(),
        report.rejects.len(),
        report.rows
    );
    report
}

fn load_jsonl<T: DeserializeOwned>(
    src: &str,
    validate: impl Fn(&T) -> Result<(), (RejectReason, String)>,
) -> (LoadReport<T>, Vec<usize>) {
    let mut report = LoadReport::empty();
    let mut rows_of = Vec::new();
    for (n, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        let row = n + 1;
        match serde_json::from_str::<T>(line) {
            Ok(rec) => match validate(&rec) {
                Ok(()) => {
                    report.records.push(rec);
                    rows_of.push(row);
                }
                Err((reason, detail)) => report.rejects.push(Reject {
                    row,
                    reason,
                    detail,
                }),
            },
            Err(e) => report.rejects.push(Reject {
                row,
                reason: RejectReason::MalformedRow,
                detail: e.to_string(),
            }),
        }
    }
    (report, rows_of)
}

const FIGQA_COLUMNS: &[&str] = &[
    "id",
    "metaphor_1",
    "metaphor_2",
    "reference_1",
    "reference_2",
];
const MUNCH_COLUMNS: &[&str] = &[
    "id",
    "sentence",
    "target_index",
    "target_word",
    "substitutes",
    "genre",
    "novelty",
];

fn field<'a>(rec: &'a csv::StringRecord, cols: &BTreeMap<String, usize>, name: &str) -> &'a str {
    cols.get(name)
        .and_then(|&i| rec.get(i))
        .unwrap_or("")
        .trim()
}

fn figqa_from_row(
    rec: &csv::StringRecord,
    cols: &BTreeMap<String, usize>,
) -> Result<FigQaGroup, (RejectReason, String)> {
    let f = |name| field(rec, cols, name).to_owned();
    let mut group = FigQaGroup {
        id: f("id"),
        m1: f("metaphor_1"),
        m2: f("metaphor_2"),
        r1: f("reference_1"),
        r2: f("reference_2"),
        span1: None,
        span2: None,
    };
    group.validate()?;
    // Pre-supplied spans hold the verbatim span text.
    for (i, col) in [(1, "span_1"), (2, "span_2")] {
        let text = field(rec, cols, col);
        if text.is_empty() {
            continue;
        }
        let span = Span::find(group.metaphor(i), text)
            .ok_or_else(|| (RejectReason::SpanNotFound, format!("{col} `{text}`")))?;
        if i == 1 {
            group.span1 = Some(span);
        } else {
            group.span2 = Some(span);
        }
    }
    Ok(group)
}

fn munch_from_row(
    rec: &csv::StringRecord,
    cols: &BTreeMap<String, usize>,
) -> Result<MunchRecord, (RejectReason, String)> {
    let f = |name| field(rec, cols, name);
    let target_index = f("target_index").parse().map_err(|_| {
        (
            RejectReason::BadNumber,
            format!("target_index `{}`", f("target_index")),
        )
    })?;
    let novelty = f("novelty").parse().map_err(|_| {
        (
            RejectReason::BadNumber,
            format!("novelty `{}`", f("novelty")),
        )
    })?;
    let genre = f("genre")
        .parse()
        .map_err(|e: String| (RejectReason::UnknownGenre, e))?;
    let record = MunchRecord {
        id: f("id").to_owned(),
        sentence: f("sentence").to_owned(),
        target_index,
        target_word: f("target_word").to_owned(),
        gold_substitutes: f("substitutes")
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect(),
        genre,
        novelty,
    };
    record.validate()?;
    Ok(record)
}

fn load_csv<T>(
    path: &Path,
    src: &str,
    required: &[&str],
    from_row: impl Fn(&csv::StringRecord, &BTreeMap<String, usize>) -> Result<T, (RejectReason, String)>,
) -> Result<(LoadReport<T>, Vec<usize>), CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(src.as_bytes());
    let headers = reader.headers().map_err(|source| CorpusError::Csv {
        path: path.to_owned(),
        source,
    })?;
    let cols = column_map(path, headers, required)?;
    let width = headers.len();
    let mut report = LoadReport::empty();
    let mut rows_of = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let row = n + 1;
        report.rows += 1;
        let outcome = match rec {
            Ok(rec) if rec.len() != width => Err((
                RejectReason::MalformedRow,
                format!("{} fields, expected {width}", rec.len()),
            )),
            Ok(rec) => from_row(&rec, &cols),
            Err(e) => Err((RejectReason::MalformedRow, e.to_string())),
        };
        match outcome {
            Ok(r) => {
                report.records.push(r);
                rows_of.push(row);
            }
            Err((reason, detail)) => report.rejects.push(Reject {
                row,
                reason,
                detail,
            }),
        }
    }
    Ok((report, rows_of))
}

pub fn load_figqa(path: &Path) -> Result<LoadReport<FigQaGroup>, CorpusError> {
    let Some(src) = read_source(path)? else {
        return Ok(LoadReport::empty());
    };
    let (report, rows_of) = if is_jsonl(path) {
        load_jsonl(&src, FigQaGroup::validate)
    } else {
        load_csv(path, &src, FIGQA_COLUMNS, figqa_from_row)?
    };
    Ok(finish(report, |g| &g.id, rows_of, "Fig-QA", path))
}

pub fn load_munch(path: &Path) -> Result<LoadReport<MunchRecord>, CorpusError> {
    let Some(src) = read_source(path)? else {
        return Ok(LoadReport::empty());
    };
    let (report, rows_of) = if is_jsonl(path) {
        load_jsonl(&src, MunchRecord::validate)
    } else {
        load_csv(path, &src, MUNCH_COLUMNS, munch_from_row)?
    };
    Ok(finish(report, |r| &r.id, rows_of, "MUNCH", path))
}

/// Why span annotation did not produce spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanFailure {
    Refused,
    ParseFailed { returned: String },
    Provider { message: String },
}

#[derive(Debug, Clone)]
pub struct Annotated {
    pub result: Result<FigQaGroup, SpanFailure>,
    pub generations: Vec<GenerationRecord>,
}

/// Asks the model for the concept-relevant span of each metaphor that lacks
/// one. The returned text must occur verbatim in the sentence.
pub fn annotate_spans(group: &FigQaGroup, gateway: &Gateway) -> Annotated {
    let mut out = group.clone();
    let mut generations = Vec::new();
    for i in [1, 2] {
        if out.span(i).is_some() {
            continue;
        }
        let rec = match gateway.complete("span.annotate", &slots([("metaphor", group.metaphor(i))]))
        {
            Ok(r) => r,
            Err(GatewayError::Provider(e)) => {
                return Annotated {
                    result: Err(SpanFailure::Provider {
                        message: e.to_string(),
                    }),
                    generations,
                }
            }
            Err(GatewayError::Template(e)) => {
                return Annotated {
                    result: Err(SpanFailure::Provider {
                        message: e.to_string(),
                    }),
                    generations,
                }
            }
        };
        let failure = match rec.status {
            GenerationStatus::Refused => Some(SpanFailure::Refused),
            GenerationStatus::ParseFailed => Some(SpanFailure::ParseFailed {
                returned: rec.raw_output.clone(),
            }),
            GenerationStatus::Ok => None,
        };
        let span = rec.sentence().and_then(|text| {
            let sentence = group.metaphor(i);
            Span::find(sentence, text.trim_end_matches(['.', '!', '?', ',']).trim())
                .or_else(|| Span::find(sentence, text))
        });
        let returned = rec.raw_output.clone();
        generations.push(rec);
        match (failure, span) {
            (Some(f), _) => {
                return Annotated {
                    result: Err(f),
                    generations,
                }
            }
            (None, None) => {
                return Annotated {
                    result: Err(SpanFailure::ParseFailed { returned }),
                    generations,
                }
            }
            (None, Some(s)) => {
                if i == 1 {
                    out.span1 = Some(s);
                } else {
                    out.span2 = Some(s);
                }
            }
        }
    }
    Annotated {
        result: Ok(out),
        generations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionBy {
    Genre,
    /// Strictly above the threshold is "novel", everything else "conventional".
    Novelty {
        threshold: f64,
    },
}

/// Disjoint, exhaustive grouping of `records`.
pub fn partition(records: &[MunchRecord], by: PartitionBy) -> BTreeMap<String, Vec<&MunchRecord>> {
    let mut groups: BTreeMap<String, Vec<&MunchRecord>> = BTreeMap::new();
    for r in records {
        let key = match by {
            PartitionBy::Genre => r.genre.as_str(),
            PartitionBy::Novelty { threshold } if r.is_novel(threshold) => "novel",
            PartitionBy::Novelty { .. } => "conventional",
        };
        groups.entry(key.to_owned()).or_default().push(r);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ScriptedChatProvider, TemplateRegistry};
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    fn munch(id: &str, genre: Genre, novelty: f64) -> MunchRecord {
        MunchRecord {
            id: id.into(),
            sentence: "The council appealed by case stated.".into(),
            target_index: 2,
            target_word: "appealed".into(),
            gold_substitutes: vec!["petitioned".into()],
            genre,
            novelty,
        }
    }

    #[test]
    fn span_char_offsets() {
        let s = "The computer is a race car.";
        let span = Span::find(s, "is a race car").unwrap();
        assert_eq!(span, Span { start: 13, end: 26 });
        assert_eq!(span.slice(s), "is a race car");
        let u = "Café is a furnace.";
        let span = Span::find(u, "a furnace").unwrap();
        assert_eq!(span.slice(u), "a furnace");
        assert_eq!(span.start, 8);
        assert!(Span::find(s, "tortoise").is_none());
    }

    #[test]
    fn figqa_csv_parses_table_example() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "figqa.csv",
            "id,metaphor_1,metaphor_2,reference_1,reference_2,span_1,span_2\n\
             g1,The computer is a race car.,The computer is a tortoise.,The computer runs fast.,The computer runs slow.,is a race car,\n",
        );
        let rep = load_figqa(&p).unwrap();
        assert_eq!(rep.rows, 1);
        let g = &rep.records[0];
        assert_eq!(g.m1, "The computer is a race car.");
        assert_eq!(g.r1, "The computer runs fast.");
        assert_eq!(g.span_text(1), Some("is a race car"));
        assert_eq!(g.span2, None);
    }

    #[test]
    fn figqa_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "bad.csv",
            "id,metaphor_1,metaphor_two,reference_1,reference_2\n",
        );
        match load_figqa(&p) {
            Err(CorpusError::Schema { missing, .. }) => assert_eq!(missing, vec!["metaphor_2"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "empty.csv", "");
        let rep = load_munch(&p).unwrap();
        assert!(rep.records.is_empty() && rep.rejects.is_empty());
    }

    #[test]
    fn munch_rejects_are_reported_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "munch.csv",
            "id,sentence,target_index,target_word,substitutes,genre,novelty\n\
             a,The council appealed by case stated.,2,appealed,petitioned;requested,news,0.1\n\
             b,The council appealed by case stated.,1,appealed,petitioned,news,0.1\n\
             c,The council appealed by case stated.,9,appealed,petitioned,news,0.1\n\
             d,The council appealed by case stated.,2,appealed,,news,0.1\n\
             e,The council appealed by case stated.,2,appealed,x,poetry,0.1\n\
             f,The council appealed by case stated.,two,appealed,x,news,0.1\n\
             a,The council appealed by case stated.,2,appealed,x,news,0.5\n\
             g,\"Her words, sharp as knives.\",1,words,,fiction,0.9\n\
             h,short,row\n",
        );
        let rep = load_munch(&p).unwrap();
        assert_eq!(rep.rows, 9);
        assert_eq!(rep.records.len() + rep.rejects.len(), rep.rows);
        assert_eq!(rep.records.len(), 1);
        assert_eq!(
            rep.records[0].gold_substitutes,
            vec!["petitioned", "requested"]
        );
        let reasons: Vec<_> = rep.rejects.iter().map(|r| (r.row, r.reason)).collect();
        assert_eq!(
            reasons,
            vec![
                (2, RejectReason::TokenMismatch),
                (3, RejectReason::IndexOutOfRange),
                (4, RejectReason::NoSubstitutes),
                (5, RejectReason::UnknownGenre),
                (6, RejectReason::BadNumber),
                (7, RejectReason::DuplicateId),
                (8, RejectReason::NoSubstitutes),
                (9, RejectReason::MalformedRow),
            ]
        );
    }

    #[test]
    fn token_with_attached_punctuation_matches() {
        let mut r = munch("x", Genre::News, 0.0);
        r.sentence = "Prices, sadly, skyrocketed.".into();
        r.target_index = 2;
        r.target_word = "skyrocketed".into();
        assert!(r.validate().is_ok());
        r.target_index = 1;
        r.target_word = "sadly".into();
        assert!(r.validate().is_ok());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [
            munch("a", Genre::Fiction, 0.4),
            munch("b", Genre::News, 0.2),
        ];
        let body: String = recs
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect::<String>()
            + "{not json}\n";
        let p = write(&dir, "munch.jsonl", &body);
        let rep = load_munch(&p).unwrap();
        assert_eq!(rep.records, recs.to_vec());
        assert_eq!(rep.rejects.len(), 1);
        assert_eq!(rep.rejects[0].reason, RejectReason::MalformedRow);
    }

    #[test]
    fn literal_sentence_swaps_target() {
        assert_eq!(
            munch("a", Genre::News, 0.0).literal_sentence(),
            "The council petitioned by case stated."
        );
    }

    fn group() -> FigQaGroup {
        FigQaGroup {
            id: "g".into(),
            m1: "The computer is a race car.".into(),
            m2: "The computer is a tortoise.".into(),
            r1: "The computer runs fast.".into(),
            r2: "The computer runs slow.".into(),
            span1: None,
            span2: None,
        }
    }

    fn gateway(respond: impl Fn(&str) -> String + Send + Sync + 'static) -> Gateway {
        Gateway::new(
            Box::new(ScriptedChatProvider::new("m", move |p| {
                crate::gateway::ChatReply::text(respond(p))
            })),
            TemplateRegistry::defaults(),
        )
    }

    #[test]
    fn annotate_fills_spans() {
        let g = gateway(|p| {
            if p.contains("race car") {
                "\"is a race car\"".into()
            } else {
                "is a tortoise.".into()
            }
        });
        let a = annotate_spans(&group(), &g);
        let out = a.result.unwrap();
        assert_eq!(out.span_text(1), Some("is a race car"));
        assert_eq!(out.span_text(2), Some("is a tortoise"));
        assert_eq!(a.generations.len(), 2);
    }

    #[test]
    fn annotate_skips_presupplied() {
        let g = gateway(|_| panic!("no call expected"));
        let mut grp = group();
        grp.span1 = Span::find(&grp.m1, "a race car");
        grp.span2 = Span::find(&grp.m2, "a tortoise");
        let a = annotate_spans(&grp, &g);
        assert_eq!(a.result.unwrap(), grp);
        assert_eq!(g.calls().replayed + g.calls().network, 0);
    }

    #[test]
    fn annotate_rejects_absent_text() {
        let g = gateway(|_| "is a rocket".into());
        let a = annotate_spans(&group(), &g);
        assert!(matches!(a.result, Err(SpanFailure::ParseFailed { .. })));
    }

    #[test]
    fn novelty_boundary_is_strict() {
        let recs = vec![
            munch("a", Genre::News, 0.3),
            munch("b", Genre::News, 0.31),
            munch("c", Genre::News, 0.0),
        ];
        let p = partition(
            &recs,
            PartitionBy::Novelty {
                threshold: DEFAULT_NOVELTY_THRESHOLD,
            },
        );
        let ids = |k: &str| p[k].iter().map(|r| r.id.as_str()).collect::<Vec<_>>();
        assert_eq!(ids("conventional"), vec!["a", "c"]);
        assert_eq!(ids("novel"), vec!["b"]);
    }

    #[test]
    fn genre_partition_covers_input() {
        let recs: Vec<_> = Genre::ALL
            .iter()
            .cycle()
            .take(10)
            .enumerate()
            .map(|(i, g)| munch(&i.to_string(), *g, 0.0))
            .collect();
        let p = partition(&recs, PartitionBy::Genre);
        assert_eq!(p.len(), 4);
        assert_eq!(p.values().map(Vec::len).sum::<usize>(), recs.len());
        assert_eq!(p["news"].len(), 3);
    }

    #[test]
    fn genre_codes() {
        assert_eq!("acprose".parse::<Genre>().unwrap(), Genre::Academic);
        assert_eq!(
            "Conversation".parse::<Genre>().unwrap(),
            Genre::Conversation
        );
        assert!("poetry".parse::<Genre>().is_err());
    }
}
