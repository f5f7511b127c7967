//! Syntactic variants of MUNCH sentences for the shuffle detection task.
//!
//! Every variant keeps the detached terminal punctuation at the end and
//! leaves casing alone. Apart from `Pos`, variants only reorder tokens.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::MunchRecord;
use crate::text::{detokenize, split_affixes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Original,
    Random,
    Pos,
    Beginning,
    Middle,
    End,
}

impl VariantKind {
    pub const ALL: [VariantKind; 6] = [
        VariantKind::Original,
        VariantKind::Random,
        VariantKind::Pos,
        VariantKind::Beginning,
        VariantKind::Middle,
        VariantKind::End,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::Random => "random",
            VariantKind::Pos => "pos",
            VariantKind::Beginning => "beginning",
            VariantKind::Middle => "middle",
            VariantKind::End => "end",
        }
    }

    /// Whether the variant consumes a seed.
    pub fn is_seeded(self) -> bool {
        matches!(self, VariantKind::Random | VariantKind::Middle)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown variant kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleVariant {
    pub source_id: String,
    pub kind: VariantKind,
    pub tokens: Vec<String>,
    pub terminal: String,
    pub target_index_after: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substituted_word: Option<String>,
    pub sentence: String,
}

impl ShuffleVariant {
    fn build(
        record: &MunchRecord,
        kind: VariantKind,
        tokens: Vec<String>,
        terminal: String,
        target_index_after: usize,
        seed: Option<u64>,
        substituted_word: Option<String>,
    ) -> Self {
        let sentence = detokenize(&tokens, &terminal);
        Self {
            source_id: record.id.clone(),
            kind,
            tokens,
            terminal,
            target_index_after,
            seed,
            substituted_word,
            sentence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    LexiconMiss,
    NoCrossPosRelative,
    NoValidSlot,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::LexiconMiss => "lexicon_miss",
            SkipReason::NoCrossPosRelative => "no_cross_pos_relative",
            SkipReason::NoValidSlot => "no_valid_slot",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub source_id: String,
    pub kind: VariantKind,
    pub reason: SkipReason,
}

pub type VariantOutcome = Result<ShuffleVariant, Skip>;

/// Per-record seed: the first 8 bytes of sha256("{base}:{id}:{kind}").
pub fn derive_seed(base: u64, source_id: &str, kind: VariantKind) -> u64 {
    let digest = Sha256::digest(format!("{base}:{source_id}:{kind}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn original(record: &MunchRecord) -> ShuffleVariant {
    let t = record.tokenized();
    ShuffleVariant::build(
        record,
        VariantKind::Original,
        t.tokens,
        t.terminal,
        record.target_index,
        None,
        None,
    )
}

/// Seeded uniform permutation. Identity permutations are redrawn whenever
/// more than one token exists.
pub fn random_shuffle(record: &MunchRecord, seed: u64) -> ShuffleVariant {
    let t = record.tokenized();
    let n = t.tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    if n > 1 {
        loop {
            perm.shuffle(&mut rng);
            if perm.iter().enumerate().any(|(i, &p)| i != p) {
                break;
            }
        }
    }
    let tokens = perm.iter().map(|&i| t.tokens[i].clone()).collect();
    let after = perm
        .iter()
        .position(|&i| i == record.target_index)
        .unwrap_or(record.target_index);
    ShuffleVariant::build(
        record,
        VariantKind::Random,
        tokens,
        t.terminal,
        after,
        Some(seed),
        None,
    )
}

/// Moves the target token to the start, a seeded middle slot, or the end.
/// `Middle` excludes the first and last slots and the original position.
pub fn reposition(record: &MunchRecord, kind: VariantKind, seed: u64) -> VariantOutcome {
    let t = record.tokenized();
    let mut rest = t.tokens.clone();
    let target = rest.remove(record.target_index);
    let n = t.tokens.len();
    let (at, seed) = match kind {
        VariantKind::Beginning => (0, None),
        VariantKind::End => {
            let slot = rest
                .iter()
                .rposition(|tok| tok.chars().any(char::is_alphanumeric))
                .map_or(rest.len(), |j| j + 1);
            (slot, None)
        }
        VariantKind::Middle => {
            let slots: Vec<usize> = (1..n.saturating_sub(1))
                .filter(|&p| p != record.target_index)
                .collect();
            if slots.is_empty() {
                return Err(Skip {
                    source_id: record.id.clone(),
                    kind,
                    reason: SkipReason::NoValidSlot,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (slots[rng.gen_range(0..slots.len())], Some(seed))
        }
        other => panic!("reposition does not produce {other} variants"),
    };
    rest.insert(at, target);
    Ok(ShuffleVariant::build(
        record, kind, rest, t.terminal, at, seed, None,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartOfSpeech {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl PartOfSpeech {
    pub fn code(self) -> char {
        match self {
            PartOfSpeech::Noun => 'n',
            PartOfSpeech::Verb => 'v',
            PartOfSpeech::Adj => 'a',
            PartOfSpeech::Adv => 'r',
        }
    }

    /// Single-letter lexicon codes; satellite adjectives (`s`) fold into `a`.
    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "n" => Some(PartOfSpeech::Noun),
            "v" => Some(PartOfSpeech::Verb),
            "a" | "s" => Some(PartOfSpeech::Adj),
            "r" => Some(PartOfSpeech::Adv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalEntry {
    pub lemma: String,
    pub pos: PartOfSpeech,
    /// Derivationally related forms.
    pub related: Vec<(String, PartOfSpeech)>,
}

/// Lemma lookup table compiled from a lexical database.
///
/// File format, one entry per line: `lemma<TAB>pos<TAB>rel/pos,rel/pos,...`.
/// Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<LexicalEntry>>,
    skipped_lines: usize,
}

impl Lexicon {
    pub fn from_entries(entries: impl IntoIterator<Item = LexicalEntry>) -> Self {
        let mut lex = Self::default();
        for e in entries {
            lex.add(e);
        }
        lex
    }

    fn add(&mut self, entry: LexicalEntry) {
        let slot = self.entries.entry(entry.lemma.to_lowercase()).or_default();
        match slot.iter_mut().find(|e| e.pos == entry.pos) {
            Some(existing) => existing.related.extend(entry.related),
            None => slot.push(entry),
        }
    }

    fn parse_line(line: &str) -> Option<LexicalEntry> {
        let mut cols = line.split('\t');
        let lemma = cols.next()?.trim();
        let pos = PartOfSpeech::from_code(cols.next()?)?;
        let related = cols
            .next()
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|item| {
                let (l, p) = item.trim().rsplit_once('/')?;
                Some((l.to_owned(), PartOfSpeech::from_code(p)?))
            })
            .collect::<Option<Vec<_>>>()?;
        if lemma.is_empty() || cols.next().is_some() {
            return None;
        }
        Some(LexicalEntry {
            lemma: lemma.to_owned(),
            pos,
            related,
        })
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let lex = Self::parse(&std::fs::read_to_string(path)?);
        if lex.skipped_lines > 0 {
            log::warn!(
                "{}: skipped {} malformed lines",
                path.display(),
                lex.skipped_lines
            );
        }
        Ok(lex)
    }

    /// Parses lexicon TSV text; malformed lines are counted and skipped.
    pub fn parse(src: &str) -> Self {
        let mut lex = Self::default();
        for line in src.lines() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match Self::parse_line(line) {
                Some(e) => lex.add(e),
                None => lex.skipped_lines += 1,
            }
        }
        lex
    }

    pub fn get(&self, lemma: &str) -> &[LexicalEntry] {
        self.entries.get(lemma).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    /// Head entries for an inflected word form, using suffix rules. The
    /// first candidate lemma present in the table wins; when the suffix
    /// implies a part of speech, entries with that part of speech are
    /// preferred.
    pub fn resolve(&self, word: &str) -> Vec<&LexicalEntry> {
        for (lemma, hint) in lemma_candidates(&word.to_lowercase()) {
            let found = self.get(&lemma);
            if found.is_empty() {
                continue;
            }
            let hinted: Vec<_> = found.iter().filter(|e| Some(e.pos) == hint).collect();
            return if hinted.is_empty() {
                found.iter().collect()
            } else {
                hinted
            };
        }
        Vec::new()
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// `stem`, `stem` + "e", and `stem` with a doubled final consonant undone.
fn push_stem(
    out: &mut Vec<(String, Option<PartOfSpeech>)>,
    stem: &str,
    hint: Option<PartOfSpeech>,
) {
    if stem.is_empty() {
        return;
    }
    out.push((stem.to_owned(), hint));
    out.push((format!("{stem}e"), hint));
    let b = stem.as_bytes();
    if b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] && !is_vowel(b[b.len() - 1] as char) {
        out.push((stem[..stem.len() - 1].to_owned(), hint));
    }
}

/// Candidate lemmas for a lowercase word, most literal first.
fn lemma_candidates(word: &str) -> Vec<(String, Option<PartOfSpeech>)> {
    use PartOfSpeech::*;
    let mut out = vec![(word.to_owned(), None)];
    if let Some(stem) = word.strip_suffix("ied") {
        out.push((format!("{stem}y"), Some(Verb)));
    } else if let Some(stem) = word.strip_suffix("ed") {
        push_stem(&mut out, stem, Some(Verb));
    }
    if let Some(stem) = word.strip_suffix("ing") {
        push_stem(&mut out, stem, Some(Verb));
    }
    if let Some(stem) = word.strip_suffix("ies") {
        out.push((format!("{stem}y"), None));
    }
    if let Some(stem) = word.strip_suffix("es") {
        out.push((stem.to_owned(), None));
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !stem.ends_with('s') {
            out.push((stem.to_owned(), None));
        }
    }
    if let Some(stem) = word.strip_suffix("ly") {
        out.push((stem.to_owned(), Some(Adv)));
    }
    out.dedup();
    out
}

/// Replaces the target with the lexicographically smallest derivationally
/// related form of a different part of speech. Surrounding punctuation on
/// the token and a leading capital are kept.
pub fn pos_substitute(record: &MunchRecord, lexicon: &Lexicon) -> VariantOutcome {
    let skip = |reason| Skip {
        source_id: record.id.clone(),
        kind: VariantKind::Pos,
        reason,
    };
    let t = record.tokenized();
    let token = &t.tokens[record.target_index];
    let (prefix, core, suffix) = split_affixes(token);
    let heads = lexicon.resolve(core);
    if heads.is_empty() {
        return Err(skip(SkipReason::LexiconMiss));
    }
    let replacement = heads
        .iter()
        .flat_map(|h| h.related.iter().filter(move |(_, p)| *p != h.pos))
        .map(|(lemma, _)| lemma)
        .filter(|lemma| !lemma.contains(['_', ' ']))
        .min()
        .ok_or_else(|| skip(SkipReason::NoCrossPosRelative))?;
    let mut word = replacement.clone();
    if core.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        word = c
            .next()
            .map(|f| f.to_uppercase().chain(c).collect())
            .unwrap_or_default();
    }
    let mut tokens = t.tokens.clone();
    tokens[record.target_index] = format!("{prefix}{word}{suffix}");
    Ok(ShuffleVariant::build(
        record,
        VariantKind::Pos,
        tokens,
        t.terminal,
        record.target_index,
        None,
        Some(word),
    ))
}

/// One variant (or skip) per requested kind, seeds derived from `base_seed`.
/// `Pos` is skipped with `LexiconMiss` when no lexicon is available.
pub fn generate_variants(
    record: &MunchRecord,
    kinds: &[VariantKind],
    base_seed: u64,
    lexicon: Option<&Lexicon>,
) -> Vec<VariantOutcome> {
    kinds
        .iter()
        .map(|&kind| {
            let seed = derive_seed(base_seed, &record.id, kind);
            match kind {
                VariantKind::Original => Ok(original(record)),
                VariantKind::Random => Ok(random_shuffle(record, seed)),
                VariantKind::Pos => match lexicon {
                    Some(lex) => pos_substitute(record, lex),
                    None => Err(Skip {
                        source_id: record.id.clone(),
                        kind,
                        reason: SkipReason::LexiconMiss,
                    }),
                },
                _ => reposition(record, kind, seed),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Genre;

    fn council() -> MunchRecord {
        MunchRecord {
            id: "t1".into(),
            sentence: "The council appealed by case stated.".into(),
            target_index: 2,
            target_word: "appealed".into(),
            gold_substitutes: vec!["petitioned".into()],
            genre: Genre::News,
            novelty: 0.2,
        }
    }

    fn record(sentence: &str, target_index: usize) -> MunchRecord {
        let t = crate::text::tokenize(sentence);
        MunchRecord {
            target_word: t.tokens[target_index].clone(),
            sentence: sentence.into(),
            target_index,
            ..council()
        }
    }

    fn sorted(mut v: Vec<String>) -> Vec<String> {
        v.sort();
        v
    }

    fn lexicon(src: &str) -> Lexicon {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.tsv");
        std::fs::write(&p, src).unwrap();
        Lexicon::load(&p).unwrap()
    }

    #[test]
    fn table_goldens() {
        let r = council();
        assert_eq!(
            reposition(&r, VariantKind::Beginning, 0).unwrap().sentence,
            "appealed The council by case stated."
        );
        let end = reposition(&r, VariantKind::End, 0).unwrap();
        assert_eq!(end.sentence, "The council by case stated appealed.");
        assert_eq!(end.target_index_after, 5);
        assert_eq!(original(&r).sentence, r.sentence);
    }

    #[test]
    fn pos_golden_and_tie_break() {
        let lex = lexicon("appeal\tv\tcomplainant/n\n");
        let v = pos_substitute(&council(), &lex).unwrap();
        assert_eq!(v.sentence, "The council complainant by case stated.");
        assert_eq!(v.substituted_word.as_deref(), Some("complainant"));

        let lex = lexicon("appeal\tv\tcomplainant/n,appeal/n\n");
        assert_eq!(
            pos_substitute(&council(), &lex)
                .unwrap()
                .substituted_word
                .as_deref(),
            Some("appeal")
        );
    }

    #[test]
    fn pos_skips() {
        let same_pos = lexicon("appeal\tv\tentreat/v\n");
        assert_eq!(
            pos_substitute(&council(), &same_pos).unwrap_err().reason,
            SkipReason::NoCrossPosRelative
        );
        let other = lexicon("# header\nrun\tv\trunner/n\nbroken line\n");
        assert_eq!(other.skipped_lines(), 1);
        assert_eq!(
            pos_substitute(&council(), &other).unwrap_err().reason,
            SkipReason::LexiconMiss
        );
    }

    #[test]
    fn pos_keeps_affixes_and_case() {
        let lex = lexicon("bloom\tv\tbloom/n,blossom/n\n");
        let r = record("\"Blooming,\" she said.", 0);
        let v = pos_substitute(&r, &lex).unwrap();
        assert_eq!(v.sentence, "\"Bloom,\" she said.");
    }

    #[test]
    fn lemma_rules() {
        let lex = Lexicon::from_entries(
            [
                ("stop", PartOfSpeech::Verb),
                ("carry", PartOfSpeech::Verb),
                ("make", PartOfSpeech::Verb),
                ("box", PartOfSpeech::Noun),
            ]
            .map(|(l, p)| LexicalEntry {
                lemma: l.into(),
                pos: p,
                related: vec![],
            }),
        );
        for (form, lemma) in [
            ("stopped", "stop"),
            ("carried", "carry"),
            ("making", "make"),
            ("boxes", "box"),
            ("Stop", "stop"),
        ] {
            assert_eq!(lex.resolve(form)[0].lemma, lemma, "{form}");
        }
        assert!(lex.resolve("zebra").is_empty());
    }

    #[test]
    fn middle_skip_and_bounds() {
        let r = record("Time flies fast.", 1);
        assert_eq!(
            reposition(&r, VariantKind::Middle, 7).unwrap_err().reason,
            SkipReason::NoValidSlot
        );
        let r = council();
        for seed in 0..200 {
            let v = reposition(&r, VariantKind::Middle, seed).unwrap();
            assert!(![0, 5, 2].contains(&v.target_index_after));
            assert_eq!(v.tokens[v.target_index_after], "appealed");
        }
    }

    #[test]
    fn random_is_deterministic_and_not_identity() {
        let r = council();
        let a = random_shuffle(&r, 42);
        assert_eq!(a, random_shuffle(&r, 42));
        assert_ne!(a.tokens, r.tokenized().tokens);
        assert_eq!(a.tokens[a.target_index_after], "appealed");
        assert!(a.sentence.ends_with('.'));
        let single = record("Hello!", 0);
        assert_eq!(random_shuffle(&single, 1).sentence, "Hello!");
    }

    #[test]
    fn end_skips_trailing_punctuation_tokens() {
        let r = record("He said it was gold --", 4);
        let v = reposition(&r, VariantKind::End, 0).unwrap();
        assert_eq!(v.sentence, "He said it was gold --");
        let r = record("Gold he said it was --", 0);
        assert_eq!(
            reposition(&r, VariantKind::End, 0).unwrap().sentence,
            "he said it was Gold --"
        );
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(
            derive_seed(1, "a", VariantKind::Random),
            derive_seed(1, "a", VariantKind::Random)
        );
        assert_ne!(
            derive_seed(1, "a", VariantKind::Random),
            derive_seed(1, "a", VariantKind::Middle)
        );
        assert_ne!(
            derive_seed(1, "a", VariantKind::Random),
            derive_seed(2, "a", VariantKind::Random)
        );
    }

    #[test]
    fn generate_all_kinds() {
        let out = generate_variants(&council(), &VariantKind::ALL, 9, None);
        assert_eq!(out.len(), 6);
        assert_eq!(out[2].as_ref().unwrap_err().reason, SkipReason::LexiconMiss);
        for v in out.iter().flatten().filter(|v| v.kind != VariantKind::Pos) {
            assert_eq!(
                sorted(v.tokens.clone()),
                sorted(council().tokenized().tokens)
            );
            assert_eq!(v.seed.is_some(), v.kind.is_seeded());
        }
    }

    #[test]
    fn kind_parse() {
        assert_eq!(
            "Middle".parse::<VariantKind>().unwrap(),
            VariantKind::Middle
        );
        assert!("sideways".parse::<VariantKind>().is_err());
    }
}
