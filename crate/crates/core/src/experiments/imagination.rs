//! Metaphorical imagination: do word sets generated with and without the
//! sentence context overlap?
//!
//! LM asks for metaphorical words given a literal word (the first gold
//! substitute, in the literal version of the sentence). ML asks for literal
//! words given the metaphorical target word.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::mean;
use super::{
    cell, csv_string, exclusion_counts, fan_out, Concurrency, Exclusion, ExclusionReason,
    ItemOutput, RunOutput,
};
use crate::corpus::{Genre, MunchRecord};
use crate::embeddings::{word_vector, WordVectorTable};
use crate::gateway::{slots, Gateway};
use crate::geometry::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Literal word in, metaphorical words out.
    Lm,
    /// Metaphorical word in, literal words out.
    Ml,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Lm, Direction::Ml];

    pub fn label(self) -> &'static str {
        match self {
            Direction::Lm => "LM",
            Direction::Ml => "ML",
        }
    }

    fn templates(self) -> (&'static str, &'static str) {
        match self {
            Direction::Lm => ("imagination.lm_context", "imagination.lm_word"),
            Direction::Ml => ("imagination.ml_context", "imagination.ml_word"),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapBasis {
    SharedWord,
    MaxCosine,
    AllOov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub ratio: f64,
    pub basis: OverlapBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OverlapError {
    #[error("word set is empty")]
    EmptySet,
}

fn normalize_set(words: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    for w in words {
        let w = w.trim().to_lowercase();
        if !w.is_empty() && !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

/// 1.0 when the sets share a word (lowercase equality). Otherwise the
/// largest word-vector cosine over all cross pairs, clamped to `[0, 1]`;
/// pairs with an out-of-vocabulary side are skipped, and 0.0 is returned
/// when no pair is left.
pub fn overlap_ratio(
    set_a: &[String],
    set_b: &[String],
    table: &WordVectorTable,
) -> Result<Overlap, OverlapError> {
    let (a, b) = (normalize_set(set_a), normalize_set(set_b));
    if a.is_empty() || b.is_empty() {
        return Err(OverlapError::EmptySet);
    }
    if a.iter().any(|w| b.contains(w)) {
        return Ok(Overlap {
            ratio: 1.0,
            basis: OverlapBasis::SharedWord,
        });
    }
    let vb: Vec<_> = b.iter().filter_map(|w| word_vector(w, table)).collect();
    let best = a
        .iter()
        .filter_map(|w| word_vector(w, table))
        .flat_map(|va| vb.iter().filter_map(move |vb| cosine(va, vb).ok()))
        .fold(None, |acc: Option<f64>, c| {
            Some(acc.map_or(c, |m| m.max(c)))
        });
    Ok(match best {
        Some(c) => Overlap {
            ratio: c.clamp(0.0, 1.0),
            basis: OverlapBasis::MaxCosine,
        },
        None => Overlap {
            ratio: 0.0,
            basis: OverlapBasis::AllOov,
        },
    })
}

/// Overlap between the contextual and context-free sets of one record and
/// direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapResult {
    pub record_id: String,
    pub direction: Direction,
    pub genre: Genre,
    pub novelty: f64,
    pub cue_word: String,
    pub context_words: Vec<String>,
    pub word_words: Vec<String>,
    pub ratio: f64,
    pub basis: OverlapBasis,
}

fn run_record(
    record: &MunchRecord,
    gateway: &Gateway,
    table: &WordVectorTable,
) -> ItemOutput<OverlapResult> {
    let mut out = ItemOutput::default();
    let count = gateway.parse_options().word_count.to_string();
    for direction in Direction::BOTH {
        let id = format!("{}:{}", record.id, direction.label().to_lowercase());
        let (cue, sentence) = match direction {
            Direction::Lm => (
                record.gold_substitutes.first().cloned().unwrap_or_default(),
                record.literal_sentence(),
            ),
            Direction::Ml => (record.target_word.clone(), record.sentence.clone()),
        };
        let (context_tpl, word_tpl) = direction.templates();
        let context = out.generate(
            gateway,
            &id,
            context_tpl,
            &slots([
                ("sentence", sentence.as_str()),
                ("word", cue.as_str()),
                ("count", count.as_str()),
            ]),
        );
        let context = match context {
            Ok(r) => r.words().map(|w| w.words.clone()).unwrap_or_default(),
            Err(e) => {
                out.exclusions.push(e);
                continue;
            }
        };
        let word = match out.generate(
            gateway,
            &id,
            word_tpl,
            &slots([("word", cue.as_str()), ("count", count.as_str())]),
        ) {
            Ok(r) => r.words().map(|w| w.words.clone()).unwrap_or_default(),
            Err(e) => {
                out.exclusions.push(e);
                continue;
            }
        };
        match overlap_ratio(&context, &word, table) {
            Ok(o) => out.items.push(OverlapResult {
                record_id: record.id.clone(),
                direction,
                genre: record.genre,
                novelty: record.novelty,
                cue_word: cue,
                context_words: context,
                word_words: word,
                ratio: o.ratio,
                basis: o.basis,
            }),
            Err(e) => out.exclusions.push(Exclusion::new(
                id,
                "overlap",
                ExclusionReason::EmptyWordSet,
                e.to_string(),
            )),
        }
    }
    out
}

/// Four word-list prompts per record (two per direction) and one overlap
/// ratio per direction.
pub fn run_imagination(
    records: &[MunchRecord],
    gateway: &Gateway,
    table: &WordVectorTable,
    concurrency: Concurrency,
) -> RunOutput<OverlapResult> {
    RunOutput::collect(fan_out(records, concurrency, |r| {
        run_record(r, gateway, table)
    }))
}

pub const HISTOGRAM_BINS: [&str; 5] = ["1.0", "[0.8,1.0)", "[0.5,0.8)", "[0.2,0.5)", "[0.0,0.2)"];

/// Index into [`HISTOGRAM_BINS`].
pub fn histogram_bin(ratio: f64) -> usize {
    if ratio >= 1.0 {
        0
    } else if ratio >= 0.8 {
        1
    } else if ratio >= 0.5 {
        2
    } else if ratio >= 0.2 {
        3
    } else {
        4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub label: String,
    /// Mean ratio × 100.
    pub mean_pct: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub subset: String,
    pub direction: Direction,
    pub counts: [usize; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginationSummary {
    pub model_id: String,
    pub novelty_threshold: f64,
    pub items_in: usize,
    pub scored: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
    pub rows: Vec<OverlapRow>,
    pub histogram: Vec<HistogramRow>,
}

/// Subsets in table order: everything, each genre, then novel metaphors.
type Subset = (String, Box<dyn Fn(&OverlapResult) -> bool>);

fn subsets(threshold: f64) -> Vec<Subset> {
    let mut out: Vec<Subset> = vec![("all".into(), Box::new(|_| true))];
    for g in Genre::ALL {
        out.push((
            g.as_str().into(),
            Box::new(move |r: &OverlapResult| r.genre == g),
        ));
    }
    out.push((
        "novel".into(),
        Box::new(move |r: &OverlapResult| r.novelty > threshold),
    ));
    out
}

fn subset_title(subset: &str) -> String {
    match subset {
        "all" => String::new(),
        "novel" => "Novel".into(),
        g => g
            .parse::<Genre>()
            .map(|g| g.title().to_owned())
            .unwrap_or_else(|_| g.to_owned()),
    }
}

pub fn summarize(
    model_id: &str,
    items: &[OverlapResult],
    exclusions: &[Exclusion],
    novelty_threshold: f64,
) -> ImaginationSummary {
    let mut rows = Vec::new();
    let mut histogram = Vec::new();
    for (subset, keep) in subsets(novelty_threshold) {
        for direction in Direction::BOTH {
            let ratios: Vec<f64> = items
                .iter()
                .filter(|r| r.direction == direction && keep(r))
                .map(|r| r.ratio)
                .collect();
            let title = subset_title(&subset);
            rows.push(OverlapRow {
                label: if title.is_empty() {
                    direction.label().to_owned()
                } else {
                    format!("{title} ({direction})")
                },
                mean_pct: mean(&ratios).map(|m| 100.0 * m),
                n: ratios.len(),
            });
            let mut counts = [0; 5];
            for r in &ratios {
                counts[histogram_bin(*r)] += 1;
            }
            histogram.push(HistogramRow {
                subset: subset.clone(),
                direction,
                counts,
            });
        }
    }
    ImaginationSummary {
        model_id: model_id.to_owned(),
        novelty_threshold,
        items_in: items.len() + exclusions.len(),
        scored: items.len(),
        excluded: exclusion_counts(exclusions),
        rows,
        histogram,
    }
}

impl ImaginationSummary {
    /// One row per direction overall, per genre and for novel metaphors.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.label.clone(), cell(r.mean_pct, 2), r.n.to_string()])
            .collect();
        csv_string(&["setting", &self.model_id, "n"], &rows)
    }

    pub fn histogram_csv(&self) -> String {
        let mut rows = Vec::new();
        for h in &self.histogram {
            let total: usize = h.counts.iter().sum();
            for (bin, count) in HISTOGRAM_BINS.iter().zip(h.counts) {
                let share = (total > 0).then(|| count as f64 / total as f64);
                rows.push(vec![
                    h.subset.clone(),
                    h.direction.label().to_owned(),
                    (*bin).to_owned(),
                    count.to_string(),
                    cell(share, 4),
                ]);
            }
        }
        csv_string(&["subset", "direction", "bin", "count", "share"], &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatReply, ScriptedChatProvider, TemplateRegistry};

    fn words(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn table() -> WordVectorTable {
        WordVectorTable::from_entries(
            3,
            [
                ("fast", vec![1.0, 0.0, 0.0]),
                ("quick", vec![0.9, 0.1, 0.0]),
                ("slow", vec![-1.0, 0.2, 0.0]),
                ("car", vec![0.0, 1.0, 0.0]),
                ("tortoise", vec![-0.5, 0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shared_word() {
        let o = overlap_ratio(
            &words(&["fast", "quick"]),
            &words(&["Quick", "speedy"]),
            &table(),
        )
        .unwrap();
        assert_eq!(
            o,
            Overlap {
                ratio: 1.0,
                basis: OverlapBasis::SharedWord
            }
        );
    }

    #[test]
    fn all_oov() {
        let o = overlap_ratio(&words(&["zzqx"]), &words(&["qqzv"]), &table()).unwrap();
        assert_eq!(
            o,
            Overlap {
                ratio: 0.0,
                basis: OverlapBasis::AllOov
            }
        );
    }

    #[test]
    fn max_cosine_and_clamp() {
        let t = table();
        let o = overlap_ratio(&words(&["fast", "zzz"]), &words(&["car", "quick"]), &t).unwrap();
        let expected = 0.9 / (0.82f64).sqrt();
        assert!((o.ratio - expected).abs() < 1e-12);
        assert_eq!(o.basis, OverlapBasis::MaxCosine);
        let neg = overlap_ratio(&words(&["fast"]), &words(&["slow"]), &t).unwrap();
        assert_eq!(neg.ratio, 0.0);
        assert_eq!(neg.basis, OverlapBasis::MaxCosine);
    }

    #[test]
    fn empty_set() {
        assert_eq!(
            overlap_ratio(&[], &words(&["a"]), &table()),
            Err(OverlapError::EmptySet)
        );
        assert_eq!(
            overlap_ratio(&words(&[" "]), &words(&["a"]), &table()),
            Err(OverlapError::EmptySet)
        );
    }

    #[test]
    fn bins() {
        assert_eq!(histogram_bin(1.0), 0);
        assert_eq!(histogram_bin(0.8), 1);
        assert_eq!(histogram_bin(0.79), 2);
        assert_eq!(histogram_bin(0.2), 3);
        assert_eq!(histogram_bin(0.0), 4);
    }

    fn record(id: &str, genre: Genre, novelty: f64) -> MunchRecord {
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
    fn identical_sets_give_one_hundred() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::constant(
                "m",
                "1. ask\n2. plead\n3. request",
            )),
            TemplateRegistry::defaults(),
        );
        let recs = vec![
            record("a", Genre::News, 0.1),
            record("b", Genre::Fiction, 0.5),
        ];
        let out = run_imagination(&recs, &gw, &table(), Concurrency(1));
        assert_eq!(out.items.len(), 4);
        assert_eq!(out.generations.len(), 8);
        let s = summarize("m", &out.items, &out.exclusions, 0.3);
        let by_label: BTreeMap<_, _> = s.rows.iter().map(|r| (r.label.as_str(), r)).collect();
        assert_eq!(by_label["LM"].mean_pct, Some(100.0));
        assert_eq!(by_label["ML"].n, 2);
        assert_eq!(by_label["Novel (ML)"].n, 1);
        assert_eq!(by_label["Academic (LM)"].mean_pct, None);
        let hist = s.histogram_csv();
        assert!(hist.contains("all,LM,1.0,2,1.0000\n"));
        assert!(hist.contains("academic,ML,1.0,0,\n"));
    }

    #[test]
    fn prompts_use_cue_words() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::new("m", |p| {
                ChatReply::text(p.to_lowercase().replace(['"', '.'], " "))
            })),
            TemplateRegistry::defaults(),
        );
        let out = run_imagination(
            &[record("a", Genre::News, 0.0)],
            &gw,
            &table(),
            Concurrency(1),
        );
        let lm = out
            .generations
            .iter()
            .find(|g| g.template_id == "imagination.lm_context")
            .unwrap();
        assert!(lm
            .rendered_prompt
            .contains("The council petitioned by case stated."));
        assert!(lm.rendered_prompt.contains("\"petitioned\""));
        let ml = out
            .generations
            .iter()
            .find(|g| g.template_id == "imagination.ml_word")
            .unwrap();
        assert!(ml.rendered_prompt.contains("\"appealed\""));
    }
}
