//! Metaphor detection on original and shuffled MUNCH sentences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    cell, csv_string, exclusion_counts, fan_out, Concurrency, Exclusion, ExclusionReason,
    ItemOutput, RunOutput,
};
use crate::gateway::{slots, Gateway, Label};
use crate::transforms::{ShuffleVariant, VariantKind, VariantOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionLabel {
    Metaphor,
    Literal,
    Unparsed,
}

/// Every MUNCH sentence carries a metaphor, so `correct` means the model
/// said so.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub item_id: String,
    pub record_id: String,
    pub kind: VariantKind,
    pub sentence: String,
    pub label: DetectionLabel,
    pub correct: bool,
}

fn item_id(source_id: &str, kind: VariantKind) -> String {
    format!("{source_id}:{kind}")
}

fn kind_of(item_id: &str) -> Option<VariantKind> {
    item_id.rsplit_once(':')?.1.parse().ok()
}

fn run_variant(outcome: &VariantOutcome, gateway: &Gateway) -> ItemOutput<DetectionOutcome> {
    let mut out = ItemOutput::default();
    let v: &ShuffleVariant = match outcome {
        Ok(v) => v,
        Err(skip) => {
            out.exclusions.push(Exclusion::new(
                item_id(&skip.source_id, skip.kind),
                "shuffle",
                ExclusionReason::Skipped,
                skip.reason.to_string(),
            ));
            return out;
        }
    };
    let id = item_id(&v.source_id, v.kind);
    let label = match out.generate(
        gateway,
        &id,
        "detection.detect",
        &slots([("sentence", v.sentence.as_str())]),
    ) {
        Ok(rec) => match rec.label() {
            Some(Label::Metaphor) => DetectionLabel::Metaphor,
            Some(Label::Literal) => DetectionLabel::Literal,
            None => DetectionLabel::Unparsed,
        },
        Err(e) if e.reason == ExclusionReason::ParseFailed => DetectionLabel::Unparsed,
        Err(e) => {
            out.exclusions.push(e);
            return out;
        }
    };
    out.items.push(DetectionOutcome {
        item_id: id,
        record_id: v.source_id.clone(),
        kind: v.kind,
        sentence: v.sentence.clone(),
        label,
        correct: label == DetectionLabel::Metaphor,
    });
    out
}

/// Asks the detection prompt once per variant. Skipped variants become
/// exclusions; unparsable answers stay as `Unparsed` items.
pub fn run_shuffle_detection(
    variants: &[VariantOutcome],
    gateway: &Gateway,
    concurrency: Concurrency,
) -> RunOutput<DetectionOutcome> {
    RunOutput::collect(fan_out(variants, concurrency, |v| run_variant(v, gateway)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindRow {
    pub kind: VariantKind,
    /// Percent labeled metaphor among parsed answers.
    pub accuracy: Option<f64>,
    pub metaphor: usize,
    pub literal: usize,
    pub unparsed: usize,
    pub skipped: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub model_id: String,
    pub items_in: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
    pub rows: Vec<KindRow>,
}

pub fn summarize(
    model_id: &str,
    items: &[DetectionOutcome],
    exclusions: &[Exclusion],
) -> DetectionSummary {
    let rows = VariantKind::ALL
        .into_iter()
        .map(|kind| {
            let count = |l| {
                items
                    .iter()
                    .filter(|i| i.kind == kind && i.label == l)
                    .count()
            };
            let (metaphor, literal) = (
                count(DetectionLabel::Metaphor),
                count(DetectionLabel::Literal),
            );
            let mine: Vec<_> = exclusions
                .iter()
                .filter(|e| kind_of(&e.item_id) == Some(kind))
                .collect();
            let skipped = mine
                .iter()
                .filter(|e| e.reason == ExclusionReason::Skipped)
                .count();
            KindRow {
                kind,
                accuracy: (metaphor + literal > 0)
                    .then(|| 100.0 * metaphor as f64 / (metaphor + literal) as f64),
                metaphor,
                literal,
                unparsed: count(DetectionLabel::Unparsed),
                skipped,
                excluded: mine.len() - skipped,
            }
        })
        .collect();
    DetectionSummary {
        model_id: model_id.to_owned(),
        items_in: items.len() + exclusions.len(),
        excluded: exclusion_counts(exclusions),
        rows,
    }
}

impl DetectionSummary {
    /// One row per variant kind; the model column holds accuracy in percent.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    cell(r.accuracy, 2),
                    r.metaphor.to_string(),
                    r.literal.to_string(),
                    r.unparsed.to_string(),
                    r.skipped.to_string(),
                    r.excluded.to_string(),
                ]
            })
            .collect();
        csv_string(
            &[
                "kind",
                &self.model_id,
                "metaphor",
                "literal",
                "unparsed",
                "skipped",
                "excluded",
            ],
            &rows,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Genre, MunchRecord};
    use crate::gateway::{ChatReply, ScriptedChatProvider, TemplateRegistry};
    use crate::transforms::generate_variants;

    fn variants() -> Vec<VariantOutcome> {
        let short = MunchRecord {
            id: "s".into(),
            sentence: "Time flies fast.".into(),
            target_index: 1,
            target_word: "flies".into(),
            gold_substitutes: vec!["passes".into()],
            genre: Genre::Fiction,
            novelty: 0.1,
        };
        let long = MunchRecord {
            id: "c".into(),
            sentence: "The council appealed by case stated.".into(),
            target_index: 2,
            target_word: "appealed".into(),
            gold_substitutes: vec!["petitioned".into()],
            genre: Genre::News,
            novelty: 0.2,
        };
        [short, long]
            .iter()
            .flat_map(|r| generate_variants(r, &VariantKind::ALL, 5, None))
            .collect()
    }

    #[test]
    fn always_yes_is_perfect() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::constant("m", "Yes")),
            TemplateRegistry::defaults(),
        );
        let out = run_shuffle_detection(&variants(), &gw, Concurrency(1));
        let s = summarize("m", &out.items, &out.exclusions);
        assert_eq!(s.rows.len(), 6);
        for r in &s.rows {
            match r.kind {
                VariantKind::Pos => assert_eq!((r.accuracy, r.skipped), (None, 2)),
                VariantKind::Middle => assert_eq!((r.accuracy, r.skipped), (Some(100.0), 1)),
                _ => assert_eq!(r.accuracy, Some(100.0)),
            }
        }
        assert_eq!(s.items_in, 12);
        let csv = s.to_csv();
        assert!(csv.starts_with(
            "kind,m,metaphor,literal,unparsed,skipped,excluded\noriginal,100.00,2,0,0,0,0\n"
        ));
        assert!(csv.contains("pos,,0,0,0,2,0\n"));
    }

    #[test]
    fn unparsed_is_outside_the_denominator() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::new("m", |p| {
                ChatReply::text(if p.contains("council") { "No" } else { "hmm" })
            })),
            TemplateRegistry::defaults(),
        );
        let out = run_shuffle_detection(&variants(), &gw, Concurrency(1));
        let s = summarize("m", &out.items, &out.exclusions);
        let original = &s.rows[0];
        assert_eq!((original.literal, original.unparsed), (1, 1));
        assert_eq!(original.accuracy, Some(0.0));
    }
}
