//! Multiple-choice validation: pick the interpretation of m1 among R1, a
//! paraphrase of R2, a literal reading of m2 and R2 itself.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::wilson_interval;
use super::{
    cell, csv_string, exclusion_counts, fan_out, item_seed, Concurrency, Exclusion,
    ExclusionReason, ItemOutput, RunOutput,
};
use crate::corpus::FigQaGroup;
use crate::gateway::{slots, Gateway};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionRole {
    /// The correct answer.
    R1,
    /// Paraphrase of R2.
    L21,
    /// Literal meaning generated for m2.
    L22,
    R2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultichoiceItem {
    pub item_id: String,
    pub options: Vec<String>,
    pub roles: Vec<OptionRole>,
    pub seed: u64,
    pub correct_index: usize,
    pub chosen: usize,
    pub correct: bool,
}

pub fn option_letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

fn format_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {o}", option_letter(i)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn run_group(group: &FigQaGroup, gateway: &Gateway, base_seed: u64) -> ItemOutput<MultichoiceItem> {
    let mut out = ItemOutput::default();
    let id = group.id.as_str();
    let l21 = match out.generate(
        gateway,
        id,
        "multichoice.paraphrase_reference",
        &slots([("sentence", group.r2.as_str())]),
    ) {
        Ok(r) => r.sentence().unwrap_or_default().to_owned(),
        Err(e) => {
            out.exclusions.push(e);
            return out;
        }
    };
    let l22 = match out.generate(
        gateway,
        id,
        "multichoice.paraphrase_metaphor",
        &slots([("metaphor", group.m2.as_str())]),
    ) {
        Ok(r) => r.sentence().unwrap_or_default().to_owned(),
        Err(e) => {
            out.exclusions.push(e);
            return out;
        }
    };

    let seed = item_seed(base_seed, id, "multichoice");
    let mut pool = vec![
        (OptionRole::R1, group.r1.clone()),
        (OptionRole::L21, l21),
        (OptionRole::L22, l22),
        (OptionRole::R2, group.r2.clone()),
    ];
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (roles, options): (Vec<_>, Vec<_>) = pool.into_iter().unzip();
    let correct_index = roles
        .iter()
        .position(|r| *r == OptionRole::R1)
        .expect("R1 is an option");

    let choose = slots([
        ("metaphor", group.m1.clone()),
        ("options", format_options(&options)),
    ]);
    match out.generate(gateway, id, "multichoice.choose", &choose) {
        Ok(rec) => {
            let chosen = rec.choice().expect("choice template parses to a choice");
            out.items.push(MultichoiceItem {
                item_id: id.to_owned(),
                options,
                roles,
                seed,
                correct_index,
                chosen,
                correct: chosen == correct_index,
            });
        }
        Err(e) => out.exclusions.push(e),
    }
    out
}

/// One question per group. Option order is shuffled with a seed derived
/// from `base_seed` and the group id.
pub fn run_multichoice(
    groups: &[FigQaGroup],
    gateway: &Gateway,
    base_seed: u64,
    concurrency: Concurrency,
) -> RunOutput<MultichoiceItem> {
    RunOutput::collect(fan_out(groups, concurrency, |g| {
        run_group(g, gateway, base_seed)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichoiceSummary {
    pub model_id: String,
    pub items_in: usize,
    pub scored: usize,
    pub correct: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
    /// Percent correct among scored items.
    pub accuracy: Option<f64>,
    /// 95% Wilson interval, in percent.
    pub ci: Option<(f64, f64)>,
}

pub fn summarize(
    model_id: &str,
    items: &[MultichoiceItem],
    exclusions: &[Exclusion],
) -> MultichoiceSummary {
    let correct = items.iter().filter(|i| i.correct).count();
    let scored = items.len();
    MultichoiceSummary {
        model_id: model_id.to_owned(),
        items_in: scored + exclusions.len(),
        scored,
        correct,
        excluded: exclusion_counts(exclusions),
        accuracy: (scored > 0).then(|| 100.0 * correct as f64 / scored as f64),
        ci: wilson_interval(correct, scored).map(|(lo, hi)| (100.0 * lo, 100.0 * hi)),
    }
}

impl MultichoiceSummary {
    pub fn to_csv(&self) -> String {
        let mut rows = vec![
            vec!["accuracy".into(), cell(self.accuracy, 2)],
            vec!["ci95_low".into(), cell(self.ci.map(|c| c.0), 2)],
            vec!["ci95_high".into(), cell(self.ci.map(|c| c.1), 2)],
            vec!["correct".into(), self.correct.to_string()],
            vec!["items_in".into(), self.items_in.to_string()],
            vec!["scored".into(), self.scored.to_string()],
        ];
        for (reason, n) in &self.excluded {
            rows.push(vec![format!("excluded_{reason}"), n.to_string()]);
        }
        csv_string(&["metric", &self.model_id], &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatReply, ScriptedChatProvider, TemplateRegistry};
    use crate::provider::sha256_hex;

    fn groups(n: usize) -> Vec<FigQaGroup> {
        (0..n)
            .map(|i| FigQaGroup {
                id: format!("g{i}"),
                m1: format!("Metaphor one number {i}."),
                m2: format!("Metaphor two number {i}."),
                r1: format!("Reference one number {i}."),
                r2: format!("Reference two number {i}."),
                span1: None,
                span2: None,
            })
            .collect()
    }

    /// Answers with the letter whose option line starts with "Reference one".
    fn oracle(prompt: &str) -> ChatReply {
        if !prompt.contains("Options:") {
            return ChatReply::text("A paraphrase.");
        }
        let letter = prompt
            .lines()
            .find(|l| l.contains(". Reference one"))
            .and_then(|l| l.chars().next())
            .unwrap();
        ChatReply::text(letter.to_string())
    }

    #[test]
    fn oracle_gets_everything_right() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::new("m", oracle)),
            TemplateRegistry::defaults(),
        );
        let out = run_multichoice(&groups(12), &gw, 7, Concurrency(1));
        let s = summarize("m", &out.items, &out.exclusions);
        assert_eq!(s.accuracy, Some(100.0));
        assert_eq!(s.scored, 12);
        // The seeded shuffle moves the right answer around.
        let positions: std::collections::BTreeSet<_> =
            out.items.iter().map(|i| i.correct_index).collect();
        assert!(positions.len() > 1);
    }

    #[test]
    fn hashed_guessing_is_near_chance() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::new("m", |p| {
                if !p.contains("Options:") {
                    return ChatReply::text("A paraphrase.");
                }
                let b = hex::decode(&sha256_hex(p)[..2]).unwrap()[0];
                ChatReply::text(option_letter((b % 4) as usize).to_string())
            })),
            TemplateRegistry::defaults(),
        );
        let out = run_multichoice(&groups(400), &gw, 3, Concurrency(1));
        let s = summarize("m", &out.items, &out.exclusions);
        let (lo, hi) = s.ci.unwrap();
        assert!(lo < 25.0 && 25.0 < hi, "{s:?}");
    }

    #[test]
    fn unparsable_choice_is_excluded() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::new("m", |p| {
                ChatReply::text(if p.contains("Options:") {
                    "none of these"
                } else {
                    "Para."
                })
            })),
            TemplateRegistry::defaults(),
        );
        let out = run_multichoice(&groups(3), &gw, 1, Concurrency(1));
        let s = summarize("m", &out.items, &out.exclusions);
        assert_eq!((s.items_in, s.scored), (3, 0));
        assert_eq!(s.excluded[&ExclusionReason::ParseFailed], 3);
        assert_eq!(out.generations.len(), 9);
    }
}
