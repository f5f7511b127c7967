//! The three experiments plus multiple-choice validation.
//!
//! Each runner returns per-item records, exclusions and the raw generations.
//! Summaries are pure functions of the item and exclusion lists, so the
//! `report` subcommand can rebuild them from disk without any provider.

pub mod detection;
pub mod imagination;
pub mod multichoice;
pub mod spatial;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, GenerationRecord, GenerationStatus, Slots};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Refused,
    ParseFailed,
    ProviderError,
    SpanFailed,
    CollinearReferences,
    EmbeddingFailed,
    EmptyWordSet,
    Skipped,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("enum serializes");
        f.write_str(s.as_str().expect("unit variant"))
    }
}

/// An item that entered an experiment but was not scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub item_id: String,
    /// Pipeline step that failed, usually a template id.
    pub stage: String,
    pub reason: ExclusionReason,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Exclusion {
    pub fn new(
        item_id: impl Into<String>,
        stage: impl Into<String>,
        reason: ExclusionReason,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            stage: stage.into(),
            reason,
            detail: detail.into(),
        }
    }
}

/// Counts per exclusion reason.
pub fn exclusion_counts(exclusions: &[Exclusion]) -> BTreeMap<ExclusionReason, usize> {
    let mut out = BTreeMap::new();
    for e in exclusions {
        *out.entry(e.reason).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput<I> {
    pub items: Vec<I>,
    pub exclusions: Vec<Exclusion>,
    pub generations: Vec<GenerationRecord>,
}

impl<I> RunOutput<I> {
    pub fn items_in(&self) -> usize {
        self.items.len() + self.exclusions.len()
    }

    fn absorb(&mut self, part: ItemOutput<I>) {
        self.items.extend(part.items);
        self.exclusions.extend(part.exclusions);
        self.generations.extend(part.generations);
    }

    fn collect(parts: Vec<ItemOutput<I>>) -> Self {
        let mut out = Self {
            items: Vec::new(),
            exclusions: Vec::new(),
            generations: Vec::new(),
        };
        for p in parts {
            out.absorb(p);
        }
        out
    }
}

/// Output of one input record, merged in input order afterwards.
struct ItemOutput<I> {
    items: Vec<I>,
    exclusions: Vec<Exclusion>,
    generations: Vec<GenerationRecord>,
}

impl<I> Default for ItemOutput<I> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            exclusions: Vec::new(),
            generations: Vec::new(),
        }
    }
}

impl<I> ItemOutput<I> {
    /// Runs one prompt, keeping the generation and turning refusals, parse
    /// failures and provider errors into an exclusion for `item_id`.
    fn generate(
        &mut self,
        gateway: &Gateway,
        item_id: &str,
        template_id: &str,
        slots: &Slots,
    ) -> Result<GenerationRecord, Exclusion> {
        let fail = |reason, detail: String| Exclusion::new(item_id, template_id, reason, detail);
        let rec = match gateway.complete(template_id, slots) {
            Ok(r) => r,
            Err(GatewayError::Provider(e)) => {
                return Err(fail(ExclusionReason::ProviderError, e.to_string()))
            }
            Err(GatewayError::Template(e)) => {
                return Err(fail(ExclusionReason::ProviderError, e.to_string()))
            }
        };
        self.generations.push(rec.clone());
        match rec.status {
            GenerationStatus::Ok => Ok(rec),
            GenerationStatus::Refused => Err(fail(ExclusionReason::Refused, String::new())),
            GenerationStatus::ParseFailed => Err(fail(
                ExclusionReason::ParseFailed,
                rec.parse_error.unwrap_or_default(),
            )),
        }
    }
}

/// How many items run at once. Ignored without the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Concurrency(pub usize);

impl Default for Concurrency {
    fn default() -> Self {
        Concurrency(1)
    }
}

/// Maps `f` over `inputs`, keeping input order in the result.
#[cfg(feature = "parallel")]
fn fan_out<T: Sync, R: Send>(
    inputs: &[T],
    concurrency: Concurrency,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    use rayon::prelude::*;
    if concurrency.0 <= 1 {
        return inputs.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.0)
        .build()
    {
        Ok(pool) => pool.install(|| inputs.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}), running sequentially");
            inputs.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn fan_out<T: Sync, R: Send>(
    inputs: &[T],
    _concurrency: Concurrency,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    inputs.iter().map(f).collect()
}

/// Fixed-precision float for CSV cells; `None` becomes an empty cell.
fn cell(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.decimals$}"),
        _ => String::new(),
    }
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Seed for an item-level random choice: first 8 bytes of
/// sha256("{base}:{item}:{purpose}").
pub fn item_seed(base: u64, item_id: &str, purpose: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(format!("{base}:{item_id}:{purpose}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
