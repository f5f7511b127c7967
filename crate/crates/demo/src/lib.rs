//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Results come back as JSON strings; errors become JS exceptions.

use serde_json::json;
use wasm_bindgen::prelude::*;

use metaprobe::corpus::{Genre, MunchRecord};
use metaprobe::geometry::{self, EmbedVector, GeometryConfig};
use metaprobe::text::tokenize;
use metaprobe::transforms::{generate_variants, Lexicon, VariantKind};

fn vector(name: &str, values: &[f64]) -> Result<EmbedVector, String> {
    EmbedVector::new(values.to_vec()).map_err(|e| format!("{name}: {e}"))
}

/// `d_p`, `|cos θ|`, `Ad` and `d_o` for interpretation `m` against the
/// plane through `r1`, `r2`, `s`. `mode` is `centered` or `uncentered`.
pub fn plane_metrics_json(
    r1: &[f64],
    r2: &[f64],
    s: &[f64],
    m: &[f64],
    mode: &str,
) -> Result<String, String> {
    let config = GeometryConfig {
        mode: mode.parse()?,
        ..GeometryConfig::default()
    };
    let (r1, r2, s, m) = (
        vector("r1", r1)?,
        vector("r2", r2)?,
        vector("s", s)?,
        vector("m", m)?,
    );
    let scores = geometry::score_interpretation(&r1, &r2, &s, &m, Some(&r1), config)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "d_p": scores.d_p,
        "cos_theta": scores.cos_theta,
        "ad": scores.ad,
        "d_o": scores.d_o,
        "degenerate": scores.degenerate,
    })
    .to_string())
}

/// All six variants of `sentence` with `target` as the metaphorical word.
/// `lexicon_tsv` uses the lexicon file format and may be empty.
pub fn shuffle_variants_json(
    sentence: &str,
    target: &str,
    seed: u32,
    lexicon_tsv: &str,
) -> Result<String, String> {
    let tokens = tokenize(sentence).tokens;
    let bare = |t: &str| {
        t.trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase()
    };
    let target_index = tokens
        .iter()
        .position(|t| bare(t) == bare(target))
        .ok_or_else(|| format!("`{target}` is not a word of the sentence"))?;
    let record = MunchRecord {
        id: "demo".into(),
        sentence: sentence.trim().to_owned(),
        target_index,
        target_word: tokens[target_index].clone(),
        gold_substitutes: vec![tokens[target_index].clone()],
        genre: Genre::News,
        novelty: 0.0,
    };
    let lexicon = (!lexicon_tsv.trim().is_empty()).then(|| Lexicon::parse(lexicon_tsv));
    let rows: Vec<_> = generate_variants(
        &record,
        &VariantKind::ALL,
        u64::from(seed),
        lexicon.as_ref(),
    )
    .into_iter()
    .map(|o| match o {
        Ok(v) => {
            json!({"kind": v.kind, "sentence": v.sentence, "target_index": v.target_index_after})
        }
        Err(s) => json!({"kind": s.kind, "skipped": s.reason.to_string()}),
    })
    .collect();
    Ok(serde_json::Value::Array(rows).to_string())
}

#[wasm_bindgen]
pub fn plane_metrics(
    r1: &[f64],
    r2: &[f64],
    s: &[f64],
    m: &[f64],
    mode: &str,
) -> Result<String, JsError> {
    plane_metrics_json(r1, r2, s, m, mode).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn shuffle_variants(
    sentence: &str,
    target: &str,
    seed: u32,
    lexicon_tsv: &str,
) -> Result<String, JsError> {
    shuffle_variants_json(sentence, target, seed, lexicon_tsv).map_err(|e| JsError::new(&e))
}

/// Spearman's rho with average ranks for ties.
#[wasm_bindgen]
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, JsError> {
    geometry::spearman(xs, ys).map_err(|e| JsError::new(&e.to_string()))
}
