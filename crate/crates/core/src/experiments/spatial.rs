//! Spatial analysis: where a model's interpretation sits relative to the
//! conceptual plane spanned by two references and an equivalent sentence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{mean, sample_sd};
use super::{
    cell, csv_string, exclusion_counts, fan_out, Concurrency, Exclusion, ExclusionReason,
    ItemOutput, RunOutput,
};
use crate::corpus::{annotate_spans, FigQaGroup, SpanFailure};
use crate::embeddings::Embedder;
use crate::gateway::{slots, Gateway};
use crate::geometry::{
    score_interpretation, spearman, Degeneracy, EmbedVector, GeometryConfig, GeometryError,
};

/// Scores for one metaphor of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialItem {
    pub item_id: String,
    pub group_id: String,
    pub metaphor_index: u8,
    pub metaphor: String,
    pub span: String,
    pub s: String,
    pub m: String,
    pub d_p: f64,
    pub cos_theta: f64,
    pub ad: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_o: Option<f64>,
    pub degenerate: Degeneracy,
}

fn item_id(group: &FigQaGroup, i: u8) -> String {
    format!("{}:{i}", group.id)
}

fn exclude_both(out: &mut ItemOutput<SpatialItem>, group: &FigQaGroup, e: &Exclusion) {
    for i in [1, 2] {
        out.exclusions.push(Exclusion {
            item_id: item_id(group, i),
            ..e.clone()
        });
    }
}

fn run_group(
    group: &FigQaGroup,
    gateway: &Gateway,
    embedder: &Embedder,
    config: GeometryConfig,
) -> ItemOutput<SpatialItem> {
    let mut out = ItemOutput::default();

    let annotated = annotate_spans(group, gateway);
    out.generations.extend(annotated.generations);
    let group = match annotated.result {
        Ok(g) => g,
        Err(f) => {
            let (reason, detail) = match f {
                SpanFailure::Refused => (ExclusionReason::Refused, String::new()),
                SpanFailure::ParseFailed { returned } => (ExclusionReason::SpanFailed, returned),
                SpanFailure::Provider { message } => (ExclusionReason::ProviderError, message),
            };
            exclude_both(
                &mut out,
                group,
                &Exclusion::new("", "span.annotate", reason, detail),
            );
            return out;
        }
    };

    let s = match out.generate(
        gateway,
        &group.id,
        "spatial.equivalent",
        &slots([
            ("reference_1", group.r1.as_str()),
            ("reference_2", group.r2.as_str()),
        ]),
    ) {
        Ok(rec) => rec.sentence().unwrap_or_default().to_owned(),
        Err(e) => {
            exclude_both(&mut out, &group, &e);
            return out;
        }
    };

    let mut interpretations: Vec<(u8, String, String)> = Vec::new();
    for i in [1u8, 2] {
        let id = item_id(&group, i);
        let span = group.span_text(i as usize).unwrap_or_default().to_owned();
        let slots = slots([
            ("metaphor", group.metaphor(i as usize)),
            ("span", span.as_str()),
        ]);
        match out.generate(gateway, &id, "spatial.interpret", &slots) {
            Ok(rec) => {
                interpretations.push((i, span, rec.sentence().unwrap_or_default().to_owned()))
            }
            Err(e) => out.exclusions.push(e),
        }
    }
    if interpretations.is_empty() {
        return out;
    }

    let mut texts = vec![group.r1.clone(), group.r2.clone(), s.clone()];
    texts.extend(interpretations.iter().map(|(_, _, m)| m.clone()));
    let vectors: Result<Vec<EmbedVector>, String> = embedder
        .embed_batch(&texts)
        .map_err(|e| e.to_string())
        .and_then(|embs| {
            embs.iter()
                .map(|e| e.embed_vector().map_err(|e| e.to_string()))
                .collect()
        });
    let vectors = match vectors {
        Ok(v) => v,
        Err(detail) => {
            for (i, _, _) in &interpretations {
                out.exclusions.push(Exclusion::new(
                    item_id(&group, *i),
                    "embedding",
                    ExclusionReason::EmbeddingFailed,
                    detail.clone(),
                ));
            }
            return out;
        }
    };
    let (r1, r2, sv) = (&vectors[0], &vectors[1], &vectors[2]);

    for (k, (i, span, m)) in interpretations.into_iter().enumerate() {
        let id = item_id(&group, i);
        let matching = if i == 1 { r1 } else { r2 };
        match score_interpretation(r1, r2, sv, &vectors[3 + k], Some(matching), config) {
            Ok(scores) => out.items.push(SpatialItem {
                item_id: id,
                group_id: group.id.clone(),
                metaphor_index: i,
                metaphor: group.metaphor(i as usize).to_owned(),
                span,
                s: s.clone(),
                m,
                d_p: scores.d_p,
                cos_theta: scores.cos_theta,
                ad: scores.ad,
                d_o: scores.d_o,
                degenerate: scores.degenerate,
            }),
            Err(GeometryError::CollinearReferences) => out.exclusions.push(Exclusion::new(
                id,
                "geometry",
                ExclusionReason::CollinearReferences,
                "",
            )),
            Err(e) => out.exclusions.push(Exclusion::new(
                id,
                "geometry",
                ExclusionReason::EmbeddingFailed,
                e.to_string(),
            )),
        }
    }
    out
}

/// Generates S and both interpretations per group, embeds them and scores
/// each interpretation against the conceptual plane. Groups without spans
/// are annotated first.
pub fn run_spatial(
    groups: &[FigQaGroup],
    gateway: &Gateway,
    embedder: &Embedder,
    config: GeometryConfig,
    concurrency: Concurrency,
) -> RunOutput<SpatialItem> {
    RunOutput::collect(fan_out(groups, concurrency, |g| {
        run_group(g, gateway, embedder, config)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSummary {
    pub model_id: String,
    pub items_in: usize,
    pub scored: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
    pub d_p_mean: Option<f64>,
    pub cos_theta_mean: Option<f64>,
    pub d_p_sd: Option<f64>,
    pub cos_theta_sd: Option<f64>,
    pub ad_mean: Option<f64>,
    /// Spearman correlation of d_p with Ad across items.
    pub rho_dp_ad: Option<f64>,
    /// Spearman correlation of cosθ with d_p across items.
    pub rho_cos_dp: Option<f64>,
}

pub fn summarize(
    model_id: &str,
    items: &[SpatialItem],
    exclusions: &[Exclusion],
) -> SpatialSummary {
    let d_p: Vec<f64> = items.iter().map(|i| i.d_p).collect();
    let cos: Vec<f64> = items.iter().map(|i| i.cos_theta).collect();
    let ad: Vec<f64> = items.iter().map(|i| i.ad).collect();
    SpatialSummary {
        model_id: model_id.to_owned(),
        items_in: items.len() + exclusions.len(),
        scored: items.len(),
        excluded: exclusion_counts(exclusions),
        d_p_mean: mean(&d_p),
        cos_theta_mean: mean(&cos),
        d_p_sd: sample_sd(&d_p),
        cos_theta_sd: sample_sd(&cos),
        ad_mean: mean(&ad),
        rho_dp_ad: spearman(&d_p, &ad).ok(),
        rho_cos_dp: spearman(&cos, &d_p).ok(),
    }
}

impl SpatialSummary {
    /// Rows follow the mean/SD layout of the published results table, with
    /// the validation correlations and item counts appended.
    pub fn to_csv(&self) -> String {
        let f = |v| cell(v, 4);
        let mut rows = vec![
            vec!["d_p_mean".into(), f(self.d_p_mean)],
            vec!["cos_theta_mean".into(), f(self.cos_theta_mean)],
            vec!["d_p_sd".into(), f(self.d_p_sd)],
            vec!["cos_theta_sd".into(), f(self.cos_theta_sd)],
            vec!["ad_mean".into(), f(self.ad_mean)],
            vec!["spearman_dp_ad".into(), f(self.rho_dp_ad)],
            vec!["spearman_cos_theta_dp".into(), f(self.rho_cos_dp)],
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
    use crate::corpus::Span;
    use crate::embeddings::{EmbeddingCache, HashingEmbedder};
    use crate::gateway::{ChatReply, ScriptedChatProvider, TemplateRegistry};

    fn groups() -> Vec<FigQaGroup> {
        let mut g = FigQaGroup {
            id: "g1".into(),
            m1: "The computer is a race car.".into(),
            m2: "The computer is a tortoise.".into(),
            r1: "The computer runs fast.".into(),
            r2: "The computer runs slow.".into(),
            span1: None,
            span2: None,
        };
        g.span1 = Span::find(&g.m1, "is a race car");
        g.span2 = Span::find(&g.m2, "is a tortoise");
        let mut h = g.clone();
        h.id = "g2".into();
        h.r1 = "The boat leaks a lot.".into();
        h.r2 = "The boat is watertight.".into();
        vec![g, h]
    }

    fn embedder() -> Embedder {
        Embedder::new(
            Box::new(HashingEmbedder::new(64)),
            EmbeddingCache::in_memory(),
        )
    }

    fn gateway(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Gateway {
        Gateway::new(
            Box::new(ScriptedChatProvider::new("scripted", move |p| {
                ChatReply::text(f(p))
            })),
            TemplateRegistry::defaults(),
        )
    }

    #[test]
    fn m_equals_s_is_in_plane() {
        let gw = gateway(|_| "The computer operates at a certain speed.".into());
        let out = run_spatial(
            &groups(),
            &gw,
            &embedder(),
            GeometryConfig::default(),
            Concurrency(1),
        );
        assert_eq!(out.items.len(), 4);
        let s = summarize("scripted", &out.items, &out.exclusions);
        assert!(s.d_p_mean.unwrap().abs() < 1e-9);
        assert!((s.cos_theta_mean.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(s.items_in, 4);
    }

    #[test]
    fn m_equals_reference_is_degenerate() {
        let gw = gateway(|p| {
            if p.contains("race car") && !p.contains("Sentence 1") {
                "The computer runs fast.".into()
            } else if p.contains("tortoise") && !p.contains("Sentence 1") {
                "The computer runs slow.".into()
            } else {
                "The computer has some speed.".into()
            }
        });
        let out = run_spatial(
            &groups()[..1],
            &gw,
            &embedder(),
            GeometryConfig::default(),
            Concurrency(1),
        );
        for item in &out.items {
            assert!(item.d_p.abs() < 1e-9);
            assert_eq!(item.cos_theta, 1.0);
            assert_eq!(item.degenerate, Degeneracy::MEqualsAnchor);
            assert!(item.d_o.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn refusal_excludes_both_metaphors() {
        let gw = Gateway::new(
            Box::new(ScriptedChatProvider::new("scripted", |p| {
                if p.contains("Sentence 1") {
                    ChatReply::refusal("")
                } else {
                    ChatReply::text("x y z")
                }
            })),
            TemplateRegistry::defaults(),
        );
        let out = run_spatial(
            &groups(),
            &gw,
            &embedder(),
            GeometryConfig::default(),
            Concurrency(2),
        );
        assert!(out.items.is_empty());
        assert_eq!(out.exclusions.len(), 4);
        let s = summarize("scripted", &out.items, &out.exclusions);
        assert_eq!(s.excluded[&ExclusionReason::Refused], 4);
        assert_eq!(s.d_p_mean, None);
        assert!(s.to_csv().contains("d_p_mean,\n"));
    }

    #[test]
    fn parallel_matches_sequential() {
        let gw = gateway(|p| format!("Reply {}", p.len()));
        let a = run_spatial(
            &groups(),
            &gw,
            &embedder(),
            GeometryConfig::default(),
            Concurrency(1),
        );
        let b = run_spatial(
            &groups(),
            &gw,
            &embedder(),
            GeometryConfig::default(),
            Concurrency(4),
        );
        assert_eq!(a.items, b.items);
        assert_eq!(a.generations, b.generations);
    }
}
