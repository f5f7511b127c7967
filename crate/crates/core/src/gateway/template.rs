use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template `{0}` is not registered")]
    Unknown(String),
    #[error("template `{id}` needs slot `{slot}`")]
    MissingSlot { id: String, slot: String },
    #[error("template `{id}`: unbalanced brace at byte {at}")]
    Syntax { id: String, at: usize },
    #[error("template id `{0}` is defined twice in {1}")]
    Duplicate(String, String),
    #[error("template file {path}: {message}")]
    File { path: String, message: String },
}

/// What a prompt is expected to return, which selects the output parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutput {
    Sentence,
    WordList,
    YesNo,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub expected_output: ExpectedOutput,
    pub body: String,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

impl PromptTemplate {
    /// Splits the body into literal text and `{slot}` references.
    /// `{{` and `}}` are literal braces.
    fn pieces(&self) -> Result<Vec<Piece<'_>>, TemplateError> {
        let body = self.body.as_str();
        let bytes = body.as_bytes();
        let syntax = |at| TemplateError::Syntax {
            id: self.id.clone(),
            at,
        };
        let mut out = Vec::new();
        let (mut i, mut start) = (0, 0);
        while i < bytes.len() {
            match bytes[i] {
                b'{' if bytes.get(i + 1) == Some(&b'{') => {
                    out.push(Piece::Text(&body[start..=i]));
                    i += 2;
                    start = i;
                }
                b'}' if bytes.get(i + 1) == Some(&b'}') => {
                    out.push(Piece::Text(&body[start..=i]));
                    i += 2;
                    start = i;
                }
                b'{' => {
                    let close = body[i..].find('}').ok_or_else(|| syntax(i))? + i;
                    let name = &body[i + 1..close];
                    if name.is_empty()
                        || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
                    {
                        return Err(syntax(i));
                    }
                    out.push(Piece::Text(&body[start..i]));
                    out.push(Piece::Slot(name));
                    i = close + 1;
                    start = i;
                }
                b'}' => return Err(syntax(i)),
                _ => i += 1,
            }
        }
        out.push(Piece::Text(&body[start..]));
        Ok(out)
    }

    pub fn slots(&self) -> Result<BTreeSet<String>, TemplateError> {
        Ok(self
            .pieces()?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.to_owned()),
                Piece::Text(_) => None,
            })
            .collect())
    }

    /// Fills every slot; extra entries in `slots` are ignored.
    pub fn render(&self, slots: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in self.pieces()? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    out.push_str(slots.get(name).ok_or_else(|| TemplateError::MissingSlot {
                        id: self.id.clone(),
                        slot: name.to_owned(),
                    })?)
                }
            }
        }
        Ok(out)
    }
}

const DEFAULTS: &[&str] = &[
    include_str!("../../templates/spatial_equivalent.toml"),
    include_str!("../../templates/spatial_interpret.toml"),
    include_str!("../../templates/span_annotate.toml"),
    include_str!("../../templates/multichoice_reference.toml"),
    include_str!("../../templates/multichoice_metaphor.toml"),
    include_str!("../../templates/multichoice_choose.toml"),
    include_str!("../../templates/imagination_lm_context.toml"),
    include_str!("../../templates/imagination_lm_word.toml"),
    include_str!("../../templates/imagination_ml_context.toml"),
    include_str!("../../templates/imagination_ml_word.toml"),
    include_str!("../../templates/detection.toml"),
];

/// Templates by id.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The templates bundled with the crate.
    pub fn defaults() -> Self {
        let mut reg = Self::default();
        for src in DEFAULTS {
            let t: PromptTemplate = toml::from_str(src).expect("bundled template parses");
            reg.insert(t).expect("bundled template ids are unique");
        }
        reg
    }

    fn parse_file(path: &Path) -> Result<PromptTemplate, TemplateError> {
        let file_err = |message: String| TemplateError::File {
            path: path.display().to_string(),
            message,
        };
        let src = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let t: PromptTemplate = toml::from_str(&src).map_err(|e| file_err(e.to_string()))?;
        t.slots()?;
        Ok(t)
    }

    /// Defaults overridden by every `*.toml` template in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut reg = Self::defaults();
        let mut seen = BTreeSet::new();
        let entries = std::fs::read_dir(dir).map_err(|e| TemplateError::File {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for p in paths {
            let t = Self::parse_file(&p)?;
            if !seen.insert(t.id.clone()) {
                return Err(TemplateError::Duplicate(t.id, dir.display().to_string()));
            }
            reg.templates.insert(t.id.clone(), t);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, template: PromptTemplate) -> Result<(), TemplateError> {
        template.slots()?;
        if self.templates.contains_key(&template.id) {
            return Err(TemplateError::Duplicate(template.id, "registry".into()));
        }
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    pub fn replace(&mut self, template: PromptTemplate) -> Result<(), TemplateError> {
        template.slots()?;
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(id)
            .ok_or_else(|| TemplateError::Unknown(id.to_owned()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(body: &str) -> PromptTemplate {
        PromptTemplate {
            id: "t".into(),
            expected_output: ExpectedOutput::Sentence,
            body: body.into(),
        }
    }

    fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn renders_slots_and_escapes() {
        let t = tpl("Say {word} in {{braces}} about {word} and {other}.");
        assert_eq!(
            t.slots().unwrap().into_iter().collect::<Vec<_>>(),
            vec!["other", "word"]
        );
        let out = t
            .render(&slots(&[("word", "fast"), ("other", "x"), ("extra", "y")]))
            .unwrap();
        assert_eq!(out, "Say fast in {braces} about fast and x.");
    }

    #[test]
    fn missing_slot_is_an_error() {
        let t = tpl("{a} {b}");
        assert!(matches!(
            t.render(&slots(&[("a", "1")])),
            Err(TemplateError::MissingSlot { slot, .. }) if slot == "b"
        ));
    }

    #[test]
    fn syntax_errors() {
        assert!(tpl("open {never").slots().is_err());
        assert!(tpl("stray } brace").slots().is_err());
        assert!(tpl("bad {sl ot}").slots().is_err());
    }

    #[test]
    fn defaults_are_complete() {
        let reg = TemplateRegistry::defaults();
        for id in [
            "spatial.equivalent",
            "spatial.interpret",
            "span.annotate",
            "multichoice.paraphrase_reference",
            "multichoice.paraphrase_metaphor",
            "multichoice.choose",
            "imagination.lm_context",
            "imagination.lm_word",
            "imagination.ml_context",
            "imagination.ml_word",
            "detection.detect",
        ] {
            reg.get(id).unwrap();
        }
        assert_eq!(
            reg.get("detection.detect").unwrap().expected_output,
            ExpectedOutput::YesNo
        );
        assert!(reg.get("nope").is_err());
    }

    #[test]
    fn overrides_replace_defaults() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("detect.toml"),
            "id = \"detection.detect\"\nexpected_output = \"yes_no\"\nbody = \"Metaphor? {sentence}\"\n",
        )
        .unwrap();
        let reg = TemplateRegistry::with_overrides(dir.path()).unwrap();
        assert_eq!(
            reg.get("detection.detect").unwrap().body,
            "Metaphor? {sentence}"
        );
        assert!(reg.get("spatial.equivalent").is_ok());
    }

    #[test]
    fn duplicate_ids_in_override_dir_fail() {
        let dir = tempfile::tempdir().unwrap();
        let src = "id = \"x\"\nexpected_output = \"sentence\"\nbody = \"hi\"\n";
        std::fs::write(dir.path().join("a.toml"), src).unwrap();
        std::fs::write(dir.path().join("b.toml"), src).unwrap();
        assert!(matches!(
            TemplateRegistry::with_overrides(dir.path()),
            Err(TemplateError::Duplicate(..))
        ));
    }
}
