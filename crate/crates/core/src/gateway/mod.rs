//! Chat-completion access: template rendering, temperature-0 requests with
//! bounded retries, and strict parsing of the reply.

pub mod parse;
pub mod template;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{
    parse_choice, parse_sentence, parse_word_list, parse_yes_no, Label, ParseError, WordList,
};
pub use template::{ExpectedOutput, PromptTemplate, TemplateError, TemplateRegistry};

use crate::provider::{
    sha256_hex, CallCounter, CallCounts, ProviderError, RateLimiter, RetryPolicy,
};

pub type Slots = BTreeMap<String, String>;

/// Builds a slot map from `(name, value)` pairs.
pub fn slots<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Slots {
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub content: String,
    /// The provider declined for content-policy reasons.
    #[serde(default)]
    pub refused: bool,
}

impl ChatReply {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            refused: false,
        }
    }

    pub fn refusal(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            refused: true,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Whether calls leave the process.
    fn is_network(&self) -> bool;

    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError>;
}

/// One line of a chat fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_hash: String,
    pub model_id: String,
    pub output: String,
    #[serde(default)]
    pub refused: bool,
}

/// Replays replies keyed by the SHA-256 of the rendered prompt.
pub struct FixtureChatProvider {
    model_id: String,
    replies: HashMap<String, ChatReply>,
}

impl FixtureChatProvider {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let bad = |m: String| ProviderError::Config(format!("{}: {m}", path.display()));
        let file = File::open(path).map_err(|e| bad(e.to_string()))?;
        let mut model_id: Option<String> = None;
        let mut replies = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
            match &model_id {
                None => model_id = Some(entry.model_id.clone()),
                Some(m) if *m != entry.model_id => {
                    return Err(bad(format!(
                        "line {}: model `{}` differs from `{m}`",
                        n + 1,
                        entry.model_id
                    )))
                }
                Some(_) => {}
            }
            replies.insert(
                entry.prompt_hash,
                ChatReply {
                    content: entry.output,
                    refused: entry.refused,
                },
            );
        }
        Ok(Self {
            model_id: model_id.unwrap_or_else(|| "fixture".into()),
            replies,
        })
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatProvider for FixtureChatProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_network(&self) -> bool {
        false
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
        let h = sha256_hex(&request.prompt);
        self.replies
            .get(&h)
            .cloned()
            .ok_or_else(|| ProviderError::FixtureMiss(format!("prompt {h}")))
    }
}

/// Forwards to an inner provider and appends every reply to a fixture file.
pub struct RecordingChatProvider {
    inner: Box<dyn ChatProvider>,
    out: Mutex<BufWriter<File>>,
}

impl RecordingChatProvider {
    pub fn new(inner: Box<dyn ChatProvider>, path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl ChatProvider for RecordingChatProvider {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn is_network(&self) -> bool {
        self.inner.is_network()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
        let reply = self.inner.complete(request)?;
        let entry = FixtureEntry {
            prompt_hash: sha256_hex(&request.prompt),
            model_id: self.inner.model_id().to_owned(),
            output: reply.content.clone(),
            refused: reply.refused,
        };
        let line = serde_json::to_string(&entry).expect("fixture entry serializes");
        let mut out = self.out.lock().expect("recorder lock");
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|e| ProviderError::Config(format!("fixture recording failed: {e}")))?;
        Ok(reply)
    }
}

type Responder = dyn Fn(&str) -> ChatReply + Send + Sync;

/// In-process provider driven by a closure over the rendered prompt.
pub struct ScriptedChatProvider {
    model_id: String,
    respond: Box<Responder>,
}

impl ScriptedChatProvider {
    pub fn new(
        model_id: impl Into<String>,
        respond: impl Fn(&str) -> ChatReply + Send + Sync + 'static,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            respond: Box::new(respond),
        }
    }

    /// Always replies with `text`.
    pub fn constant(model_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(model_id, move |_| ChatReply::text(text.clone()))
    }
}

impl ChatProvider for ScriptedChatProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_network(&self) -> bool {
        false
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
        Ok((self.respond)(&request.prompt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Ok,
    Refused,
    ParseFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parsed {
    Sentence(String),
    Words(WordList),
    Label(Label),
    Choice(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub template_id: String,
    pub prompt_hash: String,
    pub rendered_prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub raw_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Parsed>,
    pub status: GenerationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl GenerationRecord {
    pub fn sentence(&self) -> Option<&str> {
        match &self.parsed {
            Some(Parsed::Sentence(s)) => Some(s),
            _ => None,
        }
    }

    pub fn words(&self) -> Option<&WordList> {
        match &self.parsed {
            Some(Parsed::Words(w)) => Some(w),
            _ => None,
        }
    }

    pub fn label(&self) -> Option<Label> {
        match &self.parsed {
            Some(Parsed::Label(l)) => Some(*l),
            _ => None,
        }
    }

    pub fn choice(&self) -> Option<usize> {
        match &self.parsed {
            Some(Parsed::Choice(c)) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Parameters for the list and choice parsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub word_count: usize,
    pub n_options: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            word_count: 20,
            n_options: 4,
        }
    }
}

/// Running tally of generation outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub ok: u64,
    pub refused: u64,
    pub parse_failed: u64,
    pub provider_error: u64,
}

pub struct Gateway {
    provider: Box<dyn ChatProvider>,
    templates: TemplateRegistry,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    temperature: f64,
    parse: ParseOptions,
    calls: CallCounter,
    counts: Mutex<StatusCounts>,
}

impl Gateway {
    pub fn new(provider: Box<dyn ChatProvider>, templates: TemplateRegistry) -> Self {
        Self {
            provider,
            templates,
            retry: RetryPolicy::default(),
            limiter: None,
            temperature: 0.0,
            parse: ParseOptions::default(),
            calls: CallCounter::default(),
            counts: Mutex::new(StatusCounts::default()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(RateLimiter::per_minute(requests_per_minute));
        self
    }

    pub fn with_parse_options(mut self, parse: ParseOptions) -> Self {
        self.parse = parse;
        self
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn is_network(&self) -> bool {
        self.provider.is_network()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn parse_options(&self) -> ParseOptions {
        self.parse
    }

    pub fn templates(&self) -> &TemplateRegistry {
        &self.templates
    }

    pub fn calls(&self) -> CallCounts {
        self.calls.snapshot()
    }

    pub fn status_counts(&self) -> StatusCounts {
        *self.counts.lock().expect("status lock")
    }

    /// Renders `template_id`, queries the provider and parses the reply.
    pub fn complete(
        &self,
        template_id: &str,
        slots: &Slots,
    ) -> Result<GenerationRecord, GatewayError> {
        self.complete_with(template_id, slots, self.parse)
    }

    pub fn complete_with(
        &self,
        template_id: &str,
        slots: &Slots,
        options: ParseOptions,
    ) -> Result<GenerationRecord, GatewayError> {
        let template = self.templates.get(template_id)?;
        let prompt = template.render(slots)?;
        let request = ChatRequest {
            prompt,
            temperature: self.temperature,
        };
        let (reply, _) = self.retry.run(|| {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            self.calls.record(self.provider.is_network());
            self.provider.complete(&request)
        });
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                self.counts.lock().expect("status lock").provider_error += 1;
                return Err(e.into());
            }
        };

        let (parsed, status, parse_error) = if reply.refused {
            (None, GenerationStatus::Refused, None)
        } else {
            let parsed = match template.expected_output {
                ExpectedOutput::Sentence => parse_sentence(&reply.content).map(Parsed::Sentence),
                ExpectedOutput::WordList => {
                    parse_word_list(&reply.content, options.word_count).map(Parsed::Words)
                }
                ExpectedOutput::YesNo => parse_yes_no(&reply.content).map(Parsed::Label),
                ExpectedOutput::Choice => {
                    parse_choice(&reply.content, options.n_options).map(Parsed::Choice)
                }
            };
            match parsed {
                Ok(p) => (Some(p), GenerationStatus::Ok, None),
                Err(e) => (None, GenerationStatus::ParseFailed, Some(e.to_string())),
            }
        };
        {
            let mut c = self.counts.lock().expect("status lock");
            match status {
                GenerationStatus::Ok => c.ok += 1,
                GenerationStatus::Refused => c.refused += 1,
                GenerationStatus::ParseFailed => c.parse_failed += 1,
            }
        }
        Ok(GenerationRecord {
            template_id: template.id.clone(),
            prompt_hash: sha256_hex(&request.prompt),
            rendered_prompt: request.prompt,
            model_id: self.provider.model_id().to_owned(),
            temperature: self.temperature,
            raw_output: reply.content,
            parsed,
            status,
            parse_error,
        })
    }
}
