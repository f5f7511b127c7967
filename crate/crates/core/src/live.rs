//! HTTP providers for OpenAI-compatible chat and embedding endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use crate::embeddings::EmbeddingProvider;
use crate::gateway::{ChatProvider, ChatReply, ChatRequest};
use crate::provider::ProviderError;

const TIMEOUT: Duration = Duration::from_secs(120);

/// Reads the API key from `auth_env`. An empty variable name means the
/// endpoint needs no key.
fn api_key(auth_env: &str) -> Result<Option<String>, ProviderError> {
    if auth_env.is_empty() {
        return Ok(None);
    }
    match std::env::var(auth_env) {
        Ok(k) if !k.trim().is_empty() => Ok(Some(k)),
        _ => Err(ProviderError::Config(format!(
            "environment variable {auth_env} is not set"
        ))),
    }
}

struct Http {
    client: reqwest::blocking::Client,
    base: String,
    key: Option<String>,
}

impl Http {
    fn new(endpoint: &str, auth_env: &str) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(TIMEOUT)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            client,
            base: endpoint.trim_end_matches('/').to_owned(),
            key: api_key(auth_env)?,
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<(u16, String), ProviderError> {
        let mut req = self.client.post(format!("{}/{path}", self.base)).json(body);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok((status, text))
    }
}

fn is_policy_error(body: &Value) -> bool {
    let err = &body["error"];
    ["code", "type"].iter().any(|f| {
        err[f]
            .as_str()
            .is_some_and(|s| s.contains("content_policy") || s.contains("content_filter"))
    })
}

fn status_error(status: u16, body: String) -> ProviderError {
    match status {
        401 | 403 => ProviderError::Auth(body),
        429 => ProviderError::RateLimited,
        _ => ProviderError::Http { status, body },
    }
}

/// Interprets a chat completions response. Content-filter stops and policy
/// errors become refusals rather than errors.
pub fn parse_chat_response(status: u16, body: &str) -> Result<ChatReply, ProviderError> {
    let json: Option<Value> = serde_json::from_str(body).ok();
    if !(200..300).contains(&status) {
        if json.as_ref().is_some_and(is_policy_error) {
            return Ok(ChatReply::refusal(body));
        }
        return Err(status_error(status, body.to_owned()));
    }
    let json = json.ok_or_else(|| ProviderError::Malformed("response is not JSON".into()))?;
    let choice = &json["choices"][0];
    if choice.is_null() {
        return Err(ProviderError::Malformed("no choices".into()));
    }
    let message = &choice["message"];
    if choice["finish_reason"] == "content_filter" {
        return Ok(ChatReply::refusal(
            message["content"].as_str().unwrap_or_default(),
        ));
    }
    if let Some(r) = message["refusal"].as_str() {
        return Ok(ChatReply::refusal(r));
    }
    match message["content"].as_str() {
        Some(c) => Ok(ChatReply::text(c)),
        None => Err(ProviderError::Malformed("message has no content".into())),
    }
}

/// Vectors from an embeddings response, ordered by their `index`.
pub fn parse_embedding_response(
    status: u16,
    body: &str,
    expected: usize,
) -> Result<Vec<Vec<f32>>, ProviderError> {
    if !(200..300).contains(&status) {
        return Err(status_error(status, body.to_owned()));
    }
    let json: Value =
        serde_json::from_str(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let data = json["data"]
        .as_array()
        .ok_or_else(|| ProviderError::Malformed("no data array".into()))?;
    let mut out: Vec<Option<Vec<f32>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let idx = item["index"].as_u64().map_or(pos, |i| i as usize);
        let vec: Option<Vec<f32>> = item["embedding"]
            .as_array()
            .and_then(|a| a.iter().map(|x| x.as_f64().map(|f| f as f32)).collect());
        let slot = out
            .get_mut(idx)
            .ok_or_else(|| ProviderError::Malformed(format!("index {idx} out of range")))?;
        *slot =
            Some(vec.ok_or_else(|| ProviderError::Malformed(format!("bad embedding at {idx}")))?);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| ProviderError::Malformed(format!("missing embedding {i}"))))
        .collect()
}

/// Chat completions endpoint (`{endpoint}/chat/completions`).
pub struct HttpChatProvider {
    http: Http,
    model: String,
}

impl HttpChatProvider {
    pub fn new(endpoint: &str, model: &str, auth_env: &str) -> Result<Self, ProviderError> {
        Ok(Self {
            http: Http::new(endpoint, auth_env)?,
            model: model.to_owned(),
        })
    }
}

impl ChatProvider for HttpChatProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn is_network(&self) -> bool {
        true
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let (status, text) = self.http.post("chat/completions", &body)?;
        parse_chat_response(status, &text)
    }
}

/// Embeddings endpoint (`{endpoint}/embeddings`).
pub struct HttpEmbeddingProvider {
    http: Http,
    model: String,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: &str, model: &str, auth_env: &str) -> Result<Self, ProviderError> {
        Ok(Self {
            http: Http::new(endpoint, auth_env)?,
            model: model.to_owned(),
        })
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn is_network(&self) -> bool {
        true
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let body = json!({"model": self.model, "input": texts});
        let (status, text) = self.http.post("embeddings", &body)?;
        parse_embedding_response(status, &text, texts.len())
    }
}
