//! OpenAI-compatible HTTP backend: chat completions with base64-inlined
//! images, and an embeddings endpoint fed text or image data URLs.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use super::{ChatRequest, EmbedItem, EmbedRequest, GatewayError, ModelBackend};

/// Environment variable holding the bearer token for authenticated
/// endpoints. Credentials never appear in config files or artifacts.
pub const API_KEY_ENV: &str = "VAD_API_KEY";

pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new() -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GatewayError::Configuration(format!("http client: {e}")))?;
        Ok(Self { client })
    }

    fn post(&self, url: &str, timeout: Duration, body: &Value) -> Result<Value, GatewayError> {
        let mut request = self.client.post(url).timeout(timeout).json(body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                request = request.bearer_auth(key);
            }
        }
        let response = request
            .send()
            .map_err(|e| GatewayError::Transport(format!("{url}: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(GatewayError::Transport(format!(
                "{url}: status {status}: {}",
                truncate(&text, 400)
            )));
        }
        response
            .json()
            .map_err(|e| GatewayError::Transport(format!("{url}: invalid JSON body: {e}")))
    }
}

impl Default for HttpBackend {
    fn default() -> Self {
        Self::new().expect("default http client")
    }
}

fn truncate(text: &str, max: usize) -> &str {
    let mut end = max.min(text.len());
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

fn data_url(bytes: &[u8]) -> String {
    let mime = match image::guess_format(bytes) {
        Ok(image::ImageFormat::Jpeg) => "image/jpeg",
        _ => "image/png",
    };
    format!("data:{mime};base64,{}", BASE64.encode(bytes))
}

impl ModelBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
        let endpoint = request.endpoint;
        let url = format!(
            "{}/v1/chat/completions",
            endpoint.base_url.trim_end_matches('/')
        );
        let mut content = vec![json!({"type": "text", "text": request.prompt})];
        for image in request.images {
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": data_url(image)},
            }));
        }
        let mut body = json!({
            "model": endpoint.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
        });
        if let Some(schema) = &request.json_schema {
            body["response_format"] = json!({"type": "json_schema", "json_schema": schema});
        }
        let value = self.post(&url, endpoint.timeout_duration(), &body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                GatewayError::Transport(format!("{url}: response missing message content"))
            })
    }

    fn embed(&self, request: &EmbedRequest<'_>) -> Result<Vec<Vec<f64>>, GatewayError> {
        let endpoint = request.endpoint;
        let url = format!("{}/v1/embeddings", endpoint.base_url.trim_end_matches('/'));
        let input: Vec<String> = request
            .items
            .iter()
            .map(|item| match item {
                EmbedItem::Text(text) => (*text).to_string(),
                EmbedItem::Image(bytes) => data_url(bytes),
            })
            .collect();
        let body = json!({"model": endpoint.model_name, "input": input});
        let value = self.post(&url, endpoint.timeout_duration(), &body)?;
        let data = value["data"].as_array().ok_or_else(|| {
            GatewayError::Transport(format!("{url}: response missing data array"))
        })?;
        if data.len() != request.items.len() {
            return Err(GatewayError::Transport(format!(
                "{url}: expected {} embeddings, got {}",
                request.items.len(),
                data.len()
            )));
        }
        // Responses may arrive out of order; the index field is the contract.
        let mut vectors: Vec<Option<Vec<f64>>> = vec![None; data.len()];
        for entry in data {
            let index = entry["index"].as_u64().unwrap_or(u64::MAX) as usize;
            let slot = vectors.get_mut(index).ok_or_else(|| {
                GatewayError::Transport(format!("{url}: embedding index out of range"))
            })?;
            let vector = entry["embedding"]
                .as_array()
                .map(|xs| xs.iter().filter_map(Value::as_f64).collect::<Vec<f64>>())
                .filter(|v| !v.is_empty())
                .ok_or_else(|| {
                    GatewayError::Transport(format!("{url}: malformed embedding entry"))
                })?;
            *slot = Some(vector);
        }
        vectors
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| GatewayError::Transport(format!("{url}: missing embedding index")))
    }
}
