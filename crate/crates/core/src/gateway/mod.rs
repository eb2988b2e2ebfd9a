//! Uniform access to the external models: segment scorer, captioner, image
//! embedder, joint image-text embedder, and judge.
//!
//! All calls flow through one content-addressed response cache, and every
//! backend speaks the same request shapes, so a scripted replay backend and
//! a live OpenAI-compatible HTTP backend are interchangeable. Only responses
//! that pass typed parsing are cached; failed attempts are retried live,
//! which keeps warm-cache replays byte-identical to the original run.
//!
//! The gateway is safe to call from multiple in-flight videos. The scripted
//! backend is position-stateful per scenario and must be instantiated per
//! video.

pub mod cache;
pub mod http;
pub mod prompts;
pub mod scripted;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::labels::{normalize_alias, UNKNOWN_LABEL};
pub use cache::{sha256_hex, CacheKey, ResponseCache};
pub use http::{HttpBackend, API_KEY_ENV};
pub use prompts::{PromptId, PromptSet, PromptTemplate, FORMAT_REMINDER};
pub use scripted::{ScriptedBackend, ScriptedScenario, ScriptedVerdict};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("scorer output unparseable after format-reminder retry; raw reply: {raw:?}")]
    VerdictParse { raw: String },
    #[error("no endpoint configured for role {0:?}")]
    MissingEndpoint(Role),
    #[error("prompt rendering failed: {0}")]
    Prompt(String),
    #[error("cache failure: {0}")]
    Cache(String),
    #[error("{0}")]
    ScenarioExhausted(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Scorer,
    Captioner,
    ImageEmbedder,
    JointEmbedder,
    Judge,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Scorer,
        Role::Captioner,
        Role::ImageEmbedder,
        Role::JointEmbedder,
        Role::Judge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Scorer => "scorer",
            Role::Captioner => "captioner",
            Role::ImageEmbedder => "image_embedder",
            Role::JointEmbedder => "joint_embedder",
            Role::Judge => "judge",
        }
    }
}

/// Which logical operation a chat request serves. The scorer endpoint backs
/// both segment scoring and event captioning; summaries go to the captioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatOp {
    Score,
    Summarize,
    Caption,
    Judge,
}

impl ChatOp {
    pub fn role(&self) -> Role {
        match self {
            ChatOp::Score | ChatOp::Caption => Role::Scorer,
            ChatOp::Summarize => Role::Captioner,
            ChatOp::Judge => Role::Judge,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ChatOp::Score => "score",
            ChatOp::Summarize => "summarize",
            ChatOp::Caption => "caption",
            ChatOp::Judge => "judge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_name: String,
    pub role: Role,
    /// Request timeout in seconds.
    pub timeout: f64,
    /// Transport retry budget; for the judge this is the full attempt-retry
    /// budget of the category protocol.
    pub max_retries: u32,
}

impl ModelEndpoint {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(GatewayError::Configuration(format!(
                "endpoint {:?}: timeout must be positive",
                self.role
            )));
        }
        if self.role == Role::Judge && self.max_retries > 3 {
            return Err(GatewayError::Configuration(
                "judge endpoint allows at most 3 retries".to_string(),
            ));
        }
        Ok(())
    }

    pub fn timeout_duration(&self) -> Duration {
        Duration::from_secs_f64(self.timeout)
    }

    /// Placeholder endpoints for the scripted backend.
    pub fn scripted_set() -> Vec<ModelEndpoint> {
        Role::ALL
            .into_iter()
            .map(|role| ModelEndpoint {
                base_url: "scripted://local".to_string(),
                model_name: "scripted-v1".to_string(),
                role,
                timeout: 30.0,
                max_retries: if role == Role::Judge { 3 } else { 2 },
            })
            .collect()
    }
}

/// One item of a joint embedding request.
#[derive(Debug, Clone, Copy)]
pub enum EmbedItem<'a> {
    Text(&'a str),
    Image(&'a [u8]),
}

/// Alias used at call sites that build image-plus-text batches.
pub use EmbedItem as JointInput;

#[derive(Debug)]
pub struct ChatRequest<'a> {
    pub op: ChatOp,
    pub endpoint: &'a ModelEndpoint,
    pub prompt: &'a str,
    pub images: &'a [Vec<u8>],
    pub temperature: f64,
    pub json_schema: Option<Value>,
}

#[derive(Debug)]
pub struct EmbedRequest<'a> {
    pub endpoint: &'a ModelEndpoint,
    pub items: &'a [EmbedItem<'a>],
}

/// A model backend able to answer chat and embedding requests.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError>;
    fn embed(&self, request: &EmbedRequest<'_>) -> Result<Vec<Vec<f64>>, GatewayError>;
}

/// Scorer output before it is attached to a segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawVerdict {
    pub flag: u8,
    pub explanation: String,
}

/// Per-operation counts of live backend calls and cache hits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallLedger {
    pub live: BTreeMap<String, u64>,
    pub cache_hits: BTreeMap<String, u64>,
}

impl CallLedger {
    pub fn live_count(&self, op: &str) -> u64 {
        self.live.get(op).copied().unwrap_or(0)
    }

    pub fn hit_count(&self, op: &str) -> u64 {
        self.cache_hits.get(op).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &CallLedger) {
        for (k, v) in &other.live {
            *self.live.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.cache_hits {
            *self.cache_hits.entry(k.clone()).or_insert(0) += v;
        }
    }
}

struct PendingCall {
    key: CacheKey,
    request_digest: String,
    response: String,
    from_cache: bool,
}

pub struct Gateway {
    backend: Box<dyn ModelBackend>,
    endpoints: BTreeMap<Role, ModelEndpoint>,
    prompts: PromptSet,
    cache: Arc<ResponseCache>,
    kappa: usize,
    dims: Mutex<BTreeMap<Role, usize>>,
    ledger: Mutex<CallLedger>,
}

impl Gateway {
    pub fn new(
        backend: Box<dyn ModelBackend>,
        endpoints: Vec<ModelEndpoint>,
        kappa: usize,
        cache: Arc<ResponseCache>,
    ) -> Result<Self, GatewayError> {
        let mut map = BTreeMap::new();
        for endpoint in endpoints {
            endpoint.validate()?;
            if map.insert(endpoint.role, endpoint).is_some() {
                return Err(GatewayError::Configuration(
                    "duplicate endpoint role".to_string(),
                ));
            }
        }
        if kappa == 0 {
            return Err(GatewayError::Configuration(
                "kappa must be at least 1".to_string(),
            ));
        }
        Ok(Self {
            backend,
            endpoints: map,
            prompts: PromptSet::default(),
            cache,
            kappa,
            dims: Mutex::new(BTreeMap::new()),
            ledger: Mutex::new(CallLedger::default()),
        })
    }

    /// Gateway over a scripted scenario with the default scripted endpoints.
    pub fn scripted(
        scenario: ScriptedScenario,
        kappa: usize,
        cache: Arc<ResponseCache>,
    ) -> Result<Self, GatewayError> {
        Self::new(
            Box::new(ScriptedBackend::new(scenario)),
            ModelEndpoint::scripted_set(),
            kappa,
            cache,
        )
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn ledger(&self) -> CallLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    fn endpoint(&self, role: Role) -> Result<&ModelEndpoint, GatewayError> {
        self.endpoints
            .get(&role)
            .ok_or(GatewayError::MissingEndpoint(role))
    }

    fn bump_live(&self, op: &str) {
        let mut ledger = self.ledger.lock().expect("ledger lock");
        *ledger.live.entry(op.to_string()).or_insert(0) += 1;
    }

    fn bump_hit(&self, op: &str) {
        let mut ledger = self.ledger.lock().expect("ledger lock");
        *ledger.cache_hits.entry(op.to_string()).or_insert(0) += 1;
    }

    /// Looks up the cache, falling back to a live call with transport
    /// retries. The response is NOT cached here; callers store it once it
    /// parses, via [`Gateway::commit`].
    fn chat(
        &self,
        op: ChatOp,
        prompt: &str,
        images: &[Vec<u8>],
        json_schema: Option<Value>,
        transport_retries: bool,
    ) -> Result<PendingCall, GatewayError> {
        let endpoint = self.endpoint(op.role())?;
        let media: Vec<String> = images.iter().map(|i| image_digest(i)).collect();
        let key = CacheKey::compute(op.role(), &endpoint.model_name, prompt, &media);
        if let Some(value) = self.cache.get(&key) {
            if let Some(text) = value.as_str() {
                self.bump_hit(op.label());
                return Ok(PendingCall {
                    key,
                    request_digest: request_digest(prompt, &media),
                    response: text.to_string(),
                    from_cache: true,
                });
            }
        }
        let budget = if transport_retries { endpoint.max_retries } else { 0 };
        let mut attempt = 0;
        let response = loop {
            self.bump_live(op.label());
            let request = ChatRequest {
                op,
                endpoint,
                prompt,
                images,
                temperature: 0.0,
                json_schema: json_schema.clone(),
            };
            match self.backend.complete(&request) {
                Ok(text) => break text,
                Err(GatewayError::Transport(_)) if attempt < budget => attempt += 1,
                Err(err) => return Err(err),
            }
        };
        Ok(PendingCall {
            key,
            request_digest: request_digest(prompt, &media),
            response,
            from_cache: false,
        })
    }

    fn commit(&self, role: Role, call: &PendingCall) -> Result<(), GatewayError> {
        if call.from_cache {
            return Ok(());
        }
        let endpoint = self.endpoint(role)?;
        self.cache.put(
            role,
            &endpoint.model_name,
            &call.key,
            &call.request_digest,
            Value::String(call.response.clone()),
        )
    }

    /// Raw image embedding for one decodable frame.
    pub fn embed_image(&self, frame: &[u8]) -> Result<Vec<f64>, GatewayError> {
        if frame.is_empty() {
            return Err(GatewayError::Decode("empty image payload".to_string()));
        }
        image::load_from_memory(frame).map_err(|e| GatewayError::Decode(e.to_string()))?;
        let items = [EmbedItem::Image(frame)];
        let mut vectors = self.embed_request(Role::ImageEmbedder, "embed_image", &items)?;
        Ok(vectors.remove(0))
    }

    /// Joint image/text embeddings, one vector per item, in a shared space.
    /// Callers normalize.
    pub fn embed_joint(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if items.is_empty() {
            return Err(GatewayError::Precondition(
                "embed_joint requires at least one item".to_string(),
            ));
        }
        self.embed_request(Role::JointEmbedder, "embed_joint", items)
    }

    fn embed_request(
        &self,
        role: Role,
        op_label: &str,
        items: &[EmbedItem<'_>],
    ) -> Result<Vec<Vec<f64>>, GatewayError> {
        let endpoint = self.endpoint(role)?;
        let media: Vec<String> = items.iter().map(item_digest).collect();
        let key = CacheKey::compute(role, &endpoint.model_name, "", &media);
        if let Some(value) = self.cache.get(&key) {
            if let Ok(vectors) = serde_json::from_value::<Vec<Vec<f64>>>(value) {
                self.bump_hit(op_label);
                return Ok(vectors);
            }
        }
        let mut attempt = 0;
        let vectors = loop {
            self.bump_live(op_label);
            match self.backend.embed(&EmbedRequest { endpoint, items }) {
                Ok(vectors) => break vectors,
                Err(GatewayError::Transport(_)) if attempt < endpoint.max_retries => attempt += 1,
                Err(err) => return Err(err),
            }
        };
        if vectors.len() != items.len() {
            return Err(GatewayError::Configuration(format!(
                "embedder returned {} vectors for {} items",
                vectors.len(),
                items.len()
            )));
        }
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(GatewayError::Configuration(
                "mixed-dimension embedding response".to_string(),
            ));
        }
        {
            let mut dims = self.dims.lock().expect("dims lock");
            match dims.get(&role) {
                Some(&expected) if expected != dim => {
                    return Err(GatewayError::Configuration(format!(
                        "embedding dimension changed for {role:?}: {expected} then {dim}"
                    )));
                }
                Some(_) => {}
                None => {
                    dims.insert(role, dim);
                }
            }
        }
        self.cache.put(
            role,
            &endpoint.model_name,
            &key,
            &request_digest("", &media),
            serde_json::to_value(&vectors).map_err(|e| GatewayError::Cache(e.to_string()))?,
        )?;
        Ok(vectors)
    }

    /// Scores one segment from its sampled frames, optionally conditioned on
    /// an accepted historical summary. Unparseable output earns a single
    /// retry with a stricter format reminder, then a typed parse error
    /// carrying the raw reply.
    pub fn score_segment(
        &self,
        frames: &[Vec<u8>],
        summary: Option<&str>,
    ) -> Result<RawVerdict, GatewayError> {
        if frames.len() != self.kappa {
            return Err(GatewayError::Precondition(format!(
                "score_segment expects {} frames, got {}",
                self.kappa,
                frames.len()
            )));
        }
        let prompt = match summary {
            Some(text) => self.prompts.render(PromptId::ScoreCtx, &[("summary", text)])?,
            None => self.prompts.body(PromptId::Score).to_string(),
        };
        let call = self.chat(ChatOp::Score, &prompt, frames, None, true)?;
        if let Some(verdict) = parse_verdict(&call.response) {
            self.commit(Role::Scorer, &call)?;
            return Ok(verdict);
        }
        let retry_prompt = format!("{prompt}\n\n{FORMAT_REMINDER}");
        let retry = self.chat(ChatOp::Score, &retry_prompt, frames, None, true)?;
        match parse_verdict(&retry.response) {
            Some(verdict) => {
                self.commit(Role::Scorer, &retry)?;
                Ok(verdict)
            }
            None => Err(GatewayError::VerdictParse {
                raw: retry.response,
            }),
        }
    }

    /// Summarizes a set of key frames into historical context text.
    pub fn summarize(&self, key_frames: &[Vec<u8>]) -> Result<String, GatewayError> {
        if key_frames.is_empty() {
            return Err(GatewayError::Precondition(
                "summarize requires at least one key frame".to_string(),
            ));
        }
        let prompt = self.prompts.body(PromptId::Summary).to_string();
        let call = self.chat(ChatOp::Summarize, &prompt, key_frames, None, true)?;
        self.commit(Role::Captioner, &call)?;
        Ok(call.response)
    }

    /// Generates an event narrative from representative frames and the
    /// ordered segment-level evidence texts.
    pub fn caption_event(
        &self,
        frames: &[Vec<u8>],
        evidence: &[String],
    ) -> Result<String, GatewayError> {
        if frames.len() != self.kappa {
            return Err(GatewayError::Precondition(format!(
                "caption_event expects {} frames, got {}",
                self.kappa,
                frames.len()
            )));
        }
        if evidence.is_empty() || evidence.len() > 10 {
            return Err(GatewayError::Precondition(format!(
                "caption_event expects 1..=10 evidence texts, got {}",
                evidence.len()
            )));
        }
        let listed: Vec<String> = evidence.iter().map(|e| format!("- {e}")).collect();
        let prompt = self
            .prompts
            .render(PromptId::Caption, &[("evidence", &listed.join("\n"))])?;
        let call = self.chat(ChatOp::Caption, &prompt, frames, None, true)?;
        self.commit(Role::Scorer, &call)?;
        Ok(call.response)
    }

    /// Closed-set category prediction from explanation text alone.
    ///
    /// Never fails on model misbehavior: unparseable or out-of-enum replies
    /// are retried up to the endpoint budget, then degrade to `"unknown"`.
    /// Decoding is requested deterministic, with a JSON schema constraint
    /// for endpoints that support it.
    pub fn judge_category(&self, explanation: &str, labels: &[&str]) -> String {
        match self.judge_inner(explanation, labels) {
            Ok(label) => label,
            Err(_) => UNKNOWN_LABEL.to_string(),
        }
    }

    fn judge_inner(&self, explanation: &str, labels: &[&str]) -> Result<String, GatewayError> {
        let endpoint = self.endpoint(Role::Judge)?;
        let attempts = endpoint.max_retries as usize + 1;
        let labels_json =
            serde_json::to_string(labels).map_err(|e| GatewayError::Prompt(e.to_string()))?;
        let prompt = self.prompts.render(
            PromptId::Judge,
            &[("labels", labels_json.as_str()), ("explanation", explanation)],
        )?;
        let schema = judge_schema(labels);
        for _ in 0..attempts {
            let call = match self.chat(ChatOp::Judge, &prompt, &[], Some(schema.clone()), false) {
                Ok(call) => call,
                Err(GatewayError::Transport(_)) => continue,
                Err(err) => return Err(err),
            };
            if let Some(label) = parse_judge_label(&call.response, labels) {
                self.commit(Role::Judge, &call)?;
                return Ok(label);
            }
        }
        Ok(UNKNOWN_LABEL.to_string())
    }
}

fn judge_schema(labels: &[&str]) -> Value {
    let mut values: Vec<&str> = labels.to_vec();
    values.push(UNKNOWN_LABEL);
    json!({
        "name": "category_label",
        "schema": {
            "type": "object",
            "properties": {"label": {"type": "string", "enum": values}},
            "required": ["label"],
            "additionalProperties": false,
        },
    })
}

fn image_digest(bytes: &[u8]) -> String {
    let mut data = Vec::with_capacity(bytes.len() + 6);
    data.extend_from_slice(b"image:");
    data.extend_from_slice(bytes);
    sha256_hex(&data)
}

fn item_digest(item: &EmbedItem<'_>) -> String {
    match item {
        EmbedItem::Text(text) => {
            let mut data = Vec::with_capacity(text.len() + 5);
            data.extend_from_slice(b"text:");
            data.extend_from_slice(text.as_bytes());
            sha256_hex(&data)
        }
        EmbedItem::Image(bytes) => image_digest(bytes),
    }
}

fn request_digest(prompt: &str, media: &[String]) -> String {
    let mut data = Vec::new();
    data.extend_from_slice(prompt.as_bytes());
    for digest in media {
        data.push(0);
        data.extend_from_slice(digest.as_bytes());
    }
    sha256_hex(&data)
}

/// Parses the scorer wire format: a line `anomaly: <0|1>` (case-insensitive)
/// followed by a non-empty free-text explanation.
pub fn parse_verdict(raw: &str) -> Option<RawVerdict> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t]*anomaly[ \t]*:[ \t]*([01])[ \t]*$").expect("verdict regex")
    });
    let captures = re.captures(raw)?;
    let flag = if &captures[1] == "1" { 1 } else { 0 };
    let end = captures.get(0).expect("whole match").end();
    let explanation = raw[end..].trim();
    if explanation.is_empty() {
        return None;
    }
    Some(RawVerdict {
        flag,
        explanation: explanation.to_string(),
    })
}

/// Lenient judge parsing: strict JSON first, then an embedded JSON object,
/// then the whole reply as a bare label; the result must normalize into the
/// closed set (or be a literal "unknown") to be accepted.
pub fn parse_judge_label(raw: &str, labels: &[&str]) -> Option<String> {
    let trimmed = raw.trim();
    let candidate = extract_label_field(trimmed)
        .or_else(|| Some(trimmed.trim_matches(['"', '\'']).to_string()))?;
    let normalized = normalize_alias(&candidate);
    if labels.contains(&normalized.as_str()) {
        return Some(normalized);
    }
    if candidate.trim().eq_ignore_ascii_case(UNKNOWN_LABEL) {
        return Some(UNKNOWN_LABEL.to_string());
    }
    None
}

fn extract_label_field(text: &str) -> Option<String> {
    let parsed: Option<Value> = serde_json::from_str(text).ok();
    let parsed = parsed.or_else(|| {
        let start = text.find('{')?;
        let end = text.rfind('}')?;
        if start < end {
            serde_json::from_str(&text[start..=end]).ok()
        } else {
            None
        }
    })?;
    parsed.get("label")?.as_str().map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{FrameStore, SyntheticFrameStore};
    use crate::labels::CANONICAL_CATEGORIES;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn frames(n: usize) -> Vec<Vec<u8>> {
        let store = SyntheticFrameStore::new("gateway-test", n as u64);
        (0..n as u64).map(|i| store.frame_bytes(i).unwrap()).collect()
    }

    fn scenario() -> ScriptedScenario {
        ScriptedScenario {
            verdicts: vec![
                ScriptedVerdict { flag: 0, explanation: "an empty street".into() },
                ScriptedVerdict { flag: 1, explanation: "a car crash".into() },
            ],
            summaries: vec!["- pedestrians crossing".into()],
            embeddings: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
            judge_labels: vec!["robbery".into()],
            captions: vec!["A collision unfolds at the crossing.".into()],
        }
    }

    fn gateway(scenario: ScriptedScenario) -> Gateway {
        let cache = Arc::new(ResponseCache::open(None).unwrap());
        Gateway::scripted(scenario, 2, cache).unwrap()
    }

    #[test]
    fn scripted_replay_is_verbatim_and_positional() {
        let gw = gateway(scenario());
        let fs = frames(4);
        let v0 = gw.score_segment(&fs[0..2], None).unwrap();
        assert_eq!(v0, RawVerdict { flag: 0, explanation: "an empty street".into() });
        let v1 = gw.score_segment(&fs[2..4], None).unwrap();
        assert_eq!(v1.flag, 1);
    }

    #[test]
    fn identical_inputs_hit_the_cache() {
        let gw = gateway(scenario());
        let fs = frames(2);
        let first = gw.score_segment(&fs, None).unwrap();
        let second = gw.score_segment(&fs, None).unwrap();
        // Same request replays the first verdict instead of consuming the
        // scenario's second entry.
        assert_eq!(first, second);
        let ledger = gw.ledger();
        assert_eq!(ledger.live_count("score"), 1);
        assert_eq!(ledger.hit_count("score"), 1);
    }

    #[test]
    fn embed_image_returns_scenario_vector_zero() {
        let gw = gateway(scenario());
        let fs = frames(1);
        let v = gw.embed_image(&fs[0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
        // Cache hit for the same frame: no new scenario vector consumed.
        let again = gw.embed_image(&fs[0]).unwrap();
        assert_eq!(again, vec![1.0, 0.0]);
        assert_eq!(gw.ledger().live_count("embed_image"), 1);
    }

    #[test]
    fn zero_byte_image_is_a_decode_error_without_network() {
        let gw = gateway(scenario());
        let err = gw.embed_image(&[]).unwrap_err();
        assert!(matches!(err, GatewayError::Decode(_)));
        assert_eq!(gw.ledger().live_count("embed_image"), 0);
    }

    #[test]
    fn embed_joint_arity_and_empty_precondition() {
        let gw = gateway(scenario());
        let fs = frames(2);
        let items = [
            EmbedItem::Text("a fire"),
            EmbedItem::Image(&fs[0]),
            EmbedItem::Image(&fs[1]),
        ];
        let vectors = gw.embed_joint(&items).unwrap();
        assert_eq!(vectors.len(), 3);
        assert!(vectors.iter().all(|v| v.len() == 2));
        assert!(matches!(
            gw.embed_joint(&[]),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn summarize_replays_and_caches() {
        let gw = gateway(scenario());
        let fs = frames(2);
        let a = gw.summarize(&fs).unwrap();
        let b = gw.summarize(&fs).unwrap();
        assert_eq!(a, "- pedestrians crossing");
        assert_eq!(a, b);
        assert!(matches!(
            gw.summarize(&[]),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn caption_renders_all_evidence_in_order() {
        struct Capture(Arc<Mutex<Vec<String>>>);
        impl ModelBackend for Capture {
            fn complete(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
                self.0.lock().unwrap().push(request.prompt.to_string());
                Ok("A short narrative.".to_string())
            }
            fn embed(&self, _: &EmbedRequest<'_>) -> Result<Vec<Vec<f64>>, GatewayError> {
                unreachable!()
            }
        }
        let seen = Arc::new(Mutex::new(Vec::new()));
        let cache = Arc::new(ResponseCache::open(None).unwrap());
        let gw = Gateway::new(
            Box::new(Capture(seen.clone())),
            ModelEndpoint::scripted_set(),
            2,
            cache,
        )
        .unwrap();
        let evidence: Vec<String> = (0..10).map(|i| format!("note {i}")).collect();
        gw.caption_event(&frames(2), &evidence).unwrap();
        let prompt = seen.lock().unwrap()[0].clone();
        let mut last = 0;
        for text in &evidence {
            let at = prompt.find(&format!("- {text}")).expect("evidence rendered");
            assert!(at >= last, "evidence out of order");
            last = at;
        }
        // Eleven evidence strings violate the precondition.
        let eleven: Vec<String> = (0..11).map(|i| format!("note {i}")).collect();
        assert!(matches!(
            gw.caption_event(&frames(2), &eleven),
            Err(GatewayError::Precondition(_))
        ));
    }

    #[test]
    fn malformed_scorer_reply_errors_after_one_retry() {
        struct Garbage(Arc<AtomicUsize>);
        impl ModelBackend for Garbage {
            fn complete(&self, _: &ChatRequest<'_>) -> Result<String, GatewayError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok("I think something is happening but cannot say what.".to_string())
            }
            fn embed(&self, _: &EmbedRequest<'_>) -> Result<Vec<Vec<f64>>, GatewayError> {
                unreachable!()
            }
        }
        let calls = Arc::new(AtomicUsize::new(0));
        let cache = Arc::new(ResponseCache::open(None).unwrap());
        let gw = Gateway::new(
            Box::new(Garbage(calls.clone())),
            ModelEndpoint::scripted_set(),
            2,
            cache,
        )
        .unwrap();
        let err = gw.score_segment(&frames(2), None).unwrap_err();
        assert!(matches!(err, GatewayError::VerdictParse { .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn judge_normalizes_case_variants() {
        let mut sc = scenario();
        sc.judge_labels = vec!["Robbery".into()];
        let gw = gateway(sc);
        let labels: Vec<&str> = CANONICAL_CATEGORIES.to_vec();
        assert_eq!(gw.judge_category("a man robs a clerk", &labels), "robbery");
    }

    #[test]
    fn judge_accepts_json_and_bare_labels() {
        let labels: Vec<&str> = CANONICAL_CATEGORIES.to_vec();
        assert_eq!(
            parse_judge_label(r#"{"label": "arson"}"#, &labels),
            Some("arson".to_string())
        );
        assert_eq!(
            parse_judge_label("the answer: {\"label\": \"fight\"} done", &labels),
            Some("fighting".to_string())
        );
        assert_eq!(parse_judge_label("arson", &labels), Some("arson".into()));
        assert_eq!(parse_judge_label("unknown", &labels), Some("unknown".into()));
        assert_eq!(parse_judge_label("banana{", &labels), None);
    }

    #[test]
    fn judge_degrades_to_unknown_after_three_retries() {
        struct Invalid(Arc<AtomicUsize>);
        impl ModelBackend for Invalid {
            fn complete(&self, _: &ChatRequest<'_>) -> Result<String, GatewayError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok("{not json at all".to_string())
            }
            fn embed(&self, _: &EmbedRequest<'_>) -> Result<Vec<Vec<f64>>, GatewayError> {
                unreachable!()
            }
        }
        let calls = Arc::new(AtomicUsize::new(0));
        let cache = Arc::new(ResponseCache::open(None).unwrap());
        let gw = Gateway::new(
            Box::new(Invalid(calls.clone())),
            ModelEndpoint::scripted_set(),
            2,
            cache,
        )
        .unwrap();
        let labels: Vec<&str> = CANONICAL_CATEGORIES.to_vec();
        assert_eq!(gw.judge_category("whatever", &labels), "unknown");
        // One initial attempt plus exactly three retries.
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn verdict_parser_requires_flag_line_and_explanation() {
        assert_eq!(
            parse_verdict("anomaly: 1\nsmoke rises"),
            Some(RawVerdict { flag: 1, explanation: "smoke rises".into() })
        );
        assert_eq!(
            parse_verdict("Anomaly: 0\n\nnothing to report"),
            Some(RawVerdict { flag: 0, explanation: "nothing to report".into() })
        );
        assert!(parse_verdict("anomaly: 2\ntext").is_none());
        assert!(parse_verdict("no flag here").is_none());
        assert!(parse_verdict("anomaly: 1").is_none());
    }

    #[test]
    fn gateway_is_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Gateway>();
    }

    #[test]
    fn embedding_dimension_change_is_a_configuration_error() {
        struct Shrinking(AtomicUsize);
        impl ModelBackend for Shrinking {
            fn complete(&self, _: &ChatRequest<'_>) -> Result<String, GatewayError> {
                unreachable!()
            }
            fn embed(&self, request: &EmbedRequest<'_>) -> Result<Vec<Vec<f64>>, GatewayError> {
                let call = self.0.fetch_add(1, Ordering::SeqCst);
                let dim = if call == 0 { 4 } else { 3 };
                Ok(vec![vec![0.5; dim]; request.items.len()])
            }
        }
        let cache = Arc::new(ResponseCache::open(None).unwrap());
        let gw = Gateway::new(
            Box::new(Shrinking(AtomicUsize::new(0))),
            ModelEndpoint::scripted_set(),
            2,
            cache,
        )
        .unwrap();
        let fs = frames(2);
        assert_eq!(gw.embed_image(&fs[0]).unwrap().len(), 4);
        let err = gw.embed_image(&fs[1]).unwrap_err();
        assert!(matches!(err, GatewayError::Configuration(_)));
    }

    #[test]
    fn judge_endpoint_retry_budget_is_capped() {
        let mut endpoints = ModelEndpoint::scripted_set();
        for e in &mut endpoints {
            if e.role == Role::Judge {
                e.max_retries = 4;
            }
        }
        let cache = Arc::new(ResponseCache::open(None).unwrap());
        let result = Gateway::new(
            Box::new(ScriptedBackend::new(ScriptedScenario::default())),
            endpoints,
            2,
            cache,
        );
        assert!(matches!(result.err(), Some(GatewayError::Configuration(_))));
    }
}
