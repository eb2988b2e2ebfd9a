//! Prompt templates for every model role, with named-placeholder rendering.
//!
//! Placeholders use `{name}` syntax; rendering substitutes only the known
//! names, so literal braces elsewhere in a template (e.g. the JSON shape in
//! the judge prompt) pass through untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Placeholder names that rendering recognizes.
pub const PLACEHOLDERS: [&str; 4] = ["summary", "labels", "explanation", "evidence"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptId {
    Summary,
    Score,
    ScoreCtx,
    Caption,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: PromptId,
    pub body: String,
}

pub const SCORE_PROMPT: &str = "\
You are monitoring surveillance video. The attached frames are uniformly sampled from one video segment.
Decide whether the segment shows an anomalous event (for example a crime, violence, an accident, or other clearly abnormal activity).

Respond in exactly this format:
anomaly: <0 or 1>
<one short paragraph describing what is visible and why it is or is not anomalous>";

pub const SCORE_CTX_PROMPT: &str = "\
Historical context from earlier in this video:
{summary}

You are monitoring surveillance video. The attached frames are uniformly sampled from the current video segment.
Treat the historical context as a description of prior segments and decide whether the current segment shows an anomalous event relative to how the video has evolved (for example a crime, violence, an accident, or other clearly abnormal activity).

Respond in exactly this format:
anomaly: <0 or 1>
<one short paragraph describing what is visible and why it is or is not anomalous>";

pub const SUMMARY_PROMPT: &str = "\
The attached frames are key frames selected from earlier segments of one video.
Summarize the prior video content under these rules:
- Describe only clearly observable visual content.
- Do not speculate about intent, normality, or future events.
- When the evidence is insufficient, state the uncertainty explicitly.
- Reply with 2-4 short bullet points.
Never label events as normal or anomalous; report observations only.";

pub const CAPTION_PROMPT: &str = "\
The attached frames span one detected event in a video. The following segment-level notes were written while the event unfolded, in temporal order:
{evidence}

Write a concise narrative of at most 4 sentences describing the event, strictly grounded in the frames and the notes above. Do not add details that are not supported by this evidence.";

pub const JUDGE_PROMPT: &str = r#"You are a strict evaluator.

Task: Given ONLY the text explanation of an event in a video, predict the video anomaly category.

Closed-set labels (choose exactly ONE):
{labels}

Rules:
- Use ONLY the information explicitly stated in the explanation.
- Output must be a single JSON object with one key: "label".

Explanation:
{explanation}

Return ONLY:
{"label": "<one of the labels above>"}"#;

/// Appended to the scoring prompt for the single format-reminder retry.
pub const FORMAT_REMINDER: &str = "\
Reminder: the first line of your reply must be exactly `anomaly: 0` or `anomaly: 1`, followed by the explanation.";

#[derive(Debug, Clone)]
pub struct PromptSet {
    bodies: BTreeMap<PromptId, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let mut bodies = BTreeMap::new();
        bodies.insert(PromptId::Summary, SUMMARY_PROMPT.to_string());
        bodies.insert(PromptId::Score, SCORE_PROMPT.to_string());
        bodies.insert(PromptId::ScoreCtx, SCORE_CTX_PROMPT.to_string());
        bodies.insert(PromptId::Caption, CAPTION_PROMPT.to_string());
        bodies.insert(PromptId::Judge, JUDGE_PROMPT.to_string());
        Self { bodies }
    }
}

impl PromptSet {
    pub fn body(&self, id: PromptId) -> &str {
        self.bodies.get(&id).map(String::as_str).unwrap_or_default()
    }

    /// Renders a template by substituting the given bindings, then checks
    /// that no known placeholder token survives.
    pub fn render(
        &self,
        id: PromptId,
        bindings: &[(&str, &str)],
    ) -> Result<String, GatewayError> {
        let rendered = substitute(self.body(id), bindings);
        for name in PLACEHOLDERS {
            let token = format!("{{{name}}}");
            if rendered.contains(&token) {
                return Err(GatewayError::Prompt(format!(
                    "placeholder {token} left unbound in {id:?} template"
                )));
            }
        }
        Ok(rendered)
    }
}

/// Single-pass substitution over the template: only bound `{name}` tokens
/// are replaced, and replacement values are never re-scanned.
fn substitute(template: &str, bindings: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in bindings {
            let token_len = name.len() + 2;
            if tail.len() >= token_len
                && tail.as_bytes()[token_len - 1] == b'}'
                && &tail[1..token_len - 1] == *name
            {
                out.push_str(value);
                rest = &tail[token_len..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}
