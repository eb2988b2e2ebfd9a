//! Deterministic scripted backend: replays pre-recorded model outputs in
//! positional order, one scenario per video. Replaying the same scenario
//! yields byte-identical gateway outputs.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatOp, ChatRequest, EmbedRequest, GatewayError, ModelBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedVerdict {
    pub flag: u8,
    pub explanation: String,
}

/// Canned outputs for every model role. Pools are consumed positionally and
/// wrap around when exhausted; an empty pool for a requested role is an
/// error.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptedScenario {
    pub verdicts: Vec<ScriptedVerdict>,
    pub summaries: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    pub judge_labels: Vec<String>,
    pub captions: Vec<String>,
}

#[derive(Debug, Default)]
struct Positions {
    verdict: usize,
    summary: usize,
    embedding: usize,
    judge: usize,
    caption: usize,
}

/// Position-stateful replay backend. Instantiate one per video.
pub struct ScriptedBackend {
    scenario: ScriptedScenario,
    positions: Mutex<Positions>,
}

impl ScriptedBackend {
    pub fn new(scenario: ScriptedScenario) -> Self {
        Self {
            scenario,
            positions: Mutex::new(Positions::default()),
        }
    }
}

fn next<'a, T>(pool: &'a [T], position: &mut usize, what: &str) -> Result<&'a T, GatewayError> {
    if pool.is_empty() {
        return Err(GatewayError::ScenarioExhausted(format!(
            "scripted scenario has no {what}"
        )));
    }
    let item = &pool[*position % pool.len()];
    *position += 1;
    Ok(item)
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, GatewayError> {
        let mut positions = self.positions.lock().expect("scripted positions");
        match request.op {
            ChatOp::Score => {
                let v = next(&self.scenario.verdicts, &mut positions.verdict, "verdicts")?;
                Ok(format!("anomaly: {}\n{}", v.flag, v.explanation))
            }
            ChatOp::Summarize => {
                Ok(next(&self.scenario.summaries, &mut positions.summary, "summaries")?.clone())
            }
            ChatOp::Caption => {
                Ok(next(&self.scenario.captions, &mut positions.caption, "captions")?.clone())
            }
            ChatOp::Judge => {
                Ok(next(&self.scenario.judge_labels, &mut positions.judge, "judge labels")?.clone())
            }
        }
    }

    fn embed(&self, request: &EmbedRequest<'_>) -> Result<Vec<Vec<f64>>, GatewayError> {
        let mut positions = self.positions.lock().expect("scripted positions");
        let mut vectors = Vec::with_capacity(request.items.len());
        for _ in 0..request.items.len() {
            vectors.push(next(&self.scenario.embeddings, &mut positions.embedding, "embeddings")?.clone());
        }
        Ok(vectors)
    }
}
