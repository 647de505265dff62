//! Candidate generation: prompt rendering, chat backends and response parsing.

use std::path::PathBuf;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{ColumnKind, Schema, TabularDataset, Task};
use crate::dsl::{is_snake_case_identifier, validate, FeatureOperation};

pub const DEFAULT_PROPOSALS_PER_ROUND: usize = 15;
pub const HISTORY_WINDOW: usize = 10;

pub const SYSTEM_TEMPLATE: &str = "You are an expert data scientist with deep expertise in feature engineering. You have the ability to:
1) Analyze patterns in previous feature performance to guide new feature creation
2) Reason about why certain features succeeded or failed
3) Design complementary features that address gaps in the current feature set
4) Consider domain knowledge and statistical relationships in your feature design";

pub const USER_TEMPLATE: &str = r#"Dataset Context:
- Task type: [CLASSIFICATION_OR_REGRESSION]
- Metric: [ROC_AUC_OR_OTHER]
- Columns (name:type): [COLS_WITH_TYPES]
- Target: <TARGET_NAME>
- Notes (missingness, skew, constraints): <DATA_NOTES>

Recent performance feedback: [PERFORMANCE HISTORY]
Remaining iteration budget: [BUDGET]

**Strategic Reasoning**
Based on the performance feedback above, consider:
1. What patterns do you see in the performance history?
2. What types of relationships might be missing from current features?
3. How can you build upon successful features while avoiding failed approaches?
4. What domain-specific insights can guide your next feature ideas?

**Task**
Suggest up to K complementary NEW features** as a JSON list. Each item should include:

  {
    "name": "snake_case_identifier",
    "explanation": "<detailed reasoning: why this feature helps, how it builds on feedback>",
    "reasoning": "<strategic thinking: what patterns from history inform this choice>",
    "code": "<single expression in the column expression language below>",
    "expected_benefit": "<specific hypothesis about how this will improve the model>"
  }

Column expression language for "code":
- Reference a column with col("name"); numbers and "strings" are literals.
- Arithmetic: + - * / ^ and unary minus; parentheses for grouping.
- Functions: log, log1p, exp, sqrt, abs, tanh, neg (one argument); mean, min, max, sum (two or more arguments).
- Comparisons < <= > >= = != yield 1 or 0; a categorical column may only be compared with = or != against a string, e.g. col("city") = "Paris".

**Important Guidelines:**
- Do not suggest features that need label information.
- Learn from rejected features - avoid similar patterns that failed
- Build upon successful features - create complementary variations
- You can try to combine multiple (N > 2) features to create a new feature to capture a more complex relationship.
- Ensure features are diverse and capture different aspects of the data
- Provide specific, actionable reasoning for each feature choice
- For the reasoning process and expected benefit analysis, be your best to be concise and clear.

Return ONLY the JSON list."#;

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("no JSON array found in response: {excerpt:?}")]
    NoJsonArray { excerpt: String },
    #[error("scripted proposer exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("cannot load proposer script {path}: {message}")]
    Script { path: PathBuf, message: String },
    #[error("invalid proposal request: {0}")]
    Request(String),
}

/// One past round as shown to the proposer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub round: usize,
    pub name: String,
    pub expression: String,
    pub g: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRequest {
    pub task: Task,
    pub metric: String,
    /// Feature columns (target excluded) with their kinds.
    pub columns: Schema,
    pub target: String,
    pub notes: String,
    pub history: Vec<HistoryLine>,
    pub budget: usize,
    pub k: usize,
    pub temperature: f64,
}

impl ProposalRequest {
    /// Request describing the current training split. Notes combine the
    /// dataset metadata with per-column missing counts; target values are
    /// never included.
    pub fn for_dataset(
        ds: &TabularDataset,
        metric: impl Into<String>,
        history: Vec<HistoryLine>,
        budget: usize,
        k: usize,
    ) -> Self {
        let missing: Vec<String> = ds
            .feature_columns()
            .filter_map(|c| {
                let n = match &c.data {
                    crate::dataset::ColumnData::Numeric(v) => {
                        v.iter().filter(|x| x.is_none()).count()
                    }
                    crate::dataset::ColumnData::Categorical(v) => {
                        v.iter().filter(|x| x.is_none()).count()
                    }
                };
                (n > 0).then(|| format!("{} ({n} missing)", c.name))
            })
            .collect();
        let mut notes = ds.metadata().trim().to_string();
        if !missing.is_empty() {
            if !notes.is_empty() {
                notes.push_str("; ");
            }
            notes.push_str("missing values in ");
            notes.push_str(&missing.join(", "));
        }
        if notes.is_empty() {
            notes = "none".into();
        }
        Self {
            task: ds.task(),
            metric: metric.into(),
            columns: ds.feature_schema(),
            target: ds.target().to_string(),
            notes,
            history,
            budget,
            k,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProposerError> {
        if self.k == 0 {
            return Err(ProposerError::Request("k must be at least 1".into()));
        }
        Ok(())
    }
}

fn render_history(history: &[HistoryLine]) -> String {
    if history.is_empty() {
        return "none yet".into();
    }
    let start = history.len().saturating_sub(HISTORY_WINDOW);
    let mut out = String::new();
    for h in &history[start..] {
        out.push_str(&format!(
            "\n- round {}: {} = {} | g = {:+.4} | {}",
            h.round,
            h.name,
            h.expression,
            h.g,
            if h.accepted { "accepted" } else { "rejected" }
        ));
    }
    out
}

/// (system, user) prompt texts.
pub fn render_prompt(request: &ProposalRequest) -> (String, String) {
    let task = match request.task {
        Task::Classification => "classification",
        Task::Regression => "regression",
    };
    let columns = request
        .columns
        .iter()
        .map(|(n, k)| {
            format!(
                "{n}:{}",
                match k {
                    ColumnKind::Numeric => "numeric",
                    ColumnKind::Categorical => "categorical",
                }
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    let user = USER_TEMPLATE
        .replace("[CLASSIFICATION_OR_REGRESSION]", task)
        .replace("[ROC_AUC_OR_OTHER]", &request.metric)
        .replace("[COLS_WITH_TYPES]", &columns)
        .replace("<TARGET_NAME>", &request.target)
        .replace("<DATA_NOTES>", &request.notes)
        .replace("[PERFORMANCE HISTORY]", &render_history(&request.history))
        .replace("[BUDGET]", &request.budget.to_string())
        .replace("Suggest up to K ", &format!("Suggest up to {} ", request.k));
    (SYSTEM_TEMPLATE.to_string(), user)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub name: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedProposals {
    pub operations: Vec<FeatureOperation>,
    pub rejections: Vec<Rejection>,
}

fn excerpt(text: &str) -> String {
    text.chars().take(200).collect()
}

/// First JSON array in `text` that is empty or holds at least one object.
fn first_json_array(text: &str) -> Option<Vec<Value>> {
    for (i, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if items.is_empty() || items.iter().any(Value::is_object) {
                return Some(items);
            }
        }
    }
    None
}

fn string_field(item: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    item.get(key).and_then(Value::as_str).map(str::to_string)
}

/// Parses a proposal list, validating each item against `schema`. Invalid
/// items are reported; duplicate expressions keep the first occurrence.
pub fn parse_response(text: &str, schema: &Schema) -> Result<ParsedProposals, ProposerError> {
    let items = first_json_array(text).ok_or_else(|| ProposerError::NoJsonArray {
        excerpt: excerpt(text),
    })?;
    let mut out = ParsedProposals::default();
    let mut seen = std::collections::HashSet::new();
    for (index, item) in items.iter().enumerate() {
        let reject = |name: Option<String>, reason: String| Rejection {
            index,
            name,
            reason,
        };
        let Some(obj) = item.as_object() else {
            out.rejections
                .push(reject(None, "item is not an object".into()));
            continue;
        };
        let name = string_field(obj, "name");
        let missing = ["name", "explanation", "code"]
            .into_iter()
            .find(|k| string_field(obj, k).is_none());
        if let Some(field) = missing {
            out.rejections
                .push(reject(name, format!("missing field {field:?}")));
            continue;
        }
        let name = name.expect("checked");
        let code = string_field(obj, "code").expect("checked");
        let code = code.trim();
        let code = code
            .strip_prefix("feature =")
            .map(str::trim)
            .unwrap_or(code);
        if !is_snake_case_identifier(&name) {
            out.rejections.push(reject(
                Some(name.clone()),
                format!("name {name:?} is not snake_case"),
            ));
            continue;
        }
        let mut op =
            match FeatureOperation::new(&name, code, string_field(obj, "explanation").unwrap()) {
                Ok(op) => op,
                Err(e) => {
                    out.rejections.push(reject(Some(name), e.to_string()));
                    continue;
                }
            };
        if let Err(errors) = validate(&op.expression, schema) {
            let reason = errors
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            out.rejections.push(reject(Some(name), reason));
            continue;
        }
        if !seen.insert(op.canonical()) {
            out.rejections.push(reject(
                Some(name),
                format!("duplicate expression {}", op.canonical()),
            ));
            continue;
        }
        op.reasoning = string_field(obj, "reasoning").unwrap_or_default();
        op.expected_benefit = string_field(obj, "expected_benefit").unwrap_or_default();
        out.operations.push(op);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteChatConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RemoteChatConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProposerBackend {
    RemoteChat(RemoteChatConfig),
    /// JSON file holding an ordered list of canned responses; each entry is
    /// either raw response text or a proposal array.
    ScriptedMock {
        script: PathBuf,
    },
}

impl ProposerBackend {
    /// Parses `mock:<path>` or `remote:<model>`.
    pub fn from_spec(spec: &str) -> Result<Self, ProposerError> {
        if let Some(path) = spec.strip_prefix("mock:") {
            Ok(ProposerBackend::ScriptedMock {
                script: path.into(),
            })
        } else if let Some(model) = spec.strip_prefix("remote:") {
            Ok(ProposerBackend::RemoteChat(RemoteChatConfig {
                model: model.to_string(),
                ..RemoteChatConfig::default()
            }))
        } else if spec == "remote" {
            Ok(ProposerBackend::RemoteChat(RemoteChatConfig::default()))
        } else {
            Err(ProposerError::Request(format!(
                "unknown proposer {spec:?}; expected mock:<path> or remote[:<model>]"
            )))
        }
    }
}

/// Full request/response record of one proposal call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub backend: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub seed: u64,
    pub response: Option<String>,
    pub attempts: u32,
    pub error: Option<String>,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone)]
pub struct ProposalOutcome {
    pub operations: Vec<FeatureOperation>,
    pub transcript: Transcript,
}

enum State {
    Remote(RemoteChatConfig),
    Mock {
        responses: Vec<String>,
        cursor: usize,
    },
}

pub struct Proposer {
    state: State,
}

pub fn load_script(path: &std::path::Path) -> Result<Vec<String>, ProposerError> {
    let err = |message: String| ProposerError::Script {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let entries: Vec<Value> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    Ok(entries
        .into_iter()
        .map(|v| match v {
            Value::String(s) => s,
            other => other.to_string(),
        })
        .collect())
}

impl Proposer {
    pub fn new(backend: &ProposerBackend) -> Result<Self, ProposerError> {
        let state = match backend {
            ProposerBackend::RemoteChat(cfg) => State::Remote(cfg.clone()),
            ProposerBackend::ScriptedMock { script } => State::Mock {
                responses: load_script(script)?,
                cursor: 0,
            },
        };
        Ok(Self { state })
    }

    pub fn scripted(responses: Vec<String>) -> Self {
        Self {
            state: State::Mock {
                responses,
                cursor: 0,
            },
        }
    }

    /// Number of scripted responses consumed so far (0 for remote).
    pub fn cursor(&self) -> usize {
        match &self.state {
            State::Mock { cursor, .. } => *cursor,
            State::Remote(_) => 0,
        }
    }

    /// Skips scripted responses, used when resuming a session.
    pub fn advance(&mut self, n: usize) {
        if let State::Mock { cursor, .. } = &mut self.state {
            *cursor += n;
        }
    }

    /// One proposal call. Remote transport failures are retried and end in an
    /// empty list; unparseable responses also yield an empty list. Only an
    /// exhausted script is an error.
    pub fn propose(
        &mut self,
        request: &ProposalRequest,
        seed: u64,
    ) -> Result<ProposalOutcome, ProposerError> {
        request.validate()?;
        let (system, user) = render_prompt(request);
        let mut transcript = Transcript {
            backend: String::new(),
            system,
            user,
            temperature: request.temperature,
            seed,
            response: None,
            attempts: 0,
            error: None,
            rejections: Vec::new(),
        };
        match &mut self.state {
            State::Mock { responses, cursor } => {
                transcript.backend = "scripted-mock".into();
                let text = responses
                    .get(*cursor)
                    .cloned()
                    .ok_or(ProposerError::ScriptExhausted(responses.len()))?;
                *cursor += 1;
                transcript.attempts = 1;
                transcript.response = Some(text);
            }
            State::Remote(cfg) => {
                transcript.backend = format!("remote-chat:{}", cfg.model);
                match call_remote(cfg, &transcript) {
                    (Ok(text), attempts) => {
                        transcript.attempts = attempts;
                        transcript.response = Some(text);
                    }
                    (Err(e), attempts) => {
                        transcript.attempts = attempts;
                        warn!("proposer backend failed after {attempts} attempts: {e}");
                        transcript.error = Some(e);
                    }
                }
            }
        }
        let mut operations = Vec::new();
        if let Some(text) = &transcript.response {
            match parse_response(text, &request.columns) {
                Ok(parsed) => {
                    operations = parsed.operations;
                    transcript.rejections = parsed.rejections;
                }
                Err(e) => {
                    warn!("{e}");
                    transcript.error = Some(e.to_string());
                }
            }
        }
        if operations.len() > request.k {
            operations.truncate(request.k);
        }
        Ok(ProposalOutcome {
            operations,
            transcript,
        })
    }
}

fn call_remote(cfg: &RemoteChatConfig, t: &Transcript) -> (Result<String, String>, u32) {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
        .build()
        .into();
    let body = serde_json::json!({
        "model": cfg.model,
        "temperature": t.temperature,
        "seed": t.seed,
        "messages": [
            {"role": "system", "content": t.system},
            {"role": "user", "content": t.user},
        ],
    });
    let key = std::env::var(&cfg.api_key_env).unwrap_or_default();
    let mut last = String::new();
    let attempts_allowed = cfg.max_retries.max(1);
    for attempt in 0..attempts_allowed {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(cfg.backoff_ms << (attempt - 1)));
        }
        let mut req = agent.post(&cfg.endpoint);
        if !key.is_empty() {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let result = req
            .send_json(&body)
            .map_err(|e| e.to_string())
            .and_then(|mut r| r.body_mut().read_json::<Value>().map_err(|e| e.to_string()));
        match result {
            Ok(v) => match v["choices"][0]["message"]["content"].as_str() {
                Some(s) => return (Ok(s.to_string()), attempt + 1),
                None => last = format!("unexpected response shape: {}", excerpt(&v.to_string())),
            },
            Err(e) => last = e,
        }
    }
    (Err(last), attempts_allowed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        vec![
            ("age".into(), ColumnKind::Numeric),
            ("income".into(), ColumnKind::Numeric),
            ("city".into(), ColumnKind::Categorical),
        ]
    }

    fn request() -> ProposalRequest {
        ProposalRequest {
            task: Task::Classification,
            metric: "ROC_AUC".into(),
            columns: schema(),
            target: "churn".into(),
            notes: "none".into(),
            history: vec![],
            budget: 7,
            k: 3,
            temperature: 1.0,
        }
    }

    #[test]
    fn empty_history_and_counts_rendered() {
        let (system, user) = render_prompt(&request());
        assert!(system.starts_with("You are an expert data scientist with deep"));
        assert!(user.contains("Recent performance feedback: none yet"));
        assert!(user.contains("Suggest up to 3 complementary NEW features"));
        assert!(user.contains("Remaining iteration budget: 7"));
        assert!(user.contains("age:numeric, income:numeric, city:categorical"));
        assert!(!user.contains("df["));
    }

    #[test]
    fn history_window_is_last_ten() {
        let mut r = request();
        r.history = (1..=12)
            .map(|i| HistoryLine {
                round: i,
                name: format!("f{i}"),
                expression: "col(\"age\")".into(),
                g: 0.01 * i as f64,
                accepted: i % 2 == 0,
            })
            .collect();
        let (_, user) = render_prompt(&r);
        assert!(!user.contains("round 2:"));
        assert!(user.contains("round 3: f3"));
        assert!(user.contains("round 12: f12 = col(\"age\") | g = +0.1200 | accepted"));
    }

    #[test]
    fn parses_fenced_array_and_rejects_invalid() {
        let text = r#"Here you go:
```json
[
  {"name": "age_x_income", "explanation": "e", "code": "feature = col(\"age\") * col(\"income\")"},
  {"name": "ghost", "explanation": "e", "code": "col(\"nonexistent\")"},
  {"name": "BadName", "explanation": "e", "code": "col(\"age\")"},
  {"name": "no_code", "explanation": "e"},
  {"name": "dup", "explanation": "e", "code": "col(\"age\")*col(\"income\")"},
  {"name": "is_paris", "explanation": "e", "code": "col(\"city\") = \"Paris\"", "reasoning": "r"}
]
```"#;
        let parsed = parse_response(text, &schema()).unwrap();
        let names: Vec<_> = parsed.operations.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(names, ["age_x_income", "is_paris"]);
        assert_eq!(parsed.operations[1].reasoning, "r");
        assert_eq!(parsed.rejections.len(), 4);
        assert!(parsed.rejections[0].reason.contains("unknown column"));
        assert!(parsed.rejections[2]
            .reason
            .contains("missing field \"code\""));
        assert!(parsed.rejections[3].reason.contains("duplicate"));
    }

    #[test]
    fn no_array_is_error() {
        assert!(matches!(
            parse_response("sorry, I cannot [help]", &schema()),
            Err(ProposerError::NoJsonArray { .. })
        ));
    }

    #[test]
    fn mock_exhaustion_is_error() {
        let mut p = Proposer::scripted(vec!["[]".into()]);
        assert!(p.propose(&request(), 0).unwrap().operations.is_empty());
        assert!(matches!(
            p.propose(&request(), 0),
            Err(ProposerError::ScriptExhausted(1))
        ));
    }

    #[test]
    fn unreachable_remote_returns_empty() {
        let backend = ProposerBackend::RemoteChat(RemoteChatConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            max_retries: 2,
            backoff_ms: 1,
            timeout_secs: 2,
            ..RemoteChatConfig::default()
        });
        let mut p = Proposer::new(&backend).unwrap();
        let out = p.propose(&request(), 0).unwrap();
        assert!(out.operations.is_empty());
        assert_eq!(out.transcript.attempts, 2);
        assert!(out.transcript.error.is_some());
    }

    #[test]
    fn backend_spec_parsing() {
        assert_eq!(
            ProposerBackend::from_spec("mock:fixtures/basic.json").unwrap(),
            ProposerBackend::ScriptedMock {
                script: "fixtures/basic.json".into()
            }
        );
        assert!(matches!(
            ProposerBackend::from_spec("remote:gpt-4o").unwrap(),
            ProposerBackend::RemoteChat(c) if c.model == "gpt-4o"
        ));
        assert!(ProposerBackend::from_spec("bogus").is_err());
    }
}
