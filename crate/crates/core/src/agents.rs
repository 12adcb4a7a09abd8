//! Interviewable agents: the synthetic vector backend and the external-model adapter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::matrix::pairwise_sum;
use crate::retry::with_retries;
use crate::rng::{substream, Purpose, SimRng};

/// One entry of a question bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: usize,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponsePayload {
    Text(String),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub prompt_id: usize,
    pub payload: ResponsePayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Normal,
    Adversarial,
    Target,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Normal => "normal",
            Role::Adversarial => "adversarial",
            Role::Target => "target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub index: usize,
    pub class_tag: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub prompt: Prompt,
    pub response: Response,
    pub source_agent: AgentId,
}

impl QaPair {
    pub fn new(prompt: Prompt, response: Response, source_agent: AgentId) -> Result<Self> {
        if response.prompt_id != prompt.id {
            return Err(Error::invalid_argument(format!(
                "response for prompt {} paired with prompt {}",
                response.prompt_id, prompt.id
            )));
        }
        Ok(QaPair {
            prompt,
            response,
            source_agent,
        })
    }
}

/// Participant in a run.
///
/// `respond` must not change the agent; all state changes go through `update`.
pub trait Agent: Send + Sync {
    fn id(&self) -> &AgentId;

    fn respond(&self, prompts: &[Prompt], rng: &mut SimRng) -> Result<Vec<Response>>;

    fn update(&mut self, qa_pairs: &[QaPair], embedder: &Embedder) -> Result<()>;

    /// Latent state for synthetic agents, `None` for external ones.
    fn theta(&self) -> Option<&[f64]> {
        None
    }
}

// ---------------------------------------------------------------------------
// synthetic backend

/// Mixing, step and noise parameters of a synthetic agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub alpha: f64,
    pub eta: f64,
    pub sigma: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            alpha: 0.3,
            eta: 0.2,
            sigma: 0.05,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.alpha) || !unit.contains(&self.eta) {
            return Err(Error::invalid_argument(format!(
                "alpha and eta must lie in [0, 1], got alpha={} eta={}",
                self.alpha, self.eta
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Deterministic map from prompts to vectors used by synthetic agents.
///
/// Prompt `id` maps to `scale * z + offset[class_tag]`, where `z` is a
/// standard normal vector drawn from the prompt-embedding substream
/// `(seed, id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEmbedder {
    pub p: usize,
    pub scale: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_offsets: BTreeMap<String, Vec<f64>>,
}

impl PromptEmbedder {
    pub fn new(p: usize, scale: f64, seed: u64) -> Self {
        PromptEmbedder {
            p,
            scale,
            seed,
            class_offsets: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || !self.scale.is_finite() {
            return Err(Error::invalid_argument("prompt embedder needs p >= 1 and a finite scale"));
        }
        if let Some((tag, _)) = self.class_offsets.iter().find(|(_, v)| v.len() != self.p) {
            return Err(Error::invalid_argument(format!(
                "class offset for {tag:?} does not have dimension {}",
                self.p
            )));
        }
        Ok(())
    }

    pub fn embed(&self, prompt: &Prompt) -> Vec<f64> {
        let mut rng = substream(self.seed, Purpose::PromptEmbedding, 0, prompt.id as u64);
        let mut v: Vec<f64> = (0..self.p)
            .map(|_| self.scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if let Some(offset) = prompt.class_tag.as_ref().and_then(|t| self.class_offsets.get(t)) {
            v.iter_mut().zip(offset).for_each(|(x, o)| *x += o);
        }
        v
    }
}

/// Latent state of a synthetic agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAgentState {
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub eta: f64,
    pub sigma: f64,
}

impl SyntheticAgentState {
    pub fn new(theta: Vec<f64>, params: SyntheticParams) -> Result<Self> {
        params.validate()?;
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid_argument("theta entries must be finite"));
        }
        Ok(SyntheticAgentState {
            theta,
            alpha: params.alpha,
            eta: params.eta,
            sigma: params.sigma,
        })
    }
}

/// Agent whose responses mix a prompt vector with its own perspective:
/// `alpha * e(x) + (1 - alpha) * theta + sigma * noise`.
#[derive(Debug, Clone)]
pub struct SyntheticAgent {
    id: AgentId,
    state: SyntheticAgentState,
    prompts: Arc<PromptEmbedder>,
}

impl SyntheticAgent {
    pub fn new(id: AgentId, state: SyntheticAgentState, prompts: Arc<PromptEmbedder>) -> Result<Self> {
        if state.theta.len() != prompts.p {
            return Err(Error::invalid_argument(format!(
                "theta has dimension {} but the prompt embedder produces {}",
                state.theta.len(),
                prompts.p
            )));
        }
        Ok(SyntheticAgent { id, state, prompts })
    }

    pub fn state(&self) -> &SyntheticAgentState {
        &self.state
    }
}

impl Agent for SyntheticAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn respond(&self, prompts: &[Prompt], rng: &mut SimRng) -> Result<Vec<Response>> {
        if prompts.is_empty() {
            return Err(Error::invalid_argument("respond needs at least one prompt"));
        }
        let SyntheticAgentState {
            theta,
            alpha,
            sigma,
            ..
        } = &self.state;
        let keep = 1.0 - alpha;
        Ok(prompts
            .iter()
            .map(|prompt| {
                let e = self.prompts.embed(prompt);
                let v = e
                    .iter()
                    .zip(theta)
                    .map(|(ex, th)| {
                        // the draw happens even for sigma == 0 so stream positions do not depend on sigma
                        let z: f64 = rng.sample(StandardNormal);
                        alpha * ex + keep * th + sigma * z
                    })
                    .collect();
                Response {
                    prompt_id: prompt.id,
                    payload: crate::agents::ResponsePayload::Vector(v),
                }
            })
            .collect())
    }

    fn update(&mut self, qa_pairs: &[QaPair], embedder: &Embedder) -> Result<()> {
        if qa_pairs.is_empty() {
            return Err(Error::invalid_argument("update needs at least one question-answer pair"));
        }
        let responses: Vec<Response> = qa_pairs.iter().map(|qa| qa.response.clone()).collect();
        let embedded = embedder.embed(&responses)?;
        if embedded.cols() != self.state.theta.len() {
            return Err(Error::invalid_argument(format!(
                "embedded responses have dimension {}, theta has {}",
                embedded.cols(),
                self.state.theta.len()
            )));
        }
        let eta = self.state.eta;
        let rows = embedded.rows();
        let mut column = Vec::with_capacity(rows);
        for (c, th) in self.state.theta.iter_mut().enumerate() {
            // sorted summation makes the mean exactly independent of pair order
            column.clear();
            column.extend((0..rows).map(|r| embedded.get(r, c)));
            column.sort_unstable_by(f64::total_cmp);
            let m = pairwise_sum(&column) / rows as f64;
            *th = (1.0 - eta) * *th + eta * m;
        }
        Ok(())
    }

    fn theta(&self) -> Option<&[f64]> {
        Some(&self.state.theta)
    }
}

// ---------------------------------------------------------------------------
// population

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub tag: String,
    pub count: usize,
    /// `normal` or `adversarial`; targets are selected separately.
    #[serde(default)]
    pub role: Role,
    pub center: Vec<f64>,
    /// Overrides the population-wide agent parameters for this class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SyntheticParams>,
}

/// Number of normal agents of one class promoted to targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub class_tag: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub classes: Vec<ClassSpec>,
    pub init_scale: f64,
    #[serde(default)]
    pub agent: SyntheticParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<TargetSpec>,
}

impl PopulationSpec {
    pub fn n_agents(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for class in &self.classes {
            if !seen.insert(class.tag.as_str()) {
                return Err(Error::invalid_argument(format!("duplicate class tag {:?}", class.tag)));
            }
            if class.role == Role::Target {
                return Err(Error::invalid_argument(
                    "targets are chosen through the targets field, not a class role",
                ));
            }
            if let Some(p) = &class.params {
                p.validate()?;
            }
        }
        if self.n_agents() == 0 {
            return Err(Error::invalid_argument("population has no agents"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid_argument("init_scale must be finite and nonnegative"));
        }
        self.agent.validate()?;
        if let Some(t) = &self.targets {
            let class = self
                .classes
                .iter()
                .find(|c| c.tag == t.class_tag)
                .ok_or_else(|| Error::invalid_argument(format!("unknown class tag {:?}", t.class_tag)))?;
            if class.role != Role::Normal {
                return Err(Error::invalid_argument("targets must come from a normal class"));
            }
            if t.count > class.count {
                return Err(Error::invalid_argument(format!(
                    "cannot pick {} targets from a class of {}",
                    t.count, class.count
                )));
            }
        }
        Ok(())
    }
}

/// Resolves agent ids (indices, classes, roles) in class declaration order.
/// Targets are a uniformly random subset drawn from the roles substream.
pub fn resolve_ids(spec: &PopulationSpec, master_seed: u64) -> Result<Vec<AgentId>> {
    spec.validate()?;
    let mut ids = Vec::with_capacity(spec.n_agents());
    for class in &spec.classes {
        for _ in 0..class.count {
            ids.push(AgentId {
                index: ids.len(),
                class_tag: class.tag.clone(),
                role: class.role,
            });
        }
    }
    if let Some(t) = &spec.targets {
        let pool: Vec<usize> = ids
            .iter()
            .filter(|id| id.class_tag == t.class_tag && id.role == Role::Normal)
            .map(|id| id.index)
            .collect();
        let mut rng = substream(master_seed, Purpose::Roles, 0, 0);
        for k in rand::seq::index::sample(&mut rng, pool.len(), t.count) {
            ids[pool[k]].role = Role::Target;
        }
    }
    Ok(ids)
}

/// Builds the synthetic population. Agent `i` of class `c` starts at
/// `center_c + init_scale * z_i` with `z_i` drawn from init substream `i`.
pub fn init_population(
    spec: &PopulationSpec,
    prompts: Arc<PromptEmbedder>,
    master_seed: u64,
) -> Result<Vec<SyntheticAgent>> {
    prompts.validate()?;
    let ids = resolve_ids(spec, master_seed)?;
    let classes: BTreeMap<&str, &ClassSpec> =
        spec.classes.iter().map(|c| (c.tag.as_str(), c)).collect();
    ids.into_iter()
        .map(|id| {
            let class = classes[id.class_tag.as_str()];
            if class.center.len() != prompts.p {
                return Err(Error::invalid_argument(format!(
                    "center of class {:?} has dimension {}, expected {}",
                    class.tag,
                    class.center.len(),
                    prompts.p
                )));
            }
            let mut rng = substream(master_seed, Purpose::Init, 0, id.index as u64);
            let theta = class
                .center
                .iter()
                .map(|c| c + spec.init_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let state = SyntheticAgentState::new(theta, class.params.unwrap_or(spec.agent))?;
            SyntheticAgent::new(id, state, prompts.clone())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// external backend

/// Settings for agents backed by a hosted model with chat and fine-tune endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalModelConfig {
    pub chat_endpoint: String,
    pub finetune_endpoint: String,
    pub auth_token_env_var: String,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_delay_ms")]
    pub retry_delay_ms: u64,
    #[serde(default = "default_poll_interval_ms")]
    pub poll_interval_ms: u64,
    #[serde(default = "default_finetune_timeout_ms")]
    pub finetune_timeout_ms: u64,
    /// Model id per agent index.
    #[serde(default)]
    pub model_ids: Vec<String>,
}

fn default_learning_rate() -> f64 {
    1e-5
}
fn default_epochs() -> u32 {
    1
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_retry_delay_ms() -> u64 {
    500
}
fn default_poll_interval_ms() -> u64 {
    2_000
}
fn default_finetune_timeout_ms() -> u64 {
    3_600_000
}

impl ExternalModelConfig {
    pub fn new(chat_endpoint: &str, finetune_endpoint: &str, auth_token_env_var: &str) -> Self {
        ExternalModelConfig {
            chat_endpoint: chat_endpoint.to_owned(),
            finetune_endpoint: finetune_endpoint.to_owned(),
            auth_token_env_var: auth_token_env_var.to_owned(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            request_timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            retry_delay_ms: default_retry_delay_ms(),
            poll_interval_ms: default_poll_interval_ms(),
            finetune_timeout_ms: default_finetune_timeout_ms(),
            model_ids: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_argument("learning_rate must be positive"));
        }
        if self.epochs < 1 {
            return Err(Error::invalid_argument("epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    /// Reads the bearer token from the configured environment variable.
    pub fn auth_token(&self) -> Result<String> {
        std::env::var(&self.auth_token_env_var).map_err(|_| {
            Error::invalid_argument(format!(
                "environment variable {} is not set",
                self.auth_token_env_var
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub prompt_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub completion_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneRequest {
    pub model_id: String,
    pub training_records: Vec<String>,
    pub learning_rate: f64,
    pub epochs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneJob {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "message")]
pub enum FineTuneStatus {
    Pending,
    Running,
    Succeeded,
    Failed(String),
}

/// HTTP-like client supplied by the host application. Errors are opaque strings.
pub trait ModelTransport: Send + Sync {
    fn chat(&self, endpoint: &str, request: &ChatRequest) -> std::result::Result<ChatResponse, String>;

    fn submit_finetune(
        &self,
        endpoint: &str,
        request: &FineTuneRequest,
    ) -> std::result::Result<FineTuneJob, String>;

    fn finetune_status(&self, endpoint: &str, job_id: &str) -> std::result::Result<FineTuneStatus, String>;
}

/// Prompt sent to an instruction-tuned model.
pub fn format_instruction(question: &str) -> String {
    format!("### Instruction: {question}\n### Response:")
}

/// Fine-tuning record for one question-answer pair.
pub fn format_training_record(question: &str, answer: &str) -> String {
    format!("### Instruction: {question}\n### Response: {answer}\n### End")
}

/// Agent backed by a hosted model.
pub struct ExternalAgent {
    id: AgentId,
    model_id: String,
    config: ExternalModelConfig,
    transport: Arc<dyn ModelTransport>,
}

impl fmt::Debug for ExternalAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalAgent")
            .field("id", &self.id)
            .field("model_id", &self.model_id)
            .finish_non_exhaustive()
    }
}

impl ExternalAgent {
    pub fn new(
        id: AgentId,
        model_id: impl Into<String>,
        config: ExternalModelConfig,
        transport: Arc<dyn ModelTransport>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(ExternalAgent {
            id,
            model_id: model_id.into(),
            config,
            transport,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    fn retry_delay(&self) -> Duration {
        Duration::from_millis(self.config.retry_delay_ms)
    }

    fn wait_for_job(&self, job: &FineTuneJob) -> Result<()> {
        let started = Instant::now();
        let limit = Duration::from_millis(self.config.finetune_timeout_ms);
        loop {
            let status = with_retries(self.config.max_retries, self.retry_delay(), || {
                self.transport
                    .finetune_status(&self.config.finetune_endpoint, &job.job_id)
            })
            .map_err(|e| Error::BackendUnavailable(format!("fine-tune status for {}: {e}", job.job_id)))?;
            match status {
                FineTuneStatus::Succeeded => return Ok(()),
                FineTuneStatus::Failed(msg) => {
                    return Err(Error::BackendUnavailable(format!(
                        "fine-tune job {} failed: {msg}",
                        job.job_id
                    )))
                }
                FineTuneStatus::Pending | FineTuneStatus::Running => {
                    if started.elapsed() >= limit {
                        return Err(Error::BackendUnavailable(format!(
                            "fine-tune job {} did not finish within {} ms",
                            job.job_id, self.config.finetune_timeout_ms
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(self.config.poll_interval_ms));
                }
            }
        }
    }
}

impl Agent for ExternalAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn respond(&self, prompts: &[Prompt], _rng: &mut SimRng) -> Result<Vec<Response>> {
        if prompts.is_empty() {
            return Err(Error::invalid_argument("respond needs at least one prompt"));
        }
        prompts
            .iter()
            .map(|prompt| {
                let request = ChatRequest {
                    model_id: self.model_id.clone(),
                    prompt_text: format_instruction(&prompt.text),
                };
                let reply = with_retries(self.config.max_retries, self.retry_delay(), || {
                    self.transport.chat(&self.config.chat_endpoint, &request)
                })
                .map_err(|e| Error::BackendUnavailable(format!("chat with {}: {e}", self.model_id)))?;
                Ok(Response {
                    prompt_id: prompt.id,
                    payload: ResponsePayload::Text(reply.completion_text),
                })
            })
            .collect()
    }

    fn update(&mut self, qa_pairs: &[QaPair], _embedder: &Embedder) -> Result<()> {
        if qa_pairs.is_empty() {
            return Err(Error::invalid_argument("update needs at least one question-answer pair"));
        }
        let training_records = qa_pairs
            .iter()
            .map(|qa| match &qa.response.payload {
                ResponsePayload::Text(answer) => Ok(format_training_record(&qa.prompt.text, answer)),
                ResponsePayload::Vector(_) => Err(Error::invalid_argument(
                    "external models can only be fine-tuned on text answers",
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        let request = FineTuneRequest {
            model_id: self.model_id.clone(),
            training_records,
            learning_rate: self.config.learning_rate,
            epochs: self.config.epochs,
        };
        let job = with_retries(self.config.max_retries, self.retry_delay(), || {
            self.transport
                .submit_finetune(&self.config.finetune_endpoint, &request)
        })
        .map_err(|e| Error::BackendUnavailable(format!("fine-tune submit for {}: {e}", self.model_id)))?;
        self.wait_for_job(&job)
    }
}
