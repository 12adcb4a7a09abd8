//! Discrete-time simulation of interviews, synchronous updates and evaluation snapshots.

mod persist;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    init_population, resolve_ids, Agent, AgentId, ExternalModelConfig, PopulationSpec, Prompt, PromptEmbedder,
    QaPair, Response,
};
use crate::embedding::{Embedder, EmbedderConfig, EmbedderKind};
use crate::error::{Error, Result};
use crate::kernel::SurrogateKernel;
use crate::network::{edges_at, sample_interviewee, DatabaseNode, EdgeSet, TopologyConfig, TopologySchedule};
use crate::rng::{substream, Purpose};

pub use persist::{
    encode_kernels, load_history, read_kernel_file, save_history, write_kernel_file, DirSink, KERNEL_MAGIC,
};

/// Version written to `config.json`; bumped on any layout change.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackendConfig {
    Synthetic,
    External(ExternalModelConfig),
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub n_agents: usize,
    pub population: PopulationSpec,
    pub topology: TopologyConfig,
    pub question_bank: Vec<Prompt>,
    pub eval_set: Vec<usize>,
    pub questions_per_interaction: usize,
    pub steps: usize,
    pub master_seed: u64,
    pub backend: BackendConfig,
    pub prompt_embedder: PromptEmbedder,
    pub embedder: EmbedderConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::invalid_argument(format!(
                "config format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.n_agents != self.population.n_agents() {
            return Err(Error::invalid_argument(format!(
                "n_agents is {} but the population declares {}",
                self.n_agents,
                self.population.n_agents()
            )));
        }
        let mut ids = BTreeSet::new();
        for p in &self.question_bank {
            if !ids.insert(p.id) {
                return Err(Error::invalid_argument(format!("duplicate prompt id {}", p.id)));
            }
        }
        if self.questions_per_interaction < 1 || self.questions_per_interaction > self.question_bank.len() {
            return Err(Error::invalid_argument(format!(
                "questions_per_interaction must be in [1, {}], got {}",
                self.question_bank.len(),
                self.questions_per_interaction
            )));
        }
        if self.eval_set.is_empty() {
            return Err(Error::invalid_argument("eval_set is empty"));
        }
        if let Some(missing) = self.eval_set.iter().find(|id| !ids.contains(id)) {
            return Err(Error::invalid_argument(format!(
                "eval_set id {missing} is not in the question bank"
            )));
        }
        if let BackendConfig::Synthetic = self.backend {
            if self.embedder.kind != EmbedderKind::Passthrough {
                return Err(Error::invalid_argument("synthetic agents need the passthrough embedder"));
            }
            if self.embedder.p != self.prompt_embedder.p {
                return Err(Error::invalid_argument(format!(
                    "embedder dimension {} does not match prompt embedder dimension {}",
                    self.embedder.p, self.prompt_embedder.p
                )));
            }
        }
        Ok(())
    }

    fn prompt(&self, id: usize) -> &Prompt {
        self.question_bank
            .iter()
            .find(|p| p.id == id)
            .expect("validated eval id")
    }

    pub fn eval_prompts(&self) -> Vec<Prompt> {
        self.eval_set.iter().map(|&id| self.prompt(id).clone()).collect()
    }
}

/// Per-agent kernels over the evaluation set at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub kernels: Vec<SurrogateKernel>,
}

/// One interview at step `t`. `interviewee` is `None` when the interviewer has no in-edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub t: usize,
    pub interviewer: AgentId,
    pub interviewee: Option<AgentId>,
    pub prompt_ids: Vec<usize>,
    pub responses: Vec<Response>,
}

/// Replayable record of a run: snapshots for `t = 0..=T`, interactions and
/// adjacency for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub config: ExperimentConfig,
    pub agents: Vec<AgentId>,
    pub snapshots: Vec<Snapshot>,
    pub interactions: Vec<InteractionRecord>,
    pub adjacency: Vec<EdgeSet>,
}

impl RunHistory {
    /// Last step whose snapshot is recorded.
    pub fn last_step(&self) -> Option<usize> {
        self.snapshots.last().map(|s| s.t)
    }

    pub fn is_complete(&self) -> bool {
        self.snapshots.len() == self.config.steps + 1
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn interactions_at(&self, t: usize) -> impl Iterator<Item = &InteractionRecord> {
        self.interactions.iter().filter(move |r| r.t == t)
    }
}

/// Receives a run as it is produced.
pub trait HistorySink {
    fn on_start(&mut self, _config: &ExperimentConfig, _agents: &[AgentId]) -> Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, _snapshot: &Snapshot) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, _t: usize, _edges: &EdgeSet, _records: &[InteractionRecord]) -> Result<()> {
        Ok(())
    }
}

/// Sink that keeps nothing beyond the in-memory history.
pub struct NullSink;

impl HistorySink for NullSink {}

/// Responds on the evaluation set with each agent's snapshot substream
/// `(master_seed, t, agent)` and embeds the answers.
pub fn snapshot_agents(
    agents: &[Box<dyn Agent>],
    eval_set: &[Prompt],
    embedder: &Embedder,
    master_seed: u64,
    t: usize,
) -> Result<Snapshot> {
    if eval_set.is_empty() {
        return Err(Error::invalid_argument("eval_set is empty"));
    }
    let kernels = agents
        .par_iter()
        .map(|agent| {
            let id = agent.id();
            let mut rng = substream(master_seed, Purpose::Snapshot, t as u64, id.index as u64);
            let responses = agent.respond(eval_set, &mut rng)?;
            let matrix = embedder.embed(&responses).map_err(|e| match e {
                Error::InvalidArgument(msg) => Error::InvalidState(msg),
                other => other,
            })?;
            if matrix.shape() != (eval_set.len(), embedder.dim()) {
                return Err(Error::invalid_state(format!(
                    "agent {} produced a {:?} kernel, expected {:?}",
                    id.index,
                    matrix.shape(),
                    (eval_set.len(), embedder.dim())
                )));
            }
            SurrogateKernel::new(id.clone(), t, matrix).map_err(|e| Error::invalid_state(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshot { t, kernels })
}

/// A configured run, ready to execute.
pub struct Simulation {
    config: ExperimentConfig,
    agents: Vec<Box<dyn Agent>>,
    embedder: Embedder,
    schedule: TopologySchedule,
    eval_prompts: Vec<Prompt>,
}

impl Simulation {
    /// Builds the synthetic population described by `config`.
    pub fn synthetic(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        if !matches!(config.backend, BackendConfig::Synthetic) {
            return Err(Error::invalid_argument(
                "config selects an external backend; build agents with Simulation::with_agents",
            ));
        }
        let prompts = Arc::new(config.prompt_embedder.clone());
        let agents = init_population(&config.population, prompts, config.master_seed)?
            .into_iter()
            .map(|a| Box::new(a) as Box<dyn Agent>)
            .collect();
        let embedder = Embedder::from_config(&config.embedder)?;
        Simulation::with_agents(config, agents, embedder)
    }

    /// Uses caller-built agents, e.g. external-model adapters. Agent `k` must carry index `k`
    /// and match the ids resolved from the population spec.
    pub fn with_agents(config: &ExperimentConfig, agents: Vec<Box<dyn Agent>>, embedder: Embedder) -> Result<Self> {
        config.validate()?;
        let expected = resolve_ids(&config.population, config.master_seed)?;
        let actual: Vec<AgentId> = agents.iter().map(|a| a.id().clone()).collect();
        if expected != actual {
            return Err(Error::invalid_argument(
                "agent ids do not match the population resolved from the config",
            ));
        }
        if embedder.dim() != config.embedder.p {
            return Err(Error::invalid_argument("embedder dimension differs from the config"));
        }
        let schedule = TopologySchedule::resolve(&config.topology, &actual)?;
        Ok(Simulation {
            eval_prompts: config.eval_prompts(),
            config: config.clone(),
            agents,
            embedder,
            schedule,
        })
    }

    pub fn agents(&self) -> &[Box<dyn Agent>] {
        &self.agents
    }

    /// Runs all steps from scratch.
    pub fn run(mut self, sink: &mut dyn HistorySink) -> Result<RunHistory> {
        let ids: Vec<AgentId> = self.agents.iter().map(|a| a.id().clone()).collect();
        sink.on_start(&self.config, &ids)?;
        let initial = self.snapshot(0)?;
        sink.on_snapshot(&initial)?;
        let mut history = RunHistory {
            config: self.config.clone(),
            agents: ids,
            snapshots: vec![initial],
            interactions: Vec::new(),
            adjacency: Vec::new(),
        };
        self.advance(&mut history, sink)?;
        Ok(history)
    }

    /// Continues a partial history whose agents already reflect its last step.
    /// Used to restart external-backend runs after a failure.
    pub fn resume(mut self, mut history: RunHistory, sink: &mut dyn HistorySink) -> Result<RunHistory> {
        if history.config != self.config {
            return Err(Error::invalid_argument("history was produced by a different config"));
        }
        if history.snapshots.is_empty() {
            return self.run(sink);
        }
        self.advance(&mut history, sink)?;
        Ok(history)
    }

    fn advance(&mut self, history: &mut RunHistory, sink: &mut dyn HistorySink) -> Result<()> {
        let start = history.last_step().map_or(1, |t| t + 1);
        for t in start..=self.config.steps {
            let prior = &history.snapshots.last().expect("initial snapshot").kernels;
            let needs = self.schedule.needs_kernels(t);
            let edges = edges_at(&self.schedule, t, needs.then_some(prior.as_slice()))?;
            let records = self.step(t, &edges)?;
            let snapshot = self.snapshot(t)?;
            sink.on_step(t, &edges, &records)?;
            sink.on_snapshot(&snapshot)?;
            history.adjacency.push(edges);
            history.interactions.extend(records);
            history.snapshots.push(snapshot);
        }
        Ok(())
    }

    fn snapshot(&self, t: usize) -> Result<Snapshot> {
        snapshot_agents(&self.agents, &self.eval_prompts, &self.embedder, self.config.master_seed, t)
    }

    /// Interviews read pre-step states; every update is applied afterwards.
    fn step(&mut self, t: usize, edges: &EdgeSet) -> Result<Vec<InteractionRecord>> {
        let bank = &self.config.question_bank;
        let per_interview = self.config.questions_per_interaction;
        let seed = self.config.master_seed;
        let agents = &self.agents;
        let interviews = (0..agents.len())
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, Purpose::Interaction, t as u64, i as u64);
                let interviewer = agents[i].id().clone();
                let Some(j) = sample_interviewee(edges, i, &mut rng) else {
                    let record = InteractionRecord {
                        t,
                        interviewer,
                        interviewee: None,
                        prompt_ids: Vec::new(),
                        responses: Vec::new(),
                    };
                    return Ok((record, Vec::new()));
                };
                let mut picks = rand::seq::index::sample(&mut rng, bank.len(), per_interview).into_vec();
                picks.sort_unstable();
                let prompts: Vec<Prompt> = picks.iter().map(|&k| bank[k].clone()).collect();
                let responses = agents[j].respond(&prompts, &mut rng)?;
                let source = agents[j].id().clone();
                let mut db = DatabaseNode::new(interviewer.clone());
                db.append(
                    prompts
                        .iter()
                        .zip(&responses)
                        .map(|(p, r)| QaPair::new(p.clone(), r.clone(), source.clone()))
                        .collect::<Result<Vec<_>>>()?,
                );
                let record = InteractionRecord {
                    t,
                    interviewer,
                    interviewee: Some(source),
                    prompt_ids: prompts.iter().map(|p| p.id).collect(),
                    responses,
                };
                Ok((record, db.contents().to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;

        let (records, pairs): (Vec<_>, Vec<_>) = interviews.into_iter().unzip();
        let embedder = &self.embedder;
        self.agents
            .par_iter_mut()
            .zip(pairs.par_iter())
            .filter(|(_, qa)| !qa.is_empty())
            .try_for_each(|(agent, qa)| agent.update(qa, embedder))?;
        Ok(records)
    }
}

/// Runs a synthetic experiment in memory.
pub fn run(config: &ExperimentConfig) -> Result<RunHistory> {
    Simulation::synthetic(config)?.run(&mut NullSink)
}

/// Runs a synthetic experiment, persisting every step to `dir` as it completes.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<RunHistory> {
    let mut sink = DirSink::create(dir)?;
    Simulation::synthetic(config)?.run(&mut sink)
}
