#![allow(dead_code)]

use persim_core::agents::{AgentId, ClassSpec, PopulationSpec, Prompt, PromptEmbedder, Role, SyntheticParams};
use persim_core::embedding::EmbedderConfig;
use persim_core::engine::{BackendConfig, ExperimentConfig, RunHistory, Snapshot, FORMAT_VERSION};
use persim_core::kernel::SurrogateKernel;
use persim_core::matrix::RowMatrix;
use persim_core::network::{EdgeSet, TopologyConfig};

pub fn class(tag: &str, count: usize, center: Vec<f64>) -> ClassSpec {
    ClassSpec {
        tag: tag.into(),
        count,
        role: Role::Normal,
        center,
        params: None,
    }
}

pub fn params(alpha: f64, eta: f64, sigma: f64) -> SyntheticParams {
    SyntheticParams { alpha, eta, sigma }
}

/// Small synthetic run: `m` eval prompts (the whole bank), dimension from the first class centre.
pub fn config(
    classes: Vec<ClassSpec>,
    init_scale: f64,
    agent: SyntheticParams,
    topology: TopologyConfig,
    m: usize,
    steps: usize,
) -> ExperimentConfig {
    let p = classes[0].center.len();
    let population = PopulationSpec {
        classes,
        init_scale,
        agent,
        targets: None,
    };
    let question_bank: Vec<Prompt> = (0..m)
        .map(|id| Prompt {
            id,
            text: String::new(),
            class_tag: None,
        })
        .collect();
    ExperimentConfig {
        format_version: FORMAT_VERSION,
        n_agents: population.n_agents(),
        population,
        topology,
        eval_set: (0..m).collect(),
        questions_per_interaction: m.min(3),
        question_bank,
        steps,
        master_seed: 7,
        backend: BackendConfig::Synthetic,
        prompt_embedder: PromptEmbedder::new(p, 0.5, 11),
        embedder: EmbedderConfig::passthrough(p),
    }
}

/// A noisy fully connected run with a few agents.
pub fn noisy(n: usize, steps: usize, seed: u64) -> ExperimentConfig {
    let mut c = config(
        vec![class("a", n, vec![0.0; 4])],
        0.3,
        params(0.3, 0.2, 0.05),
        TopologyConfig::FullyConnected,
        5,
        steps,
    );
    c.master_seed = seed;
    c
}

pub fn kernel(agent: usize, t: usize, rows: &[&[f64]]) -> SurrogateKernel {
    let id = AgentId {
        index: agent,
        class_tag: "a".into(),
        role: Default::default(),
    };
    SurrogateKernel::new(id, t, RowMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())).unwrap()
}

/// History built directly from kernels indexed `[t][agent]`.
pub fn hand_history(kernels: Vec<Vec<SurrogateKernel>>) -> RunHistory {
    let n = kernels[0].len();
    let (m, p) = kernels[0][0].shape();
    let mut config = config(
        vec![class("a", n, vec![0.0; p])],
        0.0,
        params(0.0, 0.0, 0.0),
        TopologyConfig::FullyConnected,
        m,
        kernels.len() - 1,
    );
    config.questions_per_interaction = 1;
    RunHistory {
        agents: kernels[0].iter().map(|k| k.agent.clone()).collect(),
        adjacency: (1..kernels.len()).map(|_| EdgeSet::complete(n)).collect(),
        snapshots: kernels.into_iter().enumerate().map(|(t, kernels)| Snapshot { t, kernels }).collect(),
        interactions: Vec::new(),
        config,
    }
}

