//! Workloads shared by the benchmarks in `benches/`.

use persim_core::agents::{ClassSpec, PopulationSpec, Prompt, PromptEmbedder, Role, SyntheticParams};
use persim_core::embedding::EmbedderConfig;
use persim_core::engine::{BackendConfig, ExperimentConfig, FORMAT_VERSION};
use persim_core::matrix::RowMatrix;
use persim_core::network::TopologyConfig;

/// A fully connected synthetic run at roughly the disruption study's scale.
pub fn workload(n_agents: usize, m: usize, steps: usize) -> ExperimentConfig {
    let p = 32;
    let population = PopulationSpec {
        classes: vec![ClassSpec {
            tag: "a".into(),
            count: n_agents,
            role: Role::Normal,
            center: vec![0.0; p],
            params: None,
        }],
        init_scale: 0.1,
        agent: SyntheticParams::default(),
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
        n_agents,
        population,
        topology: TopologyConfig::FullyConnected,
        eval_set: (0..m).collect(),
        questions_per_interaction: m.min(50),
        question_bank,
        steps,
        master_seed: 0,
        backend: BackendConfig::Synthetic,
        prompt_embedder: PromptEmbedder::new(p, 0.1, 1),
        embedder: EmbedderConfig::passthrough(p),
    }
}

/// `blobs` evenly filled 1-d clusters, ten units apart.
pub fn blobs_1d(blobs: usize, per_blob: usize) -> RowMatrix {
    let n = blobs * per_blob;
    // low-discrepancy jitter in [-1, 1)
    let x = (0..n)
        .map(|i| (i / per_blob) as f64 * 10.0 + 2.0 * ((i as f64 * 0.618_033_988_75).fract()) - 1.0)
        .collect();
    RowMatrix::from_vec(n, 1, x)
}
