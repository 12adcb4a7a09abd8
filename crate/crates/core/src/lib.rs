//! Simulation of interacting language agents and analysis of their
//! trajectories in a shared perspective space.
//!
//! A run evolves `n` agents over `T` steps. At each step every agent
//! interviews one in-neighbour of the current communication graph and updates
//! on the answers; after each step every agent answers a fixed evaluation
//! set, giving one surrogate kernel per agent per step. The analysis layer
//! embeds all kernels with classical MDS and derives cluster, polarization
//! and iso-mirror series from the embedding.

pub mod agents;
pub mod analysis;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod matrix;
pub mod network;
pub mod retry;
pub mod rng;

pub use agents::{
    Agent, AgentId, ClassSpec, ExternalAgent, ExternalModelConfig, ModelTransport, PopulationSpec, Prompt,
    PromptEmbedder, QaPair, Response, ResponsePayload, Role, SyntheticAgent, SyntheticParams, TargetSpec,
};
pub use analysis::{
    ari, cluster_series, gmm_bic, iso_mirror, perspective_trajectories, polarization, system_distances,
    AnalysisConfig, ClusterReport, IsoMirrorCurve, PerspectiveTrajectory, PolarizationSeries,
};
pub use embedding::{Embedder, EmbedderConfig, EmbedderKind, EmbeddingTransport, Normalization};
pub use engine::{
    load_history, run, run_to_dir, save_history, BackendConfig, ExperimentConfig, InteractionRecord, RunHistory,
    Simulation, Snapshot,
};
pub use error::{Error, Result};
pub use geometry::{cmds, isomap_1d, IsomapConfig, PerspectiveEmbedding};
pub use kernel::{history_distances, pairwise_distances, DistanceMatrix, PointLabel, SurrogateKernel};
pub use matrix::RowMatrix;
pub use network::{EdgeSet, TopologyConfig, TopologySchedule};
