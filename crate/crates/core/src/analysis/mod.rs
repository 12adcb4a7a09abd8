//! Post-hoc analytics on a finished run.

mod ari;
mod gmm;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::AgentId;
use crate::engine::RunHistory;
use crate::error::{Error, Result};
use crate::geometry::{cmds, isomap_1d, IsomapConfig};
use crate::kernel::{history_distances, history_kernels, DistanceMatrix, PointLabel};
use crate::matrix::{pairwise_sum, RowMatrix};
use crate::rng::{substream, Purpose};

pub use ari::ari;
pub use gmm::{gmm_bic, parameter_count, GmmSelection, COVARIANCE_FLOOR};

/// Knobs shared by the analysis commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub d: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            d: 1,
            k_max: 8,
            restarts: 10,
            k_neighbors: 4,
            seed: 0,
        }
    }
}

/// Every agent's perspective coordinates at every step, from one CMDS of the
/// whole history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveTrajectory {
    pub agents: Vec<AgentId>,
    pub n_steps: usize,
    pub d: usize,
    /// Indexed `[agent][t][k]`, flattened.
    pub coords: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

impl PerspectiveTrajectory {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn point(&self, agent: usize, t: usize) -> &[f64] {
        let at = (agent * self.n_steps + t) * self.d;
        &self.coords[at..at + self.d]
    }

    /// All agents' coordinates at step `t` as an n×d matrix.
    pub fn at_step(&self, t: usize) -> RowMatrix {
        let mut data = Vec::with_capacity(self.n_agents() * self.d);
        for a in 0..self.n_agents() {
            data.extend_from_slice(self.point(a, t));
        }
        RowMatrix::from_vec(self.n_agents(), self.d, data)
    }

    /// CSV: `agent,class_tag,role,t,z1..zd`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,class_tag,role,t");
        for k in 1..=self.d {
            let _ = write!(out, ",z{k}");
        }
        out.push('\n');
        for (a, id) in self.agents.iter().enumerate() {
            let role = id.role.as_str();
            for t in 0..self.n_steps {
                let _ = write!(out, "{},{},{},{}", id.index, id.class_tag, role, t);
                for v in self.point(a, t) {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// CMDS of all (agent, t) kernels, reshaped per agent.
pub fn perspective_trajectories(history: &RunHistory, d: usize) -> Result<PerspectiveTrajectory> {
    let dist = history_distances(history)?;
    let n_steps = history.snapshots.len();
    let embedding = cmds(&dist, d.min(dist.len()))?;
    let used = embedding.d;
    // pad to the requested d when fewer points than dimensions exist
    let mut coords = Vec::with_capacity(dist.len() * d);
    for i in 0..dist.len() {
        coords.extend_from_slice(embedding.point(i));
        coords.extend(std::iter::repeat_n(0.0, d - used));
    }
    let agents = history.snapshots[0].kernels.iter().map(|k| k.agent.clone()).collect();
    Ok(PerspectiveTrajectory {
        agents,
        n_steps,
        d,
        coords,
        eigenvalues: embedding.eigenvalues,
    })
}

/// Per-step cluster counts and labels, plus ARI between consecutive steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k_hat: Vec<usize>,
    pub labels: Vec<Vec<usize>>,
    /// `ari[t - 1]` compares steps `t - 1` and `t`.
    pub ari: Vec<f64>,
}

impl ClusterReport {
    /// CSV: `t,k_hat,ari,label_0..label_{n-1}`; `ari` is empty at t=0.
    pub fn to_csv(&self) -> String {
        let n = self.labels.first().map_or(0, Vec::len);
        let mut out = String::from("t,k_hat,ari");
        for i in 0..n {
            let _ = write!(out, ",label_{i}");
        }
        out.push('\n');
        for (t, (k, labels)) in self.k_hat.iter().zip(&self.labels).enumerate() {
            let _ = write!(out, "{t},{k},");
            if t > 0 {
                let _ = write!(out, "{}", self.ari[t - 1]);
            }
            for l in labels {
                let _ = write!(out, ",{l}");
            }
            out.push('\n');
        }
        out
    }
}

/// GMM+BIC on each step's coordinates. Step `t` draws from its own analysis
/// substream so steps can be fitted concurrently.
pub fn cluster_series(
    trajectory: &PerspectiveTrajectory,
    k_max: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusterReport> {
    if trajectory.n_steps == 0 || trajectory.n_agents() == 0 {
        return Err(Error::invalid_argument("trajectory is empty"));
    }
    let fits = (0..trajectory.n_steps)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, Purpose::Analysis, t as u64, 0);
            gmm_bic(&trajectory.at_step(t), k_max, restarts, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let ari = fits
        .windows(2)
        .map(|w| ari(&w[0].labels, &w[1].labels))
        .collect::<Result<Vec<_>>>()?;
    let (k_hat, labels) = fits.into_iter().map(|g| (g.k, g.labels)).unzip();
    Ok(ClusterReport { k_hat, labels, ari })
}

/// Gap between two groups' mean perspectives relative to the gap at t=0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSeries {
    pub group_a: Vec<usize>,
    pub group_b: Vec<usize>,
    pub values: Vec<f64>,
    /// `mean_A - mean_B` along the first coordinate.
    pub signed_gaps: Vec<f64>,
}

impl PolarizationSeries {
    /// CSV: `t,value,signed_gap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,signed_gap\n");
        for (t, (v, g)) in self.values.iter().zip(&self.signed_gaps).enumerate() {
            let _ = writeln!(out, "{t},{v},{g}");
        }
        out
    }
}

fn group_mean(trajectory: &PerspectiveTrajectory, group: &[usize], t: usize) -> Vec<f64> {
    (0..trajectory.d)
        .map(|k| {
            let vals: Vec<f64> = group.iter().map(|&a| trajectory.point(a, t)[k]).collect();
            pairwise_sum(&vals) / group.len() as f64
        })
        .collect()
}

pub fn polarization(trajectory: &PerspectiveTrajectory, group_a: &[usize], group_b: &[usize]) -> Result<PolarizationSeries> {
    let n = trajectory.n_agents();
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::invalid_argument("polarization groups must be nonempty"));
    }
    if let Some(&bad) = group_a.iter().chain(group_b).find(|&&a| a >= n) {
        return Err(Error::invalid_argument(format!("agent {bad} is out of range for {n} agents")));
    }
    if group_a.iter().any(|a| group_b.contains(a)) {
        return Err(Error::invalid_argument("polarization groups must be disjoint"));
    }
    if trajectory.n_steps == 0 {
        return Err(Error::invalid_argument("trajectory is empty"));
    }
    let gaps: Vec<Vec<f64>> = (0..trajectory.n_steps)
        .map(|t| {
            let (a, b) = (group_mean(trajectory, group_a, t), group_mean(trajectory, group_b, t));
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        })
        .collect();
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let base = norm(&gaps[0]);
    if base == 0.0 {
        return Err(Error::DegenerateNormalization(
            "group means coincide at t=0".to_owned(),
        ));
    }
    Ok(PolarizationSeries {
        group_a: group_a.to_vec(),
        group_b: group_b.to_vec(),
        values: gaps.iter().map(|g| norm(g) / base).collect(),
        signed_gaps: gaps.iter().map(|g| g[0]).collect(),
    })
}

/// Whole-system summary curve over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoMirrorCurve {
    pub psi: Vec<f64>,
    pub effective_k: usize,
}

impl IsoMirrorCurve {
    /// CSV: `t,psi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,psi\n");
        for (t, v) in self.psi.iter().enumerate() {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }
}

/// Time-by-time distances: the mean over agents of each agent's kernel
/// distance between the two steps. Labels carry agent 0.
pub fn system_distances(history: &RunHistory) -> Result<DistanceMatrix> {
    let kernels = history_kernels(history)?;
    let steps = history.snapshots.len();
    let n = kernels.len() / steps;
    let labels = (0..steps).map(|t| PointLabel { agent: 0, t }).collect();
    Ok(DistanceMatrix::from_fn(labels, |a, b| {
        let per_agent: Vec<f64> = (0..n)
            .map(|i| kernels[i * steps + a].distance(&kernels[i * steps + b]))
            .collect();
        pairwise_sum(&per_agent) / n as f64
    }))
}

/// 1-d isomap of [`system_distances`], oriented so `psi(T) >= psi(0)`.
/// `k_neighbors` is capped at `T` so short runs remain valid.
pub fn iso_mirror(history: &RunHistory, k_neighbors: usize) -> Result<IsoMirrorCurve> {
    if history.snapshots.len() < 2 {
        return Err(Error::invalid_argument("iso-mirror needs at least one step after t=0"));
    }
    let dist = system_distances(history)?;
    let k = k_neighbors.clamp(1, dist.len() - 1);
    let iso = isomap_1d(&dist, IsomapConfig { k_neighbors: k })?;
    let mut psi = iso.curve;
    if psi[psi.len() - 1] < psi[0] {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(IsoMirrorCurve {
        psi,
        effective_k: iso.effective_k,
    })
}
