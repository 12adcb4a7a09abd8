//! Time-varying influence topologies and interview-partner sampling.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentId, QaPair, Role};
use crate::error::{Error, Result};
use crate::kernel::{pairwise_distances, SurrogateKernel};
use crate::rng::SimRng;

/// Directed influence edges over `n` agents. Entry `(j, i)` means `j` influences `i`,
/// so `i` may interview `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    n: usize,
    adjacency: Vec<bool>,
}

impl EdgeSet {
    pub fn empty(n: usize) -> Self {
        EdgeSet {
            n,
            adjacency: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut e = EdgeSet::empty(n);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    e.insert(j, i);
                }
            }
        }
        e
    }

    pub fn from_adjacency(n: usize, adjacency: Vec<bool>) -> Result<Self> {
        if adjacency.len() != n * n {
            return Err(Error::invalid_argument("adjacency must be n×n"));
        }
        if (0..n).any(|i| adjacency[i * n + i]) {
            return Err(Error::invalid_argument("self-edges are not allowed"));
        }
        Ok(EdgeSet { n, adjacency })
    }

    /// Adds `from -> to`. Self-edges are ignored.
    pub fn insert(&mut self, from: usize, to: usize) {
        if from != to {
            self.adjacency[from * self.n + to] = true;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.n + to]
    }

    /// Sources of edges into `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(j, i)).collect()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(j, i)).count()
    }

    pub fn out_degree(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| self.has_edge(j, i)).count()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&b| b).count()
    }

    /// Rows are sources, columns are targets; header `from\to,0,1,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("from\\to");
        for i in 0..self.n {
            let _ = write!(out, ",{i}");
        }
        out.push('\n');
        for j in 0..self.n {
            let _ = write!(out, "{j}");
            for i in 0..self.n {
                out.push_str(if self.has_edge(j, i) { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::invalid_argument("empty adjacency csv"))?;
        let n = header.split(',').count().saturating_sub(1);
        let mut adjacency = Vec::with_capacity(n * n);
        for (row, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let label = cells.next().unwrap_or_default();
            if label != row.to_string() {
                return Err(Error::invalid_argument(format!("unexpected row label {label:?}")));
            }
            let before = adjacency.len();
            for c in cells {
                adjacency.push(match c {
                    "0" => false,
                    "1" => true,
                    other => return Err(Error::invalid_argument(format!("bad adjacency cell {other:?}"))),
                });
            }
            if adjacency.len() - before != n {
                return Err(Error::invalid_argument(format!("row {row} has the wrong width")));
            }
        }
        EdgeSet::from_adjacency(n, adjacency)
    }
}

/// Topology choice as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TopologyConfig {
    FullyConnected,
    IntraClassOnly,
    DisruptedLocal { t_star: usize },
    VulnerableOscillation { attack_period: usize },
}

/// Topology resolved against a concrete population.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySchedule {
    FullyConnected {
        n: usize,
    },
    IntraClassOnly {
        classes: Vec<String>,
    },
    DisruptedLocal {
        n: usize,
        t_star: usize,
    },
    VulnerableOscillation {
        n: usize,
        adversary: usize,
        targets: Vec<usize>,
        attack_period: usize,
    },
}

impl TopologySchedule {
    pub fn resolve(config: &TopologyConfig, agents: &[AgentId]) -> Result<Self> {
        let n = agents.len();
        match *config {
            TopologyConfig::FullyConnected => Ok(TopologySchedule::FullyConnected { n }),
            TopologyConfig::IntraClassOnly => Ok(TopologySchedule::IntraClassOnly {
                classes: agents.iter().map(|a| a.class_tag.clone()).collect(),
            }),
            TopologyConfig::DisruptedLocal { t_star } => {
                if t_star < 1 {
                    return Err(Error::invalid_argument("t_star must be at least 1"));
                }
                Ok(TopologySchedule::DisruptedLocal { n, t_star })
            }
            TopologyConfig::VulnerableOscillation { attack_period } => {
                if attack_period < 1 {
                    return Err(Error::invalid_argument("attack_period must be at least 1"));
                }
                let adversaries: Vec<usize> = agents
                    .iter()
                    .filter(|a| a.role == Role::Adversarial)
                    .map(|a| a.index)
                    .collect();
                let [adversary] = adversaries[..] else {
                    return Err(Error::invalid_argument(format!(
                        "vulnerable oscillation needs exactly one adversarial agent, found {}",
                        adversaries.len()
                    )));
                };
                let targets = agents
                    .iter()
                    .filter(|a| a.role == Role::Target)
                    .map(|a| a.index)
                    .collect();
                Ok(TopologySchedule::VulnerableOscillation {
                    n,
                    adversary,
                    targets,
                    attack_period,
                })
            }
        }
    }

    pub fn n(&self) -> usize {
        match self {
            TopologySchedule::FullyConnected { n }
            | TopologySchedule::DisruptedLocal { n, .. }
            | TopologySchedule::VulnerableOscillation { n, .. } => *n,
            TopologySchedule::IntraClassOnly { classes } => classes.len(),
        }
    }

    /// Whether `edges_at(t)` needs the kernels from step `t - 1`.
    pub fn needs_kernels(&self, t: usize) -> bool {
        matches!(self, TopologySchedule::DisruptedLocal { t_star, .. } if t >= *t_star)
    }

    /// True at steps where the vulnerable state is active.
    pub fn is_vulnerable(&self, t: usize) -> bool {
        matches!(self, TopologySchedule::VulnerableOscillation { attack_period, .. }
            if t >= 1 && t.is_multiple_of(*attack_period))
    }
}

/// Influence edges at step `t`. `prior_kernels` are the per-agent kernels
/// snapshotted after step `t - 1`, in agent order.
pub fn edges_at(
    schedule: &TopologySchedule,
    t: usize,
    prior_kernels: Option<&[SurrogateKernel]>,
) -> Result<EdgeSet> {
    match schedule {
        TopologySchedule::FullyConnected { n } => Ok(EdgeSet::complete(*n)),
        TopologySchedule::IntraClassOnly { classes } => {
            let n = classes.len();
            let mut e = EdgeSet::empty(n);
            for j in 0..n {
                for i in 0..n {
                    if classes[i] == classes[j] {
                        e.insert(j, i);
                    }
                }
            }
            Ok(e)
        }
        TopologySchedule::DisruptedLocal { n, t_star } => {
            if t < *t_star {
                return Ok(EdgeSet::complete(*n));
            }
            let kernels = prior_kernels.ok_or_else(|| {
                Error::invalid_state(format!("local topology at t={t} needs the kernels from t={}", t - 1))
            })?;
            if kernels.len() != *n {
                return Err(Error::invalid_state(format!(
                    "expected {n} prior kernels, got {}",
                    kernels.len()
                )));
            }
            nearest_neighbor_edges(kernels)
        }
        TopologySchedule::VulnerableOscillation {
            n,
            adversary,
            targets,
            ..
        } => {
            let n = *n;
            let mut e = EdgeSet::empty(n);
            let normal = |k: usize| k != *adversary;
            if schedule.is_vulnerable(t) {
                let is_target = |k: usize| targets.contains(&k);
                for &i in targets {
                    e.insert(*adversary, i);
                }
                for i in (0..n).filter(|&i| normal(i) && !is_target(i)) {
                    for j in (0..n).filter(|&j| normal(j)) {
                        e.insert(j, i);
                    }
                }
            } else {
                for i in (0..n).filter(|&i| normal(i)) {
                    for j in (0..n).filter(|&j| normal(j)) {
                        e.insert(j, i);
                    }
                }
            }
            Ok(e)
        }
    }
}

/// Each agent receives exactly one in-edge, from its nearest neighbour by
/// kernel Frobenius distance; ties go to the lowest index.
fn nearest_neighbor_edges(kernels: &[SurrogateKernel]) -> Result<EdgeSet> {
    let n = kernels.len();
    let mut e = EdgeSet::empty(n);
    if n < 2 {
        return Ok(e);
    }
    let d = pairwise_distances(kernels).map_err(|err| Error::invalid_state(err.to_string()))?;
    for i in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|&j| j != i) {
            let dij = d.get(i, j);
            if best.is_none_or(|(_, b)| dij < b) {
                best = Some((j, dij));
            }
        }
        if let Some((j, _)) = best {
            e.insert(j, i);
        }
    }
    Ok(e)
}

/// Uniform draw over the agents with an edge into `i`; `None` when there are none.
pub fn sample_interviewee(edges: &EdgeSet, i: usize, rng: &mut SimRng) -> Option<usize> {
    let candidates = edges.in_neighbors(i);
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.random_range(0..candidates.len())])
    }
}

/// Append-only store of question-answer pairs owned by a single agent.
#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseNode {
    owner: AgentId,
    contents: Vec<QaPair>,
}

impl DatabaseNode {
    pub fn new(owner: AgentId) -> Self {
        DatabaseNode {
            owner,
            contents: Vec::new(),
        }
    }

    pub fn owner(&self) -> &AgentId {
        &self.owner
    }

    pub fn append(&mut self, pairs: impl IntoIterator<Item = QaPair>) {
        self.contents.extend(pairs);
    }

    pub fn contents(&self) -> &[QaPair] {
        &self.contents
    }
}
