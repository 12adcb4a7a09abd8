//! Surrogate data kernels and Frobenius distance matrices.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::AgentId;
use crate::engine::RunHistory;
use crate::error::{Error, Result};
use crate::matrix::{frobenius_distance, frobenius_distance_matrix, RowMatrix};

/// One agent's embedded responses to the evaluation set at time `t` (m×p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateKernel {
    pub agent: AgentId,
    pub t: usize,
    pub matrix: RowMatrix,
}

impl SurrogateKernel {
    pub fn new(agent: AgentId, t: usize, matrix: RowMatrix) -> Result<Self> {
        if matrix.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "kernel of agent {} at t={t} has non-finite entries",
                agent.index
            )));
        }
        Ok(SurrogateKernel { agent, t, matrix })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn distance(&self, other: &SurrogateKernel) -> f64 {
        frobenius_distance(self.matrix.as_slice(), other.matrix.as_slice())
    }
}

/// Identifies one point of a distance matrix: an agent at a time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointLabel {
    pub agent: usize,
    pub t: usize,
}

impl std::fmt::Display for PointLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "a{}t{}", self.agent, self.t)
    }
}

/// Square symmetric matrix of nonnegative distances with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    labels: Vec<PointLabel>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a row-major matrix, checking size, finiteness and the zero diagonal.
    pub fn new(labels: Vec<PointLabel>, values: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n * n {
            return Err(Error::invalid_argument(format!(
                "{} labels need {} entries, got {}",
                n,
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("distance matrix has non-finite entries"));
        }
        Ok(DistanceMatrix { labels, values })
    }

    /// Builds a matrix from a symmetric function evaluated once per unordered pair.
    pub fn from_fn<F>(labels: Vec<PointLabel>, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let n = labels.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|a| ((a + 1)..n).map(|b| f(a, b)).collect())
            .collect();
        let mut values = vec![0.0; n * n];
        for (a, row) in upper.iter().enumerate() {
            for (k, &d) in row.iter().enumerate() {
                let b = a + 1 + k;
                values[a * n + b] = d;
                values[b * n + a] = d;
            }
        }
        DistanceMatrix { labels, values }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[PointLabel] {
        &self.labels
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.len() + b]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, a: usize) -> &[f64] {
        let n = self.len();
        &self.values[a * n..(a + 1) * n]
    }

    /// Sub-matrix over the given point indices, in that order.
    pub fn select(&self, idx: &[usize]) -> DistanceMatrix {
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        let mut values = Vec::with_capacity(idx.len() * idx.len());
        for &a in idx {
            for &b in idx {
                values.push(self.get(a, b));
            }
        }
        DistanceMatrix { labels, values }
    }

    /// CSV with a header row of labels; each data row starts with its label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (a, l) in self.labels.iter().enumerate() {
            let _ = write!(out, "{l}");
            for v in self.row(a) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Frobenius distances between every pair of kernels.
pub fn pairwise_distances(kernels: &[SurrogateKernel]) -> Result<DistanceMatrix> {
    if let Some(first) = kernels.first() {
        let shape = first.shape();
        if let Some(bad) = kernels.iter().find(|k| k.shape() != shape) {
            return Err(Error::invalid_argument(format!(
                "kernel of agent {} at t={} has shape {:?}, expected {:?}",
                bad.agent.index,
                bad.t,
                bad.shape(),
                shape
            )));
        }
    }
    let labels = kernels
        .iter()
        .map(|k| PointLabel {
            agent: k.agent.index,
            t: k.t,
        })
        .collect();
    let items: Vec<&[f64]> = kernels.iter().map(|k| k.matrix.as_slice()).collect();
    Ok(DistanceMatrix {
        labels,
        values: frobenius_distance_matrix(&items),
    })
}

/// Distances between all (agent, time) kernels of a run, ordered agent-major
/// then by time: index `agent * (T + 1) + t`.
pub fn history_distances(history: &RunHistory) -> Result<DistanceMatrix> {
    let kernels = history_kernels(history)?;
    pairwise_distances(&kernels).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::InvalidState(msg),
        other => other,
    })
}

/// The run's kernels in agent-major, time-minor order.
pub(crate) fn history_kernels(history: &RunHistory) -> Result<Vec<SurrogateKernel>> {
    if history.snapshots.is_empty() {
        return Err(Error::invalid_state("history has no snapshots"));
    }
    let n = history.snapshots[0].kernels.len();
    if history.snapshots.iter().any(|s| s.kernels.len() != n) {
        return Err(Error::invalid_state("snapshots disagree on the number of agents"));
    }
    let mut out = Vec::with_capacity(n * history.snapshots.len());
    for agent in 0..n {
        for snap in &history.snapshots {
            out.push(snap.kernels[agent].clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Role;

    fn kernel(agent: usize, t: usize, rows: &[Vec<f64>]) -> SurrogateKernel {
        SurrogateKernel::new(
            AgentId {
                index: agent,
                class_tag: "a".into(),
                role: Role::Normal,
            },
            t,
            RowMatrix::from_rows(rows),
        )
        .unwrap()
    }

    #[test]
    fn identical_kernels_have_zero_distance() {
        let k = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let d = pairwise_distances(&[kernel(0, 0, &k), kernel(1, 0, &k)]).unwrap();
        assert_eq!(d.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn unit_vectors_are_root_two_apart() {
        let d = pairwise_distances(&[kernel(0, 0, &[vec![1.0, 0.0]]), kernel(1, 0, &[vec![0.0, 1.0]])]).unwrap();
        assert_eq!(d.get(0, 1), 2f64.sqrt());
        assert_eq!(d.get(1, 0), 2f64.sqrt());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let r = pairwise_distances(&[kernel(0, 0, &[vec![1.0, 0.0]]), kernel(1, 0, &[vec![0.0, 1.0, 2.0]])]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn csv_has_label_header() {
        let d = pairwise_distances(&[kernel(0, 0, &[vec![0.0]]), kernel(0, 1, &[vec![3.0]])]).unwrap();
        assert_eq!(d.to_csv(), "label,a0t0,a0t1\na0t0,0,3\na0t1,3,0\n");
    }

    #[test]
    fn non_finite_kernel_is_rejected() {
        let r = SurrogateKernel::new(
            AgentId {
                index: 0,
                class_tag: "a".into(),
                role: Role::Normal,
            },
            0,
            RowMatrix::from_rows(&[vec![f64::NAN]]),
        );
        assert!(r.is_err());
    }
}
