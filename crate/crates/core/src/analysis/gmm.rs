//! Full-covariance Gaussian mixtures fitted by EM, with BIC model selection.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::rng::SimRng;

/// Lower bound on covariance eigenvalues.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-8;

/// Model selected by BIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSelection {
    pub k: usize,
    /// Hard assignment of each point by largest responsibility.
    pub labels: Vec<usize>,
    /// BIC for `k = 1..=bic.len()`.
    pub bic: Vec<f64>,
    pub log_likelihood: f64,
}

/// Gaussian component with its covariance held in eigen form.
#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    /// Row-major `d × d`; column `k` is the `k`-th covariance eigenvector.
    basis: Vec<f64>,
    /// Reciprocals of the floored covariance eigenvalues.
    inv_spectrum: Vec<f64>,
    /// `ln weight - (d ln 2π + ln det Σ) / 2`.
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, covariance: DMatrix<f64>) -> Self {
        let d = mean.len();
        let eig = SymmetricEigen::new(covariance);
        let spectrum: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(COVARIANCE_FLOOR)).collect();
        let log_det: f64 = spectrum.iter().map(|l| l.ln()).sum();
        let basis = (0..d * d).map(|i| eig.eigenvectors[(i / d, i % d)]).collect();
        Component {
            weight,
            mean,
            basis,
            inv_spectrum: spectrum.iter().map(|l| 1.0 / l).collect(),
            log_norm: weight.ln() - 0.5 * (d as f64 * std::f64::consts::TAU.ln() + log_det),
        }
    }

    /// `ln(weight * density(x))`.
    fn log_weighted_density(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut mahalanobis = 0.0;
        for k in 0..d {
            let mut proj = 0.0;
            for (r, (xr, mr)) in x.iter().zip(&self.mean).enumerate() {
                proj += self.basis[r * d + k] * (xr - mr);
            }
            mahalanobis += proj * proj * self.inv_spectrum[k];
        }
        self.log_norm - 0.5 * mahalanobis
    }
}

struct Fit {
    log_likelihood: f64,
    labels: Vec<usize>,
}

/// Points as a flat row-major `n × d` array.
struct Points<'a> {
    data: &'a [f64],
    d: usize,
}

impl Points<'_> {
    fn len(&self) -> usize {
        self.data.len() / self.d
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// E-step: fills `resp` (n×k, row-major) and returns the log-likelihood.
fn expectation(points: &Points, components: &[Component], resp: &mut [f64]) -> f64 {
    let k = components.len();
    let mut total = 0.0;
    for i in 0..points.len() {
        let x = points.row(i);
        let row = &mut resp[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for (slot, c) in row.iter_mut().zip(components) {
            *slot = if c.weight > 0.0 {
                c.log_weighted_density(x)
            } else {
                f64::NEG_INFINITY
            };
            max = max.max(*slot);
        }
        let mut sum = 0.0;
        for slot in row.iter_mut() {
            *slot = (*slot - max).exp();
            sum += *slot;
        }
        for slot in row.iter_mut() {
            *slot /= sum;
        }
        total += max + sum.ln();
    }
    total
}

/// M-step; a component that lost all responsibility keeps its parameters at weight 0.
fn maximization(points: &Points, resp: &[f64], components: &mut [Component]) {
    let n = points.len();
    let k = components.len();
    let d = points.d;
    for (j, comp) in components.iter_mut().enumerate() {
        let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
        if nk <= f64::MIN_POSITIVE {
            comp.weight = 0.0;
            continue;
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            let r = resp[i * k + j];
            for (m, x) in mean.iter_mut().zip(points.row(i)) {
                *m += r * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let r = resp[i * k + j];
            let x = points.row(i);
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += r * (x[a] - mean[a]) * (x[b] - mean[b]);
                }
            }
        }
        cov /= nk;
        *comp = Component::new(nk / n as f64, mean, cov);
    }
}

/// k-means++ seeding: first centre uniform, then proportional to squared distance.
fn kmeans_pp(points: &Points, k: usize, rng: &mut SimRng) -> Vec<usize> {
    let n = points.len();
    let mut centers = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = (0..n).map(|i| points.squared_distance(i, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding landing on a zero-weight tail
            while best[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(points.squared_distance(i, next));
        }
    }
    centers
}

/// Lloyd iterations from the given seed points; returns hard labels.
/// A centre whose cell empties keeps its previous position.
fn lloyd(points: &Points, seeds: &[usize]) -> Vec<usize> {
    let n = points.len();
    let d = points.d;
    let k = seeds.len();
    let mut centers: Vec<f64> = seeds.iter().flat_map(|&c| points.row(c).to_vec()).collect();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let x = points.row(i);
            let mut arg = 0;
            let mut best = f64::INFINITY;
            for j in 0..k {
                let c = &centers[j * d..(j + 1) * d];
                let dist: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best {
                    best = dist;
                    arg = j;
                }
            }
            changed |= *label != arg;
            *label = arg;
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            sums[l * d..(l + 1) * d].iter_mut().zip(points.row(i)).for_each(|(s, x)| *s += x);
        }
        for j in 0..k {
            if counts[j] > 0 {
                for a in 0..d {
                    centers[j * d + a] = sums[j * d + a] / counts[j] as f64;
                }
            }
        }
    }
    labels
}

fn sample_covariance(points: &Points) -> DMatrix<f64> {
    let n = points.len() as f64;
    let d = points.d;
    let mut mean = vec![0.0; d];
    for i in 0..points.len() {
        mean.iter_mut().zip(points.row(i)).for_each(|(m, x)| *m += x / n);
    }
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..points.len() {
        let x = points.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (x[a] - mean[a]) * (x[b] - mean[b]) / n;
            }
        }
    }
    cov
}

fn fit_once(points: &Points, k: usize, rng: &mut SimRng) -> Fit {
    let n = points.len();
    let pooled = sample_covariance(points);
    let seeds = kmeans_pp(points, k, rng);
    let mut components: Vec<Component> = seeds
        .iter()
        .map(|&c| Component::new(1.0 / k as f64, points.row(c).to_vec(), pooled.clone()))
        .collect();
    // EM starts from the k-means partition, as if it were the first E-step
    let mut resp = vec![0.0; n * k];
    for (i, l) in lloyd(points, &seeds).into_iter().enumerate() {
        resp[i * k + l] = 1.0;
    }
    maximization(points, &resp, &mut components);
    let mut ll = expectation(points, &components, &mut resp);
    for _ in 0..MAX_ITERATIONS {
        maximization(points, &resp, &mut components);
        let next = expectation(points, &components, &mut resp);
        debug_assert!(
            next >= ll - 1e-9 * ll.abs().max(1.0),
            "EM log-likelihood decreased from {ll} to {next}"
        );
        let gain = next - ll;
        ll = next;
        if gain < TOLERANCE {
            break;
        }
    }
    let labels = (0..n)
        .map(|i| {
            let row = &resp[i * k..(i + 1) * k];
            let mut arg = 0;
            for j in 1..k {
                if row[j] > row[arg] {
                    arg = j;
                }
            }
            arg
        })
        .collect();
    Fit {
        log_likelihood: ll,
        labels,
    }
}

/// Free parameters of a `k`-component full-covariance mixture in `d` dimensions.
pub fn parameter_count(k: usize, d: usize) -> usize {
    k - 1 + k * d + k * d * (d + 1) / 2
}

/// Fits mixtures for `k = 1..=min(k_max, n)` and keeps the lowest BIC
/// (ties go to the smaller `k`). Each `k` takes the best of `restarts`
/// EM runs by log-likelihood, ties to the earliest restart.
pub fn gmm_bic(points: &RowMatrix, k_max: usize, restarts: usize, rng: &mut SimRng) -> Result<GmmSelection> {
    let (n, d) = points.shape();
    if n == 0 {
        return Err(Error::invalid_argument("gmm_bic needs at least one point"));
    }
    if d == 0 {
        return Err(Error::invalid_argument("gmm_bic needs at least one dimension"));
    }
    if k_max < 1 || restarts < 1 {
        return Err(Error::invalid_argument(format!(
            "k_max and restarts must be at least 1, got {k_max} and {restarts}"
        )));
    }
    if points.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_argument("gmm_bic points must be finite"));
    }
    let data = Points {
        data: points.as_slice(),
        d,
    };
    let mut best: Option<(usize, Fit)> = None;
    let mut best_bic = f64::INFINITY;
    let mut bic = Vec::new();
    for k in 1..=k_max.min(n) {
        let mut fit = fit_once(&data, k, rng);
        for _ in 1..restarts {
            let candidate = fit_once(&data, k, rng);
            if candidate.log_likelihood > fit.log_likelihood {
                fit = candidate;
            }
        }
        let score = parameter_count(k, d) as f64 * (n as f64).ln() - 2.0 * fit.log_likelihood;
        bic.push(score);
        if score < best_bic {
            best_bic = score;
            best = Some((k, fit));
        }
    }
    let (k, fit) = best.expect("k = 1 always produces a finite score");
    Ok(GmmSelection {
        k,
        labels: fit.labels,
        bic,
        log_likelihood: fit.log_likelihood,
    })
}
