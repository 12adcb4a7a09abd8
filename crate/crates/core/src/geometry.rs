//! Classical multidimensional scaling and a one-dimensional isomap.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DistanceMatrix, PointLabel};

/// Relative tolerance used when checking symmetry and for sign ties.
const SYMMETRY_TOL: f64 = 1e-12;

/// CMDS coordinates of labelled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveEmbedding {
    pub labels: Vec<PointLabel>,
    /// Number of coordinate columns.
    pub d: usize,
    /// Row-major `N × d`.
    pub coords: Vec<f64>,
    /// All `N` eigenvalues of the double-centred matrix, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

impl PerspectiveEmbedding {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn coord(&self, i: usize, k: usize) -> f64 {
        self.coords[i * self.d + k]
    }

    /// One row per point: `agent,t,z1..zd`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("agent,t");
        for k in 1..=self.d {
            let _ = write!(out, ",z{k}");
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            let _ = write!(out, "{},{}", label.agent, label.t);
            for v in self.point(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn validate(dist: &DistanceMatrix) -> Result<()> {
    let n = dist.len();
    for a in 0..n {
        if dist.get(a, a) < 0.0 {
            return Err(Error::invalid_argument(format!("negative diagonal entry at {a}")));
        }
        for b in (a + 1)..n {
            let (x, y) = (dist.get(a, b), dist.get(b, a));
            if (x - y).abs() > SYMMETRY_TOL * x.abs().max(y.abs()).max(1.0) {
                return Err(Error::invalid_argument(format!(
                    "distance matrix is not symmetric at ({a}, {b}): {x} vs {y}"
                )));
            }
        }
    }
    Ok(())
}

/// Double-centred Gram matrix `B = -1/2 J D∘D J`.
pub fn double_center(dist: &DistanceMatrix) -> DMatrix<f64> {
    let n = dist.len();
    let sq = DMatrix::from_fn(n, n, |a, b| {
        let v = dist.get(a, b);
        v * v
    });
    let row_means: Vec<f64> = (0..n).map(|a| sq.row(a).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    // enforce exact symmetry so the eigensolver sees a symmetric input
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    b
}

/// Torgerson scaling of `dist` into `d` dimensions.
///
/// Eigenpairs come from nalgebra's symmetric solver (Householder
/// tridiagonalisation followed by implicit symmetric QR), sorted by value
/// descending with ties kept in solver order. Columns for nonpositive
/// eigenvalues are zero. Each column is flipped so its entry of largest
/// magnitude is nonnegative; among near-equal magnitudes the lowest index wins.
pub fn cmds(dist: &DistanceMatrix, d: usize) -> Result<PerspectiveEmbedding> {
    let n = dist.len();
    if d < 1 || d > n {
        return Err(Error::invalid_argument(format!("d must be in [1, {n}], got {d}")));
    }
    validate(dist)?;
    let b = double_center(dist);
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&most_negative) = eigenvalues.last() {
        if most_negative < -1e-9 * scale.max(f64::MIN_POSITIVE) {
            log::warn!("distance matrix is not Euclidean: eigenvalue {most_negative:e} clipped to zero");
        }
    }

    let mut coords = vec![0.0; n * d];
    for (col, &k) in order.iter().take(d).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda <= 0.0 {
            continue;
        }
        let root = lambda.sqrt();
        let mut z: Vec<f64> = eig.eigenvectors.column(k).iter().map(|v| v * root).collect();
        // the all-ones vector spans part of B's null space; remove any leakage into near-null columns
        let mean = z.iter().sum::<f64>() / n as f64;
        z.iter_mut().for_each(|v| *v -= mean);
        let peak = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lead = z
            .iter()
            .position(|x| x.abs() >= peak * (1.0 - 1e-9))
            .expect("nonempty column");
        let sign = if z[lead] < 0.0 { -1.0 } else { 1.0 };
        for (i, v) in z.iter().enumerate() {
            coords[i * d + col] = sign * v;
        }
    }
    Ok(PerspectiveEmbedding {
        labels: dist.labels().to_vec(),
        d,
        coords,
        eigenvalues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsomapConfig {
    pub k_neighbors: usize,
}

/// One-dimensional isomap output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isomap1d {
    pub curve: Vec<f64>,
    /// Neighbour count actually used after any increase needed for connectivity.
    pub effective_k: usize,
}

/// Symmetric k-nearest-neighbour graph weights; `None` marks a missing edge.
fn knn_graph(dist: &DistanceMatrix, k: usize) -> Vec<Option<f64>> {
    let n = dist.len();
    let mut w = vec![None; n * n];
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        // stable sort keeps lower indices first among equal distances
        others.sort_by(|&x, &y| dist.get(a, x).total_cmp(&dist.get(a, y)));
        for &b in others.iter().take(k) {
            w[a * n + b] = Some(dist.get(a, b));
            w[b * n + a] = Some(dist.get(a, b));
        }
    }
    for a in 0..n {
        w[a * n + a] = Some(0.0);
    }
    w
}

/// All-pairs shortest paths (Floyd–Warshall, fixed loop order). Returns `None`
/// when the graph is disconnected.
fn geodesics(weights: &[Option<f64>], n: usize) -> Option<Vec<f64>> {
    let mut g: Vec<f64> = weights.iter().map(|w| w.unwrap_or(f64::INFINITY)).collect();
    for via in 0..n {
        for a in 0..n {
            let av = g[a * n + via];
            if av.is_infinite() {
                continue;
            }
            for b in 0..n {
                let cand = av + g[via * n + b];
                if cand < g[a * n + b] {
                    g[a * n + b] = cand;
                }
            }
        }
    }
    if g.iter().any(|v| v.is_infinite()) {
        None
    } else {
        Some(g)
    }
}

/// Isomap into one dimension: k-NN graph on `dist`, shortest-path distances,
/// then [`cmds`] with `d = 1`. `k` grows until the graph is connected.
pub fn isomap_1d(dist: &DistanceMatrix, config: IsomapConfig) -> Result<Isomap1d> {
    let n = dist.len();
    if n < 2 {
        return Err(Error::invalid_argument("isomap needs at least two points"));
    }
    if config.k_neighbors < 1 || config.k_neighbors >= n {
        return Err(Error::invalid_argument(format!(
            "k_neighbors must be in [1, {}), got {}",
            n, config.k_neighbors
        )));
    }
    validate(dist)?;
    let mut k = config.k_neighbors;
    let geo = loop {
        if let Some(g) = geodesics(&knn_graph(dist, k), n) {
            break g;
        }
        k += 1;
        debug_assert!(k < n, "complete graph is always connected");
    };
    // geodesics are symmetric by construction up to summation order; mirror the upper triangle
    let mut values = geo;
    for a in 0..n {
        for b in (a + 1)..n {
            values[b * n + a] = values[a * n + b];
        }
    }
    let geodesic = DistanceMatrix::new(dist.labels().to_vec(), values)?;
    let embedding = cmds(&geodesic, 1)?;
    Ok(Isomap1d {
        curve: embedding.coords,
        effective_k: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<PointLabel> {
        (0..n).map(|t| PointLabel { agent: 0, t }).collect()
    }

    fn from_rows(rows: &[&[f64]]) -> DistanceMatrix {
        let n = rows.len();
        DistanceMatrix::new(labels(n), rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    fn from_points(points: &[Vec<f64>]) -> DistanceMatrix {
        DistanceMatrix::from_fn(labels(points.len()), |a, b| {
            points[a]
                .iter()
                .zip(&points[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
    }

    #[test]
    fn two_points_split_symmetrically() {
        let e = cmds(&from_rows(&[&[0.0, 3.0], &[3.0, 0.0]]), 1).unwrap();
        assert!((e.coords[0] - 1.5).abs() < 1e-12);
        assert!((e.coords[1] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let e = cmds(&from_rows(&[&[0.0, 3.0], &[3.0, 0.0]]), 1).unwrap();
        let csv = e.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "agent,t,z1");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with(&format!("{},{},", e.labels[0].agent, e.labels[0].t)));
    }

    #[test]
    fn zero_distances_give_zero_coordinates() {
        let e = cmds(&from_rows(&[&[0.0; 3], &[0.0; 3], &[0.0; 3]]), 2).unwrap();
        assert!(e.coords.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn collinear_points_recover_line() {
        // B for points {-1, 0, 1}: eigenvalues {2, 0, 0}; first column ±(-1, 0, 1)
        let e = cmds(&from_rows(&[&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0], &[2.0, 1.0, 0.0]]), 2).unwrap();
        assert!((e.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(e.eigenvalues[1].abs() < 1e-12);
        let z: Vec<f64> = (0..3).map(|i| e.coord(i, 0)).collect();
        let expected = if z[0] > 0.0 { [1.0, 0.0, -1.0] } else { [-1.0, 0.0, 1.0] };
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{z:?}");
        }
    }

    #[test]
    fn sign_convention_makes_largest_entry_nonnegative() {
        let d = from_points(&[vec![0.0], vec![1.0], vec![5.0]]);
        let e = cmds(&d, 1).unwrap();
        let z: Vec<f64> = (0..3).map(|i| e.coord(i, 0)).collect();
        let peak = z.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(peak > 0.0, "{z:?}");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let d = from_rows(&[&[0.0, 1.0], &[2.0, 0.0]]);
        assert!(matches!(cmds(&d, 1), Err(Error::InvalidArgument(_))));
        let d = from_rows(&[&[-1.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(cmds(&d, 1), Err(Error::InvalidArgument(_))));
        let d = from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(cmds(&d, 0).is_err());
        assert!(cmds(&d, 3).is_err());
    }

    #[test]
    fn eigenvalues_are_nonincreasing_and_columns_centered() {
        let pts: Vec<Vec<f64>> = (0..7).map(|i| vec![(i as f64).sin() * 3.0, (i * i) as f64 * 0.1, 1.0]).collect();
        let e = cmds(&from_points(&pts), 3).unwrap();
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..3 {
            let mean = (0..7).map(|i| e.coord(i, k)).sum::<f64>() / 7.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn isomap_orders_points_on_a_line() {
        let xs = [0.0, 0.5, 1.7, 2.0, 3.5, 4.0];
        let d = from_points(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>());
        let iso = isomap_1d(&d, IsomapConfig { k_neighbors: 2 }).unwrap();
        let direct = cmds(&d, 1).unwrap();
        for (a, b) in iso.curve.iter().zip(&direct.coords) {
            assert!((a - b).abs() < 1e-9);
        }
        let increasing = iso.curve.windows(2).all(|w| w[0] < w[1]);
        let decreasing = iso.curve.windows(2).all(|w| w[0] > w[1]);
        assert!(increasing || decreasing);
    }

    #[test]
    fn isomap_keeps_coincident_points_together() {
        let d = from_points(&[vec![0.0], vec![0.0], vec![10.0]]);
        let iso = isomap_1d(&d, IsomapConfig { k_neighbors: 1 }).unwrap();
        assert!((iso.curve[0] - iso.curve[1]).abs() < 1e-12);
        assert!((iso.curve[0] - iso.curve[2]).abs() > 5.0);
    }

    #[test]
    fn isomap_of_zero_matrix_is_zero() {
        let d = from_rows(&[&[0.0; 4], &[0.0; 4], &[0.0; 4], &[0.0; 4]]);
        let iso = isomap_1d(&d, IsomapConfig { k_neighbors: 2 }).unwrap();
        assert!(iso.curve.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn isomap_grows_k_until_connected() {
        // two tight pairs far apart: k=1 leaves two components
        let d = from_points(&[vec![0.0], vec![0.1], vec![10.0], vec![10.1]]);
        let iso = isomap_1d(&d, IsomapConfig { k_neighbors: 1 }).unwrap();
        assert_eq!(iso.effective_k, 2);
    }

    #[test]
    fn isomap_rejects_single_point() {
        let d = from_rows(&[&[0.0]]);
        assert!(isomap_1d(&d, IsomapConfig { k_neighbors: 1 }).is_err());
    }
}
