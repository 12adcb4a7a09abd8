use serde::{Deserialize, Serialize};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length does not match shape");
        RowMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        RowMatrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Mean of the rows, summed in row order.
    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (a, x) in acc.iter_mut().zip(self.row(r)) {
                *a += x;
            }
        }
        let n = self.rows as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

const LANES: usize = 8;
const BLOCK: usize = 256;

fn fold_lanes(l: &[f64; LANES]) -> f64 {
    ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]))
}

/// Sums a short slice into eight interleaved lanes, then folds the lanes as a tree.
fn block_sum(values: &[f64], map: impl Fn(usize) -> f64) -> f64 {
    let mut lanes = [0.0; LANES];
    let full = values.len() / LANES * LANES;
    for base in (0..full).step_by(LANES) {
        for (k, lane) in lanes.iter_mut().enumerate() {
            *lane += map(base + k);
        }
    }
    for (k, i) in (full..values.len()).enumerate() {
        lanes[k] += map(i);
    }
    fold_lanes(&lanes)
}

/// Sum of squared differences of two short slices, in the lane order of [`block_sum`].
fn squared_diff_block(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..LANES {
            let d = x[k] - y[k];
            lanes[k] += d * d;
        }
    }
    for (k, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        let d = x - y;
        lanes[k] += d * d;
    }
    fold_lanes(&lanes)
}

/// Sum of `values` by recursive pairwise halving down to blocks of 256,
/// each summed in eight interleaved lanes. The evaluation order depends only
/// on the length, so the result is reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        return block_sum(values, |i| values[i]);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Frobenius norm of `a - b`: squared differences are summed per block of
/// 256 in eight lanes, and block sums are combined with [`pairwise_sum`].
pub fn frobenius_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut partial = Vec::with_capacity(a.len().div_ceil(BLOCK));
    for (ca, cb) in a.chunks(BLOCK).zip(b.chunks(BLOCK)) {
        partial.push(squared_diff_block(ca, cb));
    }
    pairwise_sum(&partial).sqrt()
}

/// Kernels per tile in [`frobenius_distance_matrix`].
const TILE: usize = 32;

/// All pairwise [`frobenius_distance`]s among equal-length vectors, as a
/// row-major `n × n` matrix with zero diagonal, mirrored from the upper
/// triangle.
///
/// Work is tiled so a block of vectors stays in cache while every pair in
/// it is accumulated; each pair's summation order is exactly that of
/// [`frobenius_distance`], so results are bit-identical to it.
pub fn frobenius_distance_matrix(items: &[&[f64]]) -> Vec<f64> {
    use rayon::prelude::*;

    let n = items.len();
    let len = items.first().map_or(0, |v| v.len());
    assert!(items.iter().all(|v| v.len() == len), "vectors differ in length");
    let chunks = len.div_ceil(BLOCK);
    let tiles = n.div_ceil(TILE);
    let tile_pairs: Vec<(usize, usize)> = (0..tiles).flat_map(|i| (i..tiles).map(move |j| (i, j))).collect();
    let blocks: Vec<Vec<(usize, usize, f64)>> = tile_pairs
        .par_iter()
        .map(|&(ti, tj)| {
            let rows = ti * TILE..((ti + 1) * TILE).min(n);
            let cols = tj * TILE..((tj + 1) * TILE).min(n);
            let pairs: Vec<(usize, usize)> = rows
                .flat_map(|a| cols.clone().filter(move |&b| b > a).map(move |b| (a, b)))
                .collect();
            let mut partial = vec![0.0; pairs.len() * chunks];
            for c in 0..chunks {
                let span = c * BLOCK..((c + 1) * BLOCK).min(len);
                for (k, &(a, b)) in pairs.iter().enumerate() {
                    let (ca, cb) = (&items[a][span.clone()], &items[b][span.clone()]);
                    partial[k * chunks + c] = squared_diff_block(ca, cb);
                }
            }
            pairs
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| (a, b, pairwise_sum(&partial[k * chunks..(k + 1) * chunks]).sqrt()))
                .collect()
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for (a, b, d) in blocks.into_iter().flatten() {
        out[a * n + b] = d;
        out[b * n + a] = d;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_exact_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn frobenius_of_unit_difference() {
        assert_eq!(frobenius_distance(&[1.0, 0.0], &[0.0, 1.0]), 2f64.sqrt());
        let a = vec![3.0; 1000];
        let b = vec![0.0; 1000];
        assert!((frobenius_distance(&a, &b) - 3.0 * 1000f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn tiled_matrix_matches_pairwise_calls_bitwise() {
        let items: Vec<Vec<f64>> = (0..70)
            .map(|i| (0..600).map(|k| ((i * 31 + k * 7) % 97) as f64 * 0.013 - (k % 5) as f64).collect())
            .collect();
        let refs: Vec<&[f64]> = items.iter().map(Vec::as_slice).collect();
        let m = frobenius_distance_matrix(&refs);
        for a in 0..70 {
            assert_eq!(m[a * 70 + a], 0.0);
            for b in 0..70 {
                if a != b {
                    assert_eq!(m[a * 70 + b].to_bits(), frobenius_distance(&items[a], &items[b]).to_bits());
                }
            }
        }
    }

    #[test]
    fn column_means() {
        let m = RowMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(m.column_means(), vec![1.0, 1.0]);
    }
}
