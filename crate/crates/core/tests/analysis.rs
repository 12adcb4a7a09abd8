#![allow(clippy::needless_range_loop)]

mod common;

use common::{hand_history, kernel};
use persim_core::agents::AgentId;
use persim_core::analysis::{
    ari, cluster_series, gmm_bic, iso_mirror, perspective_trajectories, polarization, system_distances,
    PerspectiveTrajectory,
};
use persim_core::matrix::RowMatrix;
use persim_core::rng::{substream, Purpose};
use persim_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// ARI from explicit pair enumeration, reduced to lowest terms before dividing.
fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut same_a, mut same_b) = (0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            let (x, y) = (a[i] == a[j], b[i] == b[j]);
            both += (x && y) as i128;
            same_a += x as i128;
            same_b += y as i128;
        }
    }
    let total = (n * (n - 1) / 2) as i128;
    // (I - sa sb / T) / ((sa + sb) / 2 - sa sb / T), scaled by 2T
    let num = 2 * (both * total - same_a * same_b);
    let den = (same_a + same_b) * total - 2 * same_a * same_b;
    if den == 0 {
        return 1.0;
    }
    fn gcd(a: i128, b: i128) -> i128 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }
    let g = gcd(num, den).max(1);
    (num / g) as f64 / (den / g) as f64
}

#[test]
fn ari_matches_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        let ka = rng.random_range(1..=4);
        let kb = rng.random_range(1..=4);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        assert_eq!(ari(&a, &b).unwrap(), ari_by_pairs(&a, &b), "{a:?} {b:?}");
    }
    assert_eq!(ari_by_pairs(&[0, 0, 1, 1], &[0, 1, 0, 1]), -0.5);
}

/// Plain 1-d EM with quantile initialisation and the same BIC convention.
fn reference_bic_1d(x: &[f64], k_max: usize) -> usize {
    let n = x.len() as f64;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, 0);
    for k in 1..=k_max {
        let mut mu: Vec<f64> = (0..k).map(|j| sorted[((2 * j + 1) * x.len()) / (2 * k)]).collect();
        let mut var = vec![1.0; k];
        let mut w = vec![1.0 / k as f64; k];
        let mut ll = f64::NEG_INFINITY;
        for _ in 0..500 {
            let dens = |i: usize, j: usize| {
                w[j] * (-(x[i] - mu[j]).powi(2) / (2.0 * var[j])).exp() / (2.0 * std::f64::consts::PI * var[j]).sqrt()
            };
            let mut resp = vec![vec![0.0; k]; x.len()];
            let mut new_ll = 0.0;
            for i in 0..x.len() {
                let tot: f64 = (0..k).map(|j| dens(i, j)).sum();
                new_ll += tot.ln();
                for j in 0..k {
                    resp[i][j] = dens(i, j) / tot;
                }
            }
            for j in 0..k {
                let nj: f64 = resp.iter().map(|r| r[j]).sum();
                w[j] = nj / n;
                mu[j] = resp.iter().zip(x).map(|(r, v)| r[j] * v).sum::<f64>() / nj;
                var[j] = (resp.iter().zip(x).map(|(r, v)| r[j] * (v - mu[j]).powi(2)).sum::<f64>() / nj).max(1e-6);
            }
            if new_ll - ll < 1e-8 {
                ll = new_ll;
                break;
            }
            ll = new_ll;
        }
        let params = (k - 1 + k + k) as f64;
        let bic = params * n.ln() - 2.0 * ll;
        if bic < best.0 {
            best = (bic, k);
        }
    }
    best.1
}

#[test]
fn two_far_blobs_agree_with_reference_em() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..100)
        .map(|i| if i < 50 { 0.0 } else { 100.0 } + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    assert_eq!(reference_bic_1d(&x, 4), 2);
    let points = RowMatrix::from_vec(100, 1, x);
    let fit = gmm_bic(&points, 4, 5, &mut substream(0, Purpose::Analysis, 0, 0)).unwrap();
    assert_eq!(fit.k, 2);
    let truth: Vec<usize> = (0..100).map(|i| i / 50).collect();
    assert_eq!(ari(&fit.labels, &truth).unwrap(), 1.0);
}

fn trajectory(coords_by_agent: &[&[f64]]) -> PerspectiveTrajectory {
    let n_steps = coords_by_agent[0].len();
    PerspectiveTrajectory {
        agents: (0..coords_by_agent.len())
            .map(|index| AgentId {
                index,
                class_tag: "a".into(),
                role: Default::default(),
            })
            .collect(),
        n_steps,
        d: 1,
        coords: coords_by_agent.concat(),
        eigenvalues: Vec::new(),
    }
}

#[test]
fn polarization_follows_the_gap() {
    let t = trajectory(&[&[0.0, 0.0, 0.0], &[2.0, 1.0, 0.0]]);
    let p = polarization(&t, &[0], &[1]).unwrap();
    assert_eq!(p.values, [1.0, 0.5, 0.0]);
    assert_eq!(p.signed_gaps, [-2.0, -1.0, 0.0]);
}

#[test]
fn polarization_rejects_bad_groups() {
    let t = trajectory(&[&[1.0, 0.0], &[1.0, 3.0], &[4.0, 4.0]]);
    assert!(matches!(polarization(&t, &[0], &[1]), Err(Error::DegenerateNormalization(_))));
    assert!(matches!(polarization(&t, &[0, 1], &[1]), Err(Error::InvalidArgument(_))));
    assert!(matches!(polarization(&t, &[], &[1]), Err(Error::InvalidArgument(_))));
    assert!(matches!(polarization(&t, &[0], &[7]), Err(Error::InvalidArgument(_))));
}

#[test]
fn frozen_two_blob_system_has_stable_clusters() {
    // evenly spaced blobs have no outliers for a floored singleton to capture
    let rows: Vec<[f64; 5]> = (0..40).map(|i| [(i / 20) as f64 * 50.0 + (i % 20) as f64 / 19.0 * 2.0 - 1.0; 5]).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
    let t = trajectory(&refs);
    let report = cluster_series(&t, 4, 3, 0).unwrap();
    assert_eq!(report.k_hat[0], 2);
    assert!(report.k_hat.iter().all(|&k| k == report.k_hat[0]));
    assert_eq!(report.ari, [1.0; 4]);
}

#[test]
fn single_step_has_no_ari() {
    let t = trajectory(&[&[0.0], &[1.0]]);
    let report = cluster_series(&t, 2, 2, 0).unwrap();
    assert_eq!(report.k_hat.len(), 1);
    assert!(report.ari.is_empty());
}

#[test]
fn frozen_system_has_flat_iso_mirror() {
    let k = |a, t| kernel(a, t, &[&[1.0, 2.0], &[0.0, 1.0]]);
    let h = hand_history((0..4).map(|t| vec![k(0, t), k(1, t)]).collect());
    let curve = iso_mirror(&h, 2).unwrap();
    assert!(curve.psi.iter().all(|&v| v == 0.0));
}

#[test]
fn translating_kernels_give_linear_iso_mirror() {
    // every kernel entry moves by 0.5 per step; two rows, so D_sys = |t - u|
    let k = |a: usize, t: usize| {
        let s = a as f64 + 0.5 * t as f64;
        kernel(a, t, &[&[s], &[s]])
    };
    let h = hand_history((0..6).map(|t| vec![k(0, t), k(1, t)]).collect());
    let d = system_distances(&h).unwrap();
    assert!((d.get(0, 5) - 5.0 * 2f64.sqrt() * 0.5).abs() < 1e-12);
    let curve = iso_mirror(&h, 2).unwrap();
    let step = curve.psi[1] - curve.psi[0];
    assert!(step > 0.0);
    for (t, v) in curve.psi.iter().enumerate() {
        assert!((v - (t as f64 - 2.5) * step).abs() < 1e-9);
    }
}

#[test]
fn static_agents_keep_their_kernel_gap() {
    let g = 3.0;
    let h = hand_history((0..3).map(|t| vec![kernel(0, t, &[&[0.0]]), kernel(1, t, &[&[g]])]).collect());
    let traj = perspective_trajectories(&h, 1).unwrap();
    for t in 0..3 {
        assert!(((traj.point(0, t)[0] - traj.point(1, t)[0]).abs() - g).abs() < 1e-12);
        assert!((traj.point(0, t)[0] - traj.point(0, 0)[0]).abs() < 1e-12);
    }
}

#[test]
fn single_agent_single_step_is_zero() {
    let h = hand_history(vec![vec![kernel(0, 0, &[&[4.0, 1.0]])]]);
    let traj = perspective_trajectories(&h, 1).unwrap();
    assert_eq!(traj.coords, [0.0]);
}
