#![allow(clippy::needless_range_loop)]

mod common;

use std::sync::Arc;

use common::{hand_history, kernel};
use persim_core::agents::{
    Agent, AgentId, Prompt, PromptEmbedder, QaPair, Response, ResponsePayload, SyntheticAgent, SyntheticAgentState,
};
use persim_core::analysis::{ari, cluster_series, polarization, system_distances, PerspectiveTrajectory};
use persim_core::embedding::{hashed_bow, Embedder, EmbedderConfig, Normalization};
use persim_core::geometry::cmds;
use persim_core::kernel::{pairwise_distances, DistanceMatrix, SurrogateKernel};
use proptest::prelude::*;

fn kernels(n: usize, m: usize, p: usize) -> impl Strategy<Value = Vec<SurrogateKernel>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, m * p), n).prop_map(move |data| {
        data.iter()
            .enumerate()
            .map(|(i, v)| {
                let rows: Vec<&[f64]> = v.chunks(p).collect();
                kernel(i, 0, &rows)
            })
            .collect()
    })
}

fn assert_metric(d: &DistanceMatrix) {
    let n = d.len();
    for a in 0..n {
        assert_eq!(d.get(a, a), 0.0);
        for b in 0..n {
            assert!(d.get(a, b) >= 0.0);
            assert_eq!(d.get(a, b), d.get(b, a));
            for c in 0..n {
                assert!(d.get(a, c) <= d.get(a, b) + d.get(b, c) + 1e-12 * d.get(a, c).max(1.0));
            }
        }
    }
}

fn labels(max_label: usize, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..max_label, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairwise_distances_form_a_metric(ks in kernels(5, 3, 2)) {
        assert_metric(&pairwise_distances(&ks).unwrap());
    }

    #[test]
    fn system_distances_form_a_metric(ks in kernels(8, 2, 2)) {
        // two agents over four steps
        let steps: Vec<Vec<SurrogateKernel>> = (0..4)
            .map(|t| (0..2).map(|a| {
                let k = &ks[t * 2 + a];
                kernel(a, t, &(0..2).map(|r| k.matrix.row(r)).collect::<Vec<_>>())
            }).collect())
            .collect();
        assert_metric(&system_distances(&hand_history(steps)).unwrap());
    }

    #[test]
    fn pairwise_distances_are_permutation_equivariant(ks in kernels(5, 2, 3), perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let d = pairwise_distances(&ks).unwrap();
        let permuted: Vec<SurrogateKernel> = perm.iter().map(|&i| ks[i].clone()).collect();
        let dp = pairwise_distances(&permuted).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                prop_assert_eq!(dp.get(a, b), d.get(perm[a], perm[b]));
            }
        }
    }

    #[test]
    fn cmds_rows_follow_a_permutation(pts in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 6), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let dist = |order: &[usize]| {
            let labels = (0..6).map(|t| persim_core::PointLabel { agent: 0, t }).collect();
            DistanceMatrix::from_fn(labels, |a, b| {
                let (x, y) = (&pts[order[a]], &pts[order[b]]);
                ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt()
            })
        };
        let identity: Vec<usize> = (0..6).collect();
        let e = cmds(&dist(&identity), 2).unwrap();
        let ep = cmds(&dist(&perm), 2).unwrap();
        // well-separated eigenvalues are needed for the axes to be determined
        let gap = (e.eigenvalues[0] - e.eigenvalues[1]).min(e.eigenvalues[1]);
        prop_assume!(gap > 1e-3 * e.eigenvalues[0]);
        for a in 0..6 {
            for k in 0..2 {
                prop_assert!((ep.coord(a, k) - e.coord(perm[a], k)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ari_is_symmetric_and_relabeling_invariant(a in labels(4, 2..=12), seed in any::<u64>()) {
        let n = a.len();
        let b: Vec<usize> = (0..n).map(|i| ((seed >> (i % 60)) as usize + i) % 3).collect();
        prop_assert_eq!(ari(&a, &b).unwrap(), ari(&b, &a).unwrap());
        let relabeled: Vec<usize> = a.iter().map(|&l| 10 + (l * 7) % 4 * 3 + l / 4).collect();
        prop_assert_eq!(ari(&relabeled, &b).unwrap(), ari(&a, &b).unwrap());
        let mut distinct = a.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() >= 2 {
            prop_assert_eq!(ari(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn polarization_ignores_common_affine_maps(
        z in prop::collection::vec(-3.0..3.0f64, 12),
        scale in prop::sample::select(vec![-2.5, -1.0, 0.5, 3.0]),
        shift in -4.0..4.0f64,
    ) {
        let traj = |coords: Vec<f64>| PerspectiveTrajectory {
            agents: (0..4).map(|index| AgentId { index, class_tag: "a".into(), role: Default::default() }).collect(),
            n_steps: 3,
            d: 1,
            coords,
            eigenvalues: Vec::new(),
        };
        let base = traj(z.clone());
        let mapped = traj(z.iter().map(|v| scale * v + shift).collect());
        let (a, b) = ([0, 1], [2, 3]);
        match (polarization(&base, &a, &b), polarization(&mapped, &a, &b)) {
            (Ok(p), Ok(q)) => {
                prop_assume!(p.signed_gaps[0].abs() > 1e-6);
                for (x, y) in p.values.iter().zip(&q.values) {
                    prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
                }
            }
            (Err(_), _) | (_, Err(_)) => {}
        }
    }

    #[test]
    fn one_component_clustering_is_always_stable(z in prop::collection::vec(-3.0..3.0f64, 15)) {
        let traj = PerspectiveTrajectory {
            agents: (0..5).map(|index| AgentId { index, class_tag: "a".into(), role: Default::default() }).collect(),
            n_steps: 3,
            d: 1,
            coords: z,
            eigenvalues: Vec::new(),
        };
        let report = cluster_series(&traj, 1, 2, 0).unwrap();
        prop_assert_eq!(report.k_hat, vec![1; 3]);
        prop_assert_eq!(report.ari, vec![1.0; 2]);
    }

    #[test]
    fn bag_of_words_ignores_token_order(tokens in prop::collection::vec("[a-z]{1,5}", 0..8), perm_seed in any::<u64>()) {
        let mut shuffled = tokens.clone();
        let len = shuffled.len();
        for i in (1..len).rev() {
            shuffled.swap(i, (perm_seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        for norm in [Normalization::None, Normalization::UnitL2] {
            prop_assert_eq!(hashed_bow(&tokens.join(" "), 16, norm), hashed_bow(&shuffled.join(" "), 16, norm));
        }
    }

    #[test]
    fn mutual_interviews_contract_by_one_minus_two_eta(
        a in prop::collection::vec(-5.0..5.0f64, 3),
        b in prop::collection::vec(-5.0..5.0f64, 3),
        eta in 0.0..0.49f64,
    ) {
        let embedder = Embedder::from_config(&EmbedderConfig::passthrough(3)).unwrap();
        let prompts = Arc::new(PromptEmbedder::new(3, 1.0, 0));
        let agent = |index: usize, theta: &[f64]| {
            let id = AgentId { index, class_tag: "a".into(), role: Default::default() };
            let state = SyntheticAgentState::new(theta.to_vec(), common::params(0.0, eta, 0.0)).unwrap();
            SyntheticAgent::new(id, state, prompts.clone()).unwrap()
        };
        let (mut x, mut y) = (agent(0, &a), agent(1, &b));
        let question = [Prompt { id: 0, text: String::new(), class_tag: None }];
        let gap = |x: &SyntheticAgent, y: &SyntheticAgent| {
            x.state().theta.iter().zip(&y.state().theta).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
        };
        for _ in 0..3 {
            let before = gap(&x, &y);
            let mut rng = persim_core::rng::substream(0, persim_core::rng::Purpose::Interaction, 0, 0);
            let rx = x.respond(&question, &mut rng).unwrap();
            let ry = y.respond(&question, &mut rng).unwrap();
            let qa = |r: Vec<Response>, src: &SyntheticAgent| vec![QaPair::new(question[0].clone(), r[0].clone(), src.id().clone()).unwrap()];
            let (for_x, for_y) = (qa(ry, &y), qa(rx, &x));
            x.update(&for_x, &embedder).unwrap();
            y.update(&for_y, &embedder).unwrap();
            prop_assert!((gap(&x, &y) - (1.0 - 2.0 * eta) * before).abs() <= 1e-12 * before.max(1.0));
        }
    }

    #[test]
    fn update_ignores_pair_order(
        payloads in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..8),
        perm_seed in any::<u64>(),
    ) {
        let embedder = Embedder::from_config(&EmbedderConfig::passthrough(2)).unwrap();
        let prompts = Arc::new(PromptEmbedder::new(2, 1.0, 0));
        let id = AgentId { index: 0, class_tag: "a".into(), role: Default::default() };
        let pairs: Vec<QaPair> = payloads.iter().enumerate().map(|(k, v)| {
            let prompt = Prompt { id: k, text: String::new(), class_tag: None };
            let response = Response { prompt_id: k, payload: ResponsePayload::Vector(v.clone()) };
            QaPair::new(prompt, response, id.clone()).unwrap()
        }).collect();
        let mut shuffled = pairs.clone();
        let len = shuffled.len();
        for i in (1..len).rev() {
            shuffled.swap(i, (perm_seed as usize).wrapping_mul(i + 3) % (i + 1));
        }
        let fresh = || {
            let state = SyntheticAgentState::new(vec![0.3, -0.7], common::params(0.2, 0.4, 0.0)).unwrap();
            SyntheticAgent::new(id.clone(), state, prompts.clone()).unwrap()
        };
        let (mut x, mut y) = (fresh(), fresh());
        x.update(&pairs, &embedder).unwrap();
        y.update(&shuffled, &embedder).unwrap();
        prop_assert_eq!(&x.state().theta, &y.state().theta);
    }
}
