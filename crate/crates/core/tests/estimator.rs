mod common;

use common::{bernoulli_graph, dense_hac, permutation};
use netcausal::autodiff::Matrix;
use netcausal::dgp::{simulate_draw, DgpParams};
use netcausal::estimator::{
    doubly_robust, estimate, hac_variance, iid_variance, EstimatorConfig, NuisanceFits, NuisanceModel, TrimBounds,
};
use netcausal::exposure::{indicators, ExposureSpec};
use netcausal::graph::generate_er;
use netcausal::rng::stream;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #[test]
    fn hac_equals_dense_double_sum(seed in 0u64..10_000, n in 1usize..60, b in 0usize..6) {
        let mut rng = stream(seed, 10);
        let g = bernoulli_graph(n, rng.random_range(0.0..0.2), &mut rng);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fast = hac_variance(&c, &g, b);
        let slow = dense_hac(&c, &g, b);
        prop_assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn zero_bandwidth_is_iid(seed in 0u64..10_000, n in 1usize..60) {
        let mut rng = stream(seed, 11);
        let g = bernoulli_graph(n, 0.1, &mut rng);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        prop_assert_eq!(hac_variance(&c, &g, 0), iid_variance(&c));
    }

    /// With a complete graph and any bandwidth ≥ 1 every pair counts, so
    /// the centered double sum vanishes.
    #[test]
    fn complete_graph_hac_vanishes(seed in 0u64..10_000, n in 2usize..30) {
        let mut rng = stream(seed, 12);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        prop_assert!(hac_variance(&c, &netcausal::Graph::complete(n), 1).abs() < 1e-12);
    }

    /// Hand-expanded contribution formula.
    #[test]
    fn doubly_robust_matches_formula(seed in 0u64..10_000, n in 1usize..40) {
        let mut rng = stream(seed, 13);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let it: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let itp: Vec<bool> = it.iter().map(|b| !b).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let q: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        let mt: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mc: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let trim = TrimBounds::default();
        let fits = NuisanceFits::new(p.clone(), mt.clone(), q.clone(), mc.clone(), trim);
        let (tau, contrib) = doubly_robust(&y, &it, &itp, &fits).unwrap();
        let mut total = 0.0;
        for i in 0..n {
            let pt = p[i].clamp(0.01, 0.99);
            let pc = q[i].clamp(0.01, 0.99);
            let want = if it[i] { (y[i] - mt[i]) / pt } else { 0.0 } + mt[i]
                - if itp[i] { (y[i] - mc[i]) / pc } else { 0.0 } - mc[i];
            prop_assert!((contrib[i] - want).abs() < 1e-12);
            total += want;
        }
        prop_assert!((tau - total / n as f64).abs() < 1e-12);
    }
}

/// Relabeling the units leaves a GLM-based estimate unchanged.
#[test]
fn glm_estimate_is_permutation_invariant() {
    for seed in 0..4 {
        let mut rng = stream(seed, 14);
        let g = generate_er(300, 5.0, &mut rng).unwrap();
        let draw = simulate_draw(g, &DgpParams::default(), &mut rng).unwrap();
        let perm = permutation(300, &mut rng);
        let gp = draw.graph.permute(&perm).unwrap();
        let (mut xp, mut dp, mut yp) = (vec![0.0; 300], vec![0u8; 300], vec![0.0; 300]);
        for i in 0..300 {
            xp[perm[i]] = draw.x[i];
            dp[perm[i]] = draw.d[i];
            yp[perm[i]] = draw.y[i];
        }
        for order in 1..=3 {
            let cfg = EstimatorConfig::own_treatment(NuisanceModel::Glm { order });
            let a = estimate(&draw.graph, &Matrix::column(&draw.x), &draw.d, &draw.y, &cfg, 0, 0, 0).unwrap();
            let b = estimate(&gp, &Matrix::column(&xp), &dp, &yp, &cfg, 0, 0, 0).unwrap();
            assert!((a.tau_hat - b.tau_hat).abs() < 1e-9, "{} vs {}", a.tau_hat, b.tau_hat);
            assert!((a.hac_se - b.hac_se).abs() < 1e-9);
            assert_eq!(a.bandwidth, b.bandwidth);
            assert_eq!(a.exposure_counts, b.exposure_counts);
        }
    }
}

/// With the outcome model equal to the observed outcomes, the correction
/// terms vanish and `τ̂` is the mean gap of the outcome models, whatever
/// the propensities.
#[test]
fn exact_outcome_model_cancels_weighting() {
    let mut rng = stream(5, 15);
    let g = bernoulli_graph(80, 0.05, &mut rng);
    let d: Vec<u8> = (0..80).map(|_| u8::from(rng.random_bool(0.4))).collect();
    let t = ExposureSpec::own_treatment(1);
    let tp = ExposureSpec::own_treatment(0);
    let (it, itp) = (indicators(&g, &d, &t), indicators(&g, &d, &tp));
    let y: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
    let other: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mt: Vec<f64> = (0..80).map(|i| if it[i] { y[i] } else { other[i] }).collect();
    let mc: Vec<f64> = (0..80).map(|i| if itp[i] { y[i] } else { other[i] + 1.0 }).collect();
    let p: Vec<f64> = (0..80).map(|_| rng.random_range(0.05..0.95)).collect();
    let q: Vec<f64> = (0..80).map(|_| rng.random_range(0.05..0.95)).collect();
    let fits = NuisanceFits::new(p, mt.clone(), q, mc.clone(), TrimBounds::default());
    let (tau, _) = doubly_robust(&y, &it, &itp, &fits).unwrap();
    let want = (0..80).map(|i| mt[i] - mc[i]).sum::<f64>() / 80.0;
    assert!((tau - want).abs() < 1e-12);
}

#[test]
fn estimates_are_reproducible_per_seed() {
    let mut rng = stream(6, 16);
    let g = generate_er(200, 5.0, &mut rng).unwrap();
    let draw = simulate_draw(g, &DgpParams::default(), &mut rng).unwrap();
    let x = Matrix::column(&draw.x);
    let mut gnn = netcausal::gnn::GnnConfig::default();
    gnn.train.epochs = 20;
    let cfg = EstimatorConfig::own_treatment(NuisanceModel::Gnn(gnn));
    let a = estimate(&draw.graph, &x, &draw.d, &draw.y, &cfg, 9, 3, 2).unwrap();
    let b = estimate(&draw.graph, &x, &draw.d, &draw.y, &cfg, 9, 3, 2).unwrap();
    let c = estimate(&draw.graph, &x, &draw.d, &draw.y, &cfg, 9, 3, 1).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.tau_hat, c.tau_hat);
}
