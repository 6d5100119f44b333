//! Audited end-to-end runs on random Gaussian mixtures.

use explainable_kmeans::bench::gaussian_mixture;
use explainable_kmeans::{
    kmeanspp_lloyd, post_process, verify_explainable, BuildOptions, EngineChoice, SeedConfig,
    ThetaRule,
};

fn run(d: usize, engine: EngineChoice, rule: ThetaRule, instances: u64) {
    let opts = BuildOptions {
        theta_rule: rule,
        audit: true,
        trace: false,
    };
    for seed in 0..instances {
        let k = 2 + (seed as usize * 7) % 19;
        let n = 20 + (seed as usize * 37) % 181;
        let spread = [0.5, 2.0, 8.0][seed as usize % 3];
        let ds = gaussian_mixture(n, k, d, spread, seed).unwrap();
        let cfg = SeedConfig {
            rng_seed: seed,
            restarts: 2,
            ..SeedConfig::default()
        };
        let cl = kmeanspp_lloyd(&ds, k, &cfg).unwrap();
        let out = post_process(&ds, &cl, engine, &opts)
            .unwrap_or_else(|e| panic!("seed {seed} (n={n}, k={k}, d={d}): {e}"));
        assert!(out.audit.ok(), "seed {seed}: {:?}", out.audit.failures);
        assert!(out.audit.checks > 0);
        assert!(out.tree.leaf_count() <= k);
        assert!(verify_explainable(&ds, &out.clustering, &out.tree).ok);
        assert_eq!(out.clustering.centroids(), cl.centroids());
    }
}

#[test]
fn planar_engine() {
    run(2, EngineChoice::TwoD, ThetaRule::First, 30);
}

#[test]
fn general_engine_in_the_plane() {
    run(2, EngineChoice::HighDim, ThetaRule::First, 30);
}

#[test]
fn general_engine_3d() {
    run(3, EngineChoice::HighDim, ThetaRule::First, 30);
}

#[test]
fn general_engine_5d() {
    run(5, EngineChoice::HighDim, ThetaRule::First, 30);
}

#[test]
fn min_lhs_rule() {
    run(2, EngineChoice::TwoD, ThetaRule::MinLhs, 15);
    run(4, EngineChoice::HighDim, ThetaRule::MinLhs, 15);
}
