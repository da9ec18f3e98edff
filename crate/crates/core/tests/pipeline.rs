use proptest::prelude::*;
use spillover_core::equilibrium::{phi, solve_mfg};
use spillover_core::experiments::{run_ensemble, run_sweep, EnsembleSpec, ProbLaw, SweepSpec};
use spillover_core::microsim::{empirical_vs_mfg, equilibrium_policy, simulate, SimConfig};
use spillover_core::model::{Grid, ModelParams, ParamName, PriceMode, SolverOptions};
use spillover_core::network::{canonical_network, random_network, spillover_matrix, SectorWeights, SpilloverNetwork};

fn grid(params: &ModelParams, n: usize) -> Grid {
    Grid::for_params(n, params).unwrap()
}

#[test]
fn network_document_round_trip_solves_identically() {
    let params = ModelParams::baseline();
    let g = grid(&params, 101);
    let opts = SolverOptions::default();
    let net = random_network(4, 0.5, 2.0, SectorWeights::RandomSimplex, 17).unwrap();
    let reloaded = SpilloverNetwork::from_json(&net.to_json()).unwrap();
    let a = solve_mfg(&params, &net, &g, &opts, None, None).unwrap();
    let b = solve_mfg(&params, &reloaded, &g, &opts, None, None).unwrap();
    assert_eq!(a.k_star, b.k_star);
    assert_eq!(a.price, b.price);
}

#[test]
fn equilibrium_is_a_fixed_point_of_phi() {
    let params = ModelParams::baseline();
    let g = grid(&params, 201);
    let opts = SolverOptions::default();
    let net = canonical_network(5).unwrap();
    let sol = solve_mfg(&params, &net, &g, &opts, None, None).unwrap();
    let image = phi(&sol.k_star, sol.price, &params, &net, &g, &opts).unwrap();
    let gap: f64 = image.iter().zip(&sol.k_star).map(|(a, b)| (a - b).abs()).sum();
    assert!(gap <= 10.0 * opts.fixed_point_tol, "gap {gap}");
    // the sector with no incoming edge receives nothing
    assert_eq!(sol.k_star[0], 0.0);
}

#[test]
fn warm_started_solve_reaches_the_same_equilibrium() {
    let params = ModelParams::baseline();
    let g = grid(&params, 201);
    let opts = SolverOptions::default();
    let net = canonical_network(6).unwrap();
    let cold = solve_mfg(&params, &net, &g, &opts, None, None).unwrap();
    let warm = solve_mfg(&params, &net, &g, &opts, Some(&cold.k_star), Some(cold.price)).unwrap();
    assert!(warm.iterations <= 2, "{} iterations", warm.iterations);
    for (a, b) in cold.k_star.iter().zip(&warm.k_star) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn sweep_failure_is_marked_and_the_sweep_continues() {
    let params = ModelParams::baseline();
    let mut spec = SweepSpec {
        param: ParamName::Sigma,
        values: vec![1.0, 0.01, 2.0],
        params,
        network: canonical_network(1).unwrap(),
        grid: grid(&params, 101),
        opts: SolverOptions::default(),
    };
    // sigma = 0.01 violates the cell-Peclet condition on this grid
    let res = run_sweep(&spec).unwrap();
    assert_eq!(res.failures(), 1);
    assert!(res.points[1].outcome.is_err());
    assert!(res.points[0].outcome.is_ok() && res.points[2].outcome.is_ok());
    assert!(res.to_csv().contains("0.01,1,NaN"));

    // values outside the parameter's domain are rejected before any solve
    spec.param = ParamName::Gamma;
    spec.values = vec![0.4, 1.5];
    assert!(run_sweep(&spec).is_err());
}

#[test]
fn ensemble_records_are_reproducible_and_bounded() {
    let params = ModelParams::baseline().with_price_mode(PriceMode::Fixed(1.0)).unwrap();
    let spec = EnsembleSpec {
        n_runs: 8,
        n_sectors: 4,
        connection_prob: ProbLaw::Uniform { low: 0.2, high: 0.8 },
        weight_max: 2.0,
        sector_weights: SectorWeights::Equal,
        seed: 5,
        params,
        grid: grid(&params, 101),
        opts: SolverOptions::default(),
    };
    let a = run_ensemble(&spec).unwrap();
    let b = run_ensemble(&spec).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    for run in &a.runs {
        let zeta = spillover_matrix(&run.network, params.z_max()).zeta;
        for r in a.records.iter().filter(|r| r.run == run.run) {
            assert!(r.k_star >= 0.0 && r.k_star <= zeta * (1.0 + 1e-12));
            assert_eq!(r.price, 1.0);
        }
    }
}

#[test]
fn particles_follow_the_equilibrium_on_a_chain() {
    let params = ModelParams::baseline();
    let g = grid(&params, 201);
    let net = canonical_network(2).unwrap();
    let sol = solve_mfg(&params, &net, &g, &SolverOptions::default(), None, None).unwrap();
    let policies: Vec<_> = (0..3).map(|s| equilibrium_policy(&sol, s, &params).unwrap()).collect();
    let mut cfg = SimConfig::new(vec![2000; 3], 30.0, 0.01, 3);
    cfg.burn_in = 10.0;
    let traj = simulate(&cfg, &net, &params, &policies).unwrap();
    let report = empirical_vs_mfg(&traj, &sol);
    assert!(report.applicable);
    for s in &report.sectors {
        assert!(s.wasserstein < 0.08, "sector {} W1 {}", s.sector, s.wasserstein);
    }
    // sector A has no spillovers and therefore no link-induced bias
    assert!(report.sectors[0].wasserstein < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn phi_maps_into_the_box(seed in 0u64..1000, l in 1usize..5, prob in 0.0f64..1.0, frac in prop::collection::vec(0.0f64..1.0, 4)) {
        let params = ModelParams::baseline();
        let g = grid(&params, 101);
        let net = random_network(l, prob, 3.0, SectorWeights::RandomSimplex, seed).unwrap();
        let zeta = spillover_matrix(&net, params.z_max()).zeta;
        let k: Vec<f64> = frac[..l].iter().map(|f| f * zeta).collect();
        let image = phi(&k, 1.0, &params, &net, &g, &SolverOptions::default()).unwrap();
        for v in image {
            prop_assert!(v >= 0.0 && v <= zeta * (1.0 + 1e-12));
        }
    }
}
