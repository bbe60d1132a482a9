mod common;

use common::{random_assignment, random_cards, random_connected, random_model, random_state, rng};
use rand::Rng;
use trw_core::dual::optimality_residual;
use trw_core::trwgp::{reparam_product, step_size, update_edge_beta, update_edge_marginal_form};
use trw_core::{gen_ising_grid, uniform_tree_probs, GpConfig, GpSolver, IsingSpec, PairwiseMrf, PrimalMarginals};

fn max_gap(a: &PrimalMarginals, b: &PrimalMarginals) -> f64 {
    a.mu_node
        .iter()
        .chain(&a.mu_cond)
        .flatten()
        .zip(b.mu_node.iter().chain(&b.mu_cond).flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn beta_and_marginal_forms_agree() {
    let mut r = rng(21);
    for _ in 0..100 {
        let n = r.gen_range(3..=6);
        let g = random_connected(&mut r, n, 0.4);
        let cards = random_cards(&mut r, n, &[2, 3]);
        let mrf = random_model(&mut r, g, cards, 2.0);
        let ep = uniform_tree_probs(&mrf.graph).unwrap();
        let mut state = random_state(&mut r, &mrf, &ep, 1.5);
        let e = r.gen_range(0..mrf.num_edges());
        let eps = step_size(&ep, &mrf.graph, e, 0.5).unwrap();
        let before = state.to_primal();
        let via_marginals = update_edge_marginal_form(&before, &mrf.graph, &ep, e, eps).unwrap();
        update_edge_beta(&mut state, e, eps).unwrap();
        let via_beta = state.to_primal();
        assert!(max_gap(&via_marginals, &via_beta) < 1e-10);
        for (d, t) in via_marginals.mu_cond.iter().enumerate() {
            let (_, c) = mrf.graph.directed_edge(d);
            for row in t.chunks(mrf.cards[c]) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn initial_marginals_on_zero_model_are_fixed() {
    let mrf = PairwiseMrf::zeros(trw_core::Graph::grid(2, 3), vec![2; 6]).unwrap();
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    let m = PrimalMarginals::uniform(&mrf.graph, &mrf.cards);
    for e in 0..mrf.num_edges() {
        let eps = step_size(&ep, &mrf.graph, e, 0.5).unwrap();
        let next = update_edge_marginal_form(&m, &mrf.graph, &ep, e, eps).unwrap();
        assert!(max_gap(&m, &next) < 1e-15);
    }
}

#[test]
fn delta_matches_recomputed_objective_and_is_local() {
    let spec = IsingSpec { rows: 3, cols: 3, alpha_field: 1.0, alpha_inter: 2.0, seed: 5 };
    let mrf = gen_ising_grid(&spec).unwrap();
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    let mut r = rng(22);
    let mut state = random_state(&mut r, &mrf, &ep, 1.0);
    for e in 0..mrf.num_edges() {
        let (u, v) = mrf.graph.edge(e);
        let eps = step_size(&ep, &mrf.graph, e, 0.5).unwrap();
        let f0 = state.dual_objective();
        let m0 = state.to_primal();
        let upd = update_edge_beta(&mut state, e, eps).unwrap();
        let f1 = state.dual_objective();
        let m1 = state.to_primal();
        assert!(upd.delta >= 0.0);
        assert!((upd.delta - (f0 - f1)).abs() < 1e-10);
        assert!(state.verify_cache() == 0.0);
        for i in 0..mrf.num_nodes() {
            if i != u && i != v {
                assert_eq!(m0.mu_node[i], m1.mu_node[i]);
            }
        }
        for d in 0..mrf.graph.num_directed() {
            if d / 2 != e {
                assert_eq!(m0.mu_cond[d], m1.mu_cond[d]);
            }
        }
    }
}

#[test]
fn zero_delta_exactly_at_edge_fixed_points() {
    let spec = IsingSpec { rows: 3, cols: 3, alpha_field: 1.0, alpha_inter: 1.0, seed: 6 };
    let mrf = gen_ising_grid(&spec).unwrap();
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    // Far from the optimum every edge with a visible discrepancy descends.
    let mut r = rng(23);
    let mut state = random_state(&mut r, &mrf, &ep, 1.0);
    for e in 0..mrf.num_edges() {
        let eps = step_size(&ep, &mrf.graph, e, 0.5).unwrap();
        let upd = update_edge_beta(&mut state, e, eps).unwrap();
        if upd.residual_before > 1e-6 {
            assert!(upd.delta > 0.0);
        }
    }
    // At the optimum every edge residual is tiny and so is every decrease.
    let cfg = GpConfig { tol: 1e-13, record_updates: false, ..GpConfig::default() };
    let sol = GpSolver::new(&mrf, &ep, cfg).unwrap().run().unwrap();
    let mut state = sol.state;
    for e in 0..mrf.num_edges() {
        let eps = step_size(&ep, &mrf.graph, e, 0.5).unwrap();
        let upd = update_edge_beta(&mut state, e, eps).unwrap();
        assert!(upd.residual_before < 1e-12);
        assert!(upd.delta.abs() < 1e-12);
    }
}

#[test]
fn reparametrization_tracks_the_dual() {
    let spec = IsingSpec { rows: 3, cols: 4, alpha_field: 1.0, alpha_inter: 2.0, seed: 7 };
    let mrf = gen_ising_grid(&spec).unwrap();
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    let mut r = rng(24);
    let xs: Vec<Vec<usize>> = (0..50).map(|_| random_assignment(&mut r, &mrf.cards)).collect();
    let cfg = GpConfig { record_updates: false, ..GpConfig::default() };
    let mut solver = GpSolver::new(&mrf, &ep, cfg).unwrap();
    let offset = |m: &PrimalMarginals| -> Vec<f64> {
        xs.iter()
            .map(|x| mrf.score(x).unwrap() - reparam_product(m, &mrf.graph, &ep, x).unwrap())
            .collect()
    };
    let mut last = offset(&solver.state().to_primal());
    let mut last_total = 0.0;
    for _ in 0..10 {
        solver.sweep().unwrap();
        let now = offset(&solver.state().to_primal());
        let spread = now.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - now.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(spread < 1e-9);
        let total = solver.trace().total_delta;
        assert!(((now[0] - last[0]) + (total - last_total)).abs() < 1e-9);
        // The offset is the dual objective itself.
        assert!((now[0] - solver.state().dual_objective()).abs() < 1e-9);
        last = now;
        last_total = total;
    }
}

#[test]
fn uniform_marginals_give_constant_product() {
    let mrf = PairwiseMrf::zeros(trw_core::Graph::cycle(4), vec![2, 3, 2, 2]).unwrap();
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    let m = PrimalMarginals::uniform(&mrf.graph, &mrf.cards);
    let mut r = rng(25);
    let first = reparam_product(&m, &mrf.graph, &ep, &[0, 0, 0, 0]).unwrap();
    for _ in 0..20 {
        let x = random_assignment(&mut r, &mrf.cards);
        assert!((reparam_product(&m, &mrf.graph, &ep, &x).unwrap() - first).abs() < 1e-12);
    }
}

#[test]
fn converged_grid_has_small_residual_and_bounds_log_z() {
    let spec = IsingSpec { rows: 3, cols: 3, alpha_field: 1.0, alpha_inter: 1.0, seed: 8 };
    let mrf = gen_ising_grid(&spec).unwrap();
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    let sol = trw_core::solve(&mrf, &ep, &GpConfig::default()).unwrap();
    assert_eq!(sol.trace.status, trw_core::SolveStatus::Converged);
    assert!(optimality_residual(&sol.marginals, &mrf.graph) < 1e-8);
    assert!(sol.dual_objective() >= common::brute_force(&mrf).log_z);
    let duals: Vec<f64> = sol.trace.records.iter().filter_map(|r| r.dual_obj).collect();
    assert!(duals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}
