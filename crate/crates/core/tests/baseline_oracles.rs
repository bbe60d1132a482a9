mod common;

use common::{brute_force, random_cards, random_model, random_tree, rng};
use trw_core::baselines::{
    exact_log_partition, exact_marginals, run_trw_mp, solve_gradient_descent, trw_mp_beliefs,
    trw_mp_sweep, GdConfig, MessageSet, MpConfig,
};
use trw_core::dual::consistency_check;
use trw_core::{gen_ising_grid, solve, uniform_tree_probs, GpConfig, IsingSpec, SolveStatus};

fn grid(seed: u64) -> trw_core::PairwiseMrf {
    gen_ising_grid(&IsingSpec { rows: 3, cols: 3, alpha_field: 1.0, alpha_inter: 1.0, seed }).unwrap()
}

#[test]
fn exact_oracle_matches_independent_enumeration() {
    let mut r = rng(31);
    for _ in 0..10 {
        let g = common::random_connected(&mut r, 6, 0.4);
        let cards = random_cards(&mut r, 6, &[2, 3]);
        let mrf = random_model(&mut r, g, cards, 2.0);
        let b = brute_force(&mrf);
        assert!((exact_log_partition(&mrf).unwrap() - b.log_z).abs() < 1e-12);
        let m = exact_marginals(&mrf).unwrap();
        for (x, y) in m.mu_node.iter().flatten().zip(b.node.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
        for e in 0..mrf.num_edges() {
            for (x, y) in m.joint_copy(&mrf.graph, 2 * e).iter().zip(&b.pair[e]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(consistency_check(&m, &mrf.graph) < 1e-12);
    }
}

#[test]
fn message_passing_is_exact_on_trees() {
    let mut r = rng(32);
    for _ in 0..5 {
        let g = random_tree(&mut r, 7);
        let cards = random_cards(&mut r, 7, &[2, 3]);
        let mrf = random_model(&mut r, g, cards, 2.0);
        let ep = uniform_tree_probs(&mrf.graph).unwrap();
        let mp = run_trw_mp(&mrf, &ep, &MpConfig::default()).unwrap();
        assert_eq!(mp.trace.status, SolveStatus::Converged);
        let b = brute_force(&mrf);
        for (x, y) in mp.marginals.mu_node.iter().flatten().zip(b.node.iter().flatten()) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn converged_messages_match_trw_gp() {
    let mrf = grid(3);
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    let mp = run_trw_mp(&mrf, &ep, &MpConfig::default()).unwrap();
    assert_eq!(mp.trace.status, SolveStatus::Converged);
    assert!(consistency_check(&mp.marginals, &mrf.graph) < 1e-6);
    let gp = solve(&mrf, &ep, &GpConfig::default()).unwrap();
    for (x, y) in mp.marginals.mu_node.iter().flatten().zip(gp.marginals.mu_node.iter().flatten()) {
        assert!((x - y).abs() < 1e-5);
    }
}

#[test]
fn unconverged_beliefs_are_inconsistent() {
    let mrf = grid(4);
    let ep = uniform_tree_probs(&mrf.graph).unwrap();
    let mut msgs = MessageSet::uniform(&mrf);
    for _ in 0..2 {
        msgs = trw_mp_sweep(&msgs, &mrf, &ep, 0.0).unwrap().0;
    }
    let beliefs = trw_mp_beliefs(&msgs, &mrf, &ep);
    assert!(consistency_check(&beliefs, &mrf.graph) > 1e-6);
}

#[test]
fn gradient_descent_agrees_with_trw_gp() {
    for seed in 0..3 {
        let mrf = grid(seed);
        let ep = uniform_tree_probs(&mrf.graph).unwrap();
        let gd = solve_gradient_descent(&mrf, &ep, &GdConfig::default()).unwrap();
        assert_eq!(gd.trace.status, SolveStatus::Converged);
        let gp = solve(&mrf, &ep, &GpConfig::default()).unwrap();
        assert!((gd.state.dual_objective() - gp.dual_objective()).abs() < 1e-6);
    }
}
