mod common;

use common::{random_assignment, random_cards, random_connected, random_model, rng};
use trw_core::{gen_ising_grid, IsingSpec, PairwiseMrf};

#[test]
fn score_matches_independent_resummation() {
    let mut r = rng(1);
    for _ in 0..50 {
        let g = random_connected(&mut r, 4, 0.5);
        let cards = random_cards(&mut r, 4, &[2, 3, 4]);
        let mrf = random_model(&mut r, g, cards, 3.0);
        let x = random_assignment(&mut r, &mrf.cards);
        // Edges summed in reverse, nodes last.
        let mut expected = 0.0;
        for (e, &(u, v)) in mrf.graph.edges().iter().enumerate().rev() {
            expected += mrf.edge_pot[e][x[u] * mrf.cards[v] + x[v]];
        }
        for i in (0..4).rev() {
            expected += mrf.node_pot[i][x[i]];
        }
        assert!((mrf.score(&x).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn ising_values_are_spin_products_within_range() {
    let spec = IsingSpec { rows: 4, cols: 5, alpha_field: 1.5, alpha_inter: 3.0, seed: 9 };
    let mrf = gen_ising_grid(&spec).unwrap();
    for t in &mrf.node_pot {
        assert!(t[0].abs() <= 1.5);
        assert_eq!(t[1], -t[0]);
    }
    for t in &mrf.edge_pot {
        let w = t[0];
        assert!(w.abs() <= 3.0);
        assert_eq!(t, &vec![w, -w, -w, w]);
    }
}

/// Every decile of `[-α, α]` holds its share of 10⁵ draws within three
/// binomial standard deviations.
fn assert_uniform_deciles(draws: &[f64], alpha: f64) {
    let n = draws.len() as f64;
    let mut bins = [0usize; 10];
    for &d in draws {
        assert!(d >= -alpha && d <= alpha);
        let b = (((d + alpha) / (2.0 * alpha)) * 10.0).floor() as usize;
        bins[b.min(9)] += 1;
    }
    let mean = n / 10.0;
    let sigma = (n * 0.1 * 0.9).sqrt();
    for (b, &count) in bins.iter().enumerate() {
        assert!(
            (count as f64 - mean).abs() <= 3.0 * sigma,
            "bin {b} holds {count}, expected {mean} ± {}",
            3.0 * sigma
        );
    }
}

#[test]
fn ising_draws_are_uniform_by_decile() {
    let (mut fields, mut couplings) = (Vec::new(), Vec::new());
    let mut seed = 0;
    while couplings.len() < 100_000 || fields.len() < 100_000 {
        let spec = IsingSpec { rows: 10, cols: 10, alpha_field: 1.0, alpha_inter: 9.0, seed };
        let mrf = gen_ising_grid(&spec).unwrap();
        fields.extend(mrf.node_pot.iter().map(|t| t[0]));
        couplings.extend(mrf.edge_pot.iter().map(|t| t[0]));
        seed += 1;
    }
    assert_uniform_deciles(&fields[..100_000], 1.0);
    assert_uniform_deciles(&couplings[..100_000], 9.0);
}

#[test]
fn round_trip_keeps_every_bit() {
    let mut r = rng(2);
    for _ in 0..20 {
        let g = random_connected(&mut r, 6, 0.4);
        let cards = random_cards(&mut r, 6, &[2, 3]);
        let mrf = random_model(&mut r, g, cards, 1e3);
        let back = PairwiseMrf::from_text(&mrf.to_text()).unwrap();
        assert_eq!(back, mrf);
        assert_eq!(back.to_text(), mrf.to_text());
    }
}

#[test]
fn nan_entry_is_named() {
    let mut mrf = gen_ising_grid(&IsingSpec { rows: 2, cols: 2, alpha_field: 1.0, alpha_inter: 1.0, seed: 0 })
        .unwrap();
    assert!(mrf.validate().is_empty());
    mrf.edge_pot[2][3] = f64::NAN;
    let report = mrf.validate();
    assert_eq!(report.issues.len(), 1);
    assert!(report.issues[0].contains("edge_pot[2][3]"), "{report}");
}
