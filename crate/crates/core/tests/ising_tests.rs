use std::collections::BTreeSet;

use binquad::ising::{
    classify_state, exact_polytope_membership, is_k_safe, map_attractive, map_bruteforce,
    msp_experiment, msp_rows_csv, patterns_up_to, removed_set, two_mode_polytope,
    InfectionPattern, MspConfig, MspGraphParam, StateClass,
};
use binquad::model::{energy, IsingModel, SpinState, WeightedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(n: usize, edges: &[(usize, usize, f64)], h: &[f64]) -> IsingModel {
    IsingModel::new(WeightedGraph::new(n, edges.to_vec()).unwrap(), h.to_vec()).unwrap()
}

fn pat(nodes: &[usize], n: usize) -> InfectionPattern {
    InfectionPattern::new(nodes.iter().copied().collect::<BTreeSet<_>>(), n).unwrap()
}

fn random_attractive_model(n: usize, density: f64, rng: &mut ChaCha8Rng) -> IsingModel {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.gen_bool(density) {
                edges.push((a, b, rng.gen_range(0.0..2.0)));
            }
        }
    }
    let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    model(n, &edges, &h)
}

#[test]
fn map_two_node_cases() {
    let clamp = pat(&[0], 2);

    let m = model(2, &[(0, 1, 2.0)], &[1.0, 1.0]);
    assert_eq!(map_attractive(&m, &clamp).unwrap().spins(), &[1, 1]);
    assert_eq!(map_bruteforce(&m, &clamp).unwrap().spins(), &[1, 1]);

    let m = model(2, &[(0, 1, 0.5)], &[1.0, 1.0]);
    assert_eq!(map_attractive(&m, &clamp).unwrap().spins(), &[1, -1]);
    assert_eq!(map_bruteforce(&m, &clamp).unwrap().spins(), &[1, -1]);

    // Exact tie: fewest +1 wins.
    let m = model(2, &[(0, 1, 1.0)], &[1.0, 1.0]);
    assert_eq!(map_attractive(&m, &clamp).unwrap().spins(), &[1, -1]);
    assert_eq!(map_bruteforce(&m, &clamp).unwrap().spins(), &[1, -1]);
}

#[test]
fn map_rejects_repulsive_couplings() {
    let m = model(2, &[(0, 1, -1.0)], &[0.0, 0.0]);
    assert!(map_attractive(&m, &pat(&[0], 2)).is_err());
}

#[test]
fn map_matches_bruteforce_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..60 {
        let n = rng.gen_range(2..=10);
        let mut m = random_attractive_model(n, 0.5, &mut rng);
        if !m.is_attractive() {
            m = random_attractive_model(n, 0.5, &mut rng);
        }
        let size = rng.gen_range(1..=n);
        let mut nodes = BTreeSet::new();
        while nodes.len() < size.min(3) {
            nodes.insert(rng.gen_range(0..n));
        }
        let clamp = InfectionPattern::new(nodes, n).unwrap();
        let fast = map_attractive(&m, &clamp).unwrap();
        let slow = map_bruteforce(&m, &clamp).unwrap();
        assert_eq!(fast.spins(), slow.spins(), "trial {trial}, n = {n}");
        let e = energy(&m, &fast).unwrap();
        assert!(e.is_finite());
    }
}

#[test]
fn removed_set_cases() {
    assert!(removed_set(&SpinState::all_minus(4)).is_empty());
    let all: BTreeSet<usize> = (0..3).collect();
    assert_eq!(removed_set(&SpinState::new(vec![1, 1, 1]).unwrap()), all);
    let some: BTreeSet<usize> = [0, 2].into_iter().collect();
    assert_eq!(removed_set(&SpinState::new(vec![1, -1, 1]).unwrap()), some);
}

#[test]
fn k_safety_two_node() {
    let patterns = [pat(&[0], 2), pat(&[1], 2)];

    let m = model(2, &[(0, 1, 0.5)], &[1.0, 1.0]);
    let (safe, sizes) = is_k_safe(&m, &patterns, 1).unwrap();
    assert!(safe);
    assert_eq!(sizes, vec![1, 1]);

    let m = model(2, &[(0, 1, 2.0)], &[1.0, 1.0]);
    let (safe, sizes) = is_k_safe(&m, &patterns, 1).unwrap();
    assert!(!safe);
    assert_eq!(sizes, vec![2, 2]);

    assert!(is_k_safe(&m, &[], 1).unwrap().0);
}

#[test]
fn two_mode_triangle_constraint() {
    let g = WeightedGraph::new(3, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
    let sp = two_mode_polytope(&g, &[pat(&[0], 3)]);
    assert_eq!(sp.constraints.len(), 1);
    let c = &sp.constraints[0];
    // Cut edges of {0} are (0,1) and (0,2); off-pattern nodes are 1, 2.
    assert_eq!(c.c_j, vec![-2.0, -2.0, 0.0]);
    assert_eq!(c.c_h, vec![0.0, 2.0, 2.0]);
    assert_eq!(c.rhs, 0.0);

    // Safety requires h1 + h2 ≥ J01 + J02.
    let safe = model(3, &[(0, 1, 0.4), (0, 2, 0.4), (1, 2, 5.0)], &[0.0, 0.5, 0.5]);
    assert!(c.margin(&safe) >= 0.0);
    let unsafe_m = model(3, &[(0, 1, 2.0), (0, 2, 2.0), (1, 2, 0.0)], &[0.0, 0.5, 0.5]);
    assert!(c.margin(&unsafe_m) < 0.0);
}

#[test]
fn two_mode_full_pattern_is_trivial() {
    let g = WeightedGraph::new(3, vec![(0, 1, 1.0)]).unwrap();
    let sp = two_mode_polytope(&g, &[pat(&[0, 1, 2], 3)]);
    let c = &sp.constraints[0];
    assert!(c.c_j.iter().all(|&v| v == 0.0));
    assert!(c.c_h.iter().all(|&v| v == 0.0));
    assert_eq!(c.rhs, 0.0);
}

#[test]
fn pattern_counts_follow_binomials() {
    // Σ_{k'=1..k} C(n, k').
    assert_eq!(patterns_up_to(20, 1).len(), 20);
    assert_eq!(patterns_up_to(20, 2).len(), 210);
    assert_eq!(patterns_up_to(20, 3).len(), 1350);
    assert_eq!(patterns_up_to(20, 4).len(), 6195);
    let g = WeightedGraph::new(5, vec![(0, 1, 1.0)]).unwrap();
    let sp = two_mode_polytope(&g, &patterns_up_to(5, 2));
    assert_eq!(sp.constraints.len(), 5 + 10);
}

#[test]
fn exact_membership_triangle() {
    let low = model(3, &[(0, 1, 0.1), (0, 2, 0.1), (1, 2, 0.1)], &[1.0, 1.0, 1.0]);
    assert!(exact_polytope_membership(&low, 1).unwrap());

    let high = model(3, &[(0, 1, 2.0), (0, 2, 2.0), (1, 2, 2.0)], &[1.0, 1.0, 1.0]);
    assert!(!exact_polytope_membership(&high, 1).unwrap());
}

#[test]
fn exact_membership_matches_k_safety() {
    // For k = 1 on continuous random models (ties have measure zero),
    // strict membership and MAP 1-safety coincide.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut agreements = 0;
    for _ in 0..200 {
        let m = model(
            3,
            &[
                (0, 1, rng.gen_range(0.0..2.0)),
                (0, 2, rng.gen_range(0.0..2.0)),
                (1, 2, rng.gen_range(0.0..2.0)),
            ],
            &[
                rng.gen_range(0.1..1.5),
                rng.gen_range(0.1..1.5),
                rng.gen_range(0.1..1.5),
            ],
        );
        let member = exact_polytope_membership(&m, 1).unwrap();
        let (safe, _) = is_k_safe(&m, &patterns_up_to(3, 1), 1).unwrap();
        assert_eq!(member, safe);
        agreements += 1;
    }
    assert_eq!(agreements, 200);
}

#[test]
fn exact_membership_guards_large_n() {
    let m = random_attractive_model(13, 0.3, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(exact_polytope_membership(&m, 1).is_err());
}

#[test]
fn classify_cases() {
    let p = pat(&[0], 3);
    let safe = SpinState::new(vec![1, -1, -1]).unwrap();
    let all = SpinState::new(vec![1, 1, 1]).unwrap();
    let mixed = SpinState::new(vec![1, 1, -1]).unwrap();
    assert_eq!(classify_state(&safe, &p), StateClass::PolarizedSafe);
    assert_eq!(classify_state(&all, &p), StateClass::PolarizedAllInfected);
    assert_eq!(classify_state(&mixed, &p), StateClass::Mixed);
}

#[test]
fn coupling_monotonicity_never_shrinks_removed_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..40 {
        let n = rng.gen_range(3..=8);
        let m = random_attractive_model(n, 0.6, &mut rng);
        if m.graph().edge_count() == 0 {
            continue;
        }
        let clamp = pat(&[rng.gen_range(0..n)], n);
        let before = removed_set(&map_attractive(&m, &clamp).unwrap());

        let bump = rng.gen_range(0..m.graph().edge_count());
        let edges: Vec<(usize, usize, f64)> = m
            .graph()
            .edges()
            .iter()
            .enumerate()
            .map(|(e, &(a, b, j))| (a, b, if e == bump { j + 1.0 } else { j }))
            .collect();
        let m2 = model(n, &edges, m.h());
        let after = removed_set(&map_attractive(&m2, &clamp).unwrap());
        assert!(before.is_subset(&after), "removed set shrank: {before:?} -> {after:?}");
    }
}

#[test]
fn msp_decoupled_nodes_are_all_safe() {
    let config = MspConfig {
        j_range: (0.0, 1e-12),
        ..MspConfig::new(8, MspGraphParam::EdgeCounts(vec![0]), 30, 1)
    };
    let rows = msp_experiment(&config).unwrap();
    assert_eq!(rows[0].mixed_count, 0);
}

#[test]
fn msp_strong_couplings_are_all_infected() {
    // Dense graph with enormous J: every MAP state is all +1 (no Mixed).
    let config = MspConfig {
        j_range: (50.0, 51.0),
        ..MspConfig::new(8, MspGraphParam::EdgeCounts(vec![28]), 30, 2)
    };
    let rows = msp_experiment(&config).unwrap();
    assert_eq!(rows[0].mixed_count, 0);
}

#[test]
fn msp_is_reproducible_and_csv_shaped() {
    let config = MspConfig::new(10, MspGraphParam::EdgeCounts(vec![10, 20]), 25, 7);
    let a = msp_experiment(&config).unwrap();
    let b = msp_experiment(&config).unwrap();
    let csv_a = msp_rows_csv(&a);
    assert_eq!(csv_a, msp_rows_csv(&b));
    assert!(csv_a.starts_with("param,samples,mixed_count,proportion,seed\n"));
    assert_eq!(csv_a.lines().count(), 3);
}

#[test]
fn msp_regular_graphs_run() {
    let config = MspConfig::new(8, MspGraphParam::Degrees(vec![2, 3]), 10, 3);
    let rows = msp_experiment(&config).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.proportion >= 0.0 && r.proportion <= 1.0);
    }
}

#[test]
fn infection_pattern_validation() {
    assert!(InfectionPattern::new(BTreeSet::new(), 3).is_err());
    assert!(InfectionPattern::new([5].into_iter().collect(), 3).is_err());
    assert!(InfectionPattern::single(2, 3).is_ok());
}
