use binquad::lowrank::{bm_solve, gw_round, min_embedding_width, SolveOptions};
use binquad::model::{QuadraticProblem, SpinState};
use binquad::rankmin::{
    matrix_to_vec, numerical_rank, rank_descent, vec_to_matrix, vectorized_grad,
    RankMinOptions, Surrogate, UpperTriState,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd_unit_diag(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let v = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
    let f = binquad::lowrank::Factor::from_rows_normalized(v).unwrap();
    f.gram()
}

#[test]
fn vec_to_matrix_layout() {
    let s = UpperTriState::new(3, vec![0.2, 0.3, 0.4]).unwrap();
    let m = vec_to_matrix(&s);
    let expected = DMatrix::from_row_slice(
        3,
        3,
        &[1.0, 0.2, 0.3, 0.2, 1.0, 0.4, 0.3, 0.4, 1.0],
    );
    assert_eq!(m, expected);
}

#[test]
fn zero_vector_gives_identity() {
    let s = UpperTriState::new(4, vec![0.0; 6]).unwrap();
    assert_eq!(vec_to_matrix(&s), DMatrix::identity(4, 4));
}

#[test]
fn state_length_checked() {
    assert!(UpperTriState::new(4, vec![0.0; 5]).is_err());
}

proptest! {
    #[test]
    fn vec_matrix_round_trip(x in proptest::collection::vec(-1.0f64..1.0, 10)) {
        let s = UpperTriState::new(5, x).unwrap();
        let back = matrix_to_vec(&vec_to_matrix(&s));
        prop_assert_eq!(s, back);
    }
}

#[test]
fn index_map_is_row_major() {
    assert_eq!(UpperTriState::index(4, 0, 1), 0);
    assert_eq!(UpperTriState::index(4, 0, 3), 2);
    assert_eq!(UpperTriState::index(4, 1, 2), 3);
    assert_eq!(UpperTriState::index(4, 2, 3), 5);
}

#[test]
fn phi_singular_values() {
    let sv = Surrogate::SingularValue { eps: 0.005, q: 0.8 };
    assert_eq!(sv.value(&DMatrix::zeros(3, 3)), 0.0);

    let n = 5;
    let expected = n as f64 * (1.0 + 0.005f64.powf(0.8)) / 1.005;
    let got = sv.value(&DMatrix::identity(n, n));
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    assert!((got / n as f64 - 1.00938).abs() < 1e-4);
}

#[test]
fn phi_tracks_rank_on_low_rank_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sv = Surrogate::SingularValue { eps: 0.005, q: 0.8 };
    for _ in 0..10 {
        let x = random_psd_unit_diag(8, 2, &mut rng);
        let rank = numerical_rank(&x, 1e-4) as f64;
        let phi = sv.value(&x);
        assert!((phi - rank).abs() < 0.1, "phi {phi} vs rank {rank}");
    }
}

#[test]
fn schatten_values() {
    let sc = Surrogate::Schatten { eps: 0.04, p: 0.5 };
    let n = 4;
    let expected = n as f64 * 1.04f64.powf(0.25);
    assert!((sc.value(&DMatrix::identity(n, n)) - expected).abs() < 1e-12);
}

fn finite_diff_matches(surrogate: Surrogate) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let x = random_psd_unit_diag(6, 3, &mut rng);
        let g = surrogate.grad(&x);
        let h = 1e-6;
        for i in 0..6 {
            for j in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                if i == j {
                    xp[(i, i)] += h;
                    xm[(i, i)] -= h;
                } else {
                    xp[(i, j)] += h;
                    xp[(j, i)] += h;
                    xm[(i, j)] -= h;
                    xm[(j, i)] -= h;
                }
                // Symmetric perturbation touches two entries off the
                // diagonal, so the directional derivative is g_ij + g_ji.
                let fd = (surrogate.value(&xp) - surrogate.value(&xm)) / (2.0 * h);
                let analytic = if i == j { g[(i, i)] } else { g[(i, j)] + g[(j, i)] };
                let scale = analytic.abs().max(1e-3);
                assert!(
                    (fd - analytic).abs() / scale < 1e-4,
                    "fd {fd} vs grad {analytic} at ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn phi_singular_grad_matches_finite_differences() {
    finite_diff_matches(Surrogate::SingularValue { eps: 0.01, q: 0.8 });
}

#[test]
fn schatten_grad_matches_finite_differences() {
    finite_diff_matches(Surrogate::Schatten { eps: 0.01, p: 0.5 });
}

#[test]
fn gradient_symmetric_and_diag_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let sv = Surrogate::SingularValue { eps: 0.005, q: 0.8 };
    for _ in 0..20 {
        let x = random_psd_unit_diag(7, 3, &mut rng);
        let g = sv.grad(&x);
        assert!((&g - g.transpose()).norm() < 1e-12);
        for i in 0..7 {
            assert!(g[(i, i)] >= -1e-12);
        }
    }
}

#[test]
fn safe_step_values() {
    let sv = Surrogate::SingularValue { eps: 0.005, q: 0.8 };
    assert!((sv.safe_step() - 1.2322e-3).abs() < 1e-7);

    let sc = Surrogate::Schatten { eps: 1.0, p: 0.3 };
    assert!((sc.safe_step() - 1.0 / 0.6).abs() < 1e-12);
}

#[test]
fn surrogate_parameter_validation() {
    assert!(Surrogate::SingularValue { eps: 0.0, q: 0.5 }.validate().is_err());
    assert!(Surrogate::SingularValue { eps: 0.1, q: 1.5 }.validate().is_err());
    assert!(Surrogate::Schatten { eps: 0.1, p: 0.0 }.validate().is_err());
    assert!(Surrogate::Schatten { eps: 0.1, p: 1.0 }.validate().is_ok());
}

#[test]
fn psd_preserved_at_certified_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let surrogates = [
        Surrogate::SingularValue { eps: 0.005, q: 0.8 },
        Surrogate::Schatten { eps: 0.01, p: 0.5 },
    ];
    for s in surrogates {
        for _ in 0..50 {
            let n = rng.gen_range(3..=10);
            let x = random_psd_unit_diag(n, rng.gen_range(2..=n), &mut rng);
            let g = vectorized_grad(&s.grad(&x));
            let alpha = s.safe_step();
            let mut coords = matrix_to_vec(&x).coords().to_vec();
            for (c, gi) in coords.iter_mut().zip(&g) {
                *c -= alpha * gi;
            }
            let stepped = vec_to_matrix(&UpperTriState::new(n, coords).unwrap());
            let min_eig = stepped.symmetric_eigen().eigenvalues.min();
            assert!(min_eig >= -1e-8, "min eig {min_eig} after certified step");
        }
    }
}

#[test]
fn rank_one_start_is_fixed_point() {
    let n = 6;
    let x = SpinState::from_mask(n, 0b101010);
    let x0 = DMatrix::from_fn(n, n, |i, j| f64::from(x.get(i) * x.get(j)));
    let p = QuadraticProblem::from_parts(n, vec![0.0; n], vec![(0, 1, 1.0)]).unwrap();
    let t = p.trace_product(&x0);
    let eps = 0.005;
    let q = 0.8;
    let opts = RankMinOptions::new(
        Surrogate::SingularValue { eps, q },
        t - 1.0,
        t + 1.0,
    );
    let (xf, _) = rank_descent(&p, &x0, &opts).unwrap();
    assert_eq!(numerical_rank(&xf, 1e-4), 1);
    // Rank-one spectrum is (n, 0, ..., 0); the surrogate sits at its floor.
    let nf = n as f64;
    let floor = (1.0 + eps.powf(q)) * nf * nf / (nf * nf + eps);
    let phi = opts.surrogate.value(&xf);
    assert!((phi - floor).abs() / floor < 1e-3, "phi {phi} vs floor {floor}");
}

#[test]
fn descent_respects_box_and_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let n = 8;
        let mut off = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                off.push((i, j, rng.gen_range(0.0..1.0)));
            }
        }
        let p = QuadraticProblem::from_parts(n, vec![0.0; n], off).unwrap();
        let f = bm_solve(&p, min_embedding_width(n), &SolveOptions::default()).unwrap();
        let x0 = f.gram();
        let upper = p.trace_product(&x0);
        let (_, wstar) = gw_round(&p, &f, 1000, 0).unwrap();
        let opts = RankMinOptions::new(
            Surrogate::Schatten { eps: 0.01, p: 0.1 },
            wstar.min(upper),
            upper,
        );
        let (xf, _) = rank_descent(&p, &x0, &opts).unwrap();
        let t = p.trace_product(&xf);
        assert!(t >= opts.lower - 1e-9 && t <= opts.upper + 1e-9);
        let min_eig = xf.clone().symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-8);
        for i in 0..n {
            assert!((xf[(i, i)] - 1.0).abs() < 1e-9);
        }
        assert!(numerical_rank(&xf, 1e-4) <= numerical_rank(&x0, 1e-4));
    }
}

#[test]
fn descent_rejects_infeasible_start() {
    let p = QuadraticProblem::from_parts(3, vec![0.0; 3], vec![(0, 1, 1.0)]).unwrap();
    let opts = RankMinOptions::new(Surrogate::Schatten { eps: 0.01, p: 0.5 }, 10.0, 20.0);
    // tr(AX0) = 2 for the all-ones X0, outside [10, 20].
    let x0 = DMatrix::from_element(3, 3, 1.0);
    assert!(rank_descent(&p, &x0, &opts).is_err());
}

#[test]
fn numerical_rank_values() {
    assert_eq!(numerical_rank(&DMatrix::identity(3, 3), 1e-4), 3);
    assert_eq!(numerical_rank(&DMatrix::from_element(3, 3, 1.0), 1e-4), 1);

    let x = SpinState::from_mask(4, 0b0110);
    let mut xx = DMatrix::from_fn(4, 4, |i, j| f64::from(x.get(i) * x.get(j)));
    xx[(0, 1)] += 1e-6;
    xx[(1, 0)] += 1e-6;
    assert_eq!(numerical_rank(&xx, 1e-4), 1);
}

#[test]
fn vector_gradient_doubles_off_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let x = random_psd_unit_diag(5, 3, &mut rng);
    let s = Surrogate::SingularValue { eps: 0.01, q: 0.8 };
    let g = s.grad(&x);
    let gv = vectorized_grad(&g);
    // Finite differences in the vector parametrization.
    let coords = matrix_to_vec(&x);
    let h = 1e-6;
    for d in 0..coords.coords().len() {
        let mut cp = coords.coords().to_vec();
        let mut cm = cp.clone();
        cp[d] += h;
        cm[d] -= h;
        let vp = s.value(&vec_to_matrix(&UpperTriState::new(5, cp).unwrap()));
        let vm = s.value(&vec_to_matrix(&UpperTriState::new(5, cm).unwrap()));
        let fd = (vp - vm) / (2.0 * h);
        assert!(
            (fd - gv[d]).abs() / gv[d].abs().max(1e-3) < 1e-4,
            "entry {d}: fd {fd} vs {}",
            gv[d]
        );
    }
}
