mod common;

use common::{check_invariants, dual_qp_oracle, primal_grid_oracle, random_problem, rel_close, rows};
use fedsvm_core::svm::{fit_binary, fit_ovo, ClassSample, SvmProblem, DEFAULT_GAP_TOL};
use fedsvm_core::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem(rows: &[&[f64]], labels: &[f64], lambda: f64) -> SvmProblem {
    let d = rows[0].len();
    let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
    SvmProblem::unweighted(Tensor::matrix(rows.len(), d, data).unwrap(), labels.to_vec(), lambda).unwrap()
}

#[test]
fn analytic_fixtures_match_both_oracles() {
    let fixtures = [
        problem(&[&[1.0], &[-1.0]], &[1.0, -1.0], 1.0),
        problem(
            &[&[1.0, 1.0], &[1.0, -1.0], &[-1.0, 1.0], &[-1.0, -1.0]],
            &[1.0, 1.0, -1.0, -1.0],
            10.0,
        ),
        problem(&[&[1.0], &[-1.0]], &[1.0, -1.0], 1e-6),
    ];
    for p in &fixtures {
        let fit = fit_binary(p, 0, DEFAULT_GAP_TOL).unwrap();
        check_invariants(p, &fit).unwrap();
        let x = rows(&p.samples);
        let (_, dual) = dual_qp_oracle(&x, &p.labels, p.lambda);
        let grid = primal_grid_oracle(&x, &p.labels, p.lambda);
        assert!(rel_close(fit.primal_value, dual, 1e-4), "{} vs {dual}", fit.primal_value);
        assert!(rel_close(fit.primal_value, grid, 1e-4), "{} vs {grid}", fit.primal_value);
    }
}

#[test]
fn tiny_lambda_gives_vanishing_normal() {
    let fit = fit_binary(&problem(&[&[1.0], &[-1.0]], &[1.0, -1.0], 1e-6), 0, DEFAULT_GAP_TOL).unwrap();
    assert!(fit.normal.norm() < 1e-5);
    assert!(fit.slacks.iter().all(|&z| (z - 1.0).abs() < 1e-5));
}

#[test]
fn square_fixture_margins() {
    let p = problem(
        &[&[1.0, 1.0], &[1.0, -1.0], &[-1.0, 1.0], &[-1.0, -1.0]],
        &[1.0, 1.0, -1.0, -1.0],
        10.0,
    );
    let fit = fit_binary(&p, 0, DEFAULT_GAP_TOL).unwrap();
    assert!((fit.normal.data()[0] - 1.0).abs() < 1e-6 && fit.normal.data()[1].abs() < 1e-6);
    assert!(fit.bias.abs() < 1e-6);
    for i in 0..4 {
        let margin = p.labels[i] * (common::dot(fit.normal.data(), p.samples.row(i)) + fit.bias);
        assert!((margin - 1.0).abs() < 1e-6);
    }
}

#[test]
fn random_problems_match_dual_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 60 {
        let p = random_problem(&mut rng);
        let fit = match fit_binary(&p, 0, DEFAULT_GAP_TOL) {
            Ok(f) => f,
            Err(_) => continue,
        };
        check_invariants(&p, &fit).unwrap();
        let (_, dual) = dual_qp_oracle(&rows(&p.samples), &p.labels, p.lambda);
        assert!(rel_close(fit.dual_value, dual, 1e-4), "dual {} vs oracle {dual}", fit.dual_value);
        assert!(fit.dual_trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(fit.num_support_vectors() >= 2);
        checked += 1;
    }
}

#[test]
fn interior_point_is_not_a_support_vector() {
    // three points per class; (3, 0) sits behind the class-0 margin
    let samples = |pts: &[(f64, f64)], client0: usize| -> Vec<ClassSample> {
        pts.iter()
            .enumerate()
            .map(|(i, &(a, b))| ClassSample {
                client: client0 + i,
                embedding: Tensor::vector(vec![a, b]).unwrap(),
                weight: 1.0,
            })
            .collect()
    };
    let class0 = samples(&[(1.0, 1.0), (1.0, -1.0), (3.0, 0.0)], 0);
    let class1 = samples(&[(-1.0, 1.0), (-1.0, -1.0), (-3.0, 0.0)], 3);
    let svm = fit_ovo(vec![class0, class1], 10.0).unwrap();
    let sv: Vec<usize> = svm.support_vectors_of_class(0).unwrap().iter().map(|s| s.client).collect();
    assert!(!sv.contains(&2));
    let x = [[1.0, 1.0], [1.0, -1.0], [3.0, 0.0], [-1.0, 1.0], [-1.0, -1.0], [-3.0, 0.0]].map(|r| r.to_vec());
    let (alpha, _) = dual_qp_oracle(&x, &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0], 10.0);
    assert!(alpha[2] < 1e-6, "oracle alpha {}", alpha[2]);
}

#[test]
fn simplex_corners_normals_follow_differences() {
    let corner = |k: usize| {
        let mut v = vec![0.0; 3];
        v[k] = 1.0;
        vec![ClassSample {
            client: k,
            embedding: Tensor::vector(v).unwrap(),
            weight: 1.0,
        }]
    };
    let svm = fit_ovo(vec![corner(0), corner(1), corner(2)], 1.0).unwrap();
    assert_eq!(svm.models().len(), 3);
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let (h, _) = svm.hyperplane(a, b).unwrap();
        let mut diff = vec![0.0; 3];
        diff[a] = 1.0;
        diff[b] = -1.0;
        let cos = common::dot(h.data(), &diff) / (h.norm() * 2f64.sqrt());
        assert!((cos - 1.0).abs() < 1e-9);
        let (back, _) = svm.hyperplane(b, a).unwrap();
        assert_eq!(back.scale(-1.0).unwrap(), h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_hold_on_random_problems(seed in any::<u64>()) {
        let p = random_problem(&mut ChaCha8Rng::seed_from_u64(seed));
        if let Ok(fit) = fit_binary(&p, 0, DEFAULT_GAP_TOL) {
            prop_assert!(check_invariants(&p, &fit).is_ok(), "{:?}", check_invariants(&p, &fit));
        }
    }

    #[test]
    fn separable_normal_scales_inversely(c in 0.5f64..4.0) {
        let base = [[2.0, 1.0], [1.5, -0.5], [-1.0, 0.5], [-2.0, -1.0]];
        let labels = [1.0, 1.0, -1.0, -1.0];
        let build = |s: f64| {
            let data: Vec<f64> = base.iter().flat_map(|r| r.iter().map(move |v| v * s)).collect();
            SvmProblem::unweighted(Tensor::matrix(4, 2, data).unwrap(), labels.to_vec(), 1e4).unwrap()
        };
        let a = fit_binary(&build(1.0), 0, DEFAULT_GAP_TOL).unwrap();
        let b = fit_binary(&build(c), 0, DEFAULT_GAP_TOL).unwrap();
        for (x, y) in a.normal.data().iter().zip(b.normal.data()) {
            prop_assert!((x / c - y).abs() < 1e-6 * x.abs().max(1.0));
        }
    }
}
