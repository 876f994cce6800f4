//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver or gradient code it is used to check.

#![allow(dead_code)]

use fedsvm_core::svm::{BinarySvmModel, SvmProblem};
use fedsvm_core::Tensor;
use rand::Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto `{0 ≤ α ≤ λ, Σ y_i α_i = 0}` by bisection on
/// the multiplier of the equality constraint.
fn project(z: &[f64], y: &[f64], lambda: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> {
        z.iter()
            .zip(y)
            .map(|(&zi, &yi)| (zi - nu * yi).clamp(0.0, lambda))
            .collect()
    };
    let balance = |a: &[f64]| dot(a, y);
    let bound = z.iter().fold(0.0f64, |m, v| m.max(v.abs())) + lambda + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent on the SVM dual. Returns the
/// multipliers and the dual value `Σα − ½ αᵀQα`.
pub fn dual_qp_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let m = x.len();
    let q: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| y[i] * y[j] * dot(&x[i], &x[j])).collect())
        .collect();
    let value = |a: &[f64]| {
        let qa: Vec<f64> = (0..m).map(|i| dot(&q[i], a)).collect();
        a.iter().sum::<f64>() - 0.5 * dot(a, &qa)
    };
    // Frobenius norm bounds the largest eigenvalue
    let lip = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let mut a = vec![0.0; m];
    let mut prev = a.clone();
    let mut t = 1.0f64;
    for it in 0..60_000 {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        let v: Vec<f64> = a.iter().zip(&prev).map(|(ai, pi)| ai + mom * (ai - pi)).collect();
        let grad: Vec<f64> = (0..m).map(|i| 1.0 - dot(&q[i], &v)).collect();
        let z: Vec<f64> = v.iter().zip(&grad).map(|(vi, gi)| vi + gi / lip).collect();
        prev = a;
        a = project(&z, y, lambda);
        t = t_next;
        if it % 100 == 99 {
            // fixed point of the projected gradient map ⇔ optimal
            let g: Vec<f64> = (0..m).map(|i| 1.0 - dot(&q[i], &a)).collect();
            let z: Vec<f64> = a.iter().zip(&g).map(|(ai, gi)| ai + gi / lip).collect();
            let moved = project(&z, y, lambda);
            if moved.iter().zip(&a).all(|(p, q)| (p - q).abs() < 1e-13) {
                break;
            }
        }
    }
    let best = value(&a);
    (a, best)
}

pub fn primal(x: &[Vec<f64>], y: &[f64], lambda: f64, w: &[f64], b: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - yi * (dot(w, xi) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + lambda * hinge
}

/// Zooming grid search over `(w, b)` on the primal objective. Only practical
/// for `d ≤ 3`.
pub fn primal_grid_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> f64 {
    let dim = x[0].len() + 1;
    let per_axis = 9usize;
    let mut center = vec![0.0; dim];
    let mut radius = 4.0;
    let mut best = f64::INFINITY;
    for _ in 0..80 {
        let total = per_axis.pow(dim as u32);
        let mut best_point = center.clone();
        for code in 0..total {
            let mut c = code;
            let point: Vec<f64> = (0..dim)
                .map(|k| {
                    let step = (c % per_axis) as f64 / (per_axis - 1) as f64;
                    c /= per_axis;
                    center[k] + radius * (2.0 * step - 1.0)
                })
                .collect();
            let v = primal(x, y, lambda, &point[..dim - 1], point[dim - 1]);
            if v < best {
                best = v;
                best_point = point;
            }
        }
        center = best_point;
        radius *= 0.6;
    }
    best
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Random problem with `2 ≤ M ≤ 6`, `1 ≤ d ≤ 3`, both labels present.
pub fn random_problem<R: Rng>(rng: &mut R) -> SvmProblem {
    let m = rng.gen_range(2..=6);
    let d = rng.gen_range(1..=3);
    let data: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut labels: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    labels[0] = 1.0;
    labels[m - 1] = -1.0;
    let lambda = 10f64.powf(rng.gen_range(-1.3..1.0));
    SvmProblem::unweighted(Tensor::matrix(m, d, data).unwrap(), labels, lambda).unwrap()
}

/// Every invariant a fitted binary model promises; returns the first failure.
pub fn check_invariants(p: &SvmProblem, fit: &BinarySvmModel) -> Result<(), String> {
    let x = rows(&p.samples);
    let y = &p.labels;
    let d = x[0].len();
    let alpha_tol = 1e-8;
    let slack_tol = 1e-6;
    let mut w = vec![0.0; d];
    for (i, xi) in x.iter().enumerate() {
        for (wj, xij) in w.iter_mut().zip(xi) {
            *wj += fit.alphas[i] * y[i] * xij;
        }
    }
    for (a, b) in w.iter().zip(fit.normal.data()) {
        if (a - b).abs() > 1e-8 {
            return Err(format!("normal {:?} differs from Σαyx {w:?}", fit.normal.data()));
        }
    }
    for (i, &a) in fit.alphas.iter().enumerate() {
        if !(0.0..=p.lambda).contains(&a) {
            return Err(format!("alpha {i} = {a} outside [0, {}]", p.lambda));
        }
        let zeta = (1.0 - y[i] * (dot(fit.normal.data(), &x[i]) + fit.bias)).max(0.0);
        if (zeta - fit.slacks[i]).abs() > 1e-8 {
            return Err(format!("slack {i}: {} vs {zeta}", fit.slacks[i]));
        }
        if a < p.lambda - alpha_tol && zeta >= slack_tol {
            return Err(format!("slack {zeta} on sample {i} with alpha {a} below the box"));
        }
    }
    if fit.duality_gap >= 1e-6 {
        return Err(format!("duality gap {}", fit.duality_gap));
    }
    Ok(())
}

/// Relative agreement used by the oracle comparisons.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-8)
}
