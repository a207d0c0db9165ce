//! Shared oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use smpc_core::qp::QuadraticProgram;

/// Random convex QP with a possibly singular Hessian. The linear term lies in
/// the range of H, so the objective is bounded below, and the constraints are
/// built around a strictly feasible point.
pub fn random_psd_qp<R: Rng>(rng: &mut R, max_n: usize, max_m: usize) -> QuadraticProgram {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(0..=max_m);
    let rank = rng.random_range(0..=n);
    let f = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    let h = &f * f.transpose();
    let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let g = &h * y;
    let z0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &z0 + DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
    QuadraticProgram::new(h, g).with_inequalities(a, b)
}

/// Optimal objective by enumerating active sets. Each subset's KKT system is
/// solved in the least-squares sense; a consistent, primal feasible and dual
/// feasible solution is a KKT point and hence optimal for a convex problem.
pub fn enumeration_oracle(qp: &QuadraticProgram) -> Option<f64> {
    let n = qp.dim();
    let m = qp.b_ineq.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let q = rows.len();
        let mut k = DMatrix::zeros(n + q, n + q);
        k.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::zeros(n + q);
        for i in 0..n {
            rhs[i] = -qp.g[i];
        }
        for (j, &r) in rows.iter().enumerate() {
            for c in 0..n {
                k[(c, n + j)] = qp.a_ineq[(r, c)];
                k[(n + j, c)] = qp.a_ineq[(r, c)];
            }
            rhs[n + j] = qp.b_ineq[r];
        }
        let svd = k.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-11) else { continue };
        if (&k * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        if (0..q).any(|j| sol[n + j] < -1e-9) {
            continue;
        }
        if (&qp.a_ineq * &z - &qp.b_ineq).iter().any(|v| *v > 1e-9) {
            continue;
        }
        let obj = 0.5 * z.dot(&(&qp.h * &z)) + qp.g.dot(&z);
        best = Some(best.map_or(obj, |b: f64| b.min(obj)));
    }
    best
}

/// Evaluates the QP objective at a point.
pub fn objective(qp: &QuadraticProgram, z: &DVector<f64>) -> f64 {
    0.5 * z.dot(&(&qp.h * z)) + qp.g.dot(z)
}
