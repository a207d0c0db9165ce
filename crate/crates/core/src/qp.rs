//! Dense convex QP solver.
//!
//! Solves `min ½ zᵀHz + gᵀz` subject to `A_ineq z ≤ b_ineq` and
//! `A_eq z = b_eq` with the Goldfarb–Idnani dual active-set method. The dual
//! method starts from the unconstrained minimum, so no feasible starting
//! point is required. Constraints are added one at a time (most violated
//! first, lowest index on ties) and blocking ones are dropped on partial
//! steps. Softened rows are rewritten with explicit nonnegative slacks.
//!
//! A singular PSD Hessian is handled by proximal-point iterations on
//! `H + μI`, each solved by the same active-set method.

use std::io::{self, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::ConfigError;

/// Quadratic weight of slack variables on softened rows.
pub const DEFAULT_SLACK_QUADRATIC: f64 = 1e5;
/// Linear weight of slack variables on softened rows.
pub const DEFAULT_SLACK_LINEAR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// One flag per inequality row; softened rows get a slack.
    pub soft: Vec<bool>,
    /// Slack cost is `slack_quadratic·σ² + slack_linear·σ`.
    pub slack_quadratic: f64,
    pub slack_linear: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Infinity norms of the KKT conditions of the slack-augmented problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Slack per inequality row (zero for hard rows).
    pub slack: DVector<f64>,
    /// Objective including slack penalties.
    pub objective: f64,
    pub status: QpStatus,
    pub residuals: KktResiduals,
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    /// Inequality rows active at the solution.
    pub active: Vec<usize>,
    pub iterations: usize,
}

impl QuadraticProgram {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        QuadraticProgram {
            h,
            g,
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            soft: Vec::new(),
            slack_quadratic: DEFAULT_SLACK_QUADRATIC,
            slack_linear: DEFAULT_SLACK_LINEAR,
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.soft = vec![false; b.len()];
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_soft(mut self, soft: Vec<bool>) -> Self {
        self.soft = soft;
        self
    }

    pub fn with_slack_weights(mut self, quadratic: f64, linear: f64) -> Self {
        self.slack_quadratic = quadratic;
        self.slack_linear = linear;
        self
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.g.len();
        let dim = |what: &str| Err(ConfigError::Dimension(what.to_string()));
        if self.h.nrows() != n || self.h.ncols() != n {
            return dim("H must be n×n");
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return dim("inequality rows");
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return dim("equality rows");
        }
        if self.soft.len() != self.b_ineq.len() {
            return dim("soft flags");
        }
        let all = self.h.iter().chain(self.g.iter()).chain(self.a_ineq.iter()).chain(self.b_ineq.iter());
        if !all.chain(self.a_eq.iter()).chain(self.b_eq.iter()).all(|x| x.is_finite()) {
            return Err(ConfigError::Invalid("QP data must be finite".into()));
        }
        if self.soft.iter().any(|s| *s) && !(self.slack_quadratic > 0.0 && self.slack_linear >= 0.0) {
            return Err(ConfigError::Invalid("slack weights must be positive".into()));
        }
        let sym = &self.h - self.h.transpose();
        if sym.amax() > 1e-9 * (1.0 + self.h.amax()) {
            return Err(ConfigError::Invalid("H is not symmetric".into()));
        }
        if n > 0 {
            let min_eig = self.h.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-8 * (1.0 + self.h.amax()) {
                return Err(ConfigError::NotPsd(format!("H has eigenvalue {min_eig:e}")));
            }
        }
        Ok(())
    }

    /// Plain-text dump of all problem data.
    pub fn write_plain<W: Write>(&self, mut w: W) -> io::Result<()> {
        fn block<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> io::Result<()> {
            writeln!(w, "{name} {} {}", m.nrows(), m.ncols())?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
            Ok(())
        }
        let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        block(&mut w, "H", &self.h)?;
        block(&mut w, "g", &col(&self.g))?;
        block(&mut w, "A_ineq", &self.a_ineq)?;
        block(&mut w, "b_ineq", &col(&self.b_ineq))?;
        block(&mut w, "A_eq", &self.a_eq)?;
        block(&mut w, "b_eq", &col(&self.b_eq))?;
        let soft: Vec<&str> = self.soft.iter().map(|s| if *s { "1" } else { "0" }).collect();
        writeln!(w, "soft {}", soft.len())?;
        writeln!(w, "{}", soft.join(" "))?;
        writeln!(w, "slack_weights {:.17e} {:.17e}", self.slack_quadratic, self.slack_linear)
    }
}

// One constraint in the form nᵀz ≥ c.
#[derive(Debug, Clone)]
struct Row {
    n: DVector<f64>,
    c: f64,
    eq: bool,
}

struct DualResult {
    z: DVector<f64>,
    // multiplier per row (zero when inactive)
    u: Vec<f64>,
    active: Vec<usize>,
    status: QpStatus,
    iterations: usize,
}

fn cholesky(h: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    // pivots of the factor do not bound the smallest eigenvalue, so check the
    // spectrum directly
    let eig = h.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-10 * max.max(1e-300)) {
        return None;
    }
    Cholesky::new(h.clone())
}

/// Goldfarb–Idnani iterations for a positive definite Hessian.
fn dual_active_set(chol: &Cholesky<f64, Dyn>, g: &DVector<f64>, rows: &[Row], max_iter: usize) -> DualResult {
    let mut z = -chol.solve(g);
    let mut u = vec![0.0; rows.len()];
    // active rows with their H⁻¹n columns
    let mut act: Vec<usize> = Vec::new();
    let mut hinv_n: Vec<DVector<f64>> = Vec::new();
    let mut flip = vec![false; rows.len()];
    let mut iterations = 0usize;

    let normal = |i: usize, flip: &[bool]| -> (DVector<f64>, f64) {
        let r = &rows[i];
        if flip[i] {
            (-&r.n, -r.c)
        } else {
            (r.n.clone(), r.c)
        }
    };

    // Step direction for adding row p: primal dz = H⁻¹n_p − Y r, dual r.
    let direction = |np: &DVector<f64>, act: &[usize], hinv_n: &[DVector<f64>], flip: &[bool]| {
        let hp = chol.solve(np);
        let q = act.len();
        if q == 0 {
            return (hp, DVector::zeros(0));
        }
        let mut m = DMatrix::zeros(q, q);
        let mut rhs = DVector::zeros(q);
        for (a, &ia) in act.iter().enumerate() {
            let (na, _) = normal(ia, flip);
            rhs[a] = na.dot(&hp);
            for b in 0..q {
                m[(a, b)] = na.dot(&hinv_n[b]);
            }
        }
        let r = match Cholesky::new(m.clone()) {
            Some(c) => c.solve(&rhs),
            None => m.svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| DVector::zeros(q)),
        };
        let mut dz = hp;
        for (b, y) in hinv_n.iter().enumerate() {
            dz.axpy(-r[b], y, 1.0);
        }
        (dz, r)
    };

    let slack_of = |z: &DVector<f64>, i: usize| rows[i].n.dot(z) - rows[i].c;

    // Equality rows first; they are never dropped.
    for i in 0..rows.len() {
        if !rows[i].eq {
            continue;
        }
        if slack_of(&z, i) > 0.0 {
            flip[i] = true;
        }
        let (np, cp) = normal(i, &flip);
        let s = np.dot(&z) - cp;
        let (dz, r) = direction(&np, &act, &hinv_n, &flip);
        let curv = dz.dot(&np);
        iterations += 1;
        if curv <= 1e-12 * np.dot(&chol.solve(&np)) {
            if s.abs() <= 1e-9 * (1.0 + cp.abs()) {
                continue; // redundant equality
            }
            return DualResult { z, u, active: act, status: QpStatus::Infeasible, iterations };
        }
        let t = -s / curv;
        z.axpy(t, &dz, 1.0);
        for (b, &ib) in act.iter().enumerate() {
            u[ib] -= t * r[b];
        }
        u[i] = t;
        act.push(i);
        hinv_n.push(chol.solve(&np));
    }

    loop {
        if iterations >= max_iter {
            return DualResult { z, u, active: act, status: QpStatus::MaxIter, iterations };
        }
        // most violated inequality, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            if row.eq || act.contains(&i) {
                continue;
            }
            let s = slack_of(&z, i);
            let scale = 1.0 + row.c.abs() + row.n.amax() * z.amax();
            if s < -1e-10 * scale && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((p, _)) = pick else {
            return DualResult { z, u, active: act, status: QpStatus::Optimal, iterations };
        };
        let np = rows[p].n.clone();
        let cp = rows[p].c;
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return DualResult { z, u, active: act, status: QpStatus::MaxIter, iterations };
            }
            let s = np.dot(&z) - cp;
            let (dz, r) = direction(&np, &act, &hinv_n, &flip);
            let curv = dz.dot(&np);
            // zero projected curvature: n_p depends linearly on the active rows
            let full = curv > 1e-12 * np.dot(&chol.solve(&np));
            // dual step: largest t keeping active inequality multipliers ≥ 0
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for (b, &ib) in act.iter().enumerate() {
                if rows[ib].eq || r[b] <= 1e-14 {
                    continue;
                }
                let ratio = u[ib] / r[b];
                if ratio < t1 {
                    t1 = ratio;
                    drop = Some(b);
                }
            }
            let t2 = if full { -s / curv } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                return DualResult { z, u, active: act, status: QpStatus::Infeasible, iterations };
            }
            if full {
                z.axpy(t, &dz, 1.0);
            }
            for (b, &ib) in act.iter().enumerate() {
                u[ib] -= t * r[b];
            }
            up += t;
            if full && t2 <= t1 {
                u[p] = up;
                act.push(p);
                hinv_n.push(chol.solve(&np));
                break;
            }
            let b = drop.expect("partial step has a blocking row");
            u[act[b]] = 0.0;
            act.remove(b);
            hinv_n.remove(b);
        }
    }
}

/// Augmented problem with slack variables appended after z.
struct Augmented {
    h: DMatrix<f64>,
    g: DVector<f64>,
    rows: Vec<Row>,
    // slack variable index for each inequality row of the original problem
    slack_index: Vec<Option<usize>>,
    n: usize,
}

fn augment(qp: &QuadraticProgram) -> Augmented {
    let n = qp.dim();
    let m = qp.b_ineq.len();
    let soft_rows: Vec<usize> = (0..m).filter(|i| qp.soft[*i]).collect();
    let ns = soft_rows.len();
    let na = n + ns;
    let mut h = DMatrix::zeros(na, na);
    h.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    let mut g = DVector::zeros(na);
    g.rows_mut(0, n).copy_from(&qp.g);
    let mut slack_index = vec![None; m];
    for (j, &i) in soft_rows.iter().enumerate() {
        h[(n + j, n + j)] = 2.0 * qp.slack_quadratic;
        g[n + j] = qp.slack_linear;
        slack_index[i] = Some(n + j);
    }
    let mut rows = Vec::with_capacity(m + ns + qp.b_eq.len());
    for i in 0..qp.b_eq.len() {
        let mut nv = DVector::zeros(na);
        for k in 0..n {
            nv[k] = -qp.a_eq[(i, k)];
        }
        rows.push(Row { n: nv, c: -qp.b_eq[i], eq: true });
    }
    for (i, slack) in slack_index.iter().enumerate() {
        let mut nv = DVector::zeros(na);
        for k in 0..n {
            nv[k] = -qp.a_ineq[(i, k)];
        }
        if let Some(si) = *slack {
            nv[si] = 1.0;
        }
        rows.push(Row { n: nv, c: -qp.b_ineq[i], eq: false });
    }
    for j in 0..ns {
        let mut nv = DVector::zeros(na);
        nv[n + j] = 1.0;
        rows.push(Row { n: nv, c: 0.0, eq: false });
    }
    Augmented { h, g, rows, slack_index, n: na }
}

fn residuals(aug: &Augmented, z: &DVector<f64>, u: &[f64]) -> KktResiduals {
    // H z + g − Σ u_i n_i = 0, n_iᵀz ≥ c_i, u_i ≥ 0 on inequalities, u_i s_i = 0
    let mut grad = &aug.h * z + &aug.g;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (row, ui) in aug.rows.iter().zip(u) {
        grad.axpy(-ui, &row.n, 1.0);
        let s = row.n.dot(z) - row.c;
        if row.eq {
            primal = primal.max(s.abs());
        } else {
            primal = primal.max(-s);
            comp = comp.max((ui * s).abs());
            if *ui < 0.0 {
                comp = comp.max(-ui);
            }
        }
    }
    KktResiduals { stationarity: grad.amax(), primal, complementarity: comp }
}

// Re-solves the KKT system on the final active set to remove accumulated
// rounding from the rank-one updates. Kept only if it does not worsen the
// residuals.
fn polish(aug: &Augmented, res: &mut DualResult) {
    let q = res.active.len();
    let n = aug.n;
    let mut k = DMatrix::zeros(n + q, n + q);
    k.view_mut((0, 0), (n, n)).copy_from(&aug.h);
    let mut rhs = DVector::zeros(n + q);
    rhs.rows_mut(0, n).copy_from(&(-&aug.g));
    for (b, &i) in res.active.iter().enumerate() {
        let row = &aug.rows[i];
        for j in 0..n {
            k[(j, n + b)] = -row.n[j];
            k[(n + b, j)] = row.n[j];
        }
        rhs[n + b] = row.c;
    }
    let Some(sol) = k.lu().solve(&rhs) else { return };
    let z = sol.rows(0, n).into_owned();
    let mut u = vec![0.0; aug.rows.len()];
    for (b, &i) in res.active.iter().enumerate() {
        u[i] = sol[n + b];
    }
    let before = residuals(aug, &res.z, &res.u).max();
    let after = residuals(aug, &z, &u).max();
    if after.is_finite() && after <= before {
        res.z = z;
        res.u = u;
    }
}

fn solve_pd(aug: &Augmented, h: &DMatrix<f64>, g: &DVector<f64>, max_iter: usize) -> Option<DualResult> {
    let chol = cholesky(h)?;
    Some(dual_active_set(&chol, g, &aug.rows, max_iter))
}

/// Solves the QP. Malformed input is reported as an error; infeasibility and
/// the iteration cap are reported through the status.
pub fn solve(qp: &QuadraticProgram) -> Result<QpSolution, ConfigError> {
    qp.validate()?;
    let aug = augment(qp);
    let max_iter = 50 * (aug.n + aug.rows.len()).max(1);
    let mut res = match solve_pd(&aug, &aug.h, &aug.g, max_iter) {
        Some(r) => r,
        None => proximal(&aug, max_iter),
    };
    if res.status == QpStatus::Optimal {
        polish(&aug, &mut res);
    }
    Ok(finish(qp, &aug, res))
}

// Proximal point iterations z_{k+1} = argmin f(z) + μ/2‖z − z_k‖² for a
// singular PSD Hessian.
fn proximal(aug: &Augmented, max_iter: usize) -> DualResult {
    let scale = (0..aug.n).map(|i| aug.h[(i, i)].abs()).fold(1.0, f64::max);
    let mu = 1e-6 * scale;
    let mut hm = aug.h.clone();
    for i in 0..aug.n {
        hm[(i, i)] += mu;
    }
    let mut z = DVector::zeros(aug.n);
    let mut total = 0usize;
    let mut last: Option<DualResult> = None;
    for _ in 0..500 {
        let g = &aug.g - &z * mu;
        let Some(mut r) = solve_pd(aug, &hm, &g, max_iter) else {
            break;
        };
        total += r.iterations;
        r.iterations = total;
        if r.status != QpStatus::Optimal {
            return r;
        }
        let step = (&r.z - &z).amax();
        z = r.z.clone();
        // the subproblem multipliers leave a stationarity error of μ·step on
        // the original problem, so stop once its KKT residuals are small
        let kkt = residuals(aug, &r.z, &r.u).max();
        let done = step <= 1e-13 * (1.0 + z.amax()) || kkt <= 1e-10 * scale.max(1.0 + z.amax());
        last = Some(r);
        if done {
            break;
        }
    }
    match last {
        Some(r) => r,
        None => DualResult {
            z,
            u: vec![0.0; aug.rows.len()],
            active: Vec::new(),
            status: QpStatus::MaxIter,
            iterations: total,
        },
    }
}

fn finish(qp: &QuadraticProgram, aug: &Augmented, res: DualResult) -> QpSolution {
    let n = qp.dim();
    let m = qp.b_ineq.len();
    let meq = qp.b_eq.len();
    let residuals = residuals(aug, &res.z, &res.u);
    let z = res.z.rows(0, n).into_owned();
    let mut slack = DVector::zeros(m);
    for i in 0..m {
        if let Some(si) = aug.slack_index[i] {
            slack[i] = res.z[si].max(0.0);
        }
    }
    let objective = 0.5 * res.z.dot(&(&aug.h * &res.z)) + aug.g.dot(&res.z);
    let nu = DVector::from_iterator(meq, (0..meq).map(|i| res.u[i]));
    let lambda = DVector::from_iterator(m, (0..m).map(|i| res.u[meq + i]));
    let active = res.active.iter().filter(|i| **i >= meq && **i < meq + m).map(|i| i - meq).collect::<Vec<_>>();
    let mut active = active;
    active.sort_unstable();
    QpSolution { z, slack, objective, status: res.status, residuals, lambda, nu, active, iterations: res.iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clipped_scalar() {
        // min (z − 1)² = ½·2z² − 2z + 1
        let qp = QuadraticProgram::new(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, -2.0))
            .with_inequalities(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 0.5));
        let s = solve(&qp).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 0.5).abs() < 1e-12);
        assert!((s.objective + 1.0 - 0.25).abs() < 1e-12);
        assert!((s.lambda[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_equality() {
        let qp = QuadraticProgram::new(DMatrix::identity(4, 4), DVector::zeros(4))
            .with_equalities(DMatrix::from_element(1, 4, 1.0), DVector::from_element(1, 1.0));
        let s = solve(&qp).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        for i in 0..4 {
            assert!((s.z[i] - 0.25).abs() < 1e-12);
        }
        assert!(s.residuals.max() < 1e-12);
    }

    #[test]
    fn infeasible_hard_rows() {
        // z ≤ −1 and −z ≤ −1
        let qp = QuadraticProgram::new(DMatrix::identity(1, 1), DVector::zeros(1)).with_inequalities(
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[-1.0, -1.0]),
        );
        assert_eq!(solve(&qp).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn softened_rows_are_always_feasible() {
        let qp = QuadraticProgram::new(DMatrix::identity(1, 1), DVector::zeros(1))
            .with_inequalities(
                DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
                DVector::from_column_slice(&[-1.0, -1.0]),
            )
            .with_soft(vec![true, false]);
        let s = solve(&qp).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-9);
        assert!((s.slack[0] - 2.0).abs() < 1e-9);
        assert_eq!(s.slack[1], 0.0);
    }

    #[test]
    fn soft_rows_converge_to_hard_solution() {
        // min ½‖z − (2, 2)‖², z0 + z1 ≤ 1 (soft), no linear slack weight
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_column_slice(&[-2.0, -2.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_element(1, 1.0);
        let hard = solve(&QuadraticProgram::new(h.clone(), g.clone()).with_inequalities(a.clone(), b.clone())).unwrap();
        let mut prev = f64::INFINITY;
        for rho in [1e2, 1e4, 1e6] {
            let qp = QuadraticProgram::new(h.clone(), g.clone())
                .with_inequalities(a.clone(), b.clone())
                .with_soft(vec![true])
                .with_slack_weights(rho, 0.0);
            let s = solve(&qp).unwrap();
            let err = (&s.z - &hard.z).amax();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn psd_hessian_with_bounded_flat_direction() {
        // min z0² subject to 1 ≤ z1 ≤ 2, z0 + z1 ≥ 1.5
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 0)] = 2.0;
        let g = DVector::zeros(2);
        let a = DMatrix::from_row_slice(3, 2, &[0.0, -1.0, 0.0, 1.0, -1.0, -1.0]);
        let b = DVector::from_column_slice(&[-1.0, 2.0, -1.5]);
        let s = solve(&QuadraticProgram::new(h, g).with_inequalities(a, b)).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.z[0].abs() < 1e-6);
        assert!(s.objective.abs() < 1e-10);
        assert!(s.residuals.max() < 1e-6);
    }

    #[test]
    fn dump_is_parseable_text() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_element(1, 1.0));
        let mut buf = Vec::new();
        qp.write_plain(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("H 2 2\n"));
        assert!(text.contains("soft 1\n0\n"));
    }

    #[test]
    fn rejects_indefinite_or_mismatched() {
        let qp = QuadraticProgram::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2));
        assert!(matches!(solve(&qp), Err(ConfigError::NotPsd(_))));
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(solve(&qp), Err(ConfigError::Dimension(_))));
    }

    proptest! {
        #[test]
        fn kkt_holds_on_random_strictly_convex(seed in 0u64..10_000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=8);
            let m = rng.random_range(0..=12);
            let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let h = &f * f.transpose() + DMatrix::identity(n, n) * 0.1;
            let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
            let s = solve(&QuadraticProgram::new(h, g).with_inequalities(a, b)).unwrap();
            prop_assert_eq!(s.status, QpStatus::Optimal);
            prop_assert!(s.residuals.max() < 1e-6, "{:?}", s.residuals);
            prop_assert!(s.lambda.iter().all(|l| *l >= -1e-9));
        }
    }
}
