//! Dense quadratic programs over a polytope intersected with a box.
//!
//! Problems are stated as maximisation:
//!
//! ```text
//! maximize   ½ dᵀQ d + gᵀd
//! subject to b + A d ≥ 0          (λ)
//!            d ≥ lower            (μ)
//!            d ≤ upper            (γ)
//! ```
//!
//! so that a KKT point satisfies `Q d + g + Aᵀλ + μ − γ = 0` with all
//! multipliers non-negative.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const FEAS_TOL: f64 = 1e-9;
pub const STAT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub g_lin: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpMode {
    /// Global maximiser; `Q` must be negative semi-definite.
    Concave,
    /// A KKT point reached by projected gradient ascent; `Q` is arbitrary.
    StationaryPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub primal: DVector<f64>,
    pub dual_ineq: DVector<f64>,
    pub dual_lower: DVector<f64>,
    pub dual_upper: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpProblem {
    /// Box-only problem.
    pub fn boxed(q: DMatrix<f64>, g_lin: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        let n = g_lin.len();
        Self {
            q,
            g_lin,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            lower,
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.g_lin.len()
    }

    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        0.5 * d.dot(&(&self.q * d)) + self.g_lin.dot(d)
    }

    pub fn gradient(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.q * d + &self.g_lin
    }

    /// Smallest slack over every row and bound; negative means infeasible.
    pub fn min_slack(&self, d: &DVector<f64>) -> f64 {
        let rows = (&self.b + &self.a * d).min();
        let lo = (d - &self.lower).min();
        let hi = (&self.upper - d).min();
        [rows, lo, hi]
            .into_iter()
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min)
    }

    /// `‖Q d + g + Aᵀλ + μ − γ‖∞`.
    pub fn stationarity(&self, sol: &QpSolution) -> f64 {
        let r = self.gradient(&sol.primal) + self.a.tr_mul(&sol.dual_ineq) + &sol.dual_lower - &sol.dual_upper;
        r.amax()
    }

    /// Largest violation among stationarity, feasibility, dual sign and
    /// complementary slackness.
    pub fn kkt_residual(&self, sol: &QpSolution) -> f64 {
        let d = &sol.primal;
        let rows = &self.b + &self.a * d;
        let lo = d - &self.lower;
        let hi = &self.upper - d;
        let mut r = self.stationarity(sol);
        for (slack, dual) in [(&rows, &sol.dual_ineq), (&lo, &sol.dual_lower), (&hi, &sol.dual_upper)] {
            for (s, m) in slack.iter().zip(dual.iter()) {
                r = r.max(-s).max(-m).max((s * m).abs());
            }
        }
        r
    }

    fn check(&self) -> Result<(), String> {
        let n = self.dim();
        if self.q.shape() != (n, n)
            || self.a.ncols() != n
            || self.a.nrows() != self.b.len()
            || self.lower.len() != n
            || self.upper.len() != n
        {
            return Err("inconsistent dimensions".into());
        }
        if self.lower.iter().zip(self.upper.iter()).any(|(l, u)| l > u) {
            return Err("lower bound exceeds upper bound".into());
        }
        Ok(())
    }
}

/// Solves `problem`; `start` seeds the iteration and is clipped to the box.
pub fn solve_qp(problem: &QpProblem, mode: QpMode, start: Option<&DVector<f64>>) -> QpSolution {
    let n = problem.dim();
    if problem.check().is_err() {
        return infeasible(n, problem.a.nrows());
    }
    let x0 = match start {
        Some(s) => clip(s, &problem.lower, &problem.upper),
        None => clip(&DVector::zeros(n), &problem.lower, &problem.upper),
    };
    let Some(feasible) = find_feasible(problem, &x0) else {
        return infeasible(n, problem.a.nrows());
    };
    let mut sol = match mode {
        QpMode::Concave => concave_from(problem, feasible),
        QpMode::StationaryPoint => stationary_from(problem, feasible),
    };
    sol.kkt_residual = problem.kkt_residual(&sol);
    sol
}

fn infeasible(n: usize, m: usize) -> QpSolution {
    QpSolution {
        primal: DVector::from_element(n, f64::NAN),
        dual_ineq: DVector::zeros(m),
        dual_lower: DVector::zeros(n),
        dual_upper: DVector::zeros(n),
        status: QpStatus::Infeasible,
        kkt_residual: f64::INFINITY,
        iterations: 0,
    }
}

fn clip(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].max(lo[i]).min(hi[i]))
}

/// All constraints as rows `a_i x ≥ β_i`, general rows normalised.
struct Rows {
    a: DMatrix<f64>,
    beta: DVector<f64>,
    /// Source of each row: general row index (with its norm) or a bound.
    origin: Vec<RowOrigin>,
}

#[derive(Clone, Copy)]
enum RowOrigin {
    General(usize, f64),
    Lower(usize),
    Upper(usize),
}

fn stack_rows(p: &QpProblem) -> Option<Rows> {
    let n = p.dim();
    let mut data = Vec::new();
    let mut beta = Vec::new();
    let mut origin = Vec::new();
    for i in 0..p.a.nrows() {
        let norm = p.a.row(i).norm();
        if norm == 0.0 {
            if p.b[i] < -FEAS_TOL {
                return None;
            }
            continue;
        }
        data.extend(p.a.row(i).iter().map(|v| v / norm));
        beta.push(-p.b[i] / norm);
        origin.push(RowOrigin::General(i, norm));
    }
    for j in 0..n {
        if p.lower[j].is_finite() {
            data.extend((0..n).map(|k| if k == j { 1.0 } else { 0.0 }));
            beta.push(p.lower[j]);
            origin.push(RowOrigin::Lower(j));
        }
        if p.upper[j].is_finite() {
            data.extend((0..n).map(|k| if k == j { -1.0 } else { 0.0 }));
            beta.push(-p.upper[j]);
            origin.push(RowOrigin::Upper(j));
        }
    }
    Some(Rows {
        a: DMatrix::from_row_slice(origin.len(), n, &data),
        beta: DVector::from_vec(beta),
        origin,
    })
}

/// Finds a feasible point near `x0` through a phase-one problem in `(d, t)`:
/// minimise `t + ½t² + ε/2 ‖d − x0‖²` subject to `a_i d + t ≥ β_i` on the
/// general rows, `t ≥ 0` and the box.
fn find_feasible(p: &QpProblem, x0: &DVector<f64>) -> Option<DVector<f64>> {
    let rows = stack_rows(p)?;
    let n = p.dim();
    let general: Vec<usize> = (0..rows.origin.len())
        .filter(|&i| matches!(rows.origin[i], RowOrigin::General(..)))
        .collect();
    let viol = general
        .iter()
        .map(|&i| rows.beta[i] - row_dot(&rows.a, i, x0))
        .fold(0.0_f64, f64::max);
    if viol <= FEAS_TOL * 1e-3 {
        return Some(x0.clone());
    }
    let m = rows.origin.len();
    let mut a = DMatrix::zeros(m + 1, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(&rows.a);
    for &i in &general {
        a[(i, n)] = 1.0;
    }
    a[(m, n)] = 1.0;
    let mut beta = DVector::zeros(m + 1);
    beta.rows_mut(0, m).copy_from(&rows.beta);
    let eps = 1e-6;
    let mut h = DMatrix::identity(n + 1, n + 1) * eps;
    h[(n, n)] = 1.0;
    let mut c = DVector::zeros(n + 1);
    c.rows_mut(0, n).copy_from(&(-x0 * eps));
    c[n] = 1.0;
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x0);
    start[n] = viol;
    let res = active_set_min(&h, &c, &a, &beta, start, 50 * (n + 1) + m);
    if res.status != AsStatus::Optimal || res.x[n] > FEAS_TOL {
        return None;
    }
    Some(clip(&res.x.rows(0, n).into_owned(), &p.lower, &p.upper))
}

fn concave_from(p: &QpProblem, x0: DVector<f64>) -> QpSolution {
    let rows = stack_rows(p).expect("checked by find_feasible");
    let n = p.dim();
    let h = -&p.q;
    let c = -&p.g_lin;
    let res = active_set_min(&h, &c, &rows.a, &rows.beta, x0, 50 * n.max(1));
    let status = match res.status {
        AsStatus::Optimal => QpStatus::Optimal,
        _ => QpStatus::MaxIterations,
    };
    unpack(p, &rows, res.x, &res.lambda, status, res.iterations)
}

fn unpack(
    p: &QpProblem,
    rows: &Rows,
    x: DVector<f64>,
    lambda: &DVector<f64>,
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    let n = p.dim();
    let mut dual_ineq = DVector::zeros(p.a.nrows());
    let mut dual_lower = DVector::zeros(n);
    let mut dual_upper = DVector::zeros(n);
    for (i, o) in rows.origin.iter().enumerate() {
        match *o {
            RowOrigin::General(r, norm) => dual_ineq[r] = lambda[i] / norm,
            RowOrigin::Lower(j) => dual_lower[j] = lambda[i],
            RowOrigin::Upper(j) => dual_upper[j] = lambda[i],
        }
    }
    QpSolution {
        primal: x,
        dual_ineq,
        dual_lower,
        dual_upper,
        status,
        kkt_residual: f64::NAN,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AsStatus {
    Optimal,
    MaxIterations,
    Unbounded,
}

struct AsResult {
    x: DVector<f64>,
    lambda: DVector<f64>,
    status: AsStatus,
    iterations: usize,
}

/// Orthonormal basis of the null space of `aw`.
fn null_space(aw: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if aw.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let eig = SymmetricEigen::new(aw.tr_mul(aw));
    let scale = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&j| eig.eigenvalues[j] <= 1e-10 * scale).collect();
    DMatrix::from_fn(n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
}

fn row_dot(a: &DMatrix<f64>, i: usize, x: &DVector<f64>) -> f64 {
    (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()
}

fn select_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// Primal active-set method for `min ½xᵀHx + cᵀx` s.t. `A x ≥ β`, `H ⪰ 0`,
/// from a feasible `x`. Entering constraints are chosen by the ratio test
/// with ties going to the lowest row index.
fn active_set_min(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    beta: &DVector<f64>,
    mut x: DVector<f64>,
    max_iter: usize,
) -> AsResult {
    let (m, n) = a.shape();
    let mut work: Vec<usize> = Vec::new();
    for iter in 0..max_iter {
        let grad = h * &x + c;
        let aw = select_rows(a, &work);
        let z = null_space(&aw, n);
        let (p, bounded) = if z.ncols() == 0 {
            (DVector::zeros(n), true)
        } else {
            let rg = z.tr_mul(&grad);
            let eig = SymmetricEigen::new(z.tr_mul(&(h * &z)));
            let hs = eig.eigenvalues.amax().max(1.0);
            let k = z.ncols();
            let mut newton = DVector::zeros(k);
            let mut flat = DVector::zeros(k);
            for j in 0..k {
                let u = eig.eigenvectors.column(j);
                let comp = u.dot(&rg);
                if eig.eigenvalues[j] > 1e-10 * hs {
                    newton -= u * (comp / eig.eigenvalues[j]);
                } else {
                    flat -= u * comp;
                }
            }
            if flat.amax() > 1e-12 * (1.0 + rg.amax()) {
                (&z * flat, false)
            } else {
                (&z * newton, true)
            }
        };

        if p.amax() <= 1e-13 * (1.0 + x.amax()) {
            let mut lambda = DVector::zeros(m);
            if work.is_empty() {
                return AsResult {
                    x,
                    lambda,
                    status: AsStatus::Optimal,
                    iterations: iter,
                };
            }
            let gram = &aw * aw.transpose();
            let rhs = &aw * &grad;
            let lw = gram
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&rhs))
                .or_else(|| gram.lu().solve(&rhs))
                .unwrap_or_else(|| DVector::zeros(work.len()));
            let mut drop: Option<(usize, f64)> = None;
            for (j, &v) in lw.iter().enumerate() {
                let better = match drop {
                    None => true,
                    Some((dj, dv)) => v < dv || (v == dv && work[j] < work[dj]),
                };
                if better {
                    drop = Some((j, v));
                }
            }
            let (dj, dv) = drop.expect("non-empty working set");
            if dv >= -1e-10 {
                for (j, &row) in work.iter().enumerate() {
                    lambda[row] = lw[j].max(0.0);
                }
                return AsResult {
                    x,
                    lambda,
                    status: AsStatus::Optimal,
                    iterations: iter,
                };
            }
            work.remove(dj);
            continue;
        }

        let mut alpha = if bounded { 1.0 } else { f64::INFINITY };
        let mut block = None;
        let pscale = p.amax();
        for i in 0..m {
            if work.contains(&i) {
                continue;
            }
            let ap = row_dot(a, i, &p);
            if ap < -1e-12 * pscale {
                let r = ((beta[i] - row_dot(a, i, &x)) / ap).max(0.0);
                if r < alpha {
                    alpha = r;
                    block = Some(i);
                }
            }
        }
        if alpha.is_infinite() {
            return AsResult {
                x,
                lambda: DVector::zeros(m),
                status: AsStatus::Unbounded,
                iterations: iter,
            };
        }
        x += &p * alpha;
        if let Some(i) = block {
            work.push(i);
        }
    }
    AsResult {
        x,
        lambda: DVector::zeros(m),
        status: AsStatus::MaxIterations,
        iterations: max_iter,
    }
}

/// Euclidean projection of `z` onto the feasible set, from a feasible `x0`.
/// The projection's multipliers are returned alongside.
fn project(p: &QpProblem, rows: &Rows, z: &DVector<f64>, x0: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = p.dim();
    if p.a.nrows() == 0 {
        let x = clip(z, &p.lower, &p.upper);
        let mut lambda = DVector::zeros(rows.origin.len());
        for (i, o) in rows.origin.iter().enumerate() {
            lambda[i] = match *o {
                RowOrigin::Lower(j) => (x[j] - z[j]).max(0.0),
                RowOrigin::Upper(j) => (z[j] - x[j]).max(0.0),
                RowOrigin::General(..) => 0.0,
            };
        }
        return (x, lambda);
    }
    let h = DMatrix::identity(n, n);
    let res = active_set_min(
        &h,
        &(-z),
        &rows.a,
        &rows.beta,
        x0.clone(),
        50 * n.max(1) + rows.origin.len(),
    );
    (res.x, res.lambda)
}

/// Projected gradient ascent with an Armijo search, plus a Newton step on
/// the current face whenever the face curvature is negative definite.
fn stationary_from(p: &QpProblem, x0: DVector<f64>) -> QpSolution {
    let rows = stack_rows(p).expect("checked by find_feasible");
    let n = p.dim();
    let cap = 50 * n.max(1);
    let mut d = x0;
    let mut s = 1.0;
    for iter in 0..cap {
        let grad = p.gradient(&d);
        let z = &d + &grad;
        let (pz, lambda) = project(p, &rows, &z, &d);
        if (&pz - &d).amax() <= 1e-11 * (1.0 + d.amax()) {
            return unpack(p, &rows, d, &lambda, QpStatus::Optimal, iter);
        }

        let f0 = p.objective(&d);
        if let Some(cand) = face_newton(p, &rows, &pz, &lambda) {
            if p.objective(&cand) > f0 {
                d = cand;
                continue;
            }
        }

        let mut accepted = false;
        while s > 1e-14 {
            let (cand, _) = project(p, &rows, &(&d + &grad * s), &d);
            let step = &cand - &d;
            if step.amax() > 0.0 && p.objective(&cand) >= f0 + 1e-4 * grad.dot(&step) {
                d = cand;
                accepted = true;
                s = (2.0 * s).min(1e8);
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            let (_, lambda) = project(p, &rows, &z, &d);
            return unpack(p, &rows, d, &lambda, QpStatus::MaxIterations, iter);
        }
    }
    let z = &d + p.gradient(&d);
    let (_, lambda) = project(p, &rows, &z, &d);
    unpack(p, &rows, d, &lambda, QpStatus::MaxIterations, cap)
}

/// Stationary point of the objective on the face through `x` spanned by
/// the rows with positive projection multipliers, if the face curvature is
/// negative definite and the point is feasible.
fn face_newton(p: &QpProblem, rows: &Rows, x: &DVector<f64>, lambda: &DVector<f64>) -> Option<DVector<f64>> {
    let n = p.dim();
    let active: Vec<usize> = (0..rows.origin.len()).filter(|&i| lambda[i] > 1e-12).collect();
    let z = null_space(&select_rows(&rows.a, &active), n);
    if z.ncols() == 0 {
        return Some(x.clone());
    }
    let rq = z.tr_mul(&(&p.q * &z));
    let eig = SymmetricEigen::new(rq.clone());
    if eig.eigenvalues.max() >= -1e-12 {
        return None;
    }
    let step = rq.lu().solve(&(-z.tr_mul(&p.gradient(x))))?;
    let cand = x + &z * step;
    let slack = (&rows.a * &cand - &rows.beta).min();
    (slack >= -FEAS_TOL * 1e-2).then(|| clip(&cand, &p.lower, &p.upper))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(q: f64, g: f64) -> QpProblem {
        QpProblem::boxed(
            DMatrix::from_element(1, 1, q),
            DVector::from_element(1, g),
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
        )
    }

    #[test]
    fn interior_maximiser() {
        let p = scalar(-1.0, 0.3);
        let s = solve_qp(&p, QpMode::Concave, None);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.primal[0] - 0.3).abs() < 1e-12);
        assert_eq!(s.dual_lower[0], 0.0);
        assert_eq!(s.dual_upper[0], 0.0);
    }

    #[test]
    fn upper_bound_active() {
        let p = scalar(-1.0, 2.0);
        let s = solve_qp(&p, QpMode::Concave, None);
        assert!((s.primal[0] - 1.0).abs() < 1e-12);
        assert!((s.dual_upper[0] - 1.0).abs() < 1e-12);
        assert!(s.kkt_residual < STAT_TOL);
    }

    #[test]
    fn convex_objective_reaches_vertex() {
        let p = scalar(1.0, 0.0);
        let s = solve_qp(&p, QpMode::StationaryPoint, Some(&DVector::from_element(1, 0.6)));
        assert_eq!(s.status, QpStatus::Optimal);
        // enumerate the two box vertices
        let best = [0.0, 1.0]
            .into_iter()
            .max_by(|a, b| (0.5 * a * a).partial_cmp(&(0.5 * b * b)).unwrap())
            .unwrap();
        assert_eq!(s.primal[0], best);
        assert!(s.kkt_residual < STAT_TOL);
    }

    #[test]
    fn general_rows() {
        // maximise −½‖d‖² + (1, 1)ᵀd subject to 1 − d₁ − d₂ ≥ 0 → d = (½, ½), λ = ½
        let p = QpProblem {
            q: -DMatrix::identity(2, 2),
            g_lin: DVector::from_vec(vec![1.0, 1.0]),
            a: DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]),
            b: DVector::from_vec(vec![1.0]),
            lower: DVector::zeros(2),
            upper: DVector::from_element(2, 1.0),
        };
        let s = solve_qp(&p, QpMode::Concave, None);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.primal[0] - 0.5).abs() < 1e-12 && (s.primal[1] - 0.5).abs() < 1e-12);
        assert!((s.dual_ineq[0] - 0.5).abs() < 1e-12);
        let t = solve_qp(&p, QpMode::StationaryPoint, None);
        assert!((&t.primal - &s.primal).amax() < 1e-9);
        assert!(t.kkt_residual < STAT_TOL);
    }

    #[test]
    fn infeasible_rows() {
        // d ≥ 2 inside [0, 1]
        let p = QpProblem {
            q: -DMatrix::identity(1, 1),
            g_lin: DVector::zeros(1),
            a: DMatrix::from_row_slice(1, 1, &[1.0]),
            b: DVector::from_vec(vec![-2.0]),
            lower: DVector::zeros(1),
            upper: DVector::from_element(1, 1.0),
        };
        assert_eq!(solve_qp(&p, QpMode::Concave, None).status, QpStatus::Infeasible);
        assert_eq!(solve_qp(&p, QpMode::StationaryPoint, None).status, QpStatus::Infeasible);
    }

    #[test]
    fn linear_objective_is_handled() {
        let p = QpProblem {
            q: DMatrix::zeros(3, 3),
            g_lin: DVector::from_vec(vec![1.0, -1.0, 0.5]),
            a: DMatrix::from_row_slice(1, 3, &[-1.0, -1.0, -1.0]),
            b: DVector::from_vec(vec![1.5]),
            lower: DVector::zeros(3),
            upper: DVector::from_element(3, 1.0),
        };
        let s = solve_qp(&p, QpMode::Concave, None);
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.primal[0] - 1.0).abs() < 1e-12);
        assert!(s.primal[1].abs() < 1e-12);
        assert!((s.primal[2] - 0.5).abs() < 1e-12);
        assert!(s.kkt_residual < STAT_TOL);
    }
}
