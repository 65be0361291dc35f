//! Primal-dual interior-point method for
//!
//! ```text
//! minimize f(x)  subject to  c(x) = 0,  l ≤ x ≤ u
//! ```
//!
//! with a logarithmic barrier on the bounds, exact second derivatives,
//! inertia correction of the KKT matrix, a filter line search and a
//! least-squares feasibility restoration phase.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// A smooth equality-constrained problem with simple bounds.
pub trait Nlp {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn bounds(&self) -> (DVector<f64>, DVector<f64>);
    fn objective(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `m × n`.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// `∇²(σ f + λᵀc)`.
    fn hessian(&self, x: &DVector<f64>, sigma: f64, lambda: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub tol_feas: f64,
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Relative distance the start is pushed inside the bounds.
    pub bound_push: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_kkt: 1e-6,
            max_iter: 200,
            mu_init: 0.1,
            bound_push: 1e-2,
        }
    }
}

impl IpmOptions {
    /// Settings for a start that is expected to be close to a solution.
    pub fn warm(self) -> Self {
        Self {
            mu_init: 1e-3,
            bound_push: 1e-6,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    MaxIterations,
    /// The line search failed or progress on feasibility stalled.
    Stalled,
    /// Restoration found no point with `c(x) = 0` inside the bounds.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub z_lower: DVector<f64>,
    pub z_upper: DVector<f64>,
    pub status: IpmStatus,
    pub iterations: usize,
    pub primal_inf: f64,
    pub dual_inf: f64,
    pub complementarity: f64,
}

struct Residuals {
    primal: f64,
    dual: f64,
    compl: f64,
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    grad: &DVector<f64>,
    jac: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: &DVector<f64>,
    zl: &DVector<f64>,
    zu: &DVector<f64>,
    sl: &DVector<f64>,
    su: &DVector<f64>,
    mu: f64,
) -> Residuals {
    let dual = (grad + jac.tr_mul(lambda) - zl + zu).amax();
    let mut compl: f64 = 0.0;
    for i in 0..sl.len() {
        if sl[i].is_finite() {
            compl = compl.max((sl[i] * zl[i] - mu).abs());
        }
        if su[i].is_finite() {
            compl = compl.max((su[i] * zu[i] - mu).abs());
        }
    }
    Residuals {
        primal: if c.is_empty() { 0.0 } else { c.amax() },
        dual,
        compl,
    }
}

/// Least-squares multipliers for `∇f + Jᵀλ − z_L + z_U = 0`, with bound
/// multipliers allowed only on `active` variables.
pub fn least_squares_multipliers(
    grad: &DVector<f64>,
    jac: &DMatrix<f64>,
    active_lower: &[usize],
    active_upper: &[usize],
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (m, n) = jac.shape();
    let k = m + active_lower.len() + active_upper.len();
    // columns of Bᵀ where B = [J; −e_i (lower); +e_i (upper)]
    let mut bt = DMatrix::zeros(n, k);
    bt.view_mut((0, 0), (n, m)).copy_from(&jac.transpose());
    for (j, &i) in active_lower.iter().enumerate() {
        bt[(i, m + j)] = -1.0;
    }
    for (j, &i) in active_upper.iter().enumerate() {
        bt[(i, m + active_lower.len() + j)] = 1.0;
    }
    let sol = if k == 0 {
        DVector::zeros(0)
    } else {
        let normal = bt.tr_mul(&bt) + DMatrix::identity(k, k) * 1e-14;
        let rhs = -bt.tr_mul(grad);
        normal
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| normal.lu().solve(&rhs))
            .unwrap_or_else(|| DVector::zeros(k))
    };
    let lambda = sol.rows(0, m).into_owned();
    let mut zl = DVector::zeros(n);
    let mut zu = DVector::zeros(n);
    for (j, &i) in active_lower.iter().enumerate() {
        zl[i] = sol[m + j];
    }
    for (j, &i) in active_upper.iter().enumerate() {
        zu[i] = sol[m + active_lower.len() + j];
    }
    (lambda, zl, zu)
}

/// Returns a result with zero iterations if `x` already satisfies the KKT
/// conditions to tolerance.
pub fn check_kkt_point<P: Nlp>(nlp: &P, x: &DVector<f64>, opts: &IpmOptions) -> Option<IpmResult> {
    let (l, u) = nlp.bounds();
    if (0..x.len()).any(|i| x[i] < l[i] || x[i] > u[i]) {
        return None;
    }
    let c = nlp.constraints(x);
    if !c.is_empty() && c.amax() > opts.tol_feas {
        return None;
    }
    let grad = nlp.gradient(x);
    let jac = nlp.jacobian(x);
    let near = |d: f64, b: f64| d <= 1e-7 * (1.0 + b.abs());
    let al: Vec<usize> = (0..x.len())
        .filter(|&i| l[i].is_finite() && near(x[i] - l[i], l[i]))
        .collect();
    let au: Vec<usize> = (0..x.len())
        .filter(|&i| u[i].is_finite() && near(u[i] - x[i], u[i]) && !al.contains(&i))
        .collect();
    let (lambda, zl, zu) = least_squares_multipliers(&grad, &jac, &al, &au);
    if zl.min() < -opts.tol_kkt || zu.min() < -opts.tol_kkt {
        return None;
    }
    let sl = x - &l;
    let su = &u - x;
    let r = residuals(&grad, &jac, &c, &lambda, &zl, &zu, &sl, &su, 0.0);
    (r.dual <= opts.tol_kkt && r.compl <= opts.tol_kkt).then(|| IpmResult {
        x: x.clone(),
        lambda,
        z_lower: zl,
        z_upper: zu,
        status: IpmStatus::Converged,
        iterations: 0,
        primal_inf: r.primal,
        dual_inf: r.dual,
        complementarity: r.compl,
    })
}

/// Interior-point solve from `x0`.
pub fn solve<P: Nlp>(nlp: &P, x0: &DVector<f64>, opts: &IpmOptions) -> IpmResult {
    let n = nlp.n();
    let m = nlp.m();
    let (l, u) = nlp.bounds();
    let free: Vec<bool> = (0..n).map(|i| u[i] - l[i] > 1e-12).collect();
    let free_idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let nf = free_idx.len();

    let mut x = DVector::from_fn(n, |i, _| {
        if !free[i] {
            return l[i];
        }
        let span = u[i] - l[i];
        let push_l = (opts.bound_push * l[i].abs().max(1.0)).min(0.5 * span);
        let push_u = (opts.bound_push * u[i].abs().max(1.0)).min(0.5 * span);
        x0[i].max(l[i] + push_l).min(u[i] - push_u)
    });
    let has_l: Vec<bool> = (0..n).map(|i| free[i] && l[i].is_finite()).collect();
    let has_u: Vec<bool> = (0..n).map(|i| free[i] && u[i].is_finite()).collect();
    let slacks = |x: &DVector<f64>| {
        (
            DVector::from_fn(n, |i, _| if has_l[i] { x[i] - l[i] } else { f64::INFINITY }),
            DVector::from_fn(n, |i, _| if has_u[i] { u[i] - x[i] } else { f64::INFINITY }),
        )
    };

    let mut mu = opts.mu_init;
    let mu_min = opts.tol_kkt.min(opts.tol_feas) / 10.0;
    let (sl, su) = slacks(&x);
    let mut zl = DVector::from_fn(n, |i, _| if has_l[i] { mu / sl[i] } else { 0.0 });
    let mut zu = DVector::from_fn(n, |i, _| if has_u[i] { mu / su[i] } else { 0.0 });
    let mut lambda = if m == 0 {
        DVector::zeros(0)
    } else {
        let grad = nlp.gradient(&x);
        let jac = nlp.jacobian(&x);
        let rhs = -(&jac * (&grad - &zl + &zu));
        let gram = &jac * jac.transpose() + DMatrix::identity(m, m) * 1e-10;
        let lam = gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(m));
        if lam.amax() > 1e3 {
            DVector::zeros(m)
        } else {
            lam
        }
    };

    let barrier = |x: &DVector<f64>, mu: f64| -> f64 {
        let (sl, su) = slacks(x);
        let mut v = nlp.objective(x);
        for i in 0..n {
            if has_l[i] {
                v -= mu * sl[i].ln();
            }
            if has_u[i] {
                v -= mu * su[i].ln();
            }
        }
        v
    };
    let theta_of = |c: &DVector<f64>| c.iter().map(|v| v.abs()).sum::<f64>();

    let theta0 = theta_of(&nlp.constraints(&x));
    let theta_max = 1e4 * theta0.max(1.0);
    let theta_min = 1e-4 * theta0.max(1.0);
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut delta_w_last = 0.0_f64;
    let mut theta_hist: Vec<f64> = Vec::new();

    let finish = |x: DVector<f64>, lambda, zl, zu, status, it, r: &Residuals| IpmResult {
        x,
        lambda,
        z_lower: zl,
        z_upper: zu,
        status,
        iterations: it,
        primal_inf: r.primal,
        dual_inf: r.dual,
        complementarity: r.compl,
    };

    for iter in 0..=opts.max_iter {
        let grad = nlp.gradient(&x);
        let c = nlp.constraints(&x);
        let jac = nlp.jacobian(&x);
        let (sl, su) = slacks(&x);

        // multipliers of fixed variables follow from stationarity
        let mut zl_all = zl.clone();
        let mut zu_all = zu.clone();
        if nf < n {
            let r = &grad + jac.tr_mul(&lambda);
            for i in (0..n).filter(|&i| !free[i]) {
                zl_all[i] = r[i].max(0.0);
                zu_all[i] = (-r[i]).max(0.0);
            }
        }
        let r0 = residuals(&grad, &jac, &c, &lambda, &zl_all, &zu_all, &sl, &su, 0.0);
        if r0.primal <= opts.tol_feas && r0.dual <= opts.tol_kkt && r0.compl <= opts.tol_kkt {
            return finish(x, lambda, zl_all, zu_all, IpmStatus::Converged, iter, &r0);
        }
        // a feasible iterate may already be certified by multipliers other
        // than the barrier estimates, e.g. when the objective is flat on the
        // feasible set
        if r0.primal <= opts.tol_feas {
            if let Some(mut done) = check_kkt_point(nlp, &x, opts) {
                done.iterations = iter;
                return done;
            }
        }
        if iter == opts.max_iter {
            return finish(x, lambda, zl_all, zu_all, IpmStatus::MaxIterations, iter, &r0);
        }
        theta_hist.push(theta_of(&c));
        if iter >= 30 && r0.primal > opts.tol_feas {
            let old = theta_hist[iter - 30];
            if theta_hist[iter] > 0.99 * old {
                return finish(x, lambda, zl_all, zu_all, IpmStatus::Stalled, iter, &r0);
            }
        }

        // barrier parameter update
        loop {
            let rm = residuals(&grad, &jac, &c, &lambda, &zl_all, &zu_all, &sl, &su, mu);
            let e_mu = rm.primal.max(rm.dual).max(rm.compl);
            if e_mu <= 10.0 * mu && mu > mu_min {
                mu = (0.2 * mu).min(mu.powf(1.5)).max(mu_min);
                filter.clear();
            } else {
                break;
            }
        }

        // reduced KKT system over free variables
        let hess = nlp.hessian(&x, 1.0, &lambda);
        let mut w = DMatrix::from_fn(nf, nf, |a, b| hess[(free_idx[a], free_idx[b])]);
        let jf = DMatrix::from_fn(m, nf, |r, a| jac[(r, free_idx[a])]);
        let mut rhs = DVector::zeros(nf + m);
        for (a, &i) in free_idx.iter().enumerate() {
            let mut sigma = 0.0;
            let mut g = grad[i] + jac.column(i).dot(&lambda);
            if has_l[i] {
                sigma += zl[i] / sl[i];
                g -= mu / sl[i];
            }
            if has_u[i] {
                sigma += zu[i] / su[i];
                g += mu / su[i];
            }
            w[(a, a)] += sigma;
            rhs[a] = -g;
        }
        for r in 0..m {
            rhs[nf + r] = -c[r];
        }

        let Some((dxf, dlambda, dw)) = solve_inertia_corrected(&w, &jf, &rhs, delta_w_last, mu) else {
            return finish(x, lambda, zl_all, zu_all, IpmStatus::Stalled, iter, &r0);
        };
        delta_w_last = dw;
        let mut dx = DVector::zeros(n);
        for (a, &i) in free_idx.iter().enumerate() {
            dx[i] = dxf[a];
        }
        let dzl = DVector::from_fn(n, |i, _| {
            if has_l[i] {
                mu / sl[i] - zl[i] - zl[i] / sl[i] * dx[i]
            } else {
                0.0
            }
        });
        let dzu = DVector::from_fn(n, |i, _| {
            if has_u[i] {
                mu / su[i] - zu[i] + zu[i] / su[i] * dx[i]
            } else {
                0.0
            }
        });

        let tau = (1.0 - mu).max(0.99);
        let mut alpha_max: f64 = 1.0;
        let mut alpha_z: f64 = 1.0;
        for i in 0..n {
            if has_l[i] {
                if dx[i] < 0.0 {
                    alpha_max = alpha_max.min(-tau * sl[i] / dx[i]);
                }
                if dzl[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * zl[i] / dzl[i]);
                }
            }
            if has_u[i] {
                if dx[i] > 0.0 {
                    alpha_max = alpha_max.min(tau * su[i] / dx[i]);
                }
                if dzu[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * zu[i] / dzu[i]);
                }
            }
        }

        // filter line search
        let theta = theta_of(&c);
        let phi = barrier(&x, mu);
        let mut gphi_d = 0.0;
        for i in 0..n {
            let mut g = grad[i];
            if has_l[i] {
                g -= mu / sl[i];
            }
            if has_u[i] {
                g += mu / su[i];
            }
            gphi_d += g * dx[i];
        }
        let tiny = (0..n).all(|i| dx[i].abs() <= 1e-14 * (1.0 + x[i].abs()));
        let mut alpha = alpha_max;
        let mut accepted = false;
        let alpha_min = 1e-14;
        while alpha >= alpha_min {
            let xt = &x + &dx * alpha;
            if tiny {
                accepted = true;
                x = xt;
                break;
            }
            let ct = nlp.constraints(&xt);
            let theta_t = theta_of(&ct);
            let phi_t = barrier(&xt, mu);
            if theta_t <= theta_max && phi_t.is_finite() && filter.iter().all(|&(tf, pf)| theta_t < tf || phi_t < pf) {
                let switching = gphi_d < 0.0 && alpha * (-gphi_d).powf(2.3) > theta.powf(1.1) && theta <= theta_min;
                if switching {
                    if phi_t <= phi + 1e-4 * alpha * gphi_d {
                        accepted = true;
                    }
                } else if theta_t <= (1.0 - 1e-5) * theta || phi_t <= phi - 1e-5 * theta {
                    accepted = true;
                    filter.push(((1.0 - 1e-5) * theta, phi - 1e-5 * theta));
                }
            }
            if accepted {
                x = xt;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return finish(x, lambda, zl_all, zu_all, IpmStatus::Stalled, iter, &r0);
        }
        lambda += &dlambda * alpha;
        let (sl, su) = slacks(&x);
        for i in 0..n {
            if has_l[i] {
                let z = zl[i] + alpha_z * dzl[i];
                zl[i] = z.max(mu / (1e10 * sl[i])).min(1e10 * mu / sl[i]);
            }
            if has_u[i] {
                let z = zu[i] + alpha_z * dzu[i];
                zu[i] = z.max(mu / (1e10 * su[i])).min(1e10 * mu / su[i]);
            }
        }
    }
    unreachable!("loop returns at max_iter")
}

/// Solves `[W + δ_w I, Jᵀ; J, −δ_c I] d = rhs` with `δ_w` raised until the
/// matrix has exactly `n` positive and `m` negative eigenvalues.
fn solve_inertia_corrected(
    w: &DMatrix<f64>,
    j: &DMatrix<f64>,
    rhs: &DVector<f64>,
    delta_last: f64,
    mu: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let n = w.nrows();
    let m = j.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(w);
    k.view_mut((n, 0), (m, n)).copy_from(j);
    k.view_mut((0, n), (n, m)).copy_from(&j.transpose());
    let scale = k.amax().max(1.0);
    let mut delta_w = 0.0;
    let mut delta_c = 0.0;
    for attempt in 0..40 {
        let mut kk = k.clone();
        for i in 0..n {
            kk[(i, i)] += delta_w;
        }
        for i in 0..m {
            kk[(n + i, n + i)] -= delta_c;
        }
        let eig = SymmetricEigen::new(kk);
        let tol = 1e-13 * scale;
        let pos = eig.eigenvalues.iter().filter(|&&v| v > tol).count();
        let neg = eig.eigenvalues.iter().filter(|&&v| v < -tol).count();
        if pos == n && neg == m {
            let vt_r = eig.eigenvectors.tr_mul(rhs);
            let scaled = DVector::from_fn(n + m, |i, _| vt_r[i] / eig.eigenvalues[i]);
            let d = &eig.eigenvectors * scaled;
            return Some((d.rows(0, n).into_owned(), d.rows(n, m).into_owned(), delta_w));
        }
        if pos + neg < n + m && delta_c == 0.0 && neg < m {
            delta_c = 1e-8 * mu.powf(0.25);
            if attempt == 0 {
                continue;
            }
        }
        delta_w = if delta_w == 0.0 {
            if delta_last == 0.0 {
                1e-4
            } else {
                (delta_last / 3.0).max(1e-20)
            }
        } else if delta_last == 0.0 {
            delta_w * 100.0
        } else {
            delta_w * 8.0
        };
        if delta_w > 1e40 {
            return None;
        }
    }
    None
}

/// `min ½‖c(x)‖²` over the bounds of an inner problem.
struct Restoration<'a, P: Nlp> {
    inner: &'a P,
}

impl<P: Nlp> Nlp for Restoration<'_, P> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn m(&self) -> usize {
        0
    }
    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        self.inner.bounds()
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.inner.constraints(x).norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.jacobian(x).tr_mul(&self.inner.constraints(x))
    }
    fn constraints(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, x.len())
    }
    fn hessian(&self, x: &DVector<f64>, sigma: f64, _lambda: &DVector<f64>) -> DMatrix<f64> {
        let c = self.inner.constraints(x);
        let j = self.inner.jacobian(x);
        (j.tr_mul(&j) + self.inner.hessian(x, 0.0, &c)) * sigma
    }
}

/// Interior-point solve that falls back to feasibility restoration when the
/// main iteration stalls. If restoration reaches a feasible point the main
/// iteration is resumed from it; otherwise the least-squares point is
/// returned with status [`IpmStatus::Infeasible`] and least-squares
/// multipliers.
pub fn solve_with_restoration<P: Nlp>(nlp: &P, x0: &DVector<f64>, opts: &IpmOptions) -> IpmResult {
    let first = solve(nlp, x0, opts);
    if first.status == IpmStatus::Converged {
        return first;
    }
    if first.status == IpmStatus::MaxIterations && first.primal_inf <= opts.tol_feas {
        return first;
    }
    let resto_opts = IpmOptions {
        tol_feas: 1.0,
        tol_kkt: 1e-10,
        max_iter: opts.max_iter,
        mu_init: 1e-2,
        bound_push: opts.bound_push,
    };
    let resto = solve(&Restoration { inner: nlp }, &first.x, &resto_opts);
    let c = nlp.constraints(&resto.x);
    let resid = if c.is_empty() { 0.0 } else { c.amax() };
    if resid <= 1e-6 {
        let mut second = solve(nlp, &resto.x, &IpmOptions { mu_init: 1e-2, ..*opts });
        second.iterations += first.iterations + resto.iterations;
        if second.status == IpmStatus::Converged {
            return second;
        }
        return IpmResult {
            status: IpmStatus::MaxIterations,
            ..second
        };
    }
    let grad = nlp.gradient(&resto.x);
    let jac = nlp.jacobian(&resto.x);
    let (lambda, zl, zu) = least_squares_multipliers(&grad, &jac, &[], &[]);
    let (l, u) = nlp.bounds();
    let r = residuals(
        &grad,
        &jac,
        &c,
        &lambda,
        &zl,
        &zu,
        &(&resto.x - &l),
        &(&u - &resto.x),
        0.0,
    );
    IpmResult {
        x: resto.x,
        lambda,
        z_lower: zl,
        z_upper: zu,
        status: IpmStatus::Infeasible,
        iterations: first.iterations + resto.iterations,
        primal_inf: resid,
        dual_inf: r.dual,
        complementarity: r.compl,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x₀ − 2)² + (x₁ − 1)²  s.t.  x₀² + x₁² = 1,  0 ≤ x ≤ 5
    struct Circle;

    impl Nlp for Circle {
        fn n(&self) -> usize {
            2
        }
        fn m(&self) -> usize {
            1
        }
        fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
            (DVector::zeros(2), DVector::from_element(2, 5.0))
        }
        fn objective(&self, x: &DVector<f64>) -> f64 {
            (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2)
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)])
        }
        fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 1.0)
        }
        fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])
        }
        fn hessian(&self, _x: &DVector<f64>, sigma: f64, lambda: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(2, 2) * (2.0 * sigma + 2.0 * lambda[0])
        }
    }

    /// Same objective with x₀ + x₁ = 20 inside the box: infeasible.
    struct FarLine;

    impl Nlp for FarLine {
        fn n(&self) -> usize {
            2
        }
        fn m(&self) -> usize {
            1
        }
        fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
            (DVector::zeros(2), DVector::from_element(2, 5.0))
        }
        fn objective(&self, x: &DVector<f64>) -> f64 {
            Circle.objective(x)
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            Circle.gradient(x)
        }
        fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, x[0] + x[1] - 20.0)
        }
        fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0])
        }
        fn hessian(&self, _x: &DVector<f64>, sigma: f64, _l: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(2, 2) * (2.0 * sigma)
        }
    }

    #[test]
    fn circle_projection() {
        let r = solve_with_restoration(&Circle, &DVector::from_vec(vec![1.0, 1.0]), &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::Converged);
        let norm = 5f64.sqrt();
        assert!((r.x[0] - 2.0 / norm).abs() < 1e-6, "{}", r.x);
        assert!((r.x[1] - 1.0 / norm).abs() < 1e-6);
        let again = check_kkt_point(&Circle, &r.x, &IpmOptions::default());
        assert!(again.is_some());
    }

    #[test]
    fn active_bound() {
        // minimising toward (2, −1) pins x₁ at its lower bound 0, x₀ = 1
        struct Pinned;
        impl Nlp for Pinned {
            fn n(&self) -> usize {
                2
            }
            fn m(&self) -> usize {
                1
            }
            fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
                Circle.bounds()
            }
            fn objective(&self, x: &DVector<f64>) -> f64 {
                (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2)
            }
            fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
                DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)])
            }
            fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
                Circle.constraints(x)
            }
            fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
                Circle.jacobian(x)
            }
            fn hessian(&self, x: &DVector<f64>, s: f64, l: &DVector<f64>) -> DMatrix<f64> {
                Circle.hessian(x, s, l)
            }
        }
        let r = solve_with_restoration(&Pinned, &DVector::from_vec(vec![0.5, 0.5]), &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && r.x[1].abs() < 1e-6, "{}", r.x);
        assert!(r.z_lower[1] > 1.0);
    }

    #[test]
    fn infeasible_line() {
        let r = solve_with_restoration(&FarLine, &DVector::from_vec(vec![1.0, 1.0]), &IpmOptions::default());
        assert_eq!(r.status, IpmStatus::Infeasible);
        // closest point of the box to the line is the corner (5, 5)
        assert!((r.x[0] - 5.0).abs() < 1e-3 && (r.x[1] - 5.0).abs() < 1e-3, "{}", r.x);
        assert!((r.primal_inf - 10.0).abs() < 1e-2);
    }
}
