//! Continuous optimal power flow at fixed switches: maximise `E` over
//! `(x, u)` subject to `C ≤ 0`.
//!
//! Power balance is imposed as `P(x) − S(u, y) = 0`; its multiplier `ν` is
//! reported split by sign across the `P−S` and `S−P` rows of `C`. The slack
//! bus angle and magnitude are eliminated from the decision vector.

use nalgebra::{DMatrix, DVector};

use crate::ipm::{self, IpmOptions, IpmStatus, Nlp};
use crate::power::{InputVector, Network, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ao1Status {
    Converged,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ao1Result {
    pub state: State,
    pub input: InputVector,
    /// Duals in the row order of `C`.
    pub duals: DVector<f64>,
    pub kkt_residual: f64,
    pub objective: f64,
    pub status: Ao1Status,
    pub iterations: usize,
    /// `max(C)` at the returned point.
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ao1Options {
    pub tol_feas: f64,
    pub tol_kkt: f64,
    pub max_iter: usize,
}

impl Default for Ao1Options {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_kkt: 1e-6,
            max_iter: 200,
        }
    }
}

/// The OPF as an [`Nlp`] in the reduced variables `(x without slack, u)`.
pub struct OpfProblem<'a> {
    net: &'a Network,
    y: &'a DVector<f64>,
    /// State indices kept as decision variables.
    x_keep: Vec<usize>,
}

impl<'a> OpfProblem<'a> {
    pub fn new(net: &'a Network, y: &'a DVector<f64>) -> Self {
        let s = net.slack;
        let x_keep = (0..2 * net.n_bus()).filter(|&i| i / 2 != s).collect();
        Self { net, y, x_keep }
    }

    fn nx(&self) -> usize {
        self.x_keep.len()
    }

    pub fn split(&self, z: &DVector<f64>) -> (State, InputVector) {
        let mut x = DVector::zeros(2 * self.net.n_bus());
        x[2 * self.net.slack] = self.net.slack_voltage();
        for (a, &i) in self.x_keep.iter().enumerate() {
            x[i] = z[a];
        }
        let u = z.rows(self.nx(), 2 * self.net.n_gen()).into_owned();
        (State::from_vec(&x), InputVector::from_vec(&u))
    }

    pub fn join(&self, state: &State, input: &InputVector) -> DVector<f64> {
        let x = state.to_vec();
        let u = input.to_vec();
        let nx = self.nx();
        DVector::from_fn(nx + u.len(), |i, _| if i < nx { x[self.x_keep[i]] } else { u[i - nx] })
    }

    /// Flat start: unit voltage clamped to bounds, zero angle, inputs at
    /// the middle of their range.
    pub fn flat_start(&self) -> DVector<f64> {
        let n = self.net.n_bus();
        let (xl, xu) = self.net.x_bounds();
        let mut state = State::flat(n);
        for k in 0..n {
            state.v[k] = state.v[k].max(xl[2 * k]).min(xu[2 * k]);
        }
        let (ul, uu) = self.net.u_bounds();
        let input = InputVector::from_vec(&((ul + uu) * 0.5));
        self.join(&state, &input)
    }
}

impl Nlp for OpfProblem<'_> {
    fn n(&self) -> usize {
        self.nx() + 2 * self.net.n_gen()
    }

    fn m(&self) -> usize {
        2 * self.net.n_bus()
    }

    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let (xl, xu) = self.net.x_bounds();
        let (ul, uu) = self.net.u_bounds();
        let nx = self.nx();
        let pick = |x: &DVector<f64>, u: &DVector<f64>| {
            DVector::from_fn(nx + u.len(), |i, _| if i < nx { x[self.x_keep[i]] } else { u[i - nx] })
        };
        (pick(&xl, &ul), pick(&xu, &uu))
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        let (s, u) = self.split(z);
        -self.net.objective_e(&s, &u, self.y)
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let (s, u) = self.split(z);
        let jac = self
            .net
            .jacobians(&s, &u, self.y)
            .expect("dimensions fixed at construction");
        let nx = self.nx();
        -DVector::from_fn(self.n(), |i, _| {
            if i < nx {
                jac.de_dx[self.x_keep[i]]
            } else {
                jac.de_du[i - nx]
            }
        })
    }

    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let (s, u) = self.split(z);
        self.net.balance_residual(&s, &u, self.y)
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (s, _) = self.split(z);
        let dp = self.net.outflow_jacobian(&s);
        let ds = self.net.supply_input_jacobian();
        let nx = self.nx();
        DMatrix::from_fn(self.m(), self.n(), |r, i| {
            if i < nx {
                dp[(r, self.x_keep[i])]
            } else {
                -ds[(r, i - nx)]
            }
        })
    }

    fn hessian(&self, z: &DVector<f64>, sigma: f64, lambda: &DVector<f64>) -> DMatrix<f64> {
        let (s, _) = self.split(z);
        // −σE contributes σ y_k r_k ∇²P_k on the active rows of demand buses
        let mut w = lambda.clone();
        for (i, &k) in self.net.demand_pos.iter().enumerate() {
            w[2 * k] += sigma * self.y[i] * self.net.rank[i];
        }
        let nfull = 2 * self.net.n_bus();
        let mut hx = DMatrix::zeros(nfull, nfull);
        self.net.add_outflow_hessian(&s, &w, &mut hx);
        let nx = self.nx();
        DMatrix::from_fn(self.n(), self.n(), |a, b| {
            if a < nx && b < nx {
                hx[(self.x_keep[a], self.x_keep[b])]
            } else {
                0.0
            }
        })
    }
}

/// Solves the OPF at fixed `y`, from `warm` if given and from a flat start
/// otherwise.
pub fn solve_ao1(
    net: &Network,
    y: &DVector<f64>,
    warm: Option<(&State, &InputVector)>,
    opts: &Ao1Options,
) -> Ao1Result {
    let nlp = OpfProblem::new(net, y);
    let base = IpmOptions {
        tol_feas: opts.tol_feas,
        tol_kkt: opts.tol_kkt,
        max_iter: opts.max_iter,
        ..IpmOptions::default()
    };
    let res = match warm {
        Some((s, u)) => {
            let z0 = nlp.join(s, u);
            ipm::check_kkt_point(&nlp, &z0, &base)
                .unwrap_or_else(|| ipm::solve_with_restoration(&nlp, &z0, &base.warm()))
        }
        None => ipm::solve_with_restoration(&nlp, &nlp.flat_start(), &base),
    };
    let (state, input) = nlp.split(&res.x);

    let n = net.n_bus();
    let g = net.n_gen();
    let nb = 2 * n;
    let mut duals = DVector::zeros(net.n_constraints());
    for r in 0..nb {
        duals[r] = res.lambda[r].max(0.0);
        duals[nb + r] = (-res.lambda[r]).max(0.0);
    }
    let nx = nlp.nx();
    for (a, &i) in nlp.x_keep.iter().enumerate() {
        duals[2 * nb + i] = res.z_lower[a];
        duals[3 * nb + i] = res.z_upper[a];
    }
    for i in 0..2 * g {
        duals[4 * nb + i] = res.z_lower[nx + i];
        duals[4 * nb + 2 * g + i] = res.z_upper[nx + i];
    }

    let max_violation = net
        .constraints_c(&state, &input, y)
        .map(|c| c.max())
        .unwrap_or(f64::INFINITY);
    let status = match res.status {
        IpmStatus::Converged => Ao1Status::Converged,
        IpmStatus::Infeasible => Ao1Status::Infeasible,
        IpmStatus::MaxIterations | IpmStatus::Stalled => Ao1Status::MaxIterations,
    };
    Ao1Result {
        objective: net.objective_e(&state, &input, y),
        state,
        input,
        duals,
        kkt_residual: res.primal_inf.max(res.dual_inf).max(res.complementarity),
        status,
        iterations: res.iterations,
        max_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::parse_case;

    #[test]
    fn switched_off_demand() {
        let net = Network::new(&parse_case(cases::CASE5).unwrap());
        let r = solve_ao1(&net, &DVector::zeros(3), None, &Ao1Options::default());
        assert_eq!(r.status, Ao1Status::Converged, "{r:?}");
        assert_eq!(r.objective, 0.0);
        assert!(r.max_violation <= 1e-8);
    }

    #[test]
    fn adequate_case_balances() {
        let net = Network::new(&parse_case(cases::CASE5).unwrap());
        let y = DVector::from_element(3, 1.0);
        let r = solve_ao1(&net, &y, None, &Ao1Options::default());
        assert_eq!(r.status, Ao1Status::Converged, "{r:?}");
        let h = net.balance_residual(&r.state, &r.input, &y);
        assert!(h.amax() <= 1e-8);
        // warm re-solve from its own solution
        let again = solve_ao1(&net, &y, Some((&r.state, &r.input)), &Ao1Options::default());
        assert_eq!(again.status, Ao1Status::Converged);
        assert!(again.iterations <= 2, "{}", again.iterations);
    }
}
