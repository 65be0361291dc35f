//! Finite-difference and invariant self-checks behind `aosbqp check`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::GridCase;
use crate::power::{InputVector, Network, State};

const H: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub name: &'static str,
    /// `max |analytic − fd| / max(1, |fd|)` over all entries and points.
    pub max_rel_err: f64,
}

/// A random point strictly inside the bounds, with moderate angles.
pub struct SamplePoint {
    pub state: State,
    pub input: InputVector,
    pub y: DVector<f64>,
    pub duals: DVector<f64>,
}

pub fn random_point(net: &Network, rng: &mut impl Rng) -> SamplePoint {
    let n = net.n_bus();
    let (xl, xu) = net.x_bounds();
    let (ul, uu) = net.u_bounds();
    let mut state = State::flat(n);
    for k in 0..n {
        state.v[k] = xl[2 * k] + (xu[2 * k] - xl[2 * k]) * rng.gen_range(0.05..0.95);
        let (lo, hi) = (xl[2 * k + 1].max(-0.4), xu[2 * k + 1].min(0.4));
        state.theta[k] = lo + (hi - lo) * rng.gen_range(0.05..0.95);
    }
    let u = DVector::from_fn(ul.len(), |i, _| ul[i] + (uu[i] - ul[i]) * rng.gen_range(0.05..0.95));
    SamplePoint {
        state,
        input: InputVector::from_vec(&u),
        y: DVector::from_fn(net.n_demand(), |_, _| rng.gen_range(0.05..0.95)),
        duals: DVector::from_fn(net.n_constraints(), |_, _| rng.gen_range(0.0..1.0)),
    }
}

fn rel_err(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    analytic
        .iter()
        .zip(fd.iter())
        .map(|(a, f)| (a - f).abs() / f.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Central differences of `f` with respect to the vector `at`; one column
/// per coordinate.
fn fd_jacobian(at: &DVector<f64>, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..at.len())
        .map(|j| {
            let (mut p, mut m) = (at.clone(), at.clone());
            p[j] += H;
            m[j] -= H;
            (f(&p) - f(&m)) / (2.0 * H)
        })
        .collect();
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, at.len(), |i, j| cols[j][i])
}

fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

/// Compares every analytic derivative with central differences at
/// `points` random interior points.
pub fn derivative_check(net: &Network, points: usize, seed: u64) -> Vec<DerivativeReport> {
    let names = [
        "dP/dx",
        "dE/dx",
        "dE/du",
        "dE/dy",
        "dC/dx",
        "dC/du",
        "dC/dy",
        "d2(wP)/dx2",
        "Q",
    ];
    let mut worst = [0.0_f64; 9];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..points {
        let p = random_point(net, &mut rng);
        let (s, u, y) = (&p.state, &p.input, &p.y);
        let jac = net.jacobians(s, u, y).expect("sample dimensions match");
        let x = s.to_vec();
        let uv = u.to_vec();
        let with_x = |xv: &DVector<f64>| State::from_vec(xv);
        let with_u = |w: &DVector<f64>| InputVector::from_vec(w);

        let fd = fd_jacobian(&x, |xv| net.node_outflow(&with_x(xv)).stacked());
        worst[0] = worst[0].max(rel_err(&jac.dp_dx, &fd));

        let e_x = fd_jacobian(&x, |xv| scalar(net.objective_e(&with_x(xv), u, y)));
        worst[1] = worst[1].max(rel_err(&row(&jac.de_dx), &e_x));
        let e_u = fd_jacobian(&uv, |w| scalar(net.objective_e(s, &with_u(w), y)));
        worst[2] = worst[2].max(rel_err(&row(&jac.de_du), &e_u));
        let e_y = fd_jacobian(y, |w| scalar(net.objective_e(s, u, w)));
        worst[3] = worst[3].max(rel_err(&row(&jac.de_dy), &e_y));

        let c = |s: &State, u: &InputVector, y: &DVector<f64>| net.constraints_c(s, u, y).expect("dims").values;
        worst[4] = worst[4].max(rel_err(&jac.dc_dx, &fd_jacobian(&x, |xv| c(&with_x(xv), u, y))));
        worst[5] = worst[5].max(rel_err(&jac.dc_du, &fd_jacobian(&uv, |w| c(s, &with_u(w), y))));
        worst[6] = worst[6].max(rel_err(&jac.dc_dy, &fd_jacobian(y, |w| c(s, u, w))));

        // weighted outflow Hessian against differences of the Jacobian
        let w = DVector::from_fn(2 * net.n_bus(), |_, _| rng.gen_range(-1.0..1.0));
        let mut hess = DMatrix::zeros(x.len(), x.len());
        net.add_outflow_hessian(s, &w, &mut hess);
        let fd = fd_jacobian(&x, |xv| net.outflow_jacobian(&with_x(xv)).transpose() * &w);
        worst[7] = worst[7].max(rel_err(&hess, &fd));

        // Q = ∇²_y (E − λᵀC)
        let q = net.hessian_q(&p.duals).expect("dual length matches");
        let grad_l = |w: &DVector<f64>| {
            let j = net.jacobians(s, u, w).expect("dims");
            j.de_dy - j.dc_dy.transpose() * &p.duals
        };
        worst[8] = worst[8].max(rel_err(&q, &fd_jacobian(y, grad_l)));
    }
    names
        .iter()
        .zip(worst)
        .map(|(&name, max_rel_err)| DerivativeReport { name, max_rel_err })
        .collect()
}

/// Largest `|Σ_k P_k|` over random states of `case` with every branch
/// conductance removed.
pub fn conservation_check(case: &GridCase, states: usize, seed: u64) -> f64 {
    let mut lossless = case.clone();
    for br in &mut lossless.branches {
        br.g = 0.0;
    }
    let net = Network::new(&lossless);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..states)
        .map(|_| net.node_outflow(&random_point(&net, &mut rng).state).active.sum().abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::parse_case;

    #[test]
    fn five_bus_derivatives() {
        let net = Network::new(&parse_case(cases::CASE5).unwrap());
        for r in derivative_check(&net, 3, 1) {
            assert!(r.max_rel_err <= 1e-6, "{}: {:e}", r.name, r.max_rel_err);
        }
    }

    #[test]
    fn five_bus_conservation() {
        let case = parse_case(cases::CASE5).unwrap();
        assert!(conservation_check(&case, 10, 2) <= 1e-10);
    }
}
