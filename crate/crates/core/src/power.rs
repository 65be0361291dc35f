//! Power-flow model: line flows, nodal outflows, switched supply, the load
//! objective `E`, the constraint stack `C`, the complementarity penalty and
//! their derivatives.
//!
//! Vector layouts are fixed because duals index into them:
//!
//! * state `x` and power vectors interleave per bus position: `(v_1, θ_1, v_2, θ_2, …)`
//!   and `(P_1, Q_1, P_2, Q_2, …)`;
//! * inputs `u` interleave per generator: `(pg_1, qg_1, pg_2, qg_2, …)`;
//! * switches `y` follow the order of `GridCase::demands`;
//! * `C` stacks `P−S`, `S−P`, `x̲−x`, `x−x̄`, `u̲−u`, `u−ū`, each block in the
//!   layout of its vector. Feasibility is `C ≤ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;
use crate::grid::{build_admittance, AdmittanceMatrix, GridCase};

pub type SwitchVector = DVector<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: DVector<f64>,
    pub theta: DVector<f64>,
}

impl State {
    pub fn flat(n: usize) -> Self {
        Self {
            v: DVector::from_element(n, 1.0),
            theta: DVector::zeros(n),
        }
    }

    pub fn to_vec(&self) -> DVector<f64> {
        interleave(&self.v, &self.theta)
    }

    pub fn from_vec(x: &DVector<f64>) -> Self {
        let (v, theta) = split(x);
        Self { v, theta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputVector {
    pub pg: DVector<f64>,
    pub qg: DVector<f64>,
}

impl InputVector {
    pub fn to_vec(&self) -> DVector<f64> {
        interleave(&self.pg, &self.qg)
    }

    pub fn from_vec(u: &DVector<f64>) -> Self {
        let (pg, qg) = split(u);
        Self { pg, qg }
    }
}

/// Per-bus (active, reactive) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector {
    pub active: DVector<f64>,
    pub reactive: DVector<f64>,
}

impl PowerVector {
    pub fn stacked(&self) -> DVector<f64> {
        interleave(&self.active, &self.reactive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintVector {
    pub values: DVector<f64>,
    pub n_bus: usize,
    pub n_gen: usize,
}

impl ConstraintVector {
    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// Rows of the `P−S` block.
    pub fn balance(&self) -> DVector<f64> {
        self.values.rows(0, 2 * self.n_bus).into_owned()
    }
}

fn interleave(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(2 * a.len(), |i, _| if i % 2 == 0 { a[i / 2] } else { b[i / 2] })
}

fn split(x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = x.len() / 2;
    (
        DVector::from_fn(n, |i, _| x[2 * i]),
        DVector::from_fn(n, |i, _| x[2 * i + 1]),
    )
}

/// Complementarity penalty `Σ y_k (1 − y_k)`.
pub fn phi(y: &DVector<f64>) -> f64 {
    y.iter().map(|v| v * (1.0 - v)).sum()
}

pub fn grad_phi(y: &DVector<f64>) -> DVector<f64> {
    y.map(|v| 1.0 - 2.0 * v)
}

/// Errors if any switch leaves the unit box.
pub fn check_unit_box(y: &DVector<f64>) -> Result<(), ModelError> {
    match y.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(ModelError::Dimension(format!("switch {i} = {} outside [0, 1]", y[i]))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    /// Bus positions.
    pub k: usize,
    pub l: usize,
    pub g: f64,
    pub b: f64,
}

/// Value, gradient and Hessian of one directed flow component with respect
/// to the local variables `(v_i, θ_i, v_j, θ_j)`.
#[derive(Debug, Clone, Copy)]
pub struct FlowDerivs {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

/// Directed flow `Π_ij` and its first and second derivatives.
///
/// Both components share the form `a·v_i² − v_i v_j w(θ_ij)` with
/// `(a, w) = (g, g cos + b sin)` for active and `(−b, g sin − b cos)` for reactive power.
pub fn flow_derivs(g: f64, b: f64, vi: f64, vj: f64, theta_ij: f64) -> [FlowDerivs; 2] {
    let (s, c) = theta_ij.sin_cos();
    let parts = [(g, g * c + b * s, -g * s + b * c), (-b, g * s - b * c, g * c + b * s)];
    parts.map(|(a, w, dw)| {
        let value = a * vi * vi - vi * vj * w;
        let grad = [2.0 * a * vi - vj * w, -vi * vj * dw, -vi * w, vi * vj * dw];
        let t = vi * vj * w;
        let hess = [
            [2.0 * a, -vj * dw, -w, vj * dw],
            [-vj * dw, t, -vi * dw, -t],
            [-w, -vi * dw, 0.0, vi * dw],
            [vj * dw, -t, vi * dw, t],
        ];
        FlowDerivs { value, grad, hess }
    })
}

/// First derivatives of every model function at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    /// `∂P/∂x`, `2N × 2N`.
    pub dp_dx: DMatrix<f64>,
    pub de_dx: DVector<f64>,
    pub de_du: DVector<f64>,
    pub de_dy: DVector<f64>,
    /// `∂C/∂x`, `(8N+4G) × 2N`.
    pub dc_dx: DMatrix<f64>,
    pub dc_du: DMatrix<f64>,
    pub dc_dy: DMatrix<f64>,
}

/// A case compiled to bus positions, with the admittance matrix and
/// neighbour lists precomputed.
#[derive(Debug, Clone)]
pub struct Network {
    pub case: GridCase,
    pub admittance: AdmittanceMatrix,
    pub lines: Vec<Line>,
    /// Per bus: `(neighbour position, line index)`.
    pub neighbors: Vec<Vec<(usize, usize)>>,
    pub gen_pos: Vec<usize>,
    pub demand_pos: Vec<usize>,
    pub gen_at: Vec<Option<usize>>,
    pub demand_at: Vec<Option<usize>>,
    pub slack: usize,
    pub pd: DVector<f64>,
    pub qd: DVector<f64>,
    pub rank: DVector<f64>,
}

impl Network {
    /// Compiles a validated case.
    pub fn new(case: &GridCase) -> Self {
        let n = case.n_bus();
        let pos = |id: usize| case.bus_position(id).expect("validated case");
        let mut lines = Vec::with_capacity(case.branches.len());
        let mut neighbors = vec![Vec::new(); n];
        for br in &case.branches {
            let (k, l) = (pos(br.from), pos(br.to));
            neighbors[k].push((l, lines.len()));
            neighbors[l].push((k, lines.len()));
            lines.push(Line { k, l, g: br.g, b: br.b });
        }
        let gen_pos: Vec<usize> = case.generators.iter().map(|g| pos(g.bus)).collect();
        let demand_pos: Vec<usize> = case.demands.iter().map(|d| pos(d.bus)).collect();
        let mut gen_at = vec![None; n];
        for (i, &p) in gen_pos.iter().enumerate() {
            gen_at[p] = Some(i);
        }
        let mut demand_at = vec![None; n];
        for (i, &p) in demand_pos.iter().enumerate() {
            demand_at[p] = Some(i);
        }
        Self {
            admittance: build_admittance(case),
            lines,
            neighbors,
            gen_pos,
            demand_pos,
            gen_at,
            demand_at,
            slack: case.slack_position(),
            pd: DVector::from_iterator(case.demands.len(), case.demands.iter().map(|d| d.pd)),
            qd: DVector::from_iterator(case.demands.len(), case.demands.iter().map(|d| d.qd)),
            rank: DVector::from_iterator(case.demands.len(), case.demands.iter().map(|d| d.rank)),
            case: case.clone(),
        }
    }

    pub fn n_bus(&self) -> usize {
        self.case.buses.len()
    }

    pub fn n_gen(&self) -> usize {
        self.case.generators.len()
    }

    pub fn n_demand(&self) -> usize {
        self.case.demands.len()
    }

    pub fn n_constraints(&self) -> usize {
        8 * self.n_bus() + 4 * self.n_gen()
    }

    /// `(x̲, x̄)` in state layout.
    pub fn x_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let b = &self.case.buses;
        let lo = DVector::from_fn(2 * b.len(), |i, _| {
            let bus = &b[i / 2];
            if i % 2 == 0 {
                bus.v_min
            } else {
                bus.theta_min
            }
        });
        let hi = DVector::from_fn(2 * b.len(), |i, _| {
            let bus = &b[i / 2];
            if i % 2 == 0 {
                bus.v_max
            } else {
                bus.theta_max
            }
        });
        (lo, hi)
    }

    /// `(u̲, ū)` in input layout.
    pub fn u_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let g = &self.case.generators;
        let lo = DVector::from_fn(
            2 * g.len(),
            |i, _| {
                if i % 2 == 0 {
                    g[i / 2].pg_min
                } else {
                    g[i / 2].qg_min
                }
            },
        );
        let hi = DVector::from_fn(
            2 * g.len(),
            |i, _| {
                if i % 2 == 0 {
                    g[i / 2].pg_max
                } else {
                    g[i / 2].qg_max
                }
            },
        );
        (lo, hi)
    }

    /// Voltage magnitude the slack bus is held at.
    pub fn slack_voltage(&self) -> f64 {
        self.case.buses[self.slack].v_set
    }

    fn check_dims(&self, state: &State, input: &InputVector, y: &DVector<f64>) -> Result<(), ModelError> {
        let (n, g, d) = (self.n_bus(), self.n_gen(), self.n_demand());
        if state.v.len() != n || state.theta.len() != n {
            return Err(ModelError::Dimension(format!(
                "state has {} buses, case has {n}",
                state.v.len()
            )));
        }
        if input.pg.len() != g || input.qg.len() != g {
            return Err(ModelError::Dimension(format!(
                "input has {} generators, case has {g}",
                input.pg.len()
            )));
        }
        if y.len() != d {
            return Err(ModelError::Dimension(format!("{} switches for {d} demands", y.len())));
        }
        Ok(())
    }

    /// `Π_kl` for buses given by id.
    pub fn line_flow(&self, state: &State, k: usize, l: usize) -> Result<(f64, f64), ModelError> {
        let (Some(kp), Some(lp)) = (self.case.bus_position(k), self.case.bus_position(l)) else {
            return Err(ModelError::NotALine(k, l));
        };
        let line = self.neighbors[kp]
            .iter()
            .find(|(nb, _)| *nb == lp)
            .map(|&(_, li)| self.lines[li])
            .ok_or(ModelError::NotALine(k, l))?;
        Ok(self.flow_at(state, kp, lp, &line))
    }

    fn flow_at(&self, state: &State, k: usize, l: usize, line: &Line) -> (f64, f64) {
        let (vk, vl) = (state.v[k], state.v[l]);
        let (s, c) = (state.theta[k] - state.theta[l]).sin_cos();
        let (g, b) = (line.g, line.b);
        (
            g * vk * vk - vk * vl * (g * c + b * s),
            -b * vk * vk - vk * vl * (g * s - b * c),
        )
    }

    /// `P(x)`: total outflow at every bus, summed over neighbours.
    pub fn node_outflow(&self, state: &State) -> PowerVector {
        let n = self.n_bus();
        let mut active = DVector::zeros(n);
        let mut reactive = DVector::zeros(n);
        for k in 0..n {
            for &(l, li) in &self.neighbors[k] {
                let (p, q) = self.flow_at(state, k, l, &self.lines[li]);
                active[k] += p;
                reactive[k] += q;
            }
        }
        PowerVector { active, reactive }
    }

    /// `S(u, y)`: generation minus switched demand, per bus.
    pub fn supply(&self, input: &InputVector, y: &DVector<f64>) -> PowerVector {
        let n = self.n_bus();
        let mut active = DVector::zeros(n);
        let mut reactive = DVector::zeros(n);
        for (i, &p) in self.gen_pos.iter().enumerate() {
            active[p] += input.pg[i];
            reactive[p] += input.qg[i];
        }
        for (i, &p) in self.demand_pos.iter().enumerate() {
            let y2 = y[i] * y[i];
            active[p] -= y2 * self.pd[i];
            reactive[p] -= y2 * self.qd[i];
        }
        PowerVector { active, reactive }
    }

    /// Active generation at a bus position, zero off generator buses.
    fn pg_at(&self, input: &InputVector, pos: usize) -> f64 {
        self.gen_at[pos].map(|i| input.pg[i]).unwrap_or(0.0)
    }

    /// `E = Σ_{k∈D} y_k r_k (p^g_k − v_k Σ_l v_l (G_kl cos θ_kl + B_kl sin θ_kl))`.
    pub fn objective_e(&self, state: &State, input: &InputVector, y: &DVector<f64>) -> f64 {
        let (gm, bm) = (&self.admittance.g, &self.admittance.b);
        let n = self.n_bus();
        self.demand_pos
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let inner: f64 = (0..n)
                    .filter(|&l| gm[(k, l)] != 0.0 || bm[(k, l)] != 0.0)
                    .map(|l| {
                        let (s, c) = (state.theta[k] - state.theta[l]).sin_cos();
                        state.v[l] * (gm[(k, l)] * c + bm[(k, l)] * s)
                    })
                    .sum();
                y[i] * self.rank[i] * (self.pg_at(input, k) - state.v[k] * inner)
            })
            .sum()
    }

    /// `Σ y_k r_k p^d_k`, the weighted delivered load.
    pub fn delivered_value(&self, y: &DVector<f64>) -> f64 {
        (0..self.n_demand()).map(|i| y[i] * self.rank[i] * self.pd[i]).sum()
    }

    /// `P(x) − S(u, y)` in power layout.
    pub fn balance_residual(&self, state: &State, input: &InputVector, y: &DVector<f64>) -> DVector<f64> {
        self.node_outflow(state).stacked() - self.supply(input, y).stacked()
    }

    pub fn constraints_c(
        &self,
        state: &State,
        input: &InputVector,
        y: &DVector<f64>,
    ) -> Result<ConstraintVector, ModelError> {
        self.check_dims(state, input, y)?;
        let (n, g) = (self.n_bus(), self.n_gen());
        let h = self.balance_residual(state, input, y);
        let x = state.to_vec();
        let u = input.to_vec();
        let (xl, xu) = self.x_bounds();
        let (ul, uu) = self.u_bounds();
        let mut values = DVector::zeros(self.n_constraints());
        let blocks: [DVector<f64>; 6] = [h.clone(), -h, &xl - &x, &x - &xu, &ul - &u, &u - &uu];
        let mut off = 0;
        for block in blocks {
            values.rows_mut(off, block.len()).copy_from(&block);
            off += block.len();
        }
        Ok(ConstraintVector {
            values,
            n_bus: n,
            n_gen: g,
        })
    }

    /// `∂P/∂x` in power × state layout.
    pub fn outflow_jacobian(&self, state: &State) -> DMatrix<f64> {
        let n = self.n_bus();
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for line in &self.lines {
            for (i, j) in [(line.k, line.l), (line.l, line.k)] {
                let d = flow_derivs(line.g, line.b, state.v[i], state.v[j], state.theta[i] - state.theta[j]);
                let cols = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];
                for (comp, fd) in d.iter().enumerate() {
                    for (c, &col) in cols.iter().enumerate() {
                        jac[(2 * i + comp, col)] += fd.grad[c];
                    }
                }
            }
        }
        jac
    }

    /// Adds `Σ_k w_k ∇²_x P_k(x)` to `out`, with `w` in power layout.
    pub fn add_outflow_hessian(&self, state: &State, w: &DVector<f64>, out: &mut DMatrix<f64>) {
        for line in &self.lines {
            for (i, j) in [(line.k, line.l), (line.l, line.k)] {
                let (wp, wq) = (w[2 * i], w[2 * i + 1]);
                if wp == 0.0 && wq == 0.0 {
                    continue;
                }
                let d = flow_derivs(line.g, line.b, state.v[i], state.v[j], state.theta[i] - state.theta[j]);
                let idx = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];
                for a in 0..4 {
                    for c in 0..4 {
                        out[(idx[a], idx[c])] += wp * d[0].hess[a][c] + wq * d[1].hess[a][c];
                    }
                }
            }
        }
    }

    /// `∂S/∂u` in power × input layout.
    pub fn supply_input_jacobian(&self) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(2 * self.n_bus(), 2 * self.n_gen());
        for (i, &p) in self.gen_pos.iter().enumerate() {
            jac[(2 * p, 2 * i)] = 1.0;
            jac[(2 * p + 1, 2 * i + 1)] = 1.0;
        }
        jac
    }

    /// `∂S/∂y` in power × switch layout.
    pub fn supply_switch_jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(2 * self.n_bus(), self.n_demand());
        for (i, &p) in self.demand_pos.iter().enumerate() {
            jac[(2 * p, i)] = -2.0 * y[i] * self.pd[i];
            jac[(2 * p + 1, i)] = -2.0 * y[i] * self.qd[i];
        }
        jac
    }

    pub fn jacobians(&self, state: &State, input: &InputVector, y: &DVector<f64>) -> Result<Jacobians, ModelError> {
        self.check_dims(state, input, y)?;
        let (n, g, d) = (self.n_bus(), self.n_gen(), self.n_demand());
        let m = self.n_constraints();
        let dp_dx = self.outflow_jacobian(state);
        let ds_du = self.supply_input_jacobian();
        let ds_dy = self.supply_switch_jacobian(y);
        let p = self.node_outflow(state);

        let mut de_dx = DVector::zeros(2 * n);
        let mut de_du = DVector::zeros(2 * g);
        let mut de_dy = DVector::zeros(d);
        for (i, &k) in self.demand_pos.iter().enumerate() {
            let w = y[i] * self.rank[i];
            de_dx -= w * dp_dx.row(2 * k).transpose();
            if let Some(gi) = self.gen_at[k] {
                de_du[2 * gi] += w;
            }
            de_dy[i] = self.rank[i] * (self.pg_at(input, k) - p.active[k]);
        }

        let mut dc_dx = DMatrix::zeros(m, 2 * n);
        let mut dc_du = DMatrix::zeros(m, 2 * g);
        let mut dc_dy = DMatrix::zeros(m, d);
        let nb = 2 * n;
        dc_dx.rows_mut(0, nb).copy_from(&dp_dx);
        dc_dx.rows_mut(nb, nb).copy_from(&(-&dp_dx));
        dc_du.rows_mut(0, nb).copy_from(&(-&ds_du));
        dc_du.rows_mut(nb, nb).copy_from(&ds_du);
        dc_dy.rows_mut(0, nb).copy_from(&(-&ds_dy));
        dc_dy.rows_mut(nb, nb).copy_from(&ds_dy);
        for i in 0..nb {
            dc_dx[(2 * nb + i, i)] = -1.0;
            dc_dx[(3 * nb + i, i)] = 1.0;
        }
        let off = 4 * nb;
        for i in 0..2 * g {
            dc_du[(off + i, i)] = -1.0;
            dc_du[(off + 2 * g + i, i)] = 1.0;
        }
        Ok(Jacobians {
            dp_dx,
            de_dx,
            de_du,
            de_dy,
            dc_dx,
            dc_du,
            dc_dy,
        })
    }

    /// `∇²_y (E − λᵀC)`. Only the `y_k²` demand terms of the two balance
    /// blocks have curvature, so the result is diagonal.
    pub fn hessian_q(&self, duals: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        if duals.len() != self.n_constraints() {
            return Err(ModelError::Dimension(format!(
                "{} duals for {} constraints",
                duals.len(),
                self.n_constraints()
            )));
        }
        let nb = 2 * self.n_bus();
        let d = self.n_demand();
        let mut q = DMatrix::zeros(d, d);
        for (i, &k) in self.demand_pos.iter().enumerate() {
            // ∂²(P−S)/∂y² = +2(pd, qd); the S−P block has the opposite sign
            let net_p = duals[2 * k] - duals[nb + 2 * k];
            let net_q = duals[2 * k + 1] - duals[nb + 2 * k + 1];
            q[(i, i)] = -2.0 * (net_p * self.pd[i] + net_q * self.qd[i]);
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::parse_case;

    fn five_bus() -> Network {
        Network::new(&parse_case(cases::CASE5).unwrap())
    }

    #[test]
    fn flat_start_has_no_flow() {
        let net = five_bus();
        let state = State::flat(5);
        for br in &net.case.branches {
            assert_eq!(net.line_flow(&state, br.from, br.to).unwrap(), (0.0, 0.0));
        }
        let p = net.node_outflow(&state);
        assert!(p.stacked().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn line_flow_scalar_values() {
        // independent scalar evaluation of the two-row formula
        let (g, b, vk, vl, t): (f64, f64, f64, f64, f64) = (1.0, -5.0, 1.05, 1.0, 0.1);
        let p_ref = vk * vk * g - vk * vl * (g * t.cos() + b * t.sin());
        let q_ref = -vk * vk * b - vk * vl * (-b * t.cos() + g * t.sin());
        let d = flow_derivs(g, b, vk, vl, t);
        assert!((d[0].value - p_ref).abs() < 1e-14);
        assert!((d[1].value - q_ref).abs() < 1e-14);
        // hand-evaluated digits
        assert!((d[0].value - 0.5818711).abs() < 1e-6, "{}", d[0].value);
        assert!((d[1].value - 0.1839030).abs() < 1e-6, "{}", d[1].value);
    }

    #[test]
    fn line_flow_without_conductance() {
        let d = flow_derivs(0.0, -5.0, 1.05, 0.98, 0.0);
        assert_eq!(d[0].value, 0.0);
        assert!((d[1].value - 5.0 * 1.05 * (1.05 - 0.98)).abs() < 1e-14);
    }

    #[test]
    fn line_flow_rejects_non_lines() {
        let net = five_bus();
        let state = State::flat(5);
        assert_eq!(net.line_flow(&state, 2, 5), Err(ModelError::NotALine(2, 5)));
        assert_eq!(net.line_flow(&state, 1, 99), Err(ModelError::NotALine(1, 99)));
    }

    #[test]
    fn supply_cases() {
        let net = five_bus();
        let input = InputVector {
            pg: DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            qg: DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]),
        };
        let zero = net.supply(&input, &DVector::zeros(3));
        assert_eq!(zero.active.as_slice(), &[1.0, 0.0, 2.0, 3.0, 4.0]);
        let full = net.supply(&input, &DVector::from_element(3, 1.0));
        // bus 2 is a pure demand bus
        assert_eq!(full.active[1], -net.pd[0]);
        assert_eq!(full.reactive[1], -net.qd[0]);
        let half = net.supply(&input, &DVector::from_element(3, 0.5));
        assert!((half.active[1] + 0.25 * net.pd[0]).abs() < 1e-15);
    }

    #[test]
    fn objective_vanishes_without_switches() {
        let net = five_bus();
        let state = State {
            v: DVector::from_vec(vec![1.0, 1.02, 0.97, 1.0, 1.01]),
            theta: DVector::from_vec(vec![0.1, -0.05, 0.02, 0.0, 0.03]),
        };
        let input = InputVector {
            pg: DVector::from_element(4, 1.0),
            qg: DVector::zeros(4),
        };
        assert_eq!(net.objective_e(&state, &input, &DVector::zeros(3)), 0.0);
    }

    #[test]
    fn objective_matches_outflow_form() {
        let net = five_bus();
        let state = State {
            v: DVector::from_vec(vec![1.0, 1.02, 0.97, 1.0, 1.01]),
            theta: DVector::from_vec(vec![0.1, -0.05, 0.02, 0.0, 0.03]),
        };
        let input = InputVector {
            pg: DVector::from_element(4, 0.7),
            qg: DVector::zeros(4),
        };
        let y = DVector::from_vec(vec![0.3, 0.8, 1.0]);
        let p = net.node_outflow(&state);
        let expect: f64 = net
            .demand_pos
            .iter()
            .enumerate()
            .map(|(i, &k)| y[i] * net.rank[i] * (net.pg_at(&input, k) - p.active[k]))
            .sum();
        assert!((net.objective_e(&state, &input, &y) - expect).abs() < 1e-12);
    }

    #[test]
    fn constraint_layout_and_bounds() {
        let net = five_bus();
        let state = State::flat(5);
        let (ul, _) = net.u_bounds();
        let input = InputVector::from_vec(&ul);
        let y = DVector::zeros(3);
        let c = net.constraints_c(&state, &input, &y).unwrap();
        assert_eq!(c.values.len(), 8 * 5 + 4 * 4);
        // u at its lower bound: u̲ − u rows are zero
        let off = 8 * 5;
        assert!(c.values.rows(off, 8).iter().all(|v| *v == 0.0));
        // the pair blocks are negatives of each other
        for i in 0..10 {
            assert_eq!(c.values[i], -c.values[10 + i]);
        }
    }

    #[test]
    fn overload_is_infeasible() {
        let mut case = parse_case(cases::CASE5).unwrap();
        for d in &mut case.demands {
            d.pd = 100.0;
        }
        let net = Network::new(&case);
        let (_, uu) = net.u_bounds();
        let c = net
            .constraints_c(
                &State::flat(5),
                &InputVector::from_vec(&uu),
                &DVector::from_element(3, 1.0),
            )
            .unwrap();
        assert!(c.max() > 0.0);
    }

    #[test]
    fn hessian_q_structure() {
        let net = five_bus();
        let m = net.n_constraints();
        assert_eq!(net.hessian_q(&DVector::zeros(m)).unwrap(), DMatrix::zeros(3, 3));
        // single dual on the active P−S row of the first demand bus (position 1)
        let mut duals = DVector::zeros(m);
        duals[2] = 0.7;
        let q = net.hessian_q(&duals).unwrap();
        assert!((q[(0, 0)] + 2.0 * 0.7 * net.pd[0]).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                if i != j || i > 0 {
                    assert_eq!(q[(i, j)], 0.0);
                }
            }
        }
        assert!(net.hessian_q(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(&DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0])), 0.0);
        assert_eq!(phi(&DVector::from_element(6, 0.5)), 1.5);
        assert_eq!(grad_phi(&DVector::from_vec(vec![0.0, 1.0])).as_slice(), &[1.0, -1.0]);
        assert!(check_unit_box(&DVector::from_vec(vec![0.0, 1.2])).is_err());
    }
}
