//! Sequential Boolean quadratic programming over the switches.
//!
//! Around the AO1 point `ỹ` every subproblem is a QP in the step
//! `Δ = y − ỹ`. Step (a) solves it without penalty; afterwards the
//! complementarity penalty `ρ φ(y)` is added (linearised at the incumbent
//! or exact, depending on the variant), the incumbent is moved toward the
//! new solution by a line search, and `ρ` grows geometrically until
//! `φ(y) ≤ eps`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, SolveError};
use crate::power::{grad_phi, phi, InputVector, Network, State};
use crate::qp::{solve_qp, QpMode, QpProblem, QpSolution, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub rho0: f64,
    pub beta: f64,
    pub rho_max: f64,
    pub eps: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            beta: 10.0,
            rho_max: 1e12,
            eps: 1e-6,
        }
    }
}

impl PenaltySchedule {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(format!("rho0 must be positive, got {}", self.rho0));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(format!("beta must exceed 1, got {}", self.beta));
        }
        if !(self.eps > 0.0) {
            return Err(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.rho_max >= self.rho0) {
            return Err(format!("rho_max {} is below rho0 {}", self.rho_max, self.rho0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ao2Variant {
    /// Second-order model of the Lagrangian, penalty linearised.
    Mixed,
    /// Delivered-load objective with the exact penalty.
    RelaxedOne,
    /// Delivered-load objective with the linearised penalty.
    RelaxedTwo,
}

impl Ao2Variant {
    pub const ALL: [Ao2Variant; 3] = [Ao2Variant::Mixed, Ao2Variant::RelaxedOne, Ao2Variant::RelaxedTwo];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ao2Variant::Mixed => "mixed",
            Ao2Variant::RelaxedOne => "relaxed-one",
            Ao2Variant::RelaxedTwo => "relaxed-two",
        }
    }
}

impl fmt::Display for Ao2Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ao2Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mixed" => Ok(Ao2Variant::Mixed),
            "relaxed-one" => Ok(Ao2Variant::RelaxedOne),
            "relaxed-two" => Ok(Ao2Variant::RelaxedTwo),
            other => Err(format!("unknown variant `{other}` (mixed | relaxed-one | relaxed-two)")),
        }
    }
}

/// Options that shape the subproblem constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ao2Options {
    /// Subtract the network losses at the AO1 point from the aggregate
    /// capacity rows.
    pub loss_margin: bool,
    /// Use the linearised balance rows of `C` instead of the aggregate rows.
    pub full_rows: bool,
}

impl Default for Ao2Options {
    fn default() -> Self {
        Self {
            loss_margin: true,
            full_rows: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub y: Vec<f64>,
    pub phi: f64,
    pub rho: f64,
    pub alpha: f64,
    pub status: String,
    /// `½ΔᵀQΔ + gᵀΔ − ρφ(y)` with the unpenalised model.
    pub merit: f64,
    /// Exact step length before the safeguard; NaN when degenerate.
    pub alpha_exact: f64,
    /// `(ŷ + α_exact Δ)ᵀ∇φ(ŷ)`; NaN when the exact step was clipped or degenerate.
    pub exact_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SbqpTrace {
    pub rows: Vec<TraceRow>,
}

impl SbqpTrace {
    pub fn final_phi(&self) -> f64 {
        self.rows.last().map(|r| r.phi).unwrap_or(f64::NAN)
    }

    /// Number of penalty iterations, i.e. rows after step (a).
    pub fn penalty_iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyForm {
    /// `−ρ ∇φ(anchor)ᵀ y`.
    Linearized,
    /// `−ρ φ(y)`.
    Exact,
}

/// A Boolean QP in step coordinates around `origin`:
/// maximise `½ΔᵀQΔ + gᵀΔ − ρ·penalty` subject to `b + AΔ ≥ 0` and
/// `origin + Δ ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbqpModel {
    pub origin: DVector<f64>,
    pub q: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub penalty: PenaltyForm,
    pub mode: QpMode,
}

impl SbqpModel {
    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// Box-only model.
    pub fn boxed(origin: DVector<f64>, q: DMatrix<f64>, g: DVector<f64>, penalty: PenaltyForm, mode: QpMode) -> Self {
        let n = origin.len();
        Self {
            origin,
            q,
            g,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            penalty,
            mode,
        }
    }

    /// Subproblem at penalty `rho` with the penalty linearised at `anchor`.
    pub fn subproblem(&self, rho: f64, anchor: &DVector<f64>) -> QpProblem {
        let n = self.dim();
        let (q, g_lin) = match self.penalty {
            PenaltyForm::Linearized => (self.q.clone(), &self.g - grad_phi(anchor) * rho),
            // φ(ỹ + Δ) = φ(ỹ) + ∇φ(ỹ)ᵀΔ − ΔᵀΔ
            PenaltyForm::Exact => (
                &self.q + DMatrix::identity(n, n) * (2.0 * rho),
                &self.g - grad_phi(&self.origin) * rho,
            ),
        };
        QpProblem {
            q,
            g_lin,
            a: self.a.clone(),
            b: self.b.clone(),
            lower: -&self.origin,
            upper: self.origin.map(|v| 1.0 - v),
        }
    }

    /// Unpenalised model value at `y`.
    pub fn model_value(&self, y: &DVector<f64>) -> f64 {
        let d = y - &self.origin;
        0.5 * d.dot(&(&self.q * &d)) + self.g.dot(&d)
    }

    fn rows_hold(&self, y: &DVector<f64>) -> bool {
        let d = y - &self.origin;
        self.a.nrows() == 0 || (&self.b + &self.a * d).min() >= -1e-9
    }

    fn solve(&self, rho: f64, anchor: &DVector<f64>, start: &DVector<f64>) -> QpSolution {
        let p = self.subproblem(rho, anchor);
        solve_qp(&p, self.mode, Some(&(start - &self.origin)))
    }
}

/// Exact step length zeroing the linearised penalty `(ŷ + αΔ)ᵀ∇φ(anchor)`,
/// clipped so `y_hat + αΔ` stays in the unit box. Falls back to `α = 1`
/// (also clipped) when `|Δᵀ∇φ(anchor)| ≤ 1e−12`.
pub fn step_length(y_hat: &DVector<f64>, direction: &DVector<f64>, anchor: &DVector<f64>) -> f64 {
    let alpha = exact_alpha(y_hat, direction, anchor).unwrap_or(1.0);
    clip_alpha(y_hat, direction, alpha)
}

fn exact_alpha(y_hat: &DVector<f64>, direction: &DVector<f64>, anchor: &DVector<f64>) -> Option<f64> {
    let gp = grad_phi(anchor);
    let den = direction.dot(&gp);
    (den.abs() > 1e-12).then(|| -y_hat.dot(&gp) / den)
}

fn clip_alpha(y: &DVector<f64>, d: &DVector<f64>, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..y.len() {
        if d[i] > 0.0 {
            lo = lo.max(-y[i] / d[i]);
            hi = hi.min((1.0 - y[i]) / d[i]);
        } else if d[i] < 0.0 {
            lo = lo.max((1.0 - y[i]) / d[i]);
            hi = hi.min(-y[i] / d[i]);
        }
    }
    alpha.max(lo).min(hi)
}

fn box_project(y: &DVector<f64>) -> DVector<f64> {
    y.map(|v| v.clamp(0.0, 1.0))
}

fn status_str(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Optimal => "optimal",
        QpStatus::Infeasible => "infeasible",
        QpStatus::MaxIterations => "max-iterations",
    }
}

/// Runs steps (a)–(e) on a model. `single_pass` stops after the first
/// penalty iteration that reaches complementarity or after step (a).
pub fn run_model(model: &SbqpModel, schedule: &PenaltySchedule) -> Result<(DVector<f64>, SbqpTrace), SolveError> {
    schedule.validate().map_err(SolveError::Subproblem)?;
    let n = model.dim();
    let mut trace = SbqpTrace::default();

    // (a) global search without penalty
    let first = model.solve(0.0, &model.origin, &model.origin);
    if first.status == QpStatus::Infeasible {
        return Err(SolveError::Subproblem("step (a) subproblem is infeasible".into()));
    }
    let mut y_hat = box_project(&(&model.origin + &first.primal));
    trace.rows.push(TraceRow {
        iteration: 0,
        y: y_hat.iter().copied().collect(),
        phi: phi(&y_hat),
        rho: 0.0,
        alpha: 1.0,
        status: status_str(first.status).into(),
        merit: model.model_value(&y_hat),
        alpha_exact: f64::NAN,
        exact_residual: f64::NAN,
    });

    let mut rho = schedule.rho0;
    let mut iteration = 0;
    while phi(&y_hat) > schedule.eps {
        if rho > schedule.rho_max {
            return Err(SolveError::PenaltyDiverged {
                rho,
                phi: phi(&y_hat),
                trace,
            });
        }
        iteration += 1;

        // (b)–(c) linearise at the incumbent and solve
        let mut anchor = y_hat.clone();
        let mut sol = model.solve(rho, &anchor, &y_hat);
        if sol.status == QpStatus::Infeasible {
            return Err(SolveError::Subproblem(format!(
                "penalty subproblem infeasible at rho = {rho:e}"
            )));
        }
        let mut y_new = box_project(&(&model.origin + &sol.primal));
        let mut status = status_str(sol.status).to_string();
        if (&y_new - &y_hat).amax() <= 1e-9 {
            // stalled on a fractional point: re-anchor fractional switches at 0
            let frac: Vec<usize> = (0..n).filter(|&i| y_hat[i].min(1.0 - y_hat[i]) > 1e-6).collect();
            let mut start = y_hat.clone();
            for &i in &frac {
                anchor[i] = 0.0;
                start[i] = 0.0;
            }
            sol = model.solve(rho, &anchor, &start);
            if sol.status != QpStatus::Infeasible {
                y_new = box_project(&(&model.origin + &sol.primal));
                status = "stall-recovered".into();
            }
        }

        // (d) line search
        let dir = &y_new - &y_hat;
        let alpha_exact = exact_alpha(&y_hat, &dir, &y_hat);
        let mut alpha = 1.0;
        let mut exact_residual = f64::NAN;
        if let Some(ax) = alpha_exact {
            let clipped = step_length(&y_hat, &dir, &y_hat);
            let cand = box_project(&(&y_hat + &dir * clipped));
            if clipped == ax {
                exact_residual = cand.dot(&grad_phi(&y_hat));
            }
            // keep moving toward the new solution, and only when it pays
            if clipped > 0.0 && phi(&cand) < phi(&y_new) && model.rows_hold(&cand) {
                alpha = clipped;
            }
        }
        y_hat = if alpha == 1.0 {
            y_new
        } else {
            box_project(&(&y_hat + &dir * alpha))
        };
        trace.rows.push(TraceRow {
            iteration,
            y: y_hat.iter().copied().collect(),
            phi: phi(&y_hat),
            rho,
            alpha,
            status,
            merit: model.model_value(&y_hat) - rho * phi(&y_hat),
            alpha_exact: alpha_exact.unwrap_or(f64::NAN),
            exact_residual,
        });

        if phi(&y_hat) <= schedule.eps {
            break;
        }
        // (e)
        rho *= schedule.beta;
    }

    let snapped = y_hat.map(|v| {
        if v.min(1.0 - v) <= 2.0 * schedule.eps {
            v.round()
        } else {
            v
        }
    });
    Ok((snapped, trace))
}

fn variant_mode(variant: Ao2Variant) -> QpMode {
    match variant {
        Ao2Variant::Mixed => QpMode::Concave,
        Ao2Variant::RelaxedOne | Ao2Variant::RelaxedTwo => QpMode::StationaryPoint,
    }
}

impl SbqpModel {
    /// The grid subproblem around an AO1 point.
    pub fn from_grid(
        net: &Network,
        lin_point: (&State, &InputVector, &DVector<f64>),
        duals: &DVector<f64>,
        variant: Ao2Variant,
        opts: &Ao2Options,
    ) -> Result<Self, ModelError> {
        let (state, input, y) = lin_point;
        let d = net.n_demand();
        let weight = DVector::from_fn(d, |i, _| net.rank[i] * net.pd[i]);
        let (q, g, penalty) = match variant {
            Ao2Variant::Mixed => {
                let mut q = net.hessian_q(duals)?;
                let top = (0..d).map(|i| q[(i, i)]).fold(0.0_f64, f64::max);
                if top > 0.0 {
                    let shift = top + 1e-8 * top.max(1.0);
                    for i in 0..d {
                        q[(i, i)] -= shift;
                    }
                }
                let jac = net.jacobians(state, input, y)?;
                (q, jac.de_dy, PenaltyForm::Linearized)
            }
            Ao2Variant::RelaxedOne | Ao2Variant::RelaxedTwo => {
                let q = DMatrix::from_diagonal(&(&weight * 2.0));
                let g = DVector::from_fn(d, |i, _| 2.0 * y[i] * weight[i]);
                let form = if variant == Ao2Variant::RelaxedOne {
                    PenaltyForm::Exact
                } else {
                    PenaltyForm::Linearized
                };
                (q, g, form)
            }
        };
        let (a, b) = if opts.full_rows {
            linearized_rows(net, state, input, y)?
        } else {
            aggregate_rows(net, state, input, y, opts.loss_margin)
        };
        Ok(Self {
            origin: y.clone(),
            q,
            g,
            a,
            b,
            penalty,
            mode: variant_mode(variant),
        })
    }
}

/// Aggregate capacity rows in step coordinates: active generation at the
/// AO1 point covers active demand, reactive limits bracket reactive demand.
/// With `loss_margin` the network losses at the AO1 point are reserved.
fn aggregate_rows(
    net: &Network,
    state: &State,
    input: &InputVector,
    y: &DVector<f64>,
    loss_margin: bool,
) -> (DMatrix<f64>, DVector<f64>) {
    let d = net.n_demand();
    let (lp, lq) = if loss_margin {
        let p = net.node_outflow(state);
        (p.active.sum(), p.reactive.sum())
    } else {
        (0.0, 0.0)
    };
    let pg: f64 = input.pg.sum();
    let qmax: f64 = net.case.generators.iter().map(|g| g.qg_max).sum();
    let qmin: f64 = net.case.generators.iter().map(|g| g.qg_min).sum();
    let py = net.pd.dot(y);
    let qy = net.qd.dot(y);
    let mut a = DMatrix::zeros(3, d);
    for i in 0..d {
        a[(0, i)] = -net.pd[i];
        a[(1, i)] = -net.qd[i];
        a[(2, i)] = net.qd[i];
    }
    let b = DVector::from_vec(vec![pg - lp - py, qmax - lq - qy, qy + lq - qmin]);
    (a, b)
}

/// Linearised balance rows `−(C + ∇_yC Δ) ≥ 0` for every row of `C` that
/// depends on `y`.
fn linearized_rows(
    net: &Network,
    state: &State,
    input: &InputVector,
    y: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>), ModelError> {
    let c = net.constraints_c(state, input, y)?;
    let jac = net.jacobians(state, input, y)?;
    let rows: Vec<usize> = (0..c.values.len())
        .filter(|&r| jac.dc_dy.row(r).iter().any(|v| *v != 0.0))
        .collect();
    let a = DMatrix::from_fn(rows.len(), net.n_demand(), |i, j| -jac.dc_dy[(rows[i], j)]);
    let b = DVector::from_fn(rows.len(), |i, _| -c.values[rows[i]]);
    Ok((a, b))
}

/// Builds the QP for one penalty value; see [`SbqpModel::from_grid`].
pub fn build_subproblem(
    net: &Network,
    lin_point: (&State, &InputVector, &DVector<f64>),
    duals: &DVector<f64>,
    rho: f64,
    variant: Ao2Variant,
    phi_anchor: &DVector<f64>,
    opts: &Ao2Options,
) -> Result<QpProblem, ModelError> {
    Ok(SbqpModel::from_grid(net, lin_point, duals, variant, opts)?.subproblem(rho, phi_anchor))
}

/// Steps (a)–(e) on the grid subproblem at an AO1 point.
pub fn run_ao2(
    net: &Network,
    start: (&State, &InputVector, &DVector<f64>),
    duals: &DVector<f64>,
    schedule: &PenaltySchedule,
    variant: Ao2Variant,
    opts: &Ao2Options,
) -> Result<(DVector<f64>, SbqpTrace), SolveError> {
    let model = SbqpModel::from_grid(net, start, duals, variant, opts)?;
    run_model(&model, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_exact_step() {
        let y = DVector::from_element(1, 0.25);
        let d = DVector::from_element(1, 0.5);
        let a = step_length(&y, &d, &y);
        assert!((a + 0.5).abs() < 1e-15);
        let moved = &y + &d * a;
        assert!(moved[0].abs() < 1e-15);
        assert!(moved.dot(&grad_phi(&y)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_denominator_falls_back() {
        let y = DVector::from_vec(vec![0.5, 0.3]);
        let anchor = DVector::from_vec(vec![0.5, 0.5]);
        let d = DVector::from_vec(vec![0.1, 0.2]);
        assert_eq!(step_length(&y, &d, &anchor), 1.0);
    }

    #[test]
    fn binary_anchor_falls_back() {
        let y = DVector::from_vec(vec![1.0, 0.0]);
        let d = DVector::from_vec(vec![-0.5, 0.5]);
        // numerator ŷᵀ∇φ(ŷ) = −1, denominator 0.5 + 0.5 = 1 → α = 1 (clipped box is [0, 2])
        assert_eq!(step_length(&y, &d, &y), 1.0);
        let d = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(step_length(&y, &d, &y), 1.0);
    }

    #[test]
    fn alpha_is_clipped_to_box() {
        let y = DVector::from_element(1, 0.4);
        let d = DVector::from_element(1, 0.1);
        // exact α = −(0.4·0.2)/(0.1·0.2) = −4 → y = 0 at α = −4, inside
        assert!((step_length(&y, &d, &y) + 4.0).abs() < 1e-12);
        let d = DVector::from_element(1, 0.05);
        // exact α = −8 would give y = 0 exactly; box allows [−8, 12]
        assert!((step_length(&y, &d, &y) + 8.0).abs() < 1e-12);
        let anchor = DVector::from_element(1, 0.9);
        // α = −(0.4·(−0.8))/(0.05·(−0.8)) = −8 again, consistent
        assert!((step_length(&y, &d, &anchor) + 8.0).abs() < 1e-12);
    }

    #[test]
    fn binary_start_is_fixed_point() {
        let n = 4;
        let model = SbqpModel::boxed(
            DVector::zeros(n),
            DMatrix::zeros(n, n),
            DVector::zeros(n),
            PenaltyForm::Linearized,
            QpMode::Concave,
        );
        let (y, trace) = run_model(&model, &PenaltySchedule::default()).unwrap();
        assert_eq!(y, DVector::zeros(n));
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.final_phi(), 0.0);
    }

    #[test]
    fn penalty_drives_to_binary() {
        // concave model with an interior maximiser at 0.3 and 0.6
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -1.0]));
        let origin = DVector::from_vec(vec![0.5, 0.5]);
        let g = DVector::from_vec(vec![-0.2, 0.1]);
        let model = SbqpModel::boxed(origin, q, g, PenaltyForm::Linearized, QpMode::Concave);
        let (y, trace) = run_model(&model, &PenaltySchedule::default()).unwrap();
        assert!(y.iter().all(|v| *v == 0.0 || *v == 1.0), "{y}");
        assert!(trace.final_phi() <= 1e-6);
        let rhos: Vec<f64> = trace.rows.iter().skip(1).map(|r| r.rho).collect();
        for w in rhos.windows(2) {
            assert_eq!(w[1], 10.0 * w[0]);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(PenaltySchedule {
            beta: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PenaltySchedule {
            rho0: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PenaltySchedule::default().validate().is_ok());
        assert_eq!("relaxed-two".parse::<Ao2Variant>().unwrap(), Ao2Variant::RelaxedTwo);
        assert!("other".parse::<Ao2Variant>().is_err());
    }
}
