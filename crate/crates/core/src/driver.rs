//! The alternating outer loop and the brute-force enumeration oracle.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao1::{solve_ao1, Ao1Options, Ao1Result, Ao1Status};
use crate::ao2::{run_ao2, Ao2Options, Ao2Variant, PenaltySchedule, SbqpTrace};
use crate::error::{ScenarioError, SolveError};
use crate::grid::{GridCase, ScenarioConfig};
use crate::power::{InputVector, Network, State};

/// Largest switch count the oracle will enumerate.
pub const ORACLE_CAP: usize = 20;

/// Feasibility tolerance on `max(C)` for a reported solution.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub schedule: PenaltySchedule,
    pub variant: Ao2Variant,
    pub outer_eps: f64,
    pub outer_max_iters: usize,
    pub seed: u64,
    /// One AO2 pass from the all-on AO1 point, then a final AO1.
    pub single_shot: bool,
    pub ao2: Ao2Options,
    pub scenario: ScenarioConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schedule: PenaltySchedule::default(),
            variant: Ao2Variant::Mixed,
            outer_eps: 1e-6,
            outer_max_iters: 20,
            seed: 0,
            single_shot: false,
            ao2: Ao2Options::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.schedule.validate()?;
        if !(self.outer_eps > 0.0) {
            return Err(format!("outer_eps must be positive, got {}", self.outer_eps));
        }
        if self.outer_max_iters == 0 {
            return Err("outer_max_iters must be at least 1".into());
        }
        if self.single_shot && self.variant != Ao2Variant::RelaxedOne {
            return Err("single_shot applies to the relaxed-one variant only".into());
        }
        self.scenario.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub ao1_seconds: f64,
    pub ao2_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub state: State,
    pub input: InputVector,
    /// Binary switch pattern in the order of `GridCase::demands`.
    pub switches: DVector<f64>,
    /// `Σ y_k r_k p_k^d`.
    pub objective: f64,
    pub supplied_active: f64,
    pub supplied_reactive: f64,
    pub outer_iterations: usize,
    pub ao1_iterations: usize,
    pub ao2_traces: Vec<SbqpTrace>,
    /// `|φ|` at the end of the last AO2 pass; 0 when AO2 never ran.
    pub final_phi: f64,
    /// `max(C)` at the reported point.
    pub max_violation: f64,
    pub variant: Ao2Variant,
    pub timings: Timings,
}

impl SolveResult {
    pub fn penalty_iterations(&self) -> usize {
        self.ao2_traces.iter().map(|t| t.penalty_iterations()).sum()
    }
}

fn concat(state: &State, input: &InputVector) -> DVector<f64> {
    let (x, u) = (state.to_vec(), input.to_vec());
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

fn is_binary(y: &DVector<f64>) -> bool {
    y.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn check_case(case: &GridCase) -> Result<(), SolveError> {
    case.validate()
        .map_err(|e| SolveError::Scenario(ScenarioError::InvalidCase(e)))
}

/// Runs the alternating method on `case` as given; the scenario in `cfg` is
/// not applied here.
pub fn run_ao_sbqp(case: &GridCase, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    cfg.validate().map_err(SolveError::Subproblem)?;
    check_case(case)?;
    let start = Instant::now();
    let net = Network::new(case);
    let ao1_opts = Ao1Options::default();
    let mut timings = Timings::default();
    let mut traces = Vec::new();
    let mut ao1_iterations = 0;

    let mut y = DVector::from_element(net.n_demand(), 1.0);
    let mut warm: Option<(State, InputVector)> = None;
    let mut previous: Option<DVector<f64>> = None;

    let finish =
        |r: Ao1Result, y: DVector<f64>, outer, traces: Vec<SbqpTrace>, ao1_iterations, mut timings: Timings| {
            if r.status != Ao1Status::Converged || r.max_violation > FEASIBILITY_TOL {
                return Err(SolveError::Infeasible(format!(
                    "AO1 status {:?}, max(C) = {:e} at the final switches",
                    r.status, r.max_violation
                )));
            }
            timings.total_seconds = start.elapsed().as_secs_f64();
            let final_phi = traces.last().map(|t: &SbqpTrace| t.final_phi().abs()).unwrap_or(0.0);
            Ok(SolveResult {
                objective: net.delivered_value(&y),
                supplied_active: net.pd.dot(&y),
                supplied_reactive: net.qd.dot(&y),
                state: r.state,
                input: r.input,
                switches: y,
                outer_iterations: outer,
                ao1_iterations,
                ao2_traces: traces,
                final_phi,
                max_violation: r.max_violation,
                variant: cfg.variant,
                timings,
            })
        };

    for outer in 1..=cfg.outer_max_iters {
        let t = Instant::now();
        let r = solve_ao1(&net, &y, warm.as_ref().map(|(s, u)| (s, u)), &ao1_opts);
        timings.ao1_seconds += t.elapsed().as_secs_f64();
        ao1_iterations += r.iterations;
        let z = concat(&r.state, &r.input);

        let feasible = r.status == Ao1Status::Converged && r.max_violation <= FEASIBILITY_TOL;
        // the all-on pattern dominates every other one when it is feasible
        if outer == 1 && feasible && y.iter().all(|&v| v == 1.0) {
            return finish(r, y, outer, traces, ao1_iterations, timings);
        }
        let settled = previous.as_ref().is_some_and(|p| (&z - p).amax() <= cfg.outer_eps);
        if (settled && is_binary(&y)) || (cfg.single_shot && outer == 2) {
            return finish(r, y, outer, traces, ao1_iterations, timings);
        }

        let t = Instant::now();
        let (y_new, trace) = run_ao2(
            &net,
            (&r.state, &r.input, &y),
            &r.duals,
            &cfg.schedule,
            cfg.variant,
            &cfg.ao2,
        )?;
        timings.ao2_seconds += t.elapsed().as_secs_f64();
        traces.push(trace);
        y = y_new;
        warm = Some((r.state, r.input));
        previous = Some(z);
    }
    Err(SolveError::OuterNotConverged(cfg.outer_max_iters))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub switches: Vec<f64>,
    pub feasible: bool,
    pub objective: f64,
}

/// Solves AO1 at every binary switch pattern. Feasible entries come first,
/// best objective first; ties keep enumeration order.
pub fn enumerate_oracle(case: &GridCase) -> Result<Vec<OracleEntry>, SolveError> {
    check_case(case)?;
    let net = Network::new(case);
    let d = net.n_demand();
    if d > ORACLE_CAP {
        return Err(SolveError::OracleCap(d, ORACLE_CAP));
    }
    let opts = Ao1Options::default();
    let mut entries: Vec<(usize, OracleEntry)> = (0..1usize << d)
        .into_par_iter()
        .map(|mask| {
            let y = DVector::from_fn(d, |i, _| ((mask >> i) & 1) as f64);
            let r = solve_ao1(&net, &y, None, &opts);
            let entry = OracleEntry {
                feasible: r.status == Ao1Status::Converged && r.max_violation <= FEASIBILITY_TOL,
                objective: net.delivered_value(&y),
                switches: y.iter().copied().collect(),
            };
            (mask, entry)
        })
        .collect();
    entries.sort_by(|(ia, a), (ib, b)| {
        b.feasible
            .cmp(&a.feasible)
            .then(b.objective.total_cmp(&a.objective))
            .then(ia.cmp(ib))
    });
    Ok(entries.into_iter().map(|(_, e)| e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::grid::{apply_scenario, parse_case};

    #[test]
    fn adequate_case_keeps_everything_on() {
        let case = parse_case(cases::CASE5).unwrap();
        let r = run_ao_sbqp(&case, &SolverConfig::default()).unwrap();
        assert!(r.switches.iter().all(|&v| v == 1.0));
        assert_eq!(r.outer_iterations, 1);
        assert!(r.ao2_traces.is_empty());
    }

    #[test]
    fn oracle_counts_and_cap() {
        let case = parse_case(cases::CASE5).unwrap();
        let entries = enumerate_oracle(&case).unwrap();
        assert_eq!(entries.len(), 8);
        let off = entries.iter().find(|e| e.switches.iter().all(|&v| v == 0.0)).unwrap();
        assert!(off.feasible);
        assert_eq!(off.objective, 0.0);

        let big = apply_scenario(&parse_case(cases::CASE30).unwrap(), &ScenarioConfig::default()).unwrap();
        assert!(matches!(enumerate_oracle(&big), Err(SolveError::OracleCap(30, 20))));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let cfg = SolverConfig {
            single_shot: true,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            outer_eps: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
