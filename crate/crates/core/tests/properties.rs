use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use aosbqp::ao2::{step_length, Ao2Variant};
use aosbqp::config::{config_to_text, parse_config};
use aosbqp::driver::SolverConfig;
use aosbqp::grid::{DemandSetMode, ShiftMode};
use aosbqp::output::ResultDocument;
use aosbqp::qp::{solve_qp, QpMode, QpProblem, QpStatus};
use aosbqp::{
    apply_scenario, build_admittance, cases, parse_case, phi, serialize_case, GridCase, Network, ScenarioConfig, State,
};

fn case30() -> GridCase {
    parse_case(cases::CASE30).unwrap()
}

fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    (
        0.0..3.0f64,
        0.0..1.0f64,
        any::<bool>(),
        0.3..1.0f64,
        0.5..1.0f64,
        1u32..6,
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(|(pd, qd, mult, qs, ps, levels, seed, all)| ScenarioConfig {
            pd_shift: pd,
            qd_shift: qd,
            shift_mode: if mult {
                ShiftMode::Multiplicative
            } else {
                ShiftMode::AdditiveTotal
            },
            qg_bound_scale: qs,
            pg_upper_scale: ps,
            rank_levels: levels,
            rank_seed: seed,
            demand_set_mode: if all {
                DemandSetMode::AllBuses
            } else {
                DemandSetMode::LoadedBuses
            },
        })
}

fn state_for(n: usize) -> impl Strategy<Value = State> {
    (
        prop::collection::vec(0.9..1.1f64, n),
        prop::collection::vec(-0.5..0.5f64, n),
    )
        .prop_map(|(v, t)| State {
            v: DVector::from_vec(v),
            theta: DVector::from_vec(t),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialized_case_parses_back(cfg in scenario()) {
        let case = apply_scenario(&case30(), &cfg).unwrap();
        let back = parse_case(&serialize_case(&case)).unwrap();
        prop_assert!(back.approx_eq(&case, 1e-12));
    }

    #[test]
    fn laplacian_is_symmetric_with_zero_row_sums(scale in prop::collection::vec(0.2..5.0f64, 41)) {
        let mut case = case30();
        for (br, s) in case.branches.iter_mut().zip(&scale) {
            br.g *= s;
            br.b *= s;
        }
        let y = build_admittance(&case);
        for m in [&y.g, &y.b] {
            prop_assert!((m - m.transpose()).amax() <= 1e-12);
            for r in 0..m.nrows() {
                let row: f64 = m.row(r).sum();
                prop_assert!(row.abs() <= 1e-12 * m.amax().max(1.0));
            }
        }
    }

    #[test]
    fn outflow_is_sum_of_line_flows(state in state_for(30)) {
        let net = Network::new(&case30());
        let p = net.node_outflow(&state);
        let mut active = vec![0.0; 30];
        let mut reactive = vec![0.0; 30];
        for br in &net.case.branches {
            for (a, b) in [(br.from, br.to), (br.to, br.from)] {
                let (pf, qf) = net.line_flow(&state, a, b).unwrap();
                let k = net.case.bus_position(a).unwrap();
                active[k] += pf;
                reactive[k] += qf;
            }
        }
        for k in 0..30 {
            prop_assert!((p.active[k] - active[k]).abs() <= 1e-9);
            prop_assert!((p.reactive[k] - reactive[k]).abs() <= 1e-9);
        }
    }

    #[test]
    fn lossless_network_conserves_active_power(state in state_for(30)) {
        let mut case = case30();
        for br in &mut case.branches {
            br.g = 0.0;
        }
        let net = Network::new(&case);
        prop_assert!(net.node_outflow(&state).active.sum().abs() <= 1e-10);
    }

    #[test]
    fn phi_is_bounded_and_vanishes_on_binaries(y in prop::collection::vec(0.0..=1.0f64, 1..25), mask in any::<u32>()) {
        let n = y.len();
        let v = DVector::from_vec(y);
        let p = phi(&v);
        prop_assert!(p >= 0.0 && p <= n as f64 / 4.0 + 1e-15);
        let binary = DVector::from_fn(n, |i, _| ((mask >> (i % 32)) & 1) as f64);
        prop_assert_eq!(phi(&binary), 0.0);
    }

    #[test]
    fn step_stays_in_box(
        pts in prop::collection::vec((0.0..=1.0f64, -1.0..1.0f64, 0.0..=1.0f64), 1..15)
    ) {
        let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.0));
        let d = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
        let anchor = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.2));
        let a = step_length(&y, &d, &anchor);
        prop_assert!(a.is_finite());
        let moved = &y + &d * a;
        prop_assert!(moved.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn separable_concave_qp_clips_the_free_maximiser(
        terms in prop::collection::vec((0.2..3.0f64, -3.0..3.0f64, -1.0..0.0f64, 0.0..1.0f64), 1..12)
    ) {
        let n = terms.len();
        let q = DMatrix::from_diagonal(&DVector::from_iterator(n, terms.iter().map(|t| -t.0)));
        let g = DVector::from_iterator(n, terms.iter().map(|t| t.1));
        let lo = DVector::from_iterator(n, terms.iter().map(|t| t.2));
        let hi = DVector::from_iterator(n, terms.iter().map(|t| t.3));
        let p = QpProblem::boxed(q, g, lo.clone(), hi.clone());
        let sol = solve_qp(&p, QpMode::Concave, None);
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        for (i, t) in terms.iter().enumerate() {
            let expect = (t.1 / t.0).clamp(lo[i], hi[i]);
            prop_assert!((sol.primal[i] - expect).abs() <= 1e-9, "{} vs {}", sol.primal[i], expect);
        }
        prop_assert!(p.kkt_residual(&sol) <= 1e-8);
    }

    #[test]
    fn config_text_round_trip(
        cfg in scenario(),
        v in 0usize..3,
        rho0 in 1e-3..1e3f64,
        beta in 1.01..50.0f64,
        iters in 1usize..100,
        seed in any::<u64>(),
    ) {
        let c = SolverConfig {
            variant: Ao2Variant::ALL[v],
            schedule: aosbqp::ao2::PenaltySchedule { rho0, beta, ..Default::default() },
            outer_max_iters: iters,
            seed,
            scenario: cfg,
            ..SolverConfig::default()
        };
        prop_assert_eq!(parse_config(&config_to_text(&c)).unwrap(), c);
    }

    #[test]
    fn result_text_round_trip(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 4..40)) {
        let n = vals.len() / 4;
        let doc = ResultDocument {
            variant: "relaxed-two".into(),
            objective: vals[0],
            supplied_active: vals[1],
            supplied_reactive: vals[2],
            final_phi: vals[3].abs(),
            max_violation: vals[0] * 1e-20,
            outer_iterations: 4,
            penalty_iterations: 7,
            ao1_iterations: 55,
            demand_bus: (1..=n).collect(),
            y: vals[..n].to_vec(),
            gen_bus: vec![3],
            pg: vals[n..2 * n].to_vec(),
            qg: vals[2 * n..3 * n].to_vec(),
            v: vals[3 * n..].to_vec(),
            theta: vec![],
        };
        prop_assert_eq!(ResultDocument::from_text(&doc.to_text()).unwrap(), doc);
    }
}
