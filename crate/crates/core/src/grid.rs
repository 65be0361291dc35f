//! Grid case data: buses, branches, generators and demands, the text case
//! format, the admittance matrix, and the demand/supply mismatch scenario.
//!
//! All quantities are stored in per-unit on the case base; angles in radians.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ParseError, ScenarioError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Voltage magnitude set-point; only used for the slack bus.
    pub v_set: f64,
    pub is_slack: bool,
}

/// Series admittance of a line. Shunt charging and taps are not modelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pg_min: f64,
    pub pg_max: f64,
    pub qg_min: f64,
    pub qg_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub bus: usize,
    pub pd: f64,
    pub qd: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub demands: Vec<DemandSpec>,
}

/// Dense conductance and susceptance parts of the bus admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl GridCase {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus id in `buses`.
    pub fn bus_position(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_position(&self) -> usize {
        self.buses.iter().position(|b| b.is_slack).unwrap_or(0)
    }

    /// Checks every structural invariant of a case.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return Err("case has no buses".into());
        }
        let mut ids = BTreeSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return Err(format!("duplicate bus id {}", bus.id));
            }
            if !(bus.v_min > 0.0) {
                return Err(format!("bus {}: v_min must be positive", bus.id));
            }
            if bus.v_min > bus.v_max {
                return Err(format!("bus {}: v_min > v_max", bus.id));
            }
            if bus.theta_min > bus.theta_max {
                return Err(format!("bus {}: theta_min > theta_max", bus.id));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.is_slack).count();
        if slacks != 1 {
            return Err(format!("expected exactly one slack bus, found {slacks}"));
        }
        let mut seen = BTreeSet::new();
        for br in &self.branches {
            if br.from == br.to {
                return Err(format!("branch ({}, {}) is a self loop", br.from, br.to));
            }
            for id in [br.from, br.to] {
                if !ids.contains(&id) {
                    return Err(format!("branch references unknown bus {id}"));
                }
            }
            let key = (br.from.min(br.to), br.from.max(br.to));
            if !seen.insert(key) {
                return Err(format!("duplicate branch ({}, {})", br.from, br.to));
            }
            if !(br.g.is_finite() && br.b.is_finite()) {
                return Err(format!("branch ({}, {}) has non-finite admittance", br.from, br.to));
            }
        }
        let mut gen_buses = BTreeSet::new();
        for gen in &self.generators {
            if !ids.contains(&gen.bus) {
                return Err(format!("generator references unknown bus {}", gen.bus));
            }
            if !gen_buses.insert(gen.bus) {
                return Err(format!("more than one generator entry at bus {}", gen.bus));
            }
            if gen.pg_min > gen.pg_max {
                return Err(format!("generator at bus {}: pg_min > pg_max", gen.bus));
            }
            if gen.qg_min > gen.qg_max {
                return Err(format!("generator at bus {}: qg_min > qg_max", gen.bus));
            }
        }
        if self.demands.is_empty() {
            return Err("demand set is empty".into());
        }
        let mut dem_buses = BTreeSet::new();
        for d in &self.demands {
            if !ids.contains(&d.bus) {
                return Err(format!("demand references unknown bus {}", d.bus));
            }
            if !dem_buses.insert(d.bus) {
                return Err(format!("more than one demand at bus {}", d.bus));
            }
            if !(d.rank > 0.0 && d.rank.is_finite()) {
                return Err(format!("demand at bus {}: rank must be positive", d.bus));
            }
            if !(d.pd >= 0.0 && d.pd.is_finite() && d.qd.is_finite()) {
                return Err(format!("demand at bus {}: invalid pd/qd", d.bus));
            }
        }
        Ok(())
    }

    /// Total active generation capacity.
    pub fn total_pg_max(&self) -> f64 {
        self.generators.iter().map(|g| g.pg_max).sum()
    }

    pub fn total_pd(&self) -> f64 {
        self.demands.iter().map(|d| d.pd).sum()
    }

    /// Field-wise comparison with a relative tolerance on every float.
    pub fn approx_eq(&self, other: &GridCase, rel: f64) -> bool {
        fn close(a: f64, b: f64, rel: f64) -> bool {
            a == b || (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
        }
        close(self.base_mva, other.base_mva, rel)
            && self.buses.len() == other.buses.len()
            && self.branches.len() == other.branches.len()
            && self.generators.len() == other.generators.len()
            && self.demands.len() == other.demands.len()
            && self.buses.iter().zip(&other.buses).all(|(a, b)| {
                a.id == b.id
                    && a.is_slack == b.is_slack
                    && close(a.v_min, b.v_min, rel)
                    && close(a.v_max, b.v_max, rel)
                    && close(a.theta_min, b.theta_min, rel)
                    && close(a.theta_max, b.theta_max, rel)
                    && close(a.v_set, b.v_set, rel)
            })
            && self
                .branches
                .iter()
                .zip(&other.branches)
                .all(|(a, b)| a.from == b.from && a.to == b.to && close(a.g, b.g, rel) && close(a.b, b.b, rel))
            && self.generators.iter().zip(&other.generators).all(|(a, b)| {
                a.bus == b.bus
                    && close(a.pg_min, b.pg_min, rel)
                    && close(a.pg_max, b.pg_max, rel)
                    && close(a.qg_min, b.qg_min, rel)
                    && close(a.qg_max, b.qg_max, rel)
            })
            && self.demands.iter().zip(&other.demands).all(|(a, b)| {
                a.bus == b.bus && close(a.pd, b.pd, rel) && close(a.qd, b.qd, rel) && close(a.rank, b.rank, rel)
            })
    }
}

// ---------------------------------------------------------------------------
// Case file format
// ---------------------------------------------------------------------------
//
// The reader understands the `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and
// `mpc.branch` blocks of a MATPOWER case file (columns are 1-based):
//
//   bus:    1 id, 2 type (3 = slack), 3 Pd [MW], 4 Qd [MVAr], 8 Vm, 12 Vmax, 13 Vmin
//   gen:    1 bus, 4 Qmax, 5 Qmin, 8 status, 9 Pmax, 10 Pmin   (MW / MVAr)
//   branch: 1 from, 2 to, 3 r, 4 x, 11 status (optional, default in service)
//
// Two optional blocks extend the format so every field of a case survives a
// write/read cycle:
//
//   mpc.demand = [ bus Pd Qd rank; ... ];     replaces the Pd/Qd bus columns
//   mpc.bus_angle = [ bus angmin angmax; ];   degrees, default +-90
//
// All other blocks and columns are ignored.

struct Row {
    line: usize,
    values: Vec<f64>,
}

fn parse_rows(lines: &[(usize, &str)], start: usize, section: &str) -> Result<(Vec<Row>, usize), ParseError> {
    let mut rows = Vec::new();
    // text after the opening bracket
    let (first_line, first_text) = lines[start];
    let after = first_text.split_once('[').map(|(_, r)| r).unwrap_or("");
    let mut pending: Vec<(usize, String)> = vec![(first_line, after.to_string())];
    let mut idx = start + 1;
    let mut closed = after.contains(']');
    while !closed {
        if idx >= lines.len() {
            return Err(ParseError::MalformedRow {
                line: first_line,
                reason: format!("unterminated {section} table"),
            });
        }
        let (ln, text) = lines[idx];
        closed = text.contains(']');
        pending.push((ln, text.to_string()));
        idx += 1;
    }
    for (ln, text) in pending {
        let body = text.split(']').next().unwrap_or("");
        for chunk in body.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            let values = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| ParseError::MalformedRow {
                        line: ln,
                        reason: format!("non-numeric token `{tok}` in {section} table"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(Row { line: ln, values });
        }
    }
    Ok((rows, idx))
}

fn as_id(value: f64, line: usize) -> Result<usize, ParseError> {
    if value.fract() != 0.0 || value < 1.0 || !value.is_finite() {
        return Err(ParseError::MalformedRow {
            line,
            reason: format!("`{value}` is not a positive integer id"),
        });
    }
    Ok(value as usize)
}

fn need_columns(row: &Row, n: usize, section: &str) -> Result<(), ParseError> {
    if row.values.len() < n {
        return Err(ParseError::MalformedRow {
            line: row.line,
            reason: format!("{section} row has {} columns, at least {n} required", row.values.len()),
        });
    }
    Ok(())
}

/// Parses the text of a case file into a validated, per-unit [`GridCase`].
pub fn parse_case(text: &str) -> Result<GridCase, ParseError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('%').next().unwrap_or("")))
        .collect();

    let mut base_mva = None;
    let mut tables: BTreeMap<&'static str, Vec<Row>> = BTreeMap::new();
    let mut section_line: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut i = 0;
    while i < lines.len() {
        let (ln, text) = lines[i];
        let t = text.trim();
        if let Some(rest) = t.strip_prefix("mpc.baseMVA") {
            let v = rest.trim().trim_start_matches('=').trim().trim_end_matches(';').trim();
            let v: f64 = v.parse().map_err(|_| ParseError::MalformedRow {
                line: ln,
                reason: format!("bad baseMVA `{v}`"),
            })?;
            base_mva = Some(v);
            i += 1;
            continue;
        }
        let section = ["bus_angle", "bus", "gen", "branch", "demand"]
            .into_iter()
            .find(|name| {
                t.strip_prefix("mpc.")
                    .and_then(|r| r.strip_prefix(name))
                    .map(|r| r.trim_start().starts_with('='))
                    .unwrap_or(false)
            });
        if let Some(name) = section {
            if !t.contains('[') {
                return Err(ParseError::MalformedRow {
                    line: ln,
                    reason: format!("expected `[` after mpc.{name}"),
                });
            }
            let (rows, next) = parse_rows(&lines, i, name)?;
            tables.insert(name, rows);
            section_line.insert(name, ln);
            i = next;
            continue;
        }
        i += 1;
    }

    let base_mva = base_mva.ok_or(ParseError::MissingSection("baseMVA"))?;
    if !(base_mva > 0.0) {
        return Err(ParseError::InvalidValue {
            line: 0,
            reason: "baseMVA must be positive".into(),
        });
    }
    let bus_rows = tables.remove("bus").ok_or(ParseError::MissingSection("bus"))?;
    let gen_rows = tables.remove("gen").ok_or(ParseError::MissingSection("gen"))?;
    let branch_rows = tables.remove("branch").ok_or(ParseError::MissingSection("branch"))?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut bus_loads = Vec::new();
    let mut known = BTreeSet::new();
    for row in &bus_rows {
        need_columns(row, 13, "bus")?;
        let id = as_id(row.values[0], row.line)?;
        if !known.insert(id) {
            return Err(ParseError::DuplicateBus {
                line: row.line,
                bus: id,
            });
        }
        let v = &row.values;
        let (v_max, v_min) = (v[11], v[12]);
        if !(v_min > 0.0) || v_min > v_max {
            return Err(ParseError::InvalidValue {
                line: row.line,
                reason: format!("bus {id}: voltage bounds [{v_min}, {v_max}] invalid"),
            });
        }
        buses.push(Bus {
            id,
            v_min,
            v_max,
            theta_min: -FRAC_PI_2,
            theta_max: FRAC_PI_2,
            v_set: v[7],
            is_slack: v[1] == 3.0,
        });
        bus_loads.push((id, v[2] / base_mva, v[3] / base_mva, row.line));
    }

    let check_bus = |id: usize, line: usize| -> Result<(), ParseError> {
        if known.contains(&id) {
            Ok(())
        } else {
            Err(ParseError::UnknownBus { line, bus: id })
        }
    };

    // generators at one bus are merged into a single injection
    let mut gens: BTreeMap<usize, Generator> = BTreeMap::new();
    let mut gen_order = Vec::new();
    for row in &gen_rows {
        need_columns(row, 10, "gen")?;
        let v = &row.values;
        let bus = as_id(v[0], row.line)?;
        check_bus(bus, row.line)?;
        if v[7] <= 0.0 {
            continue;
        }
        let (qmax, qmin, pmax, pmin) = (v[3], v[4], v[8], v[9]);
        if pmin > pmax || qmin > qmax {
            return Err(ParseError::InvalidValue {
                line: row.line,
                reason: format!("generator at bus {bus}: inverted bounds"),
            });
        }
        let entry = gens.entry(bus).or_insert_with(|| {
            gen_order.push(bus);
            Generator {
                bus,
                pg_min: 0.0,
                pg_max: 0.0,
                qg_min: 0.0,
                qg_max: 0.0,
            }
        });
        entry.pg_min += pmin / base_mva;
        entry.pg_max += pmax / base_mva;
        entry.qg_min += qmin / base_mva;
        entry.qg_max += qmax / base_mva;
    }
    let generators: Vec<Generator> = gen_order.iter().map(|b| gens[b].clone()).collect();

    let mut branches = Vec::with_capacity(branch_rows.len());
    let mut seen = BTreeSet::new();
    for row in &branch_rows {
        need_columns(row, 4, "branch")?;
        let v = &row.values;
        let from = as_id(v[0], row.line)?;
        let to = as_id(v[1], row.line)?;
        check_bus(from, row.line)?;
        check_bus(to, row.line)?;
        if v.len() >= 11 && v[10] <= 0.0 {
            continue;
        }
        if from == to {
            return Err(ParseError::MalformedRow {
                line: row.line,
                reason: format!("branch ({from}, {to}) connects a bus to itself"),
            });
        }
        if !seen.insert((from.min(to), from.max(to))) {
            return Err(ParseError::DuplicateBranch {
                line: row.line,
                from,
                to,
            });
        }
        let (r, x) = (v[2], v[3]);
        let z2 = r * r + x * x;
        if z2 == 0.0 {
            return Err(ParseError::ZeroImpedance {
                line: row.line,
                from,
                to,
            });
        }
        branches.push(Branch {
            from,
            to,
            g: r / z2,
            b: -x / z2,
        });
    }

    let demands = if let Some(rows) = tables.remove("demand") {
        let mut out = Vec::with_capacity(rows.len());
        for row in &rows {
            need_columns(row, 4, "demand")?;
            let v = &row.values;
            let bus = as_id(v[0], row.line)?;
            check_bus(bus, row.line)?;
            if !(v[3] > 0.0) {
                return Err(ParseError::InvalidValue {
                    line: row.line,
                    reason: format!("demand at bus {bus}: rank must be positive"),
                });
            }
            out.push(DemandSpec {
                bus,
                pd: v[1] / base_mva,
                qd: v[2] / base_mva,
                rank: v[3],
            });
        }
        out
    } else {
        bus_loads
            .iter()
            .filter(|(_, pd, qd, _)| *pd != 0.0 || *qd != 0.0)
            .map(|&(bus, pd, qd, _)| DemandSpec { bus, pd, qd, rank: 1.0 })
            .collect()
    };
    for d in &demands {
        if d.pd < 0.0 {
            let line = bus_loads.iter().find(|l| l.0 == d.bus).map(|l| l.3).unwrap_or(0);
            return Err(ParseError::InvalidValue {
                line,
                reason: format!("bus {}: negative active demand", d.bus),
            });
        }
    }

    if let Some(rows) = tables.remove("bus_angle") {
        for row in &rows {
            need_columns(row, 3, "bus_angle")?;
            let id = as_id(row.values[0], row.line)?;
            check_bus(id, row.line)?;
            let bus = buses.iter_mut().find(|b| b.id == id).expect("checked above");
            bus.theta_min = row.values[1].to_radians();
            bus.theta_max = row.values[2].to_radians();
        }
    }

    let case = GridCase {
        base_mva,
        buses,
        branches,
        generators,
        demands,
    };
    case.validate().map_err(ParseError::Invariant)?;
    Ok(case)
}

/// Writes a case in the format read by [`parse_case`], including the
/// `demand` and `bus_angle` extension blocks.
pub fn serialize_case(case: &GridCase) -> String {
    let base = case.base_mva;
    let gen_buses: BTreeSet<usize> = case.generators.iter().map(|g| g.bus).collect();
    let mut out = String::new();
    out.push_str("function mpc = case\n");
    let _ = writeln!(out, "mpc.baseMVA = {};\n", base);
    out.push_str("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
    out.push_str("mpc.bus = [\n");
    for bus in &case.buses {
        let (pd, qd) = case
            .demands
            .iter()
            .find(|d| d.bus == bus.id)
            .map(|d| (d.pd * base, d.qd * base))
            .unwrap_or((0.0, 0.0));
        let kind = if bus.is_slack {
            3
        } else if gen_buses.contains(&bus.id) {
            2
        } else {
            1
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t0\t0\t1\t{}\t0\t0\t1\t{}\t{};",
            bus.id, kind, pd, qd, bus.v_set, bus.v_max, bus.v_min
        );
    }
    out.push_str("];\n\n");
    out.push_str("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n");
    out.push_str("mpc.gen = [\n");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t1\t{}\t{};",
            g.bus,
            g.qg_max * base,
            g.qg_min * base,
            base,
            g.pg_max * base,
            g.pg_min * base
        );
    }
    out.push_str("];\n\n");
    out.push_str("%\tfbus\ttbus\tr\tx\n");
    out.push_str("mpc.branch = [\n");
    for br in &case.branches {
        let y2 = br.g * br.g + br.b * br.b;
        let _ = writeln!(out, "\t{}\t{}\t{}\t{};", br.from, br.to, br.g / y2, -br.b / y2);
    }
    out.push_str("];\n\n");
    out.push_str("%\tbus\tPd\tQd\trank\n");
    out.push_str("mpc.demand = [\n");
    for d in &case.demands {
        let _ = writeln!(out, "\t{}\t{}\t{}\t{};", d.bus, d.pd * base, d.qd * base, d.rank);
    }
    out.push_str("];\n\n");
    out.push_str("%\tbus\tangmin\tangmax (degrees)\n");
    out.push_str("mpc.bus_angle = [\n");
    for bus in &case.buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{};",
            bus.id,
            bus.theta_min.to_degrees(),
            bus.theta_max.to_degrees()
        );
    }
    out.push_str("];\n");
    out
}

/// Builds the Laplacian admittance matrix `G + iB` in bus-position order.
pub fn build_admittance(case: &GridCase) -> AdmittanceMatrix {
    let n = case.n_bus();
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for br in &case.branches {
        let (Some(k), Some(l)) = (case.bus_position(br.from), case.bus_position(br.to)) else {
            continue;
        };
        g[(k, l)] -= br.g;
        g[(l, k)] -= br.g;
        b[(k, l)] -= br.b;
        b[(l, k)] -= br.b;
        g[(k, k)] += br.g;
        g[(l, l)] += br.g;
        b[(k, k)] += br.b;
        b[(l, l)] += br.b;
    }
    AdmittanceMatrix { g, b }
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftMode {
    /// Add the shift to the system total, split in proportion to existing demand.
    AdditiveTotal,
    /// Scale every loaded bus by `1 + shift`.
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DemandSetMode {
    /// Every bus carries a switch; unloaded buses get a zero demand.
    AllBuses,
    /// Only buses with nonzero demand carry a switch.
    LoadedBuses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub pd_shift: f64,
    pub qd_shift: f64,
    pub shift_mode: ShiftMode,
    pub qg_bound_scale: f64,
    pub pg_upper_scale: f64,
    pub rank_levels: u32,
    pub rank_seed: u64,
    pub demand_set_mode: DemandSetMode,
}

impl Default for ScenarioConfig {
    /// The mismatch scenario: +2.5 p.u. active and +0.7 p.u. reactive demand,
    /// reactive limits halved, active upper limits at 70%, five rank levels.
    fn default() -> Self {
        Self {
            pd_shift: 2.5,
            qd_shift: 0.7,
            shift_mode: ShiftMode::AdditiveTotal,
            qg_bound_scale: 0.5,
            pg_upper_scale: 0.7,
            rank_levels: 5,
            rank_seed: 0,
            demand_set_mode: DemandSetMode::AllBuses,
        }
    }
}

impl ScenarioConfig {
    /// A configuration that leaves a parsed case unchanged.
    pub fn identity() -> Self {
        Self {
            pd_shift: 0.0,
            qd_shift: 0.0,
            shift_mode: ShiftMode::AdditiveTotal,
            qg_bound_scale: 1.0,
            pg_upper_scale: 1.0,
            rank_levels: 1,
            rank_seed: 0,
            demand_set_mode: DemandSetMode::LoadedBuses,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, s) in [
            ("qg_bound_scale", self.qg_bound_scale),
            ("pg_upper_scale", self.pg_upper_scale),
        ] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(ScenarioError::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {s}"
                )));
            }
        }
        if self.rank_levels < 1 {
            return Err(ScenarioError::InvalidConfig("rank_levels must be >= 1".into()));
        }
        if !(self.pd_shift.is_finite() && self.qd_shift.is_finite()) {
            return Err(ScenarioError::InvalidConfig("demand shifts must be finite".into()));
        }
        Ok(())
    }
}

/// Split `shift` over `base` in proportion to each entry; falls back to an
/// even split when the base total is zero.
fn proportional_split(base: &[f64], fallback: &[f64], shift: f64) -> Vec<f64> {
    let total: f64 = base.iter().sum();
    if total.abs() > 0.0 {
        base.iter().map(|v| shift * v / total).collect()
    } else {
        let total_fb: f64 = fallback.iter().sum();
        if total_fb.abs() > 0.0 {
            fallback.iter().map(|v| shift * v / total_fb).collect()
        } else {
            vec![shift / base.len().max(1) as f64; base.len()]
        }
    }
}

/// Applies the demand/supply mismatch transformation.
pub fn apply_scenario(case: &GridCase, cfg: &ScenarioConfig) -> Result<GridCase, ScenarioError> {
    cfg.validate()?;
    case.validate().map_err(ScenarioError::InvalidCase)?;
    let mut out = case.clone();

    let loaded: Vec<usize> = out
        .demands
        .iter()
        .enumerate()
        .filter(|(_, d)| d.pd != 0.0 || d.qd != 0.0)
        .map(|(i, _)| i)
        .collect();
    if loaded.is_empty() && (cfg.pd_shift != 0.0 || cfg.qd_shift != 0.0) {
        return Err(ScenarioError::InvalidCase("no loaded bus to shift".into()));
    }
    let pd: Vec<f64> = loaded.iter().map(|&i| out.demands[i].pd).collect();
    let qd: Vec<f64> = loaded.iter().map(|&i| out.demands[i].qd).collect();
    match cfg.shift_mode {
        ShiftMode::AdditiveTotal => {
            let dp = proportional_split(&pd, &pd, cfg.pd_shift);
            let dq = proportional_split(&qd, &pd, cfg.qd_shift);
            for (j, &i) in loaded.iter().enumerate() {
                out.demands[i].pd += dp[j];
                out.demands[i].qd += dq[j];
            }
        }
        ShiftMode::Multiplicative => {
            for &i in &loaded {
                out.demands[i].pd *= 1.0 + cfg.pd_shift;
                out.demands[i].qd *= 1.0 + cfg.qd_shift;
            }
        }
    }

    for gen in &mut out.generators {
        gen.qg_min *= cfg.qg_bound_scale;
        gen.qg_max *= cfg.qg_bound_scale;
        gen.pg_max *= cfg.pg_upper_scale;
        if gen.pg_min > gen.pg_max {
            return Err(ScenarioError::InvalidCase(format!(
                "generator at bus {}: pg_min {} exceeds scaled pg_max {}",
                gen.bus, gen.pg_min, gen.pg_max
            )));
        }
    }

    if cfg.demand_set_mode == DemandSetMode::AllBuses {
        let present: BTreeSet<usize> = out.demands.iter().map(|d| d.bus).collect();
        for bus in &case.buses {
            if !present.contains(&bus.id) {
                out.demands.push(DemandSpec {
                    bus: bus.id,
                    pd: 0.0,
                    qd: 0.0,
                    rank: 1.0,
                });
            }
        }
    }
    // keep demands in bus order so switch indices follow the bus table
    let order: BTreeMap<usize, usize> = case.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    out.demands.sort_by_key(|d| order[&d.bus]);

    if cfg.rank_levels > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rank_seed);
        for d in &mut out.demands {
            d.rank = rng.gen_range(1..=cfg.rank_levels) as f64;
        }
    } else {
        for d in &mut out.demands {
            d.rank = 1.0;
        }
    }

    out.validate().map_err(ScenarioError::InvalidCase)?;
    Ok(out)
}
