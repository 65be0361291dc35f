//! Result documents and trace tables.
//!
//! The result document is deterministic for a given case and configuration;
//! wall-clock timings go to a separate `timings.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::driver::SolveResult;
use crate::error::OutputError;
use crate::grid::GridCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (text | json)")),
        }
    }
}

trait Num {
    fn render(&self) -> String;
}

impl Num for usize {
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Num for f64 {
    /// Shortest round-trip digits, in exponent form for very small or large
    /// magnitudes.
    fn render(&self) -> String {
        let a = self.abs();
        if a != 0.0 && !(1e-4..1e16).contains(&a) {
            format!("{self:e}")
        } else {
            self.to_string()
        }
    }
}

/// Flat, serialisable view of a [`SolveResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub variant: String,
    pub objective: f64,
    pub supplied_active: f64,
    pub supplied_reactive: f64,
    pub final_phi: f64,
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub penalty_iterations: usize,
    pub ao1_iterations: usize,
    pub demand_bus: Vec<usize>,
    pub y: Vec<f64>,
    pub gen_bus: Vec<usize>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ResultDocument {
    pub fn new(case: &GridCase, r: &SolveResult) -> Self {
        let list = |v: &nalgebra::DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        Self {
            variant: r.variant.to_string(),
            objective: r.objective,
            supplied_active: r.supplied_active,
            supplied_reactive: r.supplied_reactive,
            final_phi: r.final_phi,
            max_violation: r.max_violation,
            outer_iterations: r.outer_iterations,
            penalty_iterations: r.penalty_iterations(),
            ao1_iterations: r.ao1_iterations,
            demand_bus: case.demands.iter().map(|d| d.bus).collect(),
            y: list(&r.switches),
            gen_bus: case.generators.iter().map(|g| g.bus).collect(),
            pg: list(&r.input.pg),
            qg: list(&r.input.qg),
            v: list(&r.state.v),
            theta: list(&r.state.theta),
        }
    }

    /// `key = value` lines; lists are comma separated. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn to_text(&self) -> String {
        fn join<T: Num>(v: &[T]) -> String {
            v.iter().map(|x| x.render()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("variant", self.variant.clone());
        put("objective", self.objective.render());
        put("supplied_active", self.supplied_active.render());
        put("supplied_reactive", self.supplied_reactive.render());
        put("final_phi", self.final_phi.render());
        put("max_violation", self.max_violation.render());
        put("outer_iterations", self.outer_iterations.to_string());
        put("penalty_iterations", self.penalty_iterations.to_string());
        put("ao1_iterations", self.ao1_iterations.to_string());
        put("demand_bus", join(&self.demand_bus));
        put("y", join(&self.y));
        put("gen_bus", join(&self.gen_bus));
        put("pg", join(&self.pg));
        put("qg", join(&self.qg));
        put("v", join(&self.v));
        put("theta", join(&self.theta));
        s
    }

    pub fn from_text(text: &str) -> Result<Self, OutputError> {
        let mut map = std::collections::BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let (k, v) = raw.split_once(" = ").ok_or(OutputError::Parse {
                line: i + 1,
                reason: "expected `key = value`".into(),
            })?;
            map.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |k: &str| {
            map.get(k).cloned().ok_or(OutputError::Parse {
                line: 0,
                reason: format!("missing key `{k}`"),
            })
        };
        fn one<T: FromStr>((line, v): (usize, String)) -> Result<T, OutputError> {
            v.parse().map_err(|_| OutputError::Parse {
                line,
                reason: format!("bad value `{v}`"),
            })
        }
        fn many<T: FromStr>((line, v): (usize, String)) -> Result<Vec<T>, OutputError> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| one((line, x.to_string()))).collect()
        }
        Ok(Self {
            variant: get("variant")?.1,
            objective: one(get("objective")?)?,
            supplied_active: one(get("supplied_active")?)?,
            supplied_reactive: one(get("supplied_reactive")?)?,
            final_phi: one(get("final_phi")?)?,
            max_violation: one(get("max_violation")?)?,
            outer_iterations: one(get("outer_iterations")?)?,
            penalty_iterations: one(get("penalty_iterations")?)?,
            ao1_iterations: one(get("ao1_iterations")?)?,
            demand_bus: many(get("demand_bus")?)?,
            y: many(get("y")?)?,
            gen_bus: many(get("gen_bus")?)?,
            pg: many(get("pg")?)?,
            qg: many(get("qg")?)?,
            v: many(get("v")?)?,
            theta: many(get("theta")?)?,
        })
    }
}

/// One row per AO2 iteration, including each step (a) row.
pub fn trace_csv(case: &GridCase, r: &SolveResult) -> String {
    let mut s = String::from("outer,iteration");
    for d in &case.demands {
        let _ = write!(s, ",y_{}", d.bus);
    }
    s.push_str(",phi,rho,alpha,status,merit\n");
    for (outer, trace) in r.ao2_traces.iter().enumerate() {
        for row in &trace.rows {
            let _ = write!(s, "{},{}", outer + 1, row.iteration);
            for y in &row.y {
                let _ = write!(s, ",{}", y.render());
            }
            let _ = writeln!(
                s,
                ",{},{},{},{},{}",
                row.phi.render(),
                row.rho.render(),
                row.alpha.render(),
                row.status,
                row.merit.render()
            );
        }
    }
    s
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf, OutputError> {
    fs::write(&path, body).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Writes `result.txt` or `result.json`, `trace.csv` and `timings.txt`
/// into `dir`, creating it if needed. Returns the written paths.
pub fn emit_outputs(
    case: &GridCase,
    result: &SolveResult,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let doc = ResultDocument::new(case, result);
    let main = match format {
        OutputFormat::Text => write(dir.join("result.txt"), &doc.to_text())?,
        OutputFormat::Json => write(dir.join("result.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))?,
    };
    let t = &result.timings;
    let timings = format!(
        "ao1_seconds = {}\nao2_seconds = {}\ntotal_seconds = {}\n",
        t.ao1_seconds, t.ao2_seconds, t.total_seconds
    );
    Ok(vec![
        main,
        write(dir.join("trace.csv"), &trace_csv(case, result))?,
        write(dir.join("timings.txt"), &timings)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> ResultDocument {
        ResultDocument {
            variant: "mixed".into(),
            objective: 0.1 + 0.2,
            supplied_active: 1.0 / 3.0,
            supplied_reactive: -2.5e-17,
            final_phi: 0.0,
            max_violation: 3.9e-13,
            outer_iterations: 3,
            penalty_iterations: 2,
            ao1_iterations: 40,
            demand_bus: vec![2, 3, 4],
            y: vec![1.0, 0.0, 1.0],
            gen_bus: vec![1],
            pg: vec![std::f64::consts::PI],
            qg: vec![-0.0],
            v: vec![],
            theta: vec![1e300],
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let d = doc();
        let back = ResultDocument::from_text(&d.to_text()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_text(), d.to_text());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let d = doc();
        let back: ResultDocument = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            ResultDocument::from_text("nonsense"),
            Err(OutputError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ResultDocument::from_text("variant = mixed"),
            Err(OutputError::Parse { .. })
        ));
        let bad = doc().to_text().replace("outer_iterations = 3", "outer_iterations = x");
        assert!(matches!(
            ResultDocument::from_text(&bad),
            Err(OutputError::Parse { .. })
        ));
    }

    #[test]
    fn format_names() {
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
