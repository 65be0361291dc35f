use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aosbqp::ao2::Ao2Variant;
use aosbqp::check::{conservation_check, derivative_check};
use aosbqp::config::apply_config;
use aosbqp::driver::{enumerate_oracle, run_ao_sbqp, SolverConfig};
use aosbqp::output::{emit_outputs, OutputFormat};
use aosbqp::{apply_scenario, cases, parse_case, serialize_case, GridCase, Network, SolveError};

/// Writes a line to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Demand shut-off for islanded AC microgrids.
#[derive(Parser)]
#[command(name = "aosbqp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the shut-off problem and write result and trace files.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<Ao2Variant>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value = "text")]
        format: OutputFormat,
    },
    /// Enumerate every binary switch pattern.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Also write `oracle.csv` here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Finite-difference derivative and conservation self-checks.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Print the scenario-modified case.
    Scenario {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Case file, or `case5` / `case30` for the bundled cases.
    #[arg(long)]
    case: String,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the case as given instead of applying the scenario.
    #[arg(long)]
    no_scenario: bool,
}

struct Loaded {
    case: GridCase,
    cfg: SolverConfig,
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load(common: &Common) -> Result<Loaded, String> {
    let text = match common.case.as_str() {
        "case5" => cases::CASE5.to_string(),
        "case30" => cases::CASE30.to_string(),
        path => read(Path::new(path))?,
    };
    let raw = parse_case(&text).map_err(|e| format!("{}: {e}", common.case))?;
    let mut cfg = SolverConfig::default();
    if let Some(path) = &common.config {
        apply_config(&mut cfg, &read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.scenario.rank_seed = seed;
    }
    let case = if common.no_scenario {
        raw
    } else {
        apply_scenario(&raw, &cfg.scenario).map_err(|e| e.to_string())?
    };
    Ok(Loaded { case, cfg })
}

fn exit_for(err: &SolveError) -> u8 {
    match err {
        SolveError::Infeasible(_) => 2,
        SolveError::PenaltyDiverged { .. } | SolveError::OuterNotConverged(_) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    let usage = |e: String| (1, e);
    match cli.command {
        Command::Solve {
            common,
            variant,
            out_dir,
            format,
        } => {
            let Loaded { case, mut cfg } = load(&common).map_err(usage)?;
            if let Some(v) = variant {
                cfg.variant = v;
            }
            let result = run_ao_sbqp(&case, &cfg).map_err(|e| (exit_for(&e), e.to_string()))?;
            let paths = emit_outputs(&case, &result, format, &out_dir).map_err(|e| usage(e.to_string()))?;
            say!(
                "converged: objective {} with {} of {} demands on, |phi| {:e}, {} outer / {} penalty iterations, {:.3} s",
                result.objective,
                result.switches.iter().filter(|&&v| v == 1.0).count(),
                result.switches.len(),
                result.final_phi,
                result.outer_iterations,
                result.penalty_iterations(),
                result.timings.total_seconds
            );
            for p in paths {
                say!("wrote {}", p.display());
            }
        }
        Command::Oracle { common, out_dir } => {
            let Loaded { case, .. } = load(&common).map_err(usage)?;
            let entries = enumerate_oracle(&case).map_err(|e| (exit_for(&e), e.to_string()))?;
            let mut csv = String::from("y,feasible,objective\n");
            for e in &entries {
                let y: Vec<String> = e.switches.iter().map(|v| format!("{v}")).collect();
                csv.push_str(&format!("{},{},{}\n", y.join(" "), e.feasible, e.objective));
            }
            say!("{}", csv.trim_end());
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
                let path = dir.join("oracle.csv");
                fs::write(&path, &csv).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            }
        }
        Command::Check { common, points } => {
            let Loaded { case, cfg } = load(&common).map_err(usage)?;
            let net = Network::new(&case);
            let mut ok = true;
            for r in derivative_check(&net, points, cfg.seed) {
                let pass = r.max_rel_err <= 1e-6;
                ok &= pass;
                say!(
                    "{} {:<11} max rel err {:.2e}",
                    if pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.max_rel_err
                );
            }
            let worst = conservation_check(&case, 100, cfg.seed);
            let pass = worst <= 1e-10;
            ok &= pass;
            say!(
                "{} lossless sum    max |sum P| {worst:.2e}",
                if pass { "PASS" } else { "FAIL" }
            );
            if !ok {
                return Err((1, "self-check failed".into()));
            }
        }
        Command::Scenario { common } => {
            let Loaded { case, .. } = load(&common).map_err(usage)?;
            say!("{}", serialize_case(&case).trim_end());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
