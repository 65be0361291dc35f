//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every key is optional and
//! overrides the matching default. `seed` sets both the solver seed and the
//! rank draw seed; a later `rank_seed` overrides the latter alone.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::driver::SolverConfig;
use crate::error::ConfigError;
use crate::grid::{DemandSetMode, ShiftMode};

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn shift_mode(s: &str) -> Result<ShiftMode, String> {
    match s {
        "additive" => Ok(ShiftMode::AdditiveTotal),
        "multiplicative" => Ok(ShiftMode::Multiplicative),
        _ => Err(format!("expected additive | multiplicative, got `{s}`")),
    }
}

fn demand_set_mode(s: &str) -> Result<DemandSetMode, String> {
    match s {
        "all" => Ok(DemandSetMode::AllBuses),
        "loaded" => Ok(DemandSetMode::LoadedBuses),
        _ => Err(format!("expected all | loaded, got `{s}`")),
    }
}

/// Parses a configuration file on top of `SolverConfig::default()`.
pub fn parse_config(text: &str) -> Result<SolverConfig, ConfigError> {
    let mut cfg = SolverConfig::default();
    apply_config(&mut cfg, text)?;
    Ok(cfg)
}

/// Applies the entries of `text` to `cfg`, then validates the result.
pub fn apply_config(cfg: &mut SolverConfig, text: &str) -> Result<(), ConfigError> {
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, val) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (key, val) = (key.trim(), val.trim());
        if key.is_empty() || val.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        let bad = |reason: String| ConfigError::BadValue {
            line,
            key: key.to_string(),
            reason,
        };
        match key {
            "variant" => cfg.variant = val.parse().map_err(bad)?,
            "rho0" => cfg.schedule.rho0 = value(line, key, val)?,
            "beta" => cfg.schedule.beta = value(line, key, val)?,
            "rho_max" => cfg.schedule.rho_max = value(line, key, val)?,
            "eps" => cfg.schedule.eps = value(line, key, val)?,
            "outer_eps" => cfg.outer_eps = value(line, key, val)?,
            "outer_max_iters" => cfg.outer_max_iters = value(line, key, val)?,
            "seed" => {
                cfg.seed = value(line, key, val)?;
                cfg.scenario.rank_seed = cfg.seed;
            }
            "single_shot" => cfg.single_shot = value(line, key, val)?,
            "loss_margin" => cfg.ao2.loss_margin = value(line, key, val)?,
            "full_rows" => cfg.ao2.full_rows = value(line, key, val)?,
            "pd_shift" => cfg.scenario.pd_shift = value(line, key, val)?,
            "qd_shift" => cfg.scenario.qd_shift = value(line, key, val)?,
            "shift_mode" => cfg.scenario.shift_mode = shift_mode(val).map_err(bad)?,
            "qg_bound_scale" => cfg.scenario.qg_bound_scale = value(line, key, val)?,
            "pg_upper_scale" => cfg.scenario.pg_upper_scale = value(line, key, val)?,
            "rank_levels" => cfg.scenario.rank_levels = value(line, key, val)?,
            "rank_seed" => cfg.scenario.rank_seed = value(line, key, val)?,
            "demand_set_mode" => cfg.scenario.demand_set_mode = demand_set_mode(val).map_err(bad)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }
    cfg.validate().map_err(ConfigError::Invalid)
}

/// Writes every key; `parse_config` of the output reproduces `cfg`.
pub fn config_to_text(cfg: &SolverConfig) -> String {
    let s = &cfg.scenario;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("variant", cfg.variant.to_string());
    put("rho0", format!("{:?}", cfg.schedule.rho0));
    put("beta", format!("{:?}", cfg.schedule.beta));
    put("rho_max", format!("{:?}", cfg.schedule.rho_max));
    put("eps", format!("{:?}", cfg.schedule.eps));
    put("outer_eps", format!("{:?}", cfg.outer_eps));
    put("outer_max_iters", cfg.outer_max_iters.to_string());
    put("seed", cfg.seed.to_string());
    put("single_shot", cfg.single_shot.to_string());
    put("loss_margin", cfg.ao2.loss_margin.to_string());
    put("full_rows", cfg.ao2.full_rows.to_string());
    put("pd_shift", format!("{:?}", s.pd_shift));
    put("qd_shift", format!("{:?}", s.qd_shift));
    put(
        "shift_mode",
        match s.shift_mode {
            ShiftMode::AdditiveTotal => "additive",
            ShiftMode::Multiplicative => "multiplicative",
        }
        .into(),
    );
    put("qg_bound_scale", format!("{:?}", s.qg_bound_scale));
    put("pg_upper_scale", format!("{:?}", s.pg_upper_scale));
    put("rank_levels", s.rank_levels.to_string());
    put("rank_seed", s.rank_seed.to_string());
    put(
        "demand_set_mode",
        match s.demand_set_mode {
            DemandSetMode::AllBuses => "all",
            DemandSetMode::LoadedBuses => "loaded",
        }
        .into(),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ao2::Ao2Variant;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config("# nothing\n\n").unwrap(), SolverConfig::default());
    }

    #[test]
    fn keys_override_defaults() {
        let cfg = parse_config("variant = relaxed-two\nbeta=4 # faster\nseed = 9\ndemand_set_mode = loaded\n").unwrap();
        assert_eq!(cfg.variant, Ao2Variant::RelaxedTwo);
        assert_eq!(cfg.schedule.beta, 4.0);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scenario.rank_seed, 9);
        assert_eq!(cfg.scenario.demand_set_mode, DemandSetMode::LoadedBuses);
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(parse_config("\nnonsense\n"), Err(ConfigError::Syntax { line: 2 }));
        assert!(matches!(
            parse_config("colour = red"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("beta = x"),
            Err(ConfigError::BadValue { line: 1, .. })
        ));
        assert!(matches!(parse_config("beta = 0.5"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            parse_config("outer_max_iters = 0"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = SolverConfig {
            variant: Ao2Variant::RelaxedOne,
            ..SolverConfig::default()
        };
        cfg.schedule.rho0 = 0.1 + 0.2;
        cfg.scenario.shift_mode = ShiftMode::Multiplicative;
        cfg.scenario.rank_seed = 77;
        assert_eq!(parse_config(&config_to_text(&cfg)).unwrap(), cfg);
    }
}
