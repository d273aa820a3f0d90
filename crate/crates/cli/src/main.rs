//! Experiment harness for magnetic manifold HMC.
//!
//! ```text
//! magmcmc sample <config.toml> [--grid]
//! magmcmc geodesic <euclidean3|sphere2|so3> --seed S --eps E --steps N --out PATH [--field random|zero]
//! magmcmc check <core|constrained|all> --seed S [--out PATH]
//! magmcmc ess <samples.csv> --ceiling C
//! ```
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 failed
//! verification check. MAGMCMC_THREADS caps the per-experiment worker count;
//! MAGMCMC_DETERMINISTIC_TIMING zeroes wall-time fields for byte-reproducible
//! archives.

mod commands;
mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use commands::{GeodesicArgs, EXIT_CONFIG};

const USAGE: &str = "usage:
  magmcmc sample <config.toml> [--grid]
  magmcmc geodesic <euclidean3|sphere2|so3> --seed S --eps E --steps N --out PATH [--field random|zero]
  magmcmc check <core|constrained|all> --seed S [--out PATH]
  magmcmc ess <samples.csv> --ceiling C";

/// Pulls `--name value` out of the argument list; returns None if absent.
fn take_flag(args: &mut Vec<String>, name: &str) -> Result<Option<String>, String> {
    if let Some(pos) = args.iter().position(|a| a == name) {
        if pos + 1 >= args.len() {
            return Err(format!("flag {name} requires a value"));
        }
        let value = args.remove(pos + 1);
        args.remove(pos);
        Ok(Some(value))
    } else {
        Ok(None)
    }
}

fn take_switch(args: &mut Vec<String>, name: &str) -> bool {
    if let Some(pos) = args.iter().position(|a| a == name) {
        args.remove(pos);
        true
    } else {
        false
    }
}

fn parse<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("bad {what} '{value}': {e}"))
}

fn reject_leftovers(args: &[String]) -> Result<(), String> {
    if args.is_empty() {
        Ok(())
    } else {
        Err(format!("unexpected arguments: {}", args.join(" ")))
    }
}

fn dispatch() -> Result<i32, String> {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        return Err(USAGE.into());
    }
    let command = args.remove(0);
    match command.as_str() {
        "sample" => {
            let grid = take_switch(&mut args, "--grid");
            if args.len() != 1 {
                return Err(USAGE.into());
            }
            let config = PathBuf::from(args.remove(0));
            Ok(commands::cmd_sample(&config, grid))
        }
        "geodesic" => {
            if args.is_empty() {
                return Err(USAGE.into());
            }
            let manifold = args.remove(0);
            let seed = parse(
                &take_flag(&mut args, "--seed")?.ok_or("--seed is required")?,
                "seed",
            )?;
            let eps = parse(
                &take_flag(&mut args, "--eps")?.ok_or("--eps is required")?,
                "eps",
            )?;
            let steps = parse(
                &take_flag(&mut args, "--steps")?.ok_or("--steps is required")?,
                "steps",
            )?;
            let out = PathBuf::from(take_flag(&mut args, "--out")?.ok_or("--out is required")?);
            let field_mode = take_flag(&mut args, "--field")?.unwrap_or_else(|| "random".into());
            reject_leftovers(&args)?;
            if eps == 0.0 {
                return Err("eps must be non-zero".into());
            }
            if steps == 0 {
                return Err("steps must be at least 1".into());
            }
            Ok(commands::cmd_geodesic(&GeodesicArgs {
                manifold,
                seed,
                eps,
                steps,
                out,
                field_mode,
            }))
        }
        "check" => {
            if args.is_empty() {
                return Err(USAGE.into());
            }
            let suite = args.remove(0);
            let seed = parse(
                &take_flag(&mut args, "--seed")?.ok_or("--seed is required")?,
                "seed",
            )?;
            let out = take_flag(&mut args, "--out")?.map(PathBuf::from);
            reject_leftovers(&args)?;
            Ok(commands::cmd_check(&suite, seed, out.as_deref().map(Path::new)))
        }
        "ess" => {
            if args.is_empty() {
                return Err(USAGE.into());
            }
            let csv = PathBuf::from(args.remove(0));
            let ceiling: f64 = parse(
                &take_flag(&mut args, "--ceiling")?.ok_or("--ceiling is required")?,
                "ceiling",
            )?;
            reject_leftovers(&args)?;
            if !ceiling.is_finite() || ceiling <= 0.0 {
                return Err("ceiling must be positive".into());
            }
            Ok(commands::cmd_ess(&csv, ceiling))
        }
        other => Err(format!("unknown command '{other}'\n{USAGE}")),
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("{message}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
