//! Command-line front end.
//!
//! ```text
//!   survey-bandits simulate [--preset NAME | --config FILE] [overrides]
//!   survey-bandits verify <estimators|confidence|interactive|coverage|regret|all>
//! ```
//!
//! Exit codes: 0 success, 1 configuration error, 2 verification failure,
//! 3 runtime invariant violation.

use std::process::ExitCode;

use survey_bandits_cli::config::{ConfigError, NoiseChoice, RunConfig};
use survey_bandits_cli::runner::{run_config, WORKERS_ENV};
use survey_bandits_cli::verify::{run_suite, SUITES};

use survey_bandits::{Mode, TieBreak};

const USAGE: &str = "\
usage:
  survey-bandits simulate [--preset NAME | --config FILE] [overrides]
  survey-bandits verify <suite|all>

simulate overrides (flags take precedence over the config file):
  --mode ridge|elastic      --T N               --seeds 1,2,3
  --d N                     --K N               --beta-min X
  --alpha X                 --delta X           --sigma X
  --b X                     --noise centered|uniform01
  --noise-half-width X      --rescale-lambda    --interactive
  --tie-break lowest_index|seeded_random        --out DIR

presets: ridge-k3-bmin0.3 ridge-k5-bmin0.3 ridge-k5-bmin0.5
         elnet-k5-bmin0.7 elnet-k5-bmin1.5

verify suites: estimators confidence interactive coverage regret

environment: SURVEY_BANDITS_WORKERS caps the number of seed workers.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("simulate") => cmd_simulate(&args[1..]),
        Some("verify") => cmd_verify(&args[1..]),
        Some("--help" | "-h" | "help") => {
            println!("{USAGE}");
            ExitCode::SUCCESS
        }
        _ => {
            eprintln!("{USAGE}");
            ExitCode::from(1)
        }
    }
}

fn config_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {message}");
    ExitCode::from(1)
}

fn cmd_simulate(args: &[String]) -> ExitCode {
    let config = match build_config(args) {
        Ok(cfg) => cfg,
        Err(code) => return code,
    };
    if let Err(e) = config.validate() {
        return config_error(e);
    }

    println!(
        "simulate: mode={} d={} K={} T={} beta_min={} seeds={:?} interactive={} out={}",
        config.mode,
        config.d,
        config.k,
        config.t,
        config.beta_min,
        config.seeds,
        config.interactive,
        config.out_dir
    );
    if let Ok(workers) = std::env::var(WORKERS_ENV) {
        println!("workers: {workers}");
    }

    match run_config(&config) {
        Ok(summary) => {
            println!(
                "final cumulative regret (mean over seeds): {:.4}",
                summary.mean_final_cum_regret
            );
            println!(
                "final cumulative survey length (mean over seeds): {:.1}",
                summary.mean_final_cum_survey_len
            );
            println!(
                "final per-step survey lengths: {:?}",
                summary.final_survey_lens
            );
            println!("coverage fraction: {:.3}", summary.coverage_fraction);
            println!(
                "closed-form regret bound at T={}: {:.1}",
                config.t, summary.theoretical_bound
            );
            for path in &summary.per_seed_paths {
                println!("wrote {}", path.display());
            }
            println!("wrote {}", summary.aggregate_path.display());
            ExitCode::SUCCESS
        }
        Err(message) => {
            eprintln!("run failed: {message}");
            ExitCode::from(3)
        }
    }
}

fn cmd_verify(args: &[String]) -> ExitCode {
    let Some(which) = args.first() else {
        eprintln!("usage: survey-bandits verify <suite|all>; suites: {}", SUITES.join(" "));
        return ExitCode::from(1);
    };
    let names: Vec<&str> = if which == "all" {
        SUITES.to_vec()
    } else {
        vec![which.as_str()]
    };
    let mut all_ok = true;
    for name in names {
        match run_suite(name) {
            Some(report) => {
                report.print();
                all_ok &= report.passed();
            }
            None => {
                eprintln!(
                    "unknown suite `{name}`; available: {} (or `all`)",
                    SUITES.join(" ")
                );
                return ExitCode::from(1);
            }
        }
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn build_config(args: &[String]) -> Result<RunConfig, ExitCode> {
    let mut preset: Option<String> = None;
    let mut config_path: Option<String> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();

    let mut iter = args.iter().peekable();
    while let Some(arg) = iter.next() {
        let mut take_value = |name: &str| -> Result<String, ExitCode> {
            iter.next()
                .cloned()
                .ok_or_else(|| config_error(format!("flag {name} needs a value")))
        };
        match arg.as_str() {
            "--preset" => preset = Some(take_value("--preset")?),
            "--config" => config_path = Some(take_value("--config")?),
            "--interactive" => overrides.push(("interactive".into(), "true".into())),
            "--rescale-lambda" => overrides.push(("rescale_lambda_by_d".into(), "true".into())),
            flag if flag.starts_with("--") => {
                let key = flag.trim_start_matches("--").replace('-', "_");
                let known = [
                    "mode",
                    "T",
                    "seeds",
                    "d",
                    "K",
                    "beta_min",
                    "alpha",
                    "delta",
                    "sigma",
                    "b",
                    "noise",
                    "noise_half_width",
                    "tie_break",
                    "out",
                ];
                if !known.contains(&key.as_str()) {
                    return Err(config_error(format!("unknown flag {flag}")));
                }
                overrides.push((key, take_value(flag)?));
            }
            other => return Err(config_error(format!("unexpected argument {other}"))),
        }
    }

    let mut config = match (preset, config_path) {
        (Some(_), Some(_)) => {
            return Err(config_error("--preset and --config are mutually exclusive"))
        }
        (Some(name), None) => RunConfig::preset(&name).map_err(config_error)?,
        (None, Some(path)) => RunConfig::from_file(&path).map_err(|e| match e {
            ConfigError::Invalid { .. } => config_error(e),
            other => config_error(other),
        })?,
        (None, None) => {
            return Err(config_error(
                "simulate needs --preset NAME or --config FILE",
            ))
        }
    };

    for (key, value) in overrides {
        apply_override(&mut config, &key, &value).map_err(config_error)?;
    }
    Ok(config)
}

fn apply_override(config: &mut RunConfig, key: &str, value: &str) -> Result<(), String> {
    let parse_f64 =
        |v: &str| -> Result<f64, String> { v.parse().map_err(|_| format!("bad number `{v}`")) };
    let parse_usize =
        |v: &str| -> Result<usize, String> { v.parse().map_err(|_| format!("bad integer `{v}`")) };
    match key {
        "mode" => {
            config.mode = match value {
                "ridge" => Mode::Ridge,
                "elastic" | "elnet" => Mode::Elastic,
                other => return Err(format!("bad mode `{other}`")),
            }
        }
        "T" => config.t = parse_usize(value)?,
        "d" => config.d = parse_usize(value)?,
        "K" => config.k = parse_usize(value)?,
        "beta_min" => config.beta_min = parse_f64(value)?,
        "alpha" => config.alpha = parse_f64(value)?,
        "delta" => config.delta = parse_f64(value)?,
        "sigma" => config.sigma = Some(parse_f64(value)?),
        "b" => config.b = Some(parse_f64(value)?),
        "noise" => {
            config.noise = match value {
                "centered" => NoiseChoice::Centered,
                "uniform01" => NoiseChoice::Uniform01,
                other => return Err(format!("bad noise kind `{other}`")),
            }
        }
        "noise_half_width" => config.noise_half_width = parse_f64(value)?,
        "tie_break" => {
            config.tie_break = match value {
                "lowest_index" => TieBreak::LowestIndex,
                "seeded_random" => TieBreak::SeededRandom,
                other => return Err(format!("bad tie break `{other}`")),
            }
        }
        "interactive" => config.interactive = value == "true",
        "rescale_lambda_by_d" => config.rescale_lambda_by_d = value == "true",
        "seeds" => {
            config.seeds = value
                .split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|_| format!("bad seed `{s}`")))
                .collect::<Result<Vec<u64>, String>>()?;
        }
        "out" => config.out_dir = value.to_string(),
        other => return Err(format!("unknown override `{other}`")),
    }
    Ok(())
}
