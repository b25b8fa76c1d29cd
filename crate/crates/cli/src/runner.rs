//! Experiment execution: fans seeds across worker threads, writes per-seed
//! and aggregated CSVs once all runs join, and reports a summary. Output is
//! written by a single thread in seed order, so files are byte-identical
//! regardless of the worker count.

use std::path::{Path, PathBuf};

use survey_bandits::policy::theoretical_regret_bound;
use survey_bandits::simulator::{aggregate, coverage_fraction, run};
use survey_bandits::{SimError, Trajectory};

use crate::config::RunConfig;
use crate::csv::{aggregate_csv, per_seed_csv};

/// Environment variable capping the number of worker threads.
pub const WORKERS_ENV: &str = "SURVEY_BANDITS_WORKERS";

#[derive(Debug)]
pub struct RunSummary {
    pub per_seed_paths: Vec<PathBuf>,
    pub aggregate_path: PathBuf,
    pub mean_final_cum_regret: f64,
    pub mean_final_cum_survey_len: f64,
    pub final_survey_lens: Vec<usize>,
    pub coverage_fraction: f64,
    pub theoretical_bound: f64,
}

fn worker_count(seeds: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let requested = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(available);
    requested.min(seeds).max(1)
}

/// Runs every seed of the configuration and returns the trajectories in
/// seed order. Seeds are distributed over at most `SURVEY_BANDITS_WORKERS`
/// threads (default: available parallelism).
pub fn run_all_seeds(config: &RunConfig) -> Result<Vec<Trajectory>, SimError> {
    let env = config.environment();
    let policy = config.policy_config(&env);
    let seeds = &config.seeds;
    let workers = worker_count(seeds.len());

    if workers == 1 {
        return seeds
            .iter()
            .map(|&seed| run(&policy, &env, config.t, seed, config.interactive))
            .collect();
    }

    let mut results: Vec<Option<Result<Trajectory, SimError>>> = Vec::new();
    results.resize_with(seeds.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results_mutex = std::sync::Mutex::new(&mut results);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let outcome = run(&policy, &env, config.t, seeds[i], config.interactive);
                results_mutex.lock().expect("no panics hold this lock")[i] = Some(outcome);
            });
        }
    });

    results
        .into_iter()
        .map(|slot| slot.expect("every seed slot is filled before the scope ends"))
        .collect()
}

/// Runs the whole experiment and writes `seed_<s>.csv` per seed plus
/// `aggregate.csv` under the configured output directory.
pub fn run_config(config: &RunConfig) -> Result<RunSummary, String> {
    let trajectories = run_all_seeds(config).map_err(|e| e.to_string())?;
    let curves = aggregate(&trajectories).map_err(|e| e.to_string())?;

    let out_dir = Path::new(&config.out_dir);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", config.out_dir))?;

    let mut per_seed_paths = Vec::with_capacity(config.seeds.len());
    for (seed, trajectory) in config.seeds.iter().zip(trajectories.iter()) {
        let path = out_dir.join(format!("seed_{seed}.csv"));
        std::fs::write(&path, per_seed_csv(trajectory))
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        per_seed_paths.push(path);

        // Final confidence sets, one record per arm; the design matrices
        // are reconstructible and not stored.
        let sets_path = out_dir.join(format!("sets_seed_{seed}.json"));
        let sets = serde_json::to_string_pretty(&trajectory.final_sets)
            .expect("record serialization cannot fail");
        std::fs::write(&sets_path, sets + "\n")
            .map_err(|e| format!("cannot write {}: {e}", sets_path.display()))?;
    }
    let aggregate_path = out_dir.join("aggregate.csv");
    std::fs::write(&aggregate_path, aggregate_csv(&curves))
        .map_err(|e| format!("cannot write {}: {e}", aggregate_path.display()))?;

    let n = trajectories.len() as f64;
    let env = config.environment();
    let policy = config.policy_config(&env);
    Ok(RunSummary {
        per_seed_paths,
        aggregate_path,
        mean_final_cum_regret: trajectories.iter().map(Trajectory::final_cum_regret).sum::<f64>()
            / n,
        mean_final_cum_survey_len: trajectories
            .iter()
            .map(|t| t.final_cum_survey_len() as f64)
            .sum::<f64>()
            / n,
        final_survey_lens: trajectories.iter().map(|t| t.final_survey.len()).collect(),
        coverage_fraction: coverage_fraction(&trajectories),
        theoretical_bound: theoretical_regret_bound(
            config.mode,
            config.t,
            config.k,
            config.d,
            config.alpha,
            config.delta,
            &policy.bounds,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(dir: &str) -> RunConfig {
        let mut cfg = RunConfig::preset("ridge-k3-bmin0.3").unwrap();
        cfg.d = 6;
        cfg.t = 50;
        cfg.seeds = vec![1, 2];
        cfg.out_dir = dir.to_string();
        cfg
    }

    #[test]
    fn runner_writes_expected_files() {
        let dir = std::env::temp_dir().join(format!("sb-runner-{}", std::process::id()));
        let dir_str = dir.to_string_lossy().to_string();
        let cfg = quick_config(&dir_str);
        let summary = run_config(&cfg).unwrap();
        assert_eq!(summary.per_seed_paths.len(), 2);
        for path in &summary.per_seed_paths {
            let text = std::fs::read_to_string(path).unwrap();
            assert_eq!(text.lines().count(), 51);
        }
        let agg = std::fs::read_to_string(&summary.aggregate_path).unwrap();
        assert_eq!(agg.lines().count(), 51);
        assert!(summary.theoretical_bound.is_finite());
        std::fs::remove_dir_all(&dir).ok();
    }
}
