//! CSV emission for per-seed trajectories and aggregated curves. Output is
//! UTF-8, newline-terminated, with mandatory headers, and byte-identical
//! across repeated runs of the same configuration. Arm indices are 1-based
//! in files.

use std::fmt::Write as _;

use survey_bandits::simulator::AggregateCurves;
use survey_bandits::Trajectory;

pub const PER_SEED_HEADER: &str = "t,arm,survey_len,cum_survey_len,reward,regret,cum_regret";
pub const AGGREGATE_HEADER: &str =
    "t,mean_cum_regret,sd_cum_regret,mean_cum_survey_len,sd_cum_survey_len";

pub fn per_seed_csv(trajectory: &Trajectory) -> String {
    let mut out = String::with_capacity(trajectory.steps.len() * 48 + 64);
    out.push_str(PER_SEED_HEADER);
    out.push('\n');
    for s in &trajectory.steps {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t,
            s.arm + 1,
            s.survey_len,
            s.cum_survey_len,
            s.reward,
            s.regret,
            s.cum_regret
        )
        .expect("writing to a string cannot fail");
    }
    out
}

pub fn aggregate_csv(curves: &AggregateCurves) -> String {
    let mut out = String::with_capacity(curves.t.len() * 64 + 64);
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for i in 0..curves.t.len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            curves.t[i],
            curves.mean_cum_regret[i],
            curves.sd_cum_regret[i],
            curves.mean_cum_survey_len[i],
            curves.sd_cum_survey_len[i]
        )
        .expect("writing to a string cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use survey_bandits::simulator::{aggregate, run};
    use survey_bandits::*;

    fn tiny_trajectory() -> Trajectory {
        let env = Environment::benchmark(2, 3).with_noise(NoiseKind::CenteredUniform {
            half_width: 5e-4,
        });
        let cfg = PolicyConfig {
            mode: Mode::Ridge,
            alpha: 0.1,
            beta_min: 0.3,
            delta: 0.1,
            bounds: NoiseAndBounds::for_box(3, 1.0, env.noise().sub_gaussian_sigma(), env.tight_b()),
            k: 2,
            d: 3,
            eps_clamp: 1e-8,
            rescale_lambda_by_d: false,
            tie_break: TieBreak::LowestIndex,
        };
        run(&cfg, &env, 5, 1, false).unwrap()
    }

    #[test]
    fn per_seed_csv_shape() {
        let tr = tiny_trajectory();
        let text = per_seed_csv(&tr);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], PER_SEED_HEADER);
        assert_eq!(lines.len(), 6);
        assert!(text.ends_with('\n'));
        // Arms are 1-based in output.
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0], "1");
        let arm: usize = first[1].parse().unwrap();
        assert!((1..=2).contains(&arm));
    }

    #[test]
    fn aggregate_csv_shape() {
        let tr = tiny_trajectory();
        let curves = aggregate(std::slice::from_ref(&tr)).unwrap();
        let text = aggregate_csv(&curves);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], AGGREGATE_HEADER);
        assert_eq!(lines.len(), 6);
        // Single trajectory: zero deviation columns.
        for line in &lines[1..] {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[2], "0");
            assert_eq!(cols[4], "0");
        }
    }
}
