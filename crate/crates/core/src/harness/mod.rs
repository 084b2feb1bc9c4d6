//! Experiment runner: scenario set-up, baseline and LP references, training,
//! evaluation, savings metric and result files.

mod policy_io;
mod scaling;

pub use policy_io::{load_policy, parse_manifest, save_policy, PolicyManifest, POLICY_MANIFEST};
pub use scaling::{
    ablation, fit_growth, fit_through_origin, loglog_exponent, scaling_benchmark, AblationVariant, GrowthFit,
    MethodFit, PolyFit, ScalingReport, TimingRow,
};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{CostBreakdown, EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::marl::{evaluate, train, CurvePoint, Evaluation, FacmacConfig, IqlConfig, Method, PolicySet, TrainConfig};
use crate::oracle::{baseline_day, solve_day};
use crate::profiles::{generate_profiles, load_scenario_csv, ProfileTemplate, ScenarioData};

/// Days per month used to scale daily savings.
pub const DAYS_PER_MONTH: f64 = 365.25 / 12.0;

/// `(baseline - method) * (365.25 / 12) / n_homes`, currency per home and month.
pub fn compute_savings(baseline_per_day: f64, method_per_day: f64, n_homes: usize) -> Result<f64> {
    if n_homes == 0 {
        return Err(Error::InvalidArgument("savings need at least one home".into()));
    }
    if !baseline_per_day.is_finite() || !method_per_day.is_finite() {
        return Err(Error::InvalidArgument("costs must be finite".into()));
    }
    Ok((baseline_per_day - method_per_day) * DAYS_PER_MONTH / n_homes as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub n_homes: usize,
    pub n_train_episodes: usize,
    /// Days sampled for training episodes.
    pub n_train_days: usize,
    /// Held-out days following the training days.
    pub n_eval_days: usize,
    pub seeds: Vec<u64>,
    /// Episodes between learning-curve points; 0 records only start and end.
    pub eval_every: usize,
    pub output_dir: PathBuf,
    /// Load the scenario from CSV files instead of generating one per seed.
    pub scenario_dir: Option<PathBuf>,
    pub profile: ProfileTemplate,
    pub env: EnvConfig,
    pub facmac: FacmacConfig,
    pub iql: IqlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Facmac,
            n_homes: 3,
            n_train_episodes: 200,
            n_train_days: 14,
            n_eval_days: 7,
            seeds: vec![0],
            eval_every: 20,
            output_dir: PathBuf::from("results"),
            scenario_dir: None,
            profile: ProfileTemplate::default(),
            env: EnvConfig::default(),
            facmac: FacmacConfig::default(),
            iql: IqlConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            episodes: self.n_train_episodes,
            eval_every: self.eval_every,
            env: self.env,
            facmac: self.facmac.clone(),
            iql: self.iql.clone(),
        }
    }

    /// Validates every field; nothing runs before this passes.
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_homes == 0 {
            return bad("n_homes must be at least 1");
        }
        if self.n_train_days == 0 || self.n_eval_days == 0 {
            return bad("n_train_days and n_eval_days must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir must be set");
        }
        if let Some(dir) = &self.scenario_dir {
            if !dir.is_dir() {
                return Err(Error::Config(format!("scenario_dir {} is not a directory", dir.display())));
            }
        }
        self.profile.check()?;
        self.train_config().check()
    }

    /// Training and evaluation scenarios for `seed`.
    pub fn scenarios(&self, seed: u64) -> Result<(ScenarioData, ScenarioData)> {
        let days = self.n_train_days + self.n_eval_days;
        let full = match &self.scenario_dir {
            Some(dir) => {
                let s = load_scenario_csv(dir)?;
                if s.n_homes != self.n_homes {
                    return Err(Error::Config(format!(
                        "scenario has {} homes, config asks for {}",
                        s.n_homes, self.n_homes
                    )));
                }
                if s.n_days < days {
                    return Err(Error::Config(format!(
                        "scenario has {} days, config needs {days}",
                        s.n_days
                    )));
                }
                s
            }
            None => generate_profiles(seed, self.n_homes, days, &self.profile)?,
        };
        let train: Vec<usize> = (0..self.n_train_days).collect();
        let eval: Vec<usize> = (self.n_train_days..days).collect();
        Ok((full.select_days(&train)?, full.select_days(&eval)?))
    }
}

/// Deterministic rollouts of `policy` over every day of `eval_days`.
pub fn evaluate_policies(policy: &PolicySet, eval_days: &ScenarioData, env: EnvConfig) -> Result<Evaluation> {
    let env = Environment::new(eval_days, env)?;
    let days: Vec<usize> = (0..eval_days.n_days).collect();
    evaluate(&env, policy, &days)
}

/// Baseline and LP-optimal cost per day over every day of `s`.
pub fn reference_costs(s: &ScenarioData, env: EnvConfig) -> Result<(Evaluation, f64)> {
    let env = Environment::new(s, env)?;
    let mut base = CostBreakdown::default();
    let mut lp = 0.0;
    for day in 0..s.n_days {
        base.add(&baseline_day(&env, day)?);
        lp += solve_day(&env, day)?.objective;
    }
    let k = 1.0 / s.n_days as f64;
    let breakdown = base.scaled(k);
    Ok((
        Evaluation {
            cost_per_day: breakdown.total(),
            breakdown,
        },
        lp * k,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    /// Currency per day over the evaluation days.
    pub baseline_cost: f64,
    pub lp_cost: f64,
    pub method_cost: f64,
    /// Currency per home and month.
    pub savings: f64,
    pub lp_savings: f64,
    pub breakdown: CostBreakdown,
    pub baseline_breakdown: CostBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// Linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument("percentile of an empty set or q outside [0, 1]".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(Self {
            p25: percentile(values, 0.25)?,
            p50: percentile(values, 0.5)?,
            p75: percentile(values, 0.75)?,
        })
    }
}

/// Deterministic results of one experiment; wall-clock timing is kept in a
/// separate file so that repeated runs produce identical records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRecord>,
    pub savings: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTiming {
    pub seed: u64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedTiming>,
}

pub struct SeedRun {
    pub record: SeedRecord,
    pub policy: PolicySet,
    pub curve: Vec<CurvePoint>,
    pub train_seconds: f64,
}

/// Generate, reference, train and evaluate for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let (train_s, eval_s) = cfg.scenarios(seed)?;
    let (baseline, lp_cost) = reference_costs(&eval_s, cfg.env)?;
    let out = train(cfg.method, &train_s, &eval_s, &cfg.train_config(), seed)?;
    let eval = evaluate_policies(&out.policy, &eval_s, cfg.env)?;
    let n = cfg.n_homes;
    Ok(SeedRun {
        record: SeedRecord {
            seed,
            baseline_cost: baseline.cost_per_day,
            lp_cost,
            method_cost: eval.cost_per_day,
            savings: compute_savings(baseline.cost_per_day, eval.cost_per_day, n)?,
            lp_savings: compute_savings(baseline.cost_per_day, lp_cost, n)?,
            breakdown: eval.breakdown,
            baseline_breakdown: baseline.breakdown,
        },
        policy: out.policy,
        curve: out.curve,
        train_seconds: out.train_seconds,
    })
}

pub const RECORD_FILE: &str = "record.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const TIMING_FILE: &str = "timing.json";

fn curve_csv(runs: &[SeedRun]) -> Vec<u8> {
    let mut out = String::from("seed,episode,eval_cost,savings,seconds\n");
    for run in runs {
        for p in &run.curve {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                run.record.seed, p.episode, p.eval_cost, p.savings, p.seconds
            );
        }
    }
    out.into_bytes()
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("records serialise");
    s.push('\n');
    s.into_bytes()
}

fn write_outputs(dir: &Path, record: &MetricsRecord, timing: &TimingRecord, runs: &[SeedRun], written: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in [
        (RECORD_FILE, json(record)),
        (CURVE_FILE, curve_csv(runs)),
        (TIMING_FILE, json(timing)),
    ] {
        let path = dir.join(name);
        written.push(path.clone());
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    for run in runs {
        let pdir = dir.join("policies").join(format!("seed-{}", run.record.seed));
        if pdir.exists() {
            fs::remove_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        }
        written.push(pdir.clone());
        save_policy(&pdir, &run.policy)?;
    }
    Ok(())
}

/// Runs every seed, then writes `record.json`, `curve.csv`, `timing.json`
/// and per-seed policies under `output_dir`. Files written before a failure
/// are removed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsRecord> {
    cfg.check()?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let savings: Vec<f64> = runs.iter().map(|r| r.record.savings).collect();
    let record = MetricsRecord {
        config: cfg.clone(),
        runs: runs.iter().map(|r| r.record.clone()).collect(),
        savings: Percentiles::of(&savings)?,
    };
    let timing = TimingRecord {
        config: cfg.clone(),
        runs: runs
            .iter()
            .map(|r| SeedTiming {
                seed: r.record.seed,
                train_seconds: r.train_seconds,
            })
            .collect(),
    };
    let mut written = Vec::new();
    if let Err(e) = write_outputs(&cfg.output_dir, &record, &timing, &runs, &mut written) {
        for path in written {
            let _ = if path.is_dir() {
                fs::remove_dir_all(&path)
            } else {
                fs::remove_file(&path)
            };
        }
        return Err(e);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{HomeAction, JointAction};
    use crate::marl::evaluate_with;
    use crate::oracle::extract_demonstrations;

    #[test]
    fn savings_arithmetic() {
        assert_eq!(compute_savings(5.0, 5.0, 4).unwrap(), 0.0);
        assert!((compute_savings(10.0, 7.0, 3).unwrap() - 30.4375).abs() < 1e-12);
        // 673.51 per home-month at 7.4 % reduction.
        let base = 673.51 / DAYS_PER_MONTH;
        let s = compute_savings(base, base * (1.0 - 0.074), 1).unwrap();
        assert!((s - 49.84).abs() < 0.01, "{s}");
        assert!(compute_savings(1.0, 0.0, 0).is_err());
        assert!(compute_savings(f64::NAN, 0.0, 1).is_err());
    }

    #[test]
    fn percentiles_interpolate() {
        let p = Percentiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((p.p25, p.p50, p.p75), (2.0, 3.0, 4.0));
        assert_eq!(percentile(&[1.0, 2.0], 0.25).unwrap(), 1.25);
        assert!(percentile(&[], 0.5).is_err());
    }

    #[test]
    fn lp_schedule_replayed_as_policy_costs_its_objective() {
        let s = generate_profiles(8, 2, 2, &ProfileTemplate::default()).unwrap();
        let env = Environment::new(&s, EnvConfig::default()).unwrap();
        for day in 0..2 {
            let plan = solve_day(&env, day).unwrap();
            let demo = extract_demonstrations(&env, &plan).unwrap();
            let eval = evaluate_with(&env, &[day], |_, state| Ok(demo.actions[state.step].clone())).unwrap();
            assert!((eval.cost_per_day - plan.objective).abs() < 1e-6);
            assert!((eval.breakdown.total() - eval.cost_per_day).abs() < 1e-12);
        }
    }

    #[test]
    fn breakdown_sums_to_total() {
        let s = generate_profiles(9, 2, 3, &ProfileTemplate::default()).unwrap();
        let env = Environment::new(&s, EnvConfig::default()).unwrap();
        let eval = evaluate_with(&env, &[0, 1, 2], |env, _| {
            Ok(JointAction::uniform(env.n_homes(), HomeAction::new(-0.3, 0.4, 0.6)))
        })
        .unwrap();
        let b = eval.breakdown;
        assert!((b.grid_energy + b.carbon + b.distribution + b.storage - eval.cost_per_day).abs() < 1e-6);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig {
            method: Method::IqlOptMarginal,
            seeds: vec![1, 2, 3],
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_toml("method = \"iql\"\nn_homes = 2\n[facmac]\nbatch_size = 8\n").unwrap();
        assert_eq!(partial.method, Method::Iql);
        assert_eq!(partial.facmac.batch_size, 8);
        assert_eq!(partial.facmac.actor_lr, 1e-4);
        assert!(ExperimentConfig::from_toml("episodes = 3").is_err());
    }

    #[test]
    fn invalid_configs_are_rejected_before_work() {
        let base = ExperimentConfig::default();
        for cfg in [
            ExperimentConfig { n_homes: 0, ..base.clone() },
            ExperimentConfig { seeds: vec![], ..base.clone() },
            ExperimentConfig { seeds: vec![1, 1], ..base.clone() },
            ExperimentConfig { n_eval_days: 0, ..base.clone() },
            ExperimentConfig {
                facmac: FacmacConfig {
                    tau: 0.0,
                    ..FacmacConfig::default()
                },
                ..base.clone()
            },
            ExperimentConfig {
                scenario_dir: Some(PathBuf::from("/nonexistent/scenario")),
                ..base.clone()
            },
        ] {
            assert!(matches!(cfg.check(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
