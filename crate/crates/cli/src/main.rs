use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use homeflex::harness::{
    ablation, compute_savings, evaluate_policies, load_policy, reference_costs, run_experiment, scaling_benchmark,
    ExperimentConfig,
};
use homeflex::marl::Method;
use homeflex::profiles::{generate_profiles, write_scenario_csv, ProfileTemplate};

#[derive(Parser)]
#[command(name = "homeflex", version, about = "Residential flexibility MARL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario as CSV files.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        n_homes: usize,
        #[arg(long, default_value_t = 7)]
        n_days: usize,
        /// Profile template (TOML); defaults are used when omitted.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one method for every seed; writes record.json,
    /// curve.csv, timing.json and policies under the output directory.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Evaluate a saved policy on the evaluation days of a seed's scenario.
    Evaluate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Directory written by `train` (policies/seed-<s>).
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Training time against the number of homes, with polynomial fits.
    BenchmarkScaling {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "facmac,iql+opt+marginal")]
        methods: Vec<Method>,
        #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
        sizes: Vec<usize>,
        /// Training episodes per run; defaults to the config's.
        #[arg(long)]
        episodes: Option<usize>,
        /// Write the report here as JSON as well as printing it.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// FACMAC with hysteresis and convolution toggled independently.
    Ablation {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Learning rate for negative TD errors when hysteresis is on.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the resolved experiment configuration as TOML.
    Config {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    n_homes: Option<usize>,
    #[arg(long)]
    n_train_episodes: Option<usize>,
    #[arg(long)]
    n_train_days: Option<usize>,
    #[arg(long)]
    n_eval_days: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    scenario_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(method, n_homes, n_train_episodes, n_train_days, n_eval_days, seeds, eval_every, output_dir);
        if self.scenario_dir.is_some() {
            cfg.scenario_dir = self.scenario_dir.clone();
        }
        cfg.check().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            seed,
            n_homes,
            n_days,
            template,
            out,
        } => {
            let tpl = match template {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str::<ProfileTemplate>(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => ProfileTemplate::default(),
            };
            let s = generate_profiles(seed, n_homes, n_days, &tpl)?;
            write_scenario_csv(&s, &out)?;
            println!("wrote {n_homes} homes x {n_days} days to {}", out.display());
        }
        Command::Train { exp } => {
            let cfg = exp.resolve()?;
            let record = run_experiment(&cfg)?;
            for r in &record.runs {
                println!(
                    "seed {}: baseline {:.4} lp {:.4} {} {:.4} savings {:.3}/home-month",
                    r.seed, r.baseline_cost, r.lp_cost, cfg.method, r.method_cost, r.savings
                );
            }
            let p = record.savings;
            println!("savings p25 {:.3} p50 {:.3} p75 {:.3}", p.p25, p.p50, p.p75);
            println!("results in {}", cfg.output_dir.display());
        }
        Command::Evaluate { exp, policy, seed } => {
            let cfg = exp.resolve()?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let p = load_policy(&policy)?;
            let (_, eval_s) = cfg.scenarios(seed)?;
            let (baseline, lp) = reference_costs(&eval_s, cfg.env)?;
            let eval = evaluate_policies(&p, &eval_s, cfg.env)?;
            let out = serde_json::json!({
                "seed": seed,
                "baseline_cost": baseline.cost_per_day,
                "lp_cost": lp,
                "method_cost": eval.cost_per_day,
                "savings": compute_savings(baseline.cost_per_day, eval.cost_per_day, cfg.n_homes)?,
                "breakdown": eval.breakdown,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::BenchmarkScaling {
            exp,
            methods,
            sizes,
            episodes,
            output,
        } => {
            let cfg = exp.resolve()?;
            let report = scaling_benchmark(&cfg, &methods, &sizes, episodes.unwrap_or(cfg.n_train_episodes), &cfg.seeds)?;
            for f in &report.fits {
                println!(
                    "{}: seconds {:?} linear {:?} quadratic {:?} preferred order {} log-log exponent {:.3}",
                    f.method,
                    f.mean_seconds,
                    f.fit.linear.coefficients,
                    f.fit.quadratic.coefficients,
                    f.fit.preferred_order,
                    f.fit.exponent
                );
            }
            if let Some(path) = output {
                write_text(&path, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Ablation { exp, beta, output } => {
            let cfg = exp.resolve()?;
            let beta = beta.unwrap_or(cfg.facmac.critic_lr * 0.5);
            let variants = ablation(&cfg, beta)?;
            for v in &variants {
                println!(
                    "hysteresis {:5} conv {:5}: p25 savings {:.3} delta {:+.3}",
                    v.hysteresis, v.conv, v.p25_savings, v.p25_delta
                );
            }
            if let Some(path) = output {
                write_text(&path, serde_json::to_string_pretty(&variants)?)?;
            }
        }
        Command::Config { exp } => {
            print!("{}", exp.resolve()?.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
