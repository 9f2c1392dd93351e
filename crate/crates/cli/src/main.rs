use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use csgm_core::harness::{
    compare_schedules, grid_search, kernel_train, load_dataset, output, parse_grid,
    parse_variants, run_experiment, run_verify, ExperimentConfig, KernelTrainOptions, Metric,
    VerifySizes,
};
use csgm_core::harness::experiment::vector_noise_moment;
use csgm_core::kernel::{KernelFn, LossFn};

#[derive(Parser)]
#[command(name = "csgm", version, about = "Clipped stochastic subgradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-run experiment; writes <label>.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search over (gamma, lambda), then a full rerun at the winner.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gamma: String,
        #[arg(long)]
        lambda: String,
        #[arg(long, default_value = "final_last")]
        metric: String,
        /// Runs per cell during the search (default: min(runs, 50)).
        #[arg(long)]
        search_runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aligned curves for several schedules or baselines.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma list of at, fh1, fh2, liu, ssgm, ssgm2.
        #[arg(long)]
        variants: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized lemma checks; exits nonzero if any check fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte-Carlo trials per clipped-estimator case.
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
        /// Small suite sizes, for smoke tests.
        #[arg(long)]
        quick: bool,
    },
    /// Single-pass kernel training on a delimited data file.
    KernelTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "hinge")]
        loss: String,
        #[arg(long, default_value = "gaussian:0.5")]
        kernel: String,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Held-out file for the risks; the training file otherwise.
        #[arg(long)]
        test: Option<PathBuf>,
    },
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, dir))
}

fn log_noise_moment(cfg: &ExperimentConfig) -> Result<()> {
    if let Some(m) = vector_noise_moment(cfg, 100_000)? {
        log::info!("empirical E|xi|^p of the noise vector (d = {}): {m:.4}", cfg.d);
    }
    Ok(())
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, seed, out } => {
            let (cfg, dir) = load_config(&config, seed, out)?;
            log_noise_moment(&cfg)?;
            let res = run_experiment(&cfg)?;
            output::write_results(&dir, std::slice::from_ref(&res))?;
            let s = res.summary();
            println!(
                "{} final_last={:?} final_avg={:?} diverged={} -> {}",
                res.label,
                s.final_last,
                s.final_avg,
                s.diverged,
                dir.display()
            );
        }
        Command::Grid {
            config,
            gamma,
            lambda,
            metric,
            search_runs,
            seed,
            out,
        } => {
            let (cfg, dir) = load_config(&config, seed, out)?;
            let metric: Metric = metric.parse()?;
            let search_runs = search_runs.unwrap_or(cfg.runs.min(50));
            let res = grid_search(&cfg, &parse_grid(&gamma)?, &parse_grid(&lambda)?, metric, search_runs)?;
            std::fs::create_dir_all(&dir)?;
            let table = dir.join(format!("{}-grid.csv", cfg.label()));
            std::fs::write(&table, res.table_csv()).with_context(|| format!("writing {}", table.display()))?;
            output::write_results(&dir, std::slice::from_ref(&res.confirmation))?;
            let s = res.confirmation.summary();
            println!(
                "{} best gamma={:?} lambda={:?} final_last={:?} final_avg={:?} diverged={}",
                res.confirmation.label, res.best_gamma, res.best_lambda, s.final_last, s.final_avg, s.diverged
            );
        }
        Command::Compare {
            config,
            variants,
            seed,
            out,
        } => {
            let (cfg, dir) = load_config(&config, seed, out)?;
            let configs: Vec<(String, ExperimentConfig)> = parse_variants(&variants)?
                .into_iter()
                .map(|v| (v.name().to_string(), v.apply(&cfg)))
                .collect();
            for (_, c) in &configs {
                c.validate()?;
            }
            let cmp = compare_schedules(&configs)?;
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("compare.csv");
            std::fs::write(&path, cmp.csv()).with_context(|| format!("writing {}", path.display()))?;
            let mut summary = BTreeMap::new();
            for (label, r) in cmp.labels.iter().zip(&cmp.results) {
                output::write_curve_csv(&dir.join(format!("{label}.csv")), &r.curve)?;
                summary.insert(label.clone(), r.summary());
                let s = r.summary();
                println!("{label} ({}) final_last={:?} final_avg={:?} diverged={}", r.label, s.final_last, s.final_avg, s.diverged);
            }
            output::write_summary_json(&dir.join("summary.json"), &summary)?;
        }
        Command::Verify { seed, trials, quick } => {
            let mut sizes = VerifySizes {
                clip_trials: trials,
                ..VerifySizes::default()
            };
            if quick {
                sizes.recurrence_instances = 200;
                sizes.harmonic_k_max = 10_000;
                sizes.epoch_k_max = 1_000;
                sizes.weighted_instances = 200;
            }
            let lines = run_verify(seed, sizes)?;
            for l in &lines {
                println!("{l}");
            }
            if lines.iter().any(|l| !l.pass) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::KernelTrain {
            data,
            loss,
            kernel,
            delta,
            p,
            m,
            epsilon,
            test,
        } => {
            let train = load_dataset(&data)?;
            let test = match &test {
                Some(t) => load_dataset(t)?,
                None => train.clone(),
            };
            let opts = KernelTrainOptions {
                kernel: kernel.parse::<KernelFn>()?,
                loss: loss.parse::<LossFn>()?,
                delta,
                p,
                epsilon,
                m,
            };
            let (_, report) = kernel_train(&train, &test, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
