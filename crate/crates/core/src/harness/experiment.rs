//! Seeded multi-run experiments on the ℓ1 problem and their aggregation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NoiseKind, Variant};
use crate::error::{Error, Result};
use crate::problems::{l1_problem, sample_unit_sphere, NoiseModel, NoisyL1Oracle, ParetoNoise};
use crate::schedule::Schedule;
use crate::solver::{run, RunOptions, RunTrace, StepPolicy};

/// `γ_k = γ/√k`, never clipped.
#[derive(Clone, Copy, Debug)]
pub struct SqrtDecay {
    pub gamma: f64,
}

impl StepPolicy for SqrtDecay {
    fn step_and_clip(&self, k: u64) -> Result<(f64, Option<f64>)> {
        if k < 1 {
            return Err(Error::invalid("iterations are numbered from 1"));
        }
        Ok((self.gamma / (k as f64).sqrt(), None))
    }
}

/// Step sizes of a clipped schedule with clipping switched off.
#[derive(Clone, Debug)]
pub struct Unclipped(pub Schedule);

impl StepPolicy for Unclipped {
    fn step_and_clip(&self, k: u64) -> Result<(f64, Option<f64>)> {
        Ok((self.0.step_and_clip(k)?.0, None))
    }

    fn horizon(&self) -> Option<u64> {
        StepPolicy::horizon(&self.0)
    }
}

/// Anytime steps with clip level `max{2L, λ (k(1+ln k))^{1/p}}`.
#[derive(Clone, Copy, Debug)]
pub struct RaisedFloor {
    pub gamma: f64,
    pub lambda: f64,
    pub p: f64,
    pub lipschitz: f64,
}

impl StepPolicy for RaisedFloor {
    fn step_and_clip(&self, k: u64) -> Result<(f64, Option<f64>)> {
        if k < 1 {
            return Err(Error::invalid("iterations are numbered from 1"));
        }
        let kf = k as f64;
        let scale = (kf * (1.0 + kf.ln())).powf(1.0 / self.p);
        Ok((
            self.gamma / scale,
            Some((2.0 * self.lipschitz).max(self.lambda * scale)),
        ))
    }
}

pub fn build_policy(cfg: &ExperimentConfig) -> Result<Box<dyn StepPolicy + Send + Sync>> {
    Ok(match cfg.variant {
        Variant::Cssgm => Box::new(Schedule::new(cfg.schedule_params())?),
        Variant::Ssgm => Box::new(SqrtDecay { gamma: cfg.gamma }),
        Variant::Ssgm2 => Box::new(Unclipped(Schedule::new(cfg.schedule_params())?)),
        Variant::Liu => Box::new(RaisedFloor {
            gamma: cfg.gamma,
            lambda: cfg.lambda,
            p: cfg.p,
            lipschitz: cfg.lipschitz(),
        }),
    })
}

fn noise_model(cfg: &ExperimentConfig) -> Result<NoiseModel> {
    Ok(match cfg.noise {
        NoiseKind::Pareto => NoiseModel::Pareto(ParetoNoise::new(cfg.p)?),
        NoiseKind::None => NoiseModel::None,
    })
}

/// Generator for run `index`: master seed plus a dedicated ChaCha stream.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One run: `x_1` uniform on the unit sphere, then `horizon` iterations.
pub fn run_single(cfg: &ExperimentConfig, index: u64) -> Result<RunTrace> {
    let policy = build_policy(cfg)?;
    run_single_with(cfg, policy.as_ref(), &noise_model(cfg)?, index)
}

fn run_single_with(
    cfg: &ExperimentConfig,
    policy: &(dyn StepPolicy + Send + Sync),
    noise: &NoiseModel,
    index: u64,
) -> Result<RunTrace> {
    // The schedule carries the configured L; the problem only evaluates f.
    let spec = l1_problem(cfg.d)?;
    let mut rng = run_rng(cfg.seed, index);
    let x1 = sample_unit_sphere(cfg.d, &mut rng)?;
    let mut oracle = NoisyL1Oracle::new(cfg.d, *noise, rng);
    run(
        x1,
        &mut oracle,
        policy,
        &spec,
        RunOptions::new(cfg.horizon, cfg.stride, cfg.m),
    )
}

/// Per-k means over completed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub k: Vec<u64>,
    pub mean_f_last: Vec<f64>,
    pub mean_f_avg: Vec<f64>,
    pub n_runs: usize,
    pub diverged: usize,
    pub config_fingerprint: String,
}

impl AggregateCurve {
    pub fn final_last(&self) -> f64 {
        *self.mean_f_last.last().expect("curves are nonempty")
    }

    pub fn final_avg(&self) -> f64 {
        *self.mean_f_avg.last().expect("curves are nonempty")
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Merges run outcomes in index order. Diverged runs are counted and
/// skipped; any other error aborts.
pub fn aggregate(outcomes: Vec<Result<RunTrace>>, fingerprint: String) -> Result<AggregateCurve> {
    let total = outcomes.len();
    let mut traces = Vec::with_capacity(total);
    let mut diverged = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(t) => traces.push(t),
            Err(Error::Diverged { iteration }) => {
                log::debug!("run {i} diverged at iteration {iteration}");
                diverged += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if traces.is_empty() {
        return Err(Error::ExperimentFailed { runs: total });
    }
    if diverged > 0 {
        log::warn!("{diverged} of {total} runs diverged and were excluded from the means");
    }
    let k: Vec<u64> = traces[0].rows.iter().map(|r| r.k).collect();
    if traces.iter().any(|t| t.rows.len() != k.len()) {
        return Err(Error::invalid("runs recorded different iteration grids"));
    }
    let mut last = vec![Kahan::default(); k.len()];
    let mut avg = vec![Kahan::default(); k.len()];
    for t in &traces {
        for (i, row) in t.rows.iter().enumerate() {
            last[i].add(row.f_last);
            avg[i].add(row.f_avg);
        }
    }
    let n = traces.len() as f64;
    Ok(AggregateCurve {
        k,
        mean_f_last: last.iter().map(|s| s.sum / n).collect(),
        mean_f_avg: avg.iter().map(|s| s.sum / n).collect(),
        n_runs: traces.len(),
        diverged,
        config_fingerprint: fingerprint,
    })
}

/// Final-iteration means written to the summary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub final_last: f64,
    pub final_avg: f64,
    pub diverged: usize,
    pub config_fingerprint: String,
}

impl From<&AggregateCurve> for SummaryEntry {
    fn from(c: &AggregateCurve) -> Self {
        SummaryEntry {
            final_last: c.final_last(),
            final_avg: c.final_avg(),
            diverged: c.diverged,
            config_fingerprint: c.config_fingerprint.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub label: String,
    pub curve: AggregateCurve,
}

impl ExperimentResult {
    pub fn summary(&self) -> SummaryEntry {
        SummaryEntry::from(&self.curve)
    }
}

/// Runs `cfg.runs` independent seeded runs (in parallel) and aggregates them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_runs(cfg, cfg.runs)
}

/// Like [`run_experiment`] but with the first `runs` run indices only.
pub fn run_experiment_runs(cfg: &ExperimentConfig, runs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let policy = build_policy(cfg)?;
    let noise = noise_model(cfg)?;
    let outcomes: Vec<Result<RunTrace>> = (0..runs as u64)
        .into_par_iter()
        .map(|i| run_single_with(cfg, policy.as_ref(), &noise, i))
        .collect();
    let mut fp_cfg = cfg.clone();
    fp_cfg.runs = runs;
    let curve = aggregate(outcomes, fp_cfg.fingerprint())?;
    Ok(ExperimentResult {
        label: cfg.label(),
        curve,
    })
}

/// `E‖ξ‖^p` of the configured noise vector, estimated on a generator stream
/// that no run uses.
pub fn vector_noise_moment(cfg: &ExperimentConfig, samples: usize) -> Result<Option<f64>> {
    match noise_model(cfg)? {
        NoiseModel::None => Ok(None),
        NoiseModel::Pareto(noise) => {
            let mut rng = run_rng(cfg.seed, u64::MAX);
            Ok(Some(crate::problems::empirical_vector_moment(
                &noise, cfg.d, samples, &mut rng,
            )))
        }
    }
}
