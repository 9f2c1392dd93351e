//! Single-pass kernel training from a delimited data file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_lipschitz, Example, KernelFn, KernelModel, LossFn, Predictor};
use crate::schedule::{hp_gamma, HpMode, Schedule, ScheduleMode, ScheduleParams};

/// Parses rows of `features..., label` separated by commas, semicolons,
/// tabs or spaces. `#` starts a comment; a non-numeric first row is taken as
/// a header.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<Example>> {
    let mut out: Vec<Example> = Vec::new();
    let mut width = None;
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line
            .split([',', ';', '\t', ' '])
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(_) => return Err(err(format!("non-numeric field in '{line}'"))),
        };
        first = false;
        if values.len() < 2 {
            return Err(err("need at least one feature and a label".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(err(format!("expected {w} columns, found {}", values.len())));
            }
            _ => {}
        }
        let (z, y) = values.split_at(values.len() - 1);
        out.push(Example::new(z.to_vec(), y[0]));
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Example>> {
    parse_dataset(&std::fs::read_to_string(path)?, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTrainOptions {
    pub kernel: KernelFn,
    pub loss: LossFn,
    pub delta: f64,
    pub p: f64,
    pub epsilon: f64,
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTrainReport {
    pub examples_used: usize,
    pub steps: usize,
    pub gamma: f64,
    pub lipschitz: f64,
    pub gamma_k: f64,
    pub lambda_k: f64,
    pub clipped_steps: usize,
    pub risk_last: f64,
    pub risk_avg: f64,
}

/// One pass over `train` with the constant finite-horizon schedule
/// `γ = (ln(2/δ))^{-1/2}`, `λ = 1`, horizon `⌊n/m⌋`; risks are measured on
/// `test`.
pub fn kernel_train(
    train: &[Example],
    test: &[Example],
    opts: &KernelTrainOptions,
) -> Result<(KernelModel, KernelTrainReport)> {
    let m = opts.m;
    if m == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let horizon = train.len() / m;
    if horizon == 0 {
        return Err(Error::invalid(format!(
            "{} examples cannot fill a batch of {m}",
            train.len()
        )));
    }
    let gamma = hp_gamma(opts.delta, HpMode::Kernel)?;
    let lipschitz = kernel_lipschitz(&opts.kernel, &opts.loss, &train[..m])?;
    let schedule = Schedule::new(ScheduleParams {
        mode: ScheduleMode::FiniteHorizon,
        gamma,
        lambda: 1.0,
        epsilon: opts.epsilon,
        p: opts.p,
        // A degenerate first batch gives L = 0; the floor only needs L > 0.
        lipschitz: lipschitz.max(f64::MIN_POSITIVE),
        horizon: Some(horizon as u64),
    })?;
    let mut model = KernelModel::new(opts.kernel, opts.loss, m)?;
    let mut clipped_steps = 0;
    let (gamma_k, lambda_k) = schedule.step_and_clip(1)?;
    for (k, batch) in train.chunks_exact(m).take(horizon).enumerate() {
        let (g, l) = schedule.step_and_clip(k as u64 + 1)?;
        if model.step(batch, g, l)?.clipped {
            clipped_steps += 1;
        }
    }
    let report = KernelTrainReport {
        examples_used: horizon * m,
        steps: horizon,
        gamma,
        lipschitz,
        gamma_k,
        lambda_k,
        clipped_steps,
        risk_last: model.risk(test, Predictor::Last)?,
        risk_avg: model.risk(test, Predictor::Average)?,
    };
    Ok((model, report))
}
