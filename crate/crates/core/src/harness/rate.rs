//! Empirical convergence-rate exponent of an averaged curve.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, AggregateCurve};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    /// Points in the window dropped for a nonpositive gap.
    pub dropped: usize,
}

/// Least-squares slope of `ln(gap)` against `ln k` over `k >= k_min`.
pub fn fit_power_law(ks: &[u64], values: &[f64], f_star: f64, k_min: u64) -> Result<RateFit> {
    if ks.len() != values.len() {
        return Err(Error::invalid("k and value columns differ in length"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    for (&k, &v) in ks.iter().zip(values) {
        if k < k_min || k == 0 {
            continue;
        }
        let gap = v - f_star;
        if gap > 0.0 && gap.is_finite() {
            xs.push((k as f64).ln());
            ys.push(gap.ln());
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("rate fit: dropped {dropped} nonpositive points, window shrunk");
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "rate fit needs at least two positive points at k >= {k_min}, found {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct k"));
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        points: n,
        dropped,
    })
}

/// Slope of the average-iterate curve.
pub fn fit_rate(curve: &AggregateCurve, f_star: f64, k_min: u64) -> Result<RateFit> {
    fit_power_law(&curve.k, &curve.mean_f_avg, f_star, k_min)
}

/// End-of-horizon curve: one independent experiment per horizon `K`, each
/// contributing its final means at `k = K`. Finite-horizon schedules are
/// tuned to their end point, so their rate in `K` is read off this curve
/// rather than off a single run's trajectory.
pub fn horizon_sweep(cfg: &ExperimentConfig, horizons: &[u64]) -> Result<AggregateCurve> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("horizons must be nonempty and strictly increasing"));
    }
    let mut fp_cfg = cfg.clone();
    fp_cfg.horizon = 0;
    let mut out = AggregateCurve {
        k: Vec::new(),
        mean_f_last: Vec::new(),
        mean_f_avg: Vec::new(),
        n_runs: cfg.runs,
        diverged: 0,
        config_fingerprint: fp_cfg.fingerprint(),
    };
    for &h in horizons {
        let c = ExperimentConfig {
            horizon: h,
            stride: h,
            ..cfg.clone()
        };
        let r = run_experiment(&c)?.curve;
        out.k.push(h);
        out.mean_f_last.push(r.final_last());
        out.mean_f_avg.push(r.final_avg());
        out.n_runs = out.n_runs.min(r.n_runs);
        out.diverged += r.diverged;
    }
    Ok(out)
}
