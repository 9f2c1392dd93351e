//! Grid search over the base step size and clip level.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, run_experiment_runs, ExperimentResult};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    FinalLast,
    FinalAvg,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final_last" | "last" => Ok(Metric::FinalLast),
            "final_avg" | "avg" => Ok(Metric::FinalAvg),
            _ => Err(Error::invalid(format!(
                "unknown metric '{s}' (expected final_last or final_avg)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub gamma: f64,
    pub lambda: f64,
    /// Metric over the completed search runs; `+∞` if every run diverged.
    pub value: f64,
    pub n_runs: usize,
    pub diverged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best_gamma: f64,
    pub best_lambda: f64,
    pub cells: Vec<GridCell>,
    /// Full-`runs` rerun at the winning cell.
    pub confirmation: ExperimentResult,
}

impl GridResult {
    pub fn table_csv(&self) -> String {
        let mut s = String::from("gamma,lambda,value,n_runs,diverged\n");
        for c in &self.cells {
            writeln!(s, "{:?},{:?},{:?},{},{}", c.gamma, c.lambda, c.value, c.n_runs, c.diverged)
                .expect("writing to a String");
        }
        s
    }
}

/// Parses `a,b,c` into a list of positive reals.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| Error::invalid(format!("bad grid value '{t}'")))
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::invalid("grid is empty"));
    }
    Ok(out)
}

fn metric_of(res: &ExperimentResult, metric: Metric) -> f64 {
    match metric {
        Metric::FinalLast => res.curve.final_last(),
        Metric::FinalAvg => res.curve.final_avg(),
    }
}

/// Evaluates every cell with `search_runs` runs, then reruns the winner
/// with the configured `runs`. Ties go to the smallest γ, then the smallest
/// λ; unclipped variants ignore λ, so only the smallest λ is visited.
pub fn grid_search(
    cfg: &ExperimentConfig,
    gammas: &[f64],
    lambdas: &[f64],
    metric: Metric,
    search_runs: usize,
) -> Result<GridResult> {
    if gammas.is_empty() || lambdas.is_empty() {
        return Err(Error::invalid("grids must be nonempty"));
    }
    if search_runs == 0 {
        return Err(Error::invalid("search needs at least one run per cell"));
    }
    let mut gs = gammas.to_vec();
    let mut ls = lambdas.to_vec();
    gs.sort_by(f64::total_cmp);
    gs.dedup();
    ls.sort_by(f64::total_cmp);
    ls.dedup();
    if !cfg.variant.is_clipped() {
        ls.truncate(1);
    }

    let mut cells = Vec::with_capacity(gs.len() * ls.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for &gamma in &gs {
        for &lambda in &ls {
            let cell_cfg = ExperimentConfig {
                gamma,
                lambda,
                ..cfg.clone()
            };
            let cell = match run_experiment_runs(&cell_cfg, search_runs) {
                Ok(r) => GridCell {
                    gamma,
                    lambda,
                    value: metric_of(&r, metric),
                    n_runs: r.curve.n_runs,
                    diverged: r.curve.diverged,
                },
                Err(Error::ExperimentFailed { runs }) => GridCell {
                    gamma,
                    lambda,
                    value: f64::INFINITY,
                    n_runs: 0,
                    diverged: runs,
                },
                Err(e) => return Err(e),
            };
            log::info!(
                "grid {} gamma={gamma} lambda={lambda}: {} ({} diverged)",
                cfg.label(),
                cell.value,
                cell.diverged
            );
            // Diverging cells are penalised: they cannot win over a cell
            // whose runs all completed.
            let score = if cell.diverged > 0 { f64::INFINITY } else { cell.value };
            if best.is_none_or(|(_, _, v)| score < v) {
                best = Some((gamma, lambda, score));
            }
            cells.push(cell);
        }
    }
    let (best_gamma, best_lambda, _) = best.expect("grid is nonempty");
    let confirmation = run_experiment(&ExperimentConfig {
        gamma: best_gamma,
        lambda: best_lambda,
        ..cfg.clone()
    })?;
    Ok(GridResult {
        best_gamma,
        best_lambda,
        cells,
        confirmation,
    })
}
