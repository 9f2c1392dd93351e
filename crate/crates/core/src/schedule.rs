//! Step sizes and clipping levels.
//!
//! Three rules are provided:
//!
//! * anytime: `γ_k = γ/(k(1+ln k))^{1/p}`, `λ_k = max{L_ε, λ(k(1+ln k))^{1/p}}`;
//! * constant finite horizon: `γ_k ≡ γ/K^{1/p}`, `λ_k ≡ max{L_ε, λK^{1/p}}`;
//! * epoch-doubling finite horizon: the constant rule with `γ` halved and `λ`
//!   doubled at each epoch of the partition `k_j = K - ⌈K/2^j⌉`.
//!
//! `L_ε = (1+ε)L` is the floor of every clip level.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::validate_p;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScheduleMode {
    /// AT: valid without knowing the horizon.
    Anytime,
    /// FH1: constant parameters over a known horizon.
    FiniteHorizon,
    /// FH2: parameters constant within each epoch, halving γ and doubling λ.
    EpochDoubling,
}

impl ScheduleMode {
    pub fn needs_horizon(self) -> bool {
        !matches!(self, ScheduleMode::Anytime)
    }

    pub fn label(self) -> &'static str {
        match self {
            ScheduleMode::Anytime => "at",
            ScheduleMode::FiniteHorizon => "fh1",
            ScheduleMode::EpochDoubling => "fh2",
        }
    }
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "at" | "anytime" => Ok(ScheduleMode::Anytime),
            "fh1" | "fh" => Ok(ScheduleMode::FiniteHorizon),
            "fh2" => Ok(ScheduleMode::EpochDoubling),
            other => Err(Error::invalid(format!("unknown schedule mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub mode: ScheduleMode,
    /// Base step size γ.
    pub gamma: f64,
    /// Base clip level λ.
    pub lambda: f64,
    /// Inflation ε of the clip floor `L_ε = (1+ε)L`.
    pub epsilon: f64,
    pub p: f64,
    /// Lipschitz constant L of the objective.
    pub lipschitz: f64,
    /// Known horizon; required by the finite-horizon modes.
    pub horizon: Option<u64>,
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("gamma", self.gamma)?;
        positive("lambda", self.lambda)?;
        positive("epsilon", self.epsilon)?;
        positive("lipschitz", self.lipschitz)?;
        validate_p(self.p)?;
        if self.mode.needs_horizon() && !matches!(self.horizon, Some(h) if h >= 1) {
            return Err(Error::invalid(format!(
                "schedule {} needs a horizon >= 1",
                self.mode
            )));
        }
        Ok(())
    }

    /// `L_ε = (1+ε)L`.
    pub fn l_eps(&self) -> f64 {
        (1.0 + self.epsilon) * self.lipschitz
    }
}

fn ceil_div_pow2(k: u64, j: u32) -> u64 {
    if j >= 64 {
        return 1;
    }
    let d = 1u64 << j;
    k.div_ceil(d)
}

/// Partition of `{1, …, K}` into `n+1` epochs, `n = ⌈log2 K⌉`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochPartition {
    horizon: u64,
    /// `k_0, …, k_{n+1}`.
    boundaries: Vec<u64>,
}

impl EpochPartition {
    pub fn new(horizon: u64) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::invalid("epoch partition needs a horizon >= 1"));
        }
        let n = if horizon == 1 {
            0
        } else {
            64 - (horizon - 1).leading_zeros()
        };
        let mut boundaries: Vec<u64> = (0..=n).map(|j| horizon - ceil_div_pow2(horizon, j)).collect();
        boundaries.push(horizon);
        Ok(EpochPartition { horizon, boundaries })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Index of the last epoch, `n = ⌈log2 K⌉`.
    pub fn n(&self) -> usize {
        self.boundaries.len() - 2
    }

    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    /// `E_j = {k_j + 1, …, k_{j+1}}`.
    pub fn epoch(&self, j: usize) -> RangeInclusive<u64> {
        self.boundaries[j] + 1..=self.boundaries[j + 1]
    }

    pub fn epochs(&self) -> impl Iterator<Item = RangeInclusive<u64>> + '_ {
        (0..=self.n()).map(move |j| self.epoch(j))
    }

    /// Epoch index `j` with `i ∈ E_j`.
    pub fn epoch_of(&self, i: u64) -> Result<usize> {
        if i < 1 || i > self.horizon {
            return Err(Error::invalid(format!(
                "iteration {i} outside 1..={}",
                self.horizon
            )));
        }
        Ok(self.boundaries[1..].partition_point(|&b| b < i))
    }
}

/// A validated schedule ready for per-iteration queries.
#[derive(Clone, Debug)]
pub struct Schedule {
    params: ScheduleParams,
    partition: Option<EpochPartition>,
}

impl Schedule {
    pub fn new(params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        let partition = match params.mode {
            ScheduleMode::EpochDoubling => Some(EpochPartition::new(params.horizon.unwrap_or(1))?),
            _ => None,
        };
        Ok(Schedule { params, partition })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn partition(&self) -> Option<&EpochPartition> {
        self.partition.as_ref()
    }

    /// `(γ_k, λ_k)` for iteration `k >= 1`.
    pub fn step_and_clip(&self, k: u64) -> Result<(f64, f64)> {
        let ScheduleParams { mode, gamma, lambda, p, .. } = self.params;
        if k < 1 {
            return Err(Error::invalid("iterations are numbered from 1"));
        }
        let l_eps = self.params.l_eps();
        match mode {
            ScheduleMode::Anytime => {
                let kf = k as f64;
                let scale = (kf * (1.0 + kf.ln())).powf(1.0 / p);
                Ok((gamma / scale, l_eps.max(lambda * scale)))
            }
            ScheduleMode::FiniteHorizon | ScheduleMode::EpochDoubling => {
                let horizon = self.params.horizon.unwrap_or(1);
                if k > horizon {
                    return Err(Error::invalid(format!(
                        "iteration {k} beyond the horizon {horizon}"
                    )));
                }
                let scale = (horizon as f64).powf(1.0 / p);
                let (g, l) = (gamma / scale, l_eps.max(lambda * scale));
                match &self.partition {
                    Some(part) => {
                        let factor = 2f64.powi(part.epoch_of(k)? as i32);
                        Ok((g / factor, l * factor))
                    }
                    None => Ok((g, l)),
                }
            }
        }
    }
}

/// One-shot evaluation of `(γ_k, λ_k)`.
pub fn step_and_clip(params: &ScheduleParams, k: u64) -> Result<(f64, f64)> {
    Schedule::new(*params)?.step_and_clip(k)
}

/// Which confidence-level setting of the base step to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpMode {
    /// `γ = 1/ln(2/δ)`, the high-probability average-iterate setting.
    Average,
    /// `γ = (ln(2/δ))^{-1/2}`, the kernel learning setting.
    Kernel,
}

/// Base step size for a target confidence `1 - δ`, `δ ∈ (0, 2/e]`.
pub fn hp_gamma(delta: f64, mode: HpMode) -> Result<f64> {
    let max = 2.0 / std::f64::consts::E;
    if !(delta > 0.0 && delta <= max * (1.0 + 1e-15)) {
        return Err(Error::invalid(format!("delta must lie in (0, 2/e], got {delta}")));
    }
    let log = (2.0 / delta).ln().max(1.0);
    Ok(match mode {
        HpMode::Average => 1.0 / log,
        HpMode::Kernel => 1.0 / log.sqrt(),
    })
}
