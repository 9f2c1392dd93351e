//! Side-by-side curves for several schedules or baselines.

use std::fmt::Write as _;
use std::str::FromStr;

use super::config::{ExperimentConfig, Variant};
use super::experiment::{run_experiment, ExperimentResult};
use crate::error::{Error, Result};
use crate::schedule::ScheduleMode;

/// A named configuration recipe for comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareVariant {
    At,
    Fh1,
    Fh2,
    Liu,
    Ssgm,
    Ssgm2,
}

impl CompareVariant {
    pub fn name(self) -> &'static str {
        match self {
            CompareVariant::At => "at",
            CompareVariant::Fh1 => "fh1",
            CompareVariant::Fh2 => "fh2",
            CompareVariant::Liu => "liu",
            CompareVariant::Ssgm => "ssgm",
            CompareVariant::Ssgm2 => "ssgm2",
        }
    }

    /// Derives the concrete config, applying `gamma.<name>`/`lambda.<name>`.
    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.with_overrides_for(self.name());
        let (variant, schedule) = match self {
            CompareVariant::At => (Variant::Cssgm, ScheduleMode::Anytime),
            CompareVariant::Fh1 => (Variant::Cssgm, ScheduleMode::FiniteHorizon),
            CompareVariant::Fh2 => (Variant::Cssgm, ScheduleMode::EpochDoubling),
            CompareVariant::Liu => (Variant::Liu, ScheduleMode::Anytime),
            CompareVariant::Ssgm => (Variant::Ssgm, base.schedule),
            CompareVariant::Ssgm2 => (Variant::Ssgm2, base.schedule),
        };
        cfg.variant = variant;
        cfg.schedule = schedule;
        cfg
    }
}

impl FromStr for CompareVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "at" => Ok(CompareVariant::At),
            "fh1" | "fh" => Ok(CompareVariant::Fh1),
            "fh2" => Ok(CompareVariant::Fh2),
            "liu" => Ok(CompareVariant::Liu),
            "ssgm" => Ok(CompareVariant::Ssgm),
            "ssgm2" => Ok(CompareVariant::Ssgm2),
            _ => Err(Error::invalid(format!(
                "unknown comparison variant '{s}' (expected at, fh1, fh2, liu, ssgm, ssgm2)"
            ))),
        }
    }
}

pub fn parse_variants(s: &str) -> Result<Vec<CompareVariant>> {
    s.split(',').map(str::parse).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// Column prefixes, unique even when a variant is listed twice.
    pub labels: Vec<String>,
    pub results: Vec<ExperimentResult>,
}

impl Comparison {
    /// `k,<label>_f_last,<label>_f_avg,...` on the shared iteration grid.
    pub fn csv(&self) -> String {
        let mut s = String::from("k");
        for l in &self.labels {
            write!(s, ",{l}_f_last,{l}_f_avg").expect("writing to a String");
        }
        s.push('\n');
        let ks = &self.results[0].curve.k;
        for (i, k) in ks.iter().enumerate() {
            write!(s, "{k}").expect("writing to a String");
            for r in &self.results {
                write!(s, ",{:?},{:?}", r.curve.mean_f_last[i], r.curve.mean_f_avg[i])
                    .expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every configuration and aligns the curves.
pub fn compare_schedules(configs: &[(String, ExperimentConfig)]) -> Result<Comparison> {
    let Some((_, first)) = configs.first() else {
        return Err(Error::invalid("nothing to compare"));
    };
    for (label, cfg) in configs {
        if cfg.horizon != first.horizon || cfg.stride != first.stride {
            return Err(Error::invalid(format!(
                "'{label}' uses horizon {} / stride {}, expected {} / {}",
                cfg.horizon, cfg.stride, first.horizon, first.stride
            )));
        }
    }
    let mut labels: Vec<String> = Vec::with_capacity(configs.len());
    let mut results = Vec::with_capacity(configs.len());
    for (label, cfg) in configs {
        let mut unique = label.clone();
        let mut n = 2;
        while labels.contains(&unique) {
            unique = format!("{label}_{n}");
            n += 1;
        }
        labels.push(unique);
        results.push(run_experiment(cfg)?);
    }
    Ok(Comparison { labels, results })
}
