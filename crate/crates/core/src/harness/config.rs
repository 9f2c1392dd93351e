//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schedule::{ScheduleMode, ScheduleParams};
use crate::types::validate_p;

/// Algorithm run by an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// The clipped method with the configured schedule.
    Cssgm,
    /// Unclipped, `γ_k = γ/√k`.
    Ssgm,
    /// Unclipped, step sizes of the configured schedule.
    Ssgm2,
    /// Anytime schedule with the clip floor raised to `2L` (approximate
    /// reconstruction of an external baseline).
    Liu,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Cssgm => "cssgm",
            Variant::Ssgm => "ssgm",
            Variant::Ssgm2 => "ssgm2",
            Variant::Liu => "liu-approx",
        }
    }

    pub fn is_clipped(self) -> bool {
        matches!(self, Variant::Cssgm | Variant::Liu)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cssgm" | "c-ssgm" => Ok(Variant::Cssgm),
            "ssgm" => Ok(Variant::Ssgm),
            "ssgm2" => Ok(Variant::Ssgm2),
            "liu" | "liu-approx" => Ok(Variant::Liu),
            _ => Err(Error::invalid(format!(
                "unknown variant '{s}' (expected cssgm, ssgm, ssgm2 or liu)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    Pareto,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: String,
    pub d: usize,
    pub p: f64,
    pub schedule: ScheduleMode,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub m: usize,
    pub horizon: u64,
    pub runs: usize,
    pub seed: u64,
    pub stride: u64,
    pub variant: Variant,
    pub noise: NoiseKind,
    /// Overrides `L = √d`.
    pub lipschitz: Option<f64>,
    /// Per-label `(γ, λ)` overrides used by schedule comparisons.
    pub overrides: BTreeMap<String, f64>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: "l1".into(),
            d: 100,
            p: 1.1,
            schedule: ScheduleMode::Anytime,
            gamma: 1.0,
            lambda: 1.0,
            epsilon: 0.01,
            m: 1,
            horizon: 100_000,
            runs: 1000,
            seed: 0,
            stride: 100,
            variant: Variant::Cssgm,
            noise: NoiseKind::Pareto,
            lipschitz: None,
            overrides: BTreeMap::new(),
            out: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("cannot parse '{value}' for key '{key}'"))
}

fn parse_count(key: &str, value: &str) -> std::result::Result<u64, String> {
    // Accept 1e5-style counts.
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = parse_value(key, value)?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(format!("'{value}' is not a nonnegative integer for key '{key}'"))
    }
}

impl ExperimentConfig {
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "problem" => {
                if value != "l1" {
                    return Err(format!(
                        "problem '{value}' is not supported by run (use l1; kernel data goes through kernel-train)"
                    ));
                }
                self.problem = value.into();
            }
            "d" => self.d = parse_count(key, value)? as usize,
            "p" => self.p = parse_value(key, value)?,
            "schedule" => self.schedule = value.parse().map_err(|e: Error| e.to_string())?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "m" => self.m = parse_count(key, value)? as usize,
            "horizon" => self.horizon = parse_count(key, value)?,
            "runs" => self.runs = parse_count(key, value)? as usize,
            "seed" => self.seed = parse_count(key, value)?,
            "stride" => self.stride = parse_count(key, value)?,
            "variant" => self.variant = value.parse().map_err(|e: Error| e.to_string())?,
            "noise" => {
                self.noise = match value {
                    "pareto" => NoiseKind::Pareto,
                    "none" => NoiseKind::None,
                    _ => return Err(format!("noise must be pareto or none, got '{value}'")),
                }
            }
            "lipschitz" => self.lipschitz = Some(parse_value(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => match key.split_once('.') {
                Some((param @ ("gamma" | "lambda"), label)) if !label.is_empty() => {
                    self.overrides
                        .insert(format!("{param}.{label}"), parse_value(key, value)?);
                }
                _ => return Err(format!("unknown key '{key}'")),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        validate_p(self.p)?;
        let checks: [(&str, bool); 6] = [
            ("d", self.d >= 1),
            ("m", self.m >= 1),
            ("horizon", self.horizon >= 1),
            ("runs", self.runs >= 1),
            ("stride", self.stride >= 1),
            ("epsilon", self.epsilon > 0.0 && self.epsilon.is_finite()),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::invalid(format!("{name} is out of range")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("lipschitz must be > 0, got {l}")));
            }
        }
        if self.variant == Variant::Liu && self.schedule != ScheduleMode::Anytime {
            return Err(Error::invalid(
                "the liu baseline uses the anytime schedule (set schedule = at)",
            ));
        }
        self.schedule_params().validate()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz.unwrap_or((self.d as f64).sqrt())
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            mode: self.schedule,
            gamma: self.gamma,
            lambda: self.lambda,
            epsilon: self.epsilon,
            p: self.p,
            lipschitz: self.lipschitz(),
            horizon: Some(self.horizon),
        }
    }

    /// Output label: the variant, qualified by the schedule for the variants
    /// that use one.
    pub fn label(&self) -> String {
        match self.variant {
            Variant::Cssgm | Variant::Ssgm2 => {
                format!("{}-{}", self.variant.label(), self.schedule.label())
            }
            Variant::Ssgm | Variant::Liu => self.variant.label().to_string(),
        }
    }

    /// Applies `gamma.<label>` / `lambda.<label>` overrides.
    pub fn with_overrides_for(&self, label: &str) -> Self {
        let mut out = self.clone();
        if let Some(&g) = self.overrides.get(&format!("gamma.{label}")) {
            out.gamma = g;
        }
        if let Some(&l) = self.overrides.get(&format!("lambda.{label}")) {
            out.lambda = l;
        }
        out
    }

    /// SHA-256 of the canonical JSON of every field that affects results.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# table 2 setup
problem = l1
d = 100
p = 1.1
schedule = fh2   # epoch doubling
gamma = 0.5
lambda = 2
horizon = 1e5
runs = 200
seed = 7
variant = cssgm
gamma.ssgm = 0.01
";

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::parse_str(SAMPLE, "sample").unwrap();
        assert_eq!(cfg.schedule, ScheduleMode::EpochDoubling);
        assert_eq!(cfg.horizon, 100_000);
        assert_eq!(cfg.runs, 200);
        assert_eq!(cfg.epsilon, 0.01);
        assert_eq!(cfg.m, 1);
        assert_eq!(cfg.lipschitz(), 10.0);
        assert_eq!(cfg.label(), "cssgm-fh2");
        assert_eq!(cfg.with_overrides_for("ssgm").gamma, 0.01);
        assert_eq!(cfg.with_overrides_for("at").gamma, 0.5);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ExperimentConfig::parse_str("d = 3\nbogus = 1\n", "cfg.txt").unwrap_err();
        match err {
            Error::Parse { line, message, path } => {
                assert_eq!(line, 2);
                assert_eq!(path, "cfg.txt");
                assert!(message.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ExperimentConfig::parse_str("d 3\n", "x").is_err());
        assert!(ExperimentConfig::parse_str("d = -3\n", "x").is_err());
    }

    #[test]
    fn range_checks() {
        assert!(ExperimentConfig::parse_str("p = 2.5\n", "x").is_err());
        assert!(ExperimentConfig::parse_str("runs = 0\n", "x").is_err());
        assert!(ExperimentConfig::parse_str("variant = liu\nschedule = fh1\n", "x").is_err());
        assert!(ExperimentConfig::parse_str("variant = liu\n", "x").is_ok());
        assert!(ExperimentConfig::parse_str("problem = kernel:data.csv\n", "x").is_err());
    }

    #[test]
    fn fingerprint_tracks_content_not_output_dir() {
        let a = ExperimentConfig::parse_str(SAMPLE, "a").unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
