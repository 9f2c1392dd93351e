//! Randomized runs of the lemma checkers, one line per check.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::experiment::run_rng;
use crate::error::Result;
use crate::problems::ParetoNoise;
use crate::theory::{
    check_clipped_estimator_stats, check_epoch_lemma, check_harmonic_log,
    check_recurrence_lemma, check_weighted_avg_identity, BoundConstants, ClipStatsReport,
    LemmaCheck, RecurrenceCheck,
};

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyLine {
    pub name: String,
    pub pass: bool,
    /// Smallest slack over all cases (absolute for inequalities, relative
    /// to the allowance for Monte-Carlo checks, `tolerance - error` for
    /// identities).
    pub worst_margin: f64,
}

impl fmt::Display for VerifyLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<40} {} worst_margin={:e}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.worst_margin
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifySizes {
    pub recurrence_instances: usize,
    pub harmonic_k_max: u64,
    pub epoch_k_max: u64,
    pub weighted_instances: usize,
    pub clip_trials: usize,
}

impl Default for VerifySizes {
    fn default() -> Self {
        VerifySizes {
            recurrence_instances: 10_000,
            harmonic_k_max: 1_000_000,
            epoch_k_max: 100_000,
            weighted_instances: 10_000,
            clip_trials: 1_000_000,
        }
    }
}

/// Mixture of bounded and heavy-tailed nonnegative values.
pub fn mixed_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        0 => 0.0,
        1 => rng.random::<f64>(),
        2 => 10.0 * rng.random::<f64>(),
        _ => (1.0 - rng.random::<f64>()).powf(-1.0 / 1.2) - 1.0,
    }
}

/// Random recurrence instance: returns `(α_1, b, c, β)` with each `β_k`
/// inside the budget `α_k + b_k √α_k + c_k`.
pub fn random_recurrence<R: Rng + ?Sized>(rng: &mut R) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=200);
    let alpha1 = mixed_draw(rng);
    let b: Vec<f64> = (0..n).map(|_| mixed_draw(rng)).collect();
    let c: Vec<f64> = (0..n).map(|_| mixed_draw(rng)).collect();
    let mut beta = Vec::with_capacity(n);
    let mut alpha = alpha1;
    for i in 0..n {
        let cap = alpha + b[i] * alpha.sqrt() + c[i];
        let frac = match rng.random_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        };
        let bi = frac * cap;
        alpha = (cap - bi).max(0.0);
        beta.push(bi);
    }
    (alpha1, b, c, beta)
}

/// Sequence with `iβ_i` nonincreasing and `β >= 0`.
pub fn random_decreasing_weighted<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let n = rng.random_range(1..=200);
    let mut c = mixed_draw(rng) + 1e-3;
    (1..=n)
        .map(|i| {
            if rng.random_bool(0.7) {
                c *= rng.random::<f64>().powf(0.05);
            }
            c / i as f64
        })
        .collect()
}

/// Clipped batch average of `u + σ_m ξ v` in `R^2`, with `‖u‖ = L = 1`,
/// `v` a fixed unit vector and `ξ` calibrated Pareto noise, so
/// `E‖ū - u‖^p = σ_m^p` exactly.
pub fn pareto_clip_case(
    p: f64,
    lambda_factor: f64,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ClipStatsReport> {
    let (lipschitz, epsilon, sigma_m) = (1.0, 0.01, 1.0);
    let noise = ParetoNoise::new(p)?;
    let l_eps = (1.0 + epsilon) * lipschitz;
    let lambda = lambda_factor * l_eps;
    let c = BoundConstants::new(p, epsilon, lipschitz, sigma_m, lambda)?;
    let u = [0.6, -0.8];
    let v = [0.8, 0.6];
    check_clipped_estimator_stats(&c, lambda, &u, trials, rng, |g| {
        let xi = sigma_m * noise.sample(g);
        vec![u[0] + xi * v[0], u[1] + xi * v[1]]
    })
}

fn line(name: impl Into<String>, check: LemmaCheck) -> VerifyLine {
    VerifyLine {
        name: name.into(),
        pass: check.holds,
        worst_margin: check.margin,
    }
}

/// Runs every checker on its randomized suite.
pub fn run_verify(seed: u64, sizes: VerifySizes) -> Result<Vec<VerifyLine>> {
    let mut out = Vec::new();

    let mut rng = run_rng(seed, 0);
    let mut rec = RecurrenceCheck::default();
    for _ in 0..sizes.recurrence_instances {
        let (a1, b, c, beta) = random_recurrence(&mut rng);
        rec = rec.merge(check_recurrence_lemma(a1, &b, &c, &beta)?);
    }
    out.push(line("recurrence_max_bound", rec.max_bound));
    out.push(line("recurrence_sum_bound", rec.sum_bound));
    out.push(line("recurrence_sum_bound_relaxed", rec.sum_bound_relaxed));

    out.push(line("harmonic_log", check_harmonic_log(sizes.harmonic_k_max)?));
    out.push(line("epoch_lemma", check_epoch_lemma(sizes.epoch_k_max)?));

    let mut rng = run_rng(seed, 1);
    let mut worst_err: f64 = 0.0;
    for _ in 0..sizes.weighted_instances {
        let n = rng.random_range(1..=200);
        let beta: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        worst_err = worst_err.max(check_weighted_avg_identity(&beta)?.identity_error);
    }
    out.push(VerifyLine {
        name: "weighted_avg_identity".into(),
        pass: worst_err <= 1e-9,
        worst_margin: 1e-9 - worst_err,
    });
    let mut ineq = LemmaCheck::default();
    for _ in 0..sizes.weighted_instances {
        let beta = random_decreasing_weighted(&mut rng);
        if let Some(c) = check_weighted_avg_identity(&beta)?.inequality {
            ineq = ineq.merge(c);
        }
    }
    out.push(line("weighted_avg_inequality", ineq));

    let mut rng = run_rng(seed, 2);
    for p in [1.1, 1.5, 2.0] {
        for factor in [1.5, 10.0, 100.0] {
            let rep = pareto_clip_case(p, factor, sizes.clip_trials, &mut rng)?;
            out.push(VerifyLine {
                name: format!("clipped_estimator p={p} lambda={factor}*L_eps"),
                pass: rep.pass,
                worst_margin: rep.margin(),
            });
        }
    }
    Ok(out)
}
