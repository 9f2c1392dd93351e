//! Bound constants, rate envelopes for overlay plots, and numerical checkers
//! for the inequalities the convergence analysis rests on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{EpochPartition, Schedule, ScheduleMode, ScheduleParams};
use crate::types::{norm, validate_p};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub p: f64,
    pub a_p: f64,
    pub b_p: f64,
    pub l_eps: f64,
    pub v_p: f64,
    pub w_p: f64,
    pub c_bar: f64,
}

impl BoundConstants {
    pub fn new(p: f64, epsilon: f64, lipschitz: f64, sigma_m: f64, lambda: f64) -> Result<Self> {
        validate_p(p)?;
        for (name, v) in [("epsilon", epsilon), ("lambda", lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("L", lipschitz), ("sigma_m", sigma_m)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        let sp = sigma_m.powf(p);
        let a_p = (1.0 + 1.0 / epsilon).powf(p - 1.0) * sp;
        let b_p = 2f64.powf(p - 1.0) * (sp + lipschitz.powf(p));
        let l_eps = (1.0 + epsilon) * lipschitz;
        let floor = l_eps.max(lambda).powf(2.0 - p);
        let ratio = a_p / lambda.powf(p - 1.0);
        Ok(BoundConstants {
            p,
            a_p,
            b_p,
            l_eps,
            v_p: 4.0 * ratio,
            w_p: b_p * floor,
            c_bar: 2.0 * ratio * ratio + b_p * floor,
        })
    }

    pub fn from_schedule(params: &ScheduleParams, sigma_m: f64) -> Result<Self> {
        Self::new(params.p, params.epsilon, params.lipschitz, sigma_m, params.lambda)
    }

    /// `2^{p-1}/(2^{p-1}-1)`, the epoch-coupling factor of the FH2 bound.
    pub fn epoch_factor(&self) -> f64 {
        let t = 2f64.powf(self.p - 1.0);
        t / (t - 1.0)
    }
}

fn check_k(k: u64) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("k must be >= 1"));
    }
    Ok(k as f64)
}

/// Average-iterate envelope `rate(k) · (d²/γ + γ c̄)`; the anytime rate
/// carries `(1+ln k)^{1/p} (1+ln(1+ln k))²`.
pub fn envelope_avg(params: &ScheduleParams, sigma_m: f64, k: u64, x1_dist: f64) -> Result<f64> {
    let c = BoundConstants::from_schedule(params, sigma_m)?;
    let kf = check_k(k)?;
    let p = params.p;
    let gamma = params.gamma;
    let base = x1_dist * x1_dist / gamma + gamma * c.c_bar;
    let rate = kf.powf(-(p - 1.0) / p);
    Ok(match params.mode {
        ScheduleMode::Anytime => {
            let l = 1.0 + kf.ln();
            l.powf(1.0 / p) * (1.0 + l.ln()).powi(2) * rate * base
        }
        ScheduleMode::FiniteHorizon | ScheduleMode::EpochDoubling => rate * base,
    })
}

/// Last-iterate envelope for the epoch-doubling and anytime schedules.
pub fn envelope_last(params: &ScheduleParams, sigma_m: f64, k: u64, x1_dist: f64) -> Result<f64> {
    let c = BoundConstants::from_schedule(params, sigma_m)?;
    let kf = check_k(k)?;
    let p = params.p;
    let gamma = params.gamma;
    let d = x1_dist;
    let rate = kf.powf(-(p - 1.0) / p);
    let noise = (c.v_p + c.w_p.sqrt()).powi(2);
    match params.mode {
        ScheduleMode::EpochDoubling => Ok(rate
            * (1.2 * d * d / gamma + 5.3 * c.epoch_factor() * (d * c.v_p + gamma * noise))),
        ScheduleMode::Anytime => {
            let l = 1.0 + kf.ln();
            Ok(l.powf(1.0 / p)
                * rate
                * (5.0 / 9.0 * d * d / gamma
                    + 1.2 * c.v_p * d
                    + 0.75 * gamma * (1.0 + l.ln()).powi(2) * noise))
        }
        ScheduleMode::FiniteHorizon => Err(Error::invalid(
            "last-iterate envelope is available for fh2 and at only",
        )),
    }
}

/// Schedule-dependent sums entering the average-iterate bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSums {
    pub k: u64,
    pub gamma_k: f64,
    /// `a_p Σ γ_i/λ_i^{p-1}`.
    pub a_k: f64,
    /// `b_p Σ γ_i² λ_i^{2-p}`.
    pub b_k: f64,
    /// `max γ_i λ_i`.
    pub c_k: f64,
    /// `max γ_i² λ_i²`.
    pub d_k: f64,
    /// `b_p Σ γ_i⁴ λ_i^{4-p}`.
    pub e_k: f64,
}

pub fn schedule_sums(schedule: &Schedule, constants: &BoundConstants, k: u64) -> Result<ScheduleSums> {
    check_k(k)?;
    let p = schedule.params().p;
    let (mut a, mut b, mut c, mut d, mut e) = (0.0, 0.0, 0.0f64, 0.0f64, 0.0);
    let mut gamma_k = 0.0;
    for i in 1..=k {
        let (g, l) = schedule.step_and_clip(i)?;
        a += g / l.powf(p - 1.0);
        b += g * g * l.powf(2.0 - p);
        c = c.max(g * l);
        d = d.max(g * g * l * l);
        e += g.powi(4) * l.powf(4.0 - p);
        gamma_k = g;
    }
    Ok(ScheduleSums {
        k,
        gamma_k,
        a_k: constants.a_p * a,
        b_k: constants.b_p * b,
        c_k: c,
        d_k: d,
        e_k: constants.b_p * e,
    })
}

/// `(1/(kγ_k)) [ (5/9)(d² + B_k) + 2 A_k² ]`, valid for any nonincreasing
/// step sizes with clip levels above `L_ε`.
pub fn expectation_bound_avg(sums: &ScheduleSums, x1_dist: f64) -> f64 {
    (5.0 / 9.0 * (x1_dist * x1_dist + sums.b_k) + 2.0 * sums.a_k * sums.a_k)
        / (sums.k as f64 * sums.gamma_k)
}

/// High-probability right-hand side at confidence `1 - δ`. Display only: a
/// single run can legitimately exceed it with probability `δ`.
pub fn hp_envelope_avg(sums: &ScheduleSums, x1_dist: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let log = (2.0 / delta).ln();
    let inner = x1_dist
        + sums.a_k
        + sums.b_k
        + 8.0 / 3.0 * (sums.c_k + sums.d_k) * log
        + (sums.b_k.sqrt() + sums.e_k.sqrt()) * log.sqrt();
    Ok(inner * inner / (2.0 * sums.k as f64 * sums.gamma_k))
}

/// Outcome of a numerical inequality check. `margin` is the smallest slack
/// (right side minus left side) seen; negative means violated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub holds: bool,
    pub margin: f64,
    pub cases: u64,
}

impl LemmaCheck {
    fn new() -> Self {
        LemmaCheck {
            holds: true,
            margin: f64::INFINITY,
            cases: 0,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        let slack = rhs - lhs;
        let tol = 1e-12 * lhs.abs().max(rhs.abs()).max(1.0);
        self.margin = self.margin.min(slack);
        self.holds &= slack >= -tol;
        self.cases += 1;
    }

    pub fn merge(mut self, other: LemmaCheck) -> Self {
        self.holds &= other.holds;
        self.margin = self.margin.min(other.margin);
        self.cases += other.cases;
        self
    }
}

impl Default for LemmaCheck {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of the recurrence-unrolling check, one part per conclusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceCheck {
    /// `max √α_i <= Σb + √(α_1 + Σc)`.
    pub max_bound: LemmaCheck,
    /// `Σβ + α_{k+1} <= (10/9)(α_1 + Σc) + (Σb)²`, as stated.
    pub sum_bound: LemmaCheck,
    /// `Σβ + α_{k+1} <= (5/4)(α_1 + Σc) + 2(Σb)²`. Follows from the max
    /// bound via `Σ b_i √α_i <= (Σb) max √α_i` and `B√S <= B² + S/4`.
    pub sum_bound_relaxed: LemmaCheck,
}

impl RecurrenceCheck {
    /// Both stated conclusions hold.
    pub fn holds(&self) -> bool {
        self.max_bound.holds && self.sum_bound.holds
    }

    pub fn merge(self, o: RecurrenceCheck) -> Self {
        RecurrenceCheck {
            max_bound: self.max_bound.merge(o.max_bound),
            sum_bound: self.sum_bound.merge(o.sum_bound),
            sum_bound_relaxed: self.sum_bound_relaxed.merge(o.sum_bound_relaxed),
        }
    }
}

impl Default for RecurrenceCheck {
    fn default() -> Self {
        RecurrenceCheck {
            max_bound: LemmaCheck::new(),
            sum_bound: LemmaCheck::new(),
            sum_bound_relaxed: LemmaCheck::new(),
        }
    }
}

/// Builds `α_{k+1} = α_k + b_k √α_k + c_k - β_k` and checks every prefix
/// against both conclusions of the unrolling lemma.
///
/// The stated sum bound is false in general: `α_1 = 1, b = 1/2, c = 0,
/// β = 3/2` gives `3/2 > 10/9 + 1/4`. It is still evaluated as stated and
/// reported separately from the relaxed constant.
pub fn check_recurrence_lemma(alpha1: f64, b: &[f64], c: &[f64], beta: &[f64]) -> Result<RecurrenceCheck> {
    if b.len() != c.len() || b.len() != beta.len() {
        return Err(Error::invalid("b, c and beta must have equal lengths"));
    }
    let nonneg = |v: f64| v >= 0.0 && v.is_finite();
    if !nonneg(alpha1) || !b.iter().chain(c).chain(beta).all(|&v| nonneg(v)) {
        return Err(Error::invalid("recurrence inputs must be finite and nonnegative"));
    }
    let mut check = RecurrenceCheck::default();
    let mut alpha = alpha1;
    let (mut sb, mut sc, mut sbeta) = (0.0, 0.0, 0.0);
    let mut max_sqrt = alpha1.sqrt();
    for i in 0..b.len() {
        let cap = alpha + b[i] * alpha.sqrt() + c[i];
        if beta[i] > cap * (1.0 + 1e-15) {
            return Err(Error::invalid(format!(
                "beta[{i}] = {} exceeds the recurrence budget {cap}",
                beta[i]
            )));
        }
        alpha = (cap - beta[i]).max(0.0);
        sb += b[i];
        sc += c[i];
        sbeta += beta[i];
        max_sqrt = max_sqrt.max(alpha.sqrt());
        check.max_bound.record(max_sqrt, sb + (alpha1 + sc).sqrt());
        check.sum_bound.record(sbeta + alpha, 10.0 / 9.0 * (alpha1 + sc) + sb * sb);
        check
            .sum_bound_relaxed
            .record(sbeta + alpha, 1.25 * (alpha1 + sc) + 2.0 * sb * sb);
    }
    if b.is_empty() {
        check.max_bound.record(alpha1.sqrt(), alpha1.sqrt());
        check.sum_bound.record(alpha1, alpha1);
        check.sum_bound_relaxed.record(alpha1, alpha1);
    }
    Ok(check)
}

/// `Σ_{i<=k} 1/(i(1+ln i)) <= 1 + ln(1+ln k)` for every `k` in `1..=k_max`.
pub fn check_harmonic_log(k_max: u64) -> Result<LemmaCheck> {
    check_k(k_max)?;
    let mut check = LemmaCheck::new();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for i in 1..=k_max {
        let fi = i as f64;
        let term = 1.0 / (fi * (1.0 + fi.ln())) - comp;
        let t = sum + term;
        comp = (t - sum) - term;
        sum = t;
        check.record(sum, 1.0 + (1.0 + fi.ln()).ln());
    }
    Ok(check)
}

/// Result of the weighted-average identity check on one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedAverageCheck {
    /// `|β_k - (1/k)Σβ - Σ_j (1/(j(j+1))) Σ_{i>k-j} (β_i - β_{k-j})|`.
    pub identity_error: f64,
    /// The inequality part, when `β >= 0` and `iβ_i` is nonincreasing.
    pub inequality: Option<LemmaCheck>,
}

pub fn check_weighted_avg_identity(beta: &[f64]) -> Result<WeightedAverageCheck> {
    let k = beta.len();
    if k == 0 {
        return Err(Error::invalid("sequence must be nonempty"));
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sequence must be finite"));
    }
    let mut prefix = vec![0.0; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] + beta[i];
    }
    let total = prefix[k];
    let kf = k as f64;

    let mut correction = 0.0;
    for j in 1..k {
        // 1-based β_{k-j} is beta[k-j-1]; Σ_{i=k-j+1}^k β_i = S_k - S_{k-j}.
        let tail = total - prefix[k - j];
        correction += (tail - j as f64 * beta[k - j - 1]) / (j * (j + 1)) as f64;
    }
    let identity_error = (beta[k - 1] - total / kf - correction).abs();

    let applicable = beta.iter().all(|&v| v >= 0.0)
        && (1..k).all(|i| {
            // `iβ_i` equal up to rounding still counts as nonincreasing.
            let (next, prev) = ((i + 1) as f64 * beta[i], i as f64 * beta[i - 1]);
            next <= prev * (1.0 + 1e-12)
        });
    let inequality = applicable.then(|| {
        let mut lhs = 0.0;
        for j in 1..k {
            lhs += (total - prefix[k - j - 1]) / (j * (j + 1)) as f64;
        }
        let mut check = LemmaCheck::new();
        check.record(lhs, 2.0 / kf * total + beta[k - 1] * (1.0 - 3.0 / kf));
        check
    });
    Ok(WeightedAverageCheck {
        identity_error,
        inequality,
    })
}

/// `4(k_{j+2} - k_{j+1}) >= k_{j+1} - k_j` for all horizons up to `k_max`.
pub fn check_epoch_lemma(k_max: u64) -> Result<LemmaCheck> {
    check_k(k_max)?;
    let mut check = LemmaCheck::new();
    for h in 1..=k_max {
        let part = EpochPartition::new(h)?;
        let b = part.boundaries();
        for j in 0..part.n() {
            check.record((b[j + 1] - b[j]) as f64, 4.0 * (b[j + 2] - b[j + 1]) as f64);
        }
    }
    Ok(check)
}

/// Monte-Carlo summary of the clipped batch estimator `ũ = CLIP(ū, λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipStatsReport {
    pub trials: usize,
    pub lambda: f64,
    /// `‖E ũ - u‖`.
    pub bias: f64,
    pub bias_se: f64,
    /// `a_p λ^{1-p}`.
    pub bias_bound: f64,
    /// `E‖ũ‖²`.
    pub second_moment: f64,
    pub second_moment_se: f64,
    /// `E‖ũ - E ũ‖²`.
    pub variance: f64,
    /// `b_p λ^{2-p}`, bounding both second moments.
    pub moment_bound: f64,
    pub pass: bool,
}

impl ClipStatsReport {
    /// Smallest slack relative to the allowance, over the three bounds.
    pub fn margin(&self) -> f64 {
        let allow = |bound: f64, se: f64| 1.1 * bound + 5.0 * se;
        let b = allow(self.bias_bound, self.bias_se);
        let m = allow(self.moment_bound, self.second_moment_se);
        ((b - self.bias) / b.max(f64::MIN_POSITIVE))
            .min((m - self.second_moment) / m)
            .min((m - self.variance) / m)
    }
}

/// Minimum number of draws accepted by [`check_clipped_estimator_stats`].
pub const MIN_CLIP_TRIALS: usize = 10_000;

/// Draws `trials` batch averages `ū` with known mean `u` and
/// `E‖ū - u‖^p <= σ_m^p`, clips them at `λ` and compares bias and second
/// moments with `a_p λ^{1-p}` and `b_p λ^{2-p}`, allowing 10% plus five
/// standard errors.
pub fn check_clipped_estimator_stats<R, F>(
    constants: &BoundConstants,
    lambda: f64,
    u: &[f64],
    trials: usize,
    rng: &mut R,
    mut draw: F,
) -> Result<ClipStatsReport>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Vec<f64>,
{
    if trials < MIN_CLIP_TRIALS {
        return Err(Error::Refused(format!(
            "{trials} trials is below the minimum of {MIN_CLIP_TRIALS}"
        )));
    }
    if !(lambda >= constants.l_eps) {
        return Err(Error::invalid(format!(
            "clip level {lambda} is below L_eps = {}",
            constants.l_eps
        )));
    }
    let d = u.len();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let (mut m2, mut m2_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let mut v = draw(rng);
        if v.len() != d {
            return Err(Error::invalid("sampled vector has the wrong dimension"));
        }
        let n = norm(&v);
        if n > lambda {
            let s = lambda / n;
            v.iter_mut().for_each(|c| *c *= s);
        }
        let n2: f64 = v.iter().map(|c| c * c).sum();
        m2 += n2;
        m2_sq += n2 * n2;
        for i in 0..d {
            let dev = v[i] - u[i];
            sum[i] += dev;
            sum_sq[i] += dev * dev;
        }
    }
    let t = trials as f64;
    // Deviations from u keep the noiseless case exact.
    let shift: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let bias = norm(&shift);
    let bias_se = (0..d)
        .map(|i| ((sum_sq[i] / t - shift[i] * shift[i]).max(0.0)) / t)
        .sum::<f64>()
        .sqrt();
    let second_moment = m2 / t;
    let second_moment_se = ((m2_sq / t - second_moment * second_moment).max(0.0) / t).sqrt();
    let variance = (sum_sq.iter().sum::<f64>() / t - shift.iter().map(|c| c * c).sum::<f64>()).max(0.0);
    let p = constants.p;
    let bias_bound = constants.a_p * lambda.powf(1.0 - p);
    let moment_bound = constants.b_p * lambda.powf(2.0 - p);
    let mut report = ClipStatsReport {
        trials,
        lambda,
        bias,
        bias_se,
        bias_bound,
        second_moment,
        second_moment_se,
        variance,
        moment_bound,
        pass: false,
    };
    report.pass = report.margin() >= 0.0;
    Ok(report)
}
