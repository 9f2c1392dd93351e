//! The ℓ1 test objective and zero-mean Pareto gradient noise.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::solver::SubgradientOracle;
use crate::types::{validate_p, Point, ProblemSpec, Subgradient};

/// Pareto shape is `p + SHAPE_OFFSET`: the p-th moment exists, barely.
pub const SHAPE_OFFSET: f64 = 0.001;

const QUAD_TOL: f64 = 1e-12;

/// `f(x) = ‖x‖₁` on `R^d`, with `L = √d`, `x_* = 0`, `f_* = 0`.
pub fn l1_problem(d: usize) -> Result<ProblemSpec> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    ProblemSpec::new(d, (d as f64).sqrt(), Arc::new(l1_value))?
        .with_exact_subgradient(true)
        .with_optimal_value(0.0)
        .with_minimizer(Point::zeros(d))
}

pub fn l1_value(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Coordinatewise sign, with `sign(0) = 0`.
pub fn l1_subgradient(x: &Point) -> Subgradient {
    Subgradient::from_vec_unchecked(x.as_slice().iter().map(|&v| sign(v)).collect())
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, what: &str) -> Result<f64> {
    let out = quadrature::double_exponential::integrate(f, a, b, QUAD_TOL);
    let scale = out.integral.abs().max(1.0);
    if !out.integral.is_finite() || out.error_estimate > 1e-8 * scale {
        return Err(Error::Calibration(format!(
            "{what}: quadrature did not converge (value {}, error estimate {})",
            out.integral, out.error_estimate
        )));
    }
    Ok(out.integral)
}

/// `E|P - E P|^p` for `P ~ Pareto(alpha, 1)`.
///
/// Split at the mean `μ = α/(α-1)`. The upper piece becomes
/// `α μ^{p-α} B(α-p, p+1)` under `t = μ/s`, and `w = s^{α-p}` turns the Beta
/// integral into `(1/a) ∫_0^1 (1 - w^{1/a})^p dw` with `a = α - p`, which has
/// no endpoint singularity.
pub fn pareto_unit_moment(p: f64, alpha: f64) -> Result<f64> {
    validate_p(p)?;
    if !(alpha > p && alpha.is_finite()) {
        return Err(Error::invalid(format!("shape {alpha} must exceed p = {p}")));
    }
    let mu = alpha / (alpha - 1.0);
    let head = integrate(
        |t| (mu - t).max(0.0).powf(p) * alpha * t.powf(-alpha - 1.0),
        1.0,
        mu,
        "lower moment piece",
    )?;
    let a = alpha - p;
    let beta = integrate(
        |w| (1.0 - w.powf(1.0 / a)).max(0.0).powf(p) / a,
        0.0,
        1.0,
        "upper moment piece",
    )?;
    Ok(head + alpha * mu.powf(p - alpha) * beta)
}

/// Scale `x_m` making `E|P - E P|^p = 1` for `P ~ Pareto(p + 0.001, x_m)`.
pub fn pareto_calibrate(p: f64) -> Result<f64> {
    pareto_calibrate_with_shape(p, p + SHAPE_OFFSET)
}

/// The moment is homogeneous of degree `p` in the scale, so one quadrature
/// at unit scale fixes `x_m`.
pub fn pareto_calibrate_with_shape(p: f64, alpha: f64) -> Result<f64> {
    let m1 = pareto_unit_moment(p, alpha)?;
    if !(m1 > 0.0) {
        return Err(Error::Calibration(format!("unit-scale moment is {m1}")));
    }
    Ok(m1.powf(-1.0 / p))
}

/// Centered Pareto noise `ξ = P - E P` normalized to `E|ξ|^p = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParetoNoise {
    p: f64,
    alpha: f64,
    scale: f64,
    mean: f64,
}

impl ParetoNoise {
    pub fn new(p: f64) -> Result<Self> {
        Self::with_shape(p, p + SHAPE_OFFSET)
    }

    pub fn with_shape(p: f64, alpha: f64) -> Result<Self> {
        let scale = pareto_calibrate_with_shape(p, alpha)?;
        Ok(ParetoNoise {
            p,
            alpha,
            scale,
            mean: alpha * scale / (alpha - 1.0),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Calibrated `x_m`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `E P = α x_m/(α-1)`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `P(P <= t)` for the uncentered variable.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < self.scale {
            0.0
        } else {
            1.0 - (self.scale / t).powf(self.alpha)
        }
    }

    /// Inverse CDF from one uniform draw: `x_m U^{-1/α}`, `U ∈ (0, 1]`.
    pub fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = 1.0 - rng.random::<f64>();
        self.scale * u.powf(-1.0 / self.alpha)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_raw(rng) - self.mean
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel {
    /// Exact subgradients, no generator draws.
    None,
    /// Independent calibrated Pareto noise on every coordinate.
    Pareto(ParetoNoise),
}

/// Stochastic subgradients `sign(x) + ξ` for the ℓ1 objective.
#[derive(Clone, Debug)]
pub struct NoisyL1Oracle<R> {
    dim: usize,
    noise: NoiseModel,
    rng: R,
}

impl<R: Rng> NoisyL1Oracle<R> {
    pub fn new(dim: usize, noise: NoiseModel, rng: R) -> Self {
        NoisyL1Oracle { dim, noise, rng }
    }

    pub fn noiseless(dim: usize, rng: R) -> Self {
        Self::new(dim, NoiseModel::None, rng)
    }

    pub fn pareto(dim: usize, p: f64, rng: R) -> Result<Self> {
        Ok(Self::new(dim, NoiseModel::Pareto(ParetoNoise::new(p)?), rng))
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

impl<R: Rng> SubgradientOracle for NoisyL1Oracle<R> {
    fn sample(&mut self, x: &Point, m: usize) -> Result<Vec<Subgradient>> {
        if x.dim() != self.dim {
            return Err(Error::invalid(format!(
                "oracle dimension {} does not match point dimension {}",
                self.dim,
                x.dim()
            )));
        }
        let g = l1_subgradient(x);
        let out = (0..m)
            .map(|_| match &self.noise {
                NoiseModel::None => g.clone(),
                NoiseModel::Pareto(noise) => Subgradient::from_vec_unchecked(
                    g.as_slice()
                        .iter()
                        .map(|gi| gi + noise.sample(&mut self.rng))
                        .collect(),
                ),
            })
            .collect();
        Ok(out)
    }
}

/// Uniform point on the unit sphere of `R^d` via a normalized Gaussian vector.
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Point> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::types::norm(&v);
        if n > 0.0 && n.is_finite() {
            return Ok(Point::from_vec_unchecked(v.into_iter().map(|c| c / n).collect()));
        }
    }
}

/// Monte-Carlo estimate of `E‖ξ‖^p` for a `d`-dimensional noise vector.
pub fn empirical_vector_moment<R: Rng + ?Sized>(
    noise: &ParetoNoise,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let mut acc = 0.0;
    for _ in 0..samples {
        let sq: f64 = (0..d).map(|_| noise.sample(rng).powi(2)).sum();
        acc += sq.powf(noise.p / 2.0);
    }
    acc / samples as f64
}
