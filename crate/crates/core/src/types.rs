//! Points, subgradients, feasible-set projections and the clipping operator.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_finite(coords: &[f64], what: &str) -> Result<()> {
    if coords.is_empty() {
        return Err(Error::invalid(format!("{what} must have dimension >= 1")));
    }
    if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
        return Err(Error::invalid(format!(
            "{what} coordinate {i} is not finite ({})",
            coords[i]
        )));
    }
    Ok(())
}

/// A point of the (finite-dimensional) Hilbert space: iterates, averages,
/// minimizers.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords, "point")?;
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim.max(1)])
    }

    /// Wraps coordinates without the finiteness check. Callers guarantee the
    /// invariant (e.g. the solver checks divergence separately).
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        distance(&self.0, &other.0)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Point").field(&self.0).finish()
    }
}

/// A (stochastic) subgradient vector.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgradient(Vec<f64>);

impl Subgradient {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords, "subgradient")?;
        Ok(Subgradient(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Subgradient(vec![0.0; dim.max(1)])
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Subgradient(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Rescales in place so that the norm is at most `lambda`; returns whether
    /// the vector was actually shortened.
    pub fn clip_in_place(&mut self, lambda: f64) -> Result<bool> {
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!(
                "clip level must be positive, got {lambda}"
            )));
        }
        let n = self.norm();
        // n <= lambda also covers u = 0, so the ratio below never sees 0/0.
        if n <= lambda {
            return Ok(false);
        }
        let scale = lambda / n;
        self.0.iter_mut().for_each(|c| *c *= scale);
        Ok(true)
    }
}

impl fmt::Debug for Subgradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Subgradient").field(&self.0).finish()
    }
}

/// `CLIP(u, λ) = min{1, λ/‖u‖}·u`, with `CLIP(0, λ) = 0`.
pub fn clip(u: &Subgradient, lambda: f64) -> Result<Subgradient> {
    let mut out = u.clone();
    out.clip_in_place(lambda)?;
    Ok(out)
}

/// Coordinatewise mean of a mini-batch of samples.
pub fn batch_average(samples: &[Subgradient]) -> Result<Subgradient> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("batch_average needs at least one sample"))?;
    let d = first.dim();
    let mut acc = vec![0.0; d];
    for s in samples {
        if s.dim() != d {
            return Err(Error::invalid(format!(
                "batch samples have mismatched dimensions {} and {}",
                d,
                s.dim()
            )));
        }
        acc.iter_mut().zip(s.as_slice()).for_each(|(a, v)| *a += v);
    }
    let inv = 1.0 / samples.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(Subgradient(acc))
}

/// Feasible set with an explicit orthogonal projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    Identity,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Projection {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_finite(&center, "ball center")?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Projection::Ball { center, radius })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid("box bounds have different dimensions"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::invalid("box bounds must satisfy lo <= hi"));
        }
        Ok(Projection::Box { lo, hi })
    }

    pub(crate) fn apply_in_place(&self, x: &mut [f64]) {
        match self {
            Projection::Identity => {}
            Projection::Ball { center, radius } => {
                let dist = distance(x, center);
                if dist > *radius {
                    let s = radius / dist;
                    x.iter_mut()
                        .zip(center)
                        .for_each(|(xi, ci)| *xi = ci + s * (*xi - ci));
                }
            }
            Projection::Box { lo, hi } => {
                x.iter_mut()
                    .zip(lo.iter().zip(hi))
                    .for_each(|(xi, (l, h))| *xi = xi.clamp(*l, *h));
            }
        }
    }
}

/// Orthogonal projection onto the feasible set.
pub fn project(x: &Point, projection: &Projection) -> Point {
    let mut out = x.clone();
    projection.apply_in_place(out.as_mut_slice());
    out
}

/// Noise level bookkeeping for a mini-batch of size `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRegime {
    pub p: f64,
    pub sigma: f64,
    pub m: usize,
    pub sigma_m: f64,
}

impl NoiseRegime {
    /// Uses `σ_m^p = 2^{2-p} σ^p / m^{p-1}`, which equals the exact
    /// variance-averaging constant at `p = 2`.
    pub fn new(p: f64, sigma: f64, m: usize) -> Result<Self> {
        validate_p(p)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        if m == 0 {
            return Err(Error::invalid("batch size m must be >= 1"));
        }
        let c = 2f64.powf(2.0 - p).min(2.0);
        let sigma_m_p = c * sigma.powf(p) / (m as f64).powf(p - 1.0);
        Ok(NoiseRegime {
            p,
            sigma,
            m,
            sigma_m: sigma_m_p.powf(1.0 / p),
        })
    }

    /// Explicit batch-level bound, checked against the admissible range
    /// `σ^p/m^{p-1} <= σ_m^p <= 2σ^p/m^{p-1}`.
    pub fn with_sigma_m(p: f64, sigma: f64, m: usize, sigma_m: f64) -> Result<Self> {
        let base = NoiseRegime::new(p, sigma, m)?;
        let lower = sigma.powf(p) / (m as f64).powf(p - 1.0);
        let got = sigma_m.powf(p);
        let tol = 1e-12 * lower.max(1.0);
        if !(got >= lower - tol && got <= 2.0 * lower + tol) {
            return Err(Error::invalid(format!(
                "sigma_m^p = {got} outside [{lower}, {}]",
                2.0 * lower
            )));
        }
        Ok(NoiseRegime { sigma_m, ..base })
    }

    pub fn sigma_m_pow_p(&self) -> f64 {
        self.sigma_m.powf(self.p)
    }
}

pub(crate) fn validate_p(p: f64) -> Result<()> {
    if p > 1.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("moment order p must lie in (1, 2], got {p}")))
    }
}

pub type Objective = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A convex Lipschitz problem over a projectable feasible set.
#[derive(Clone)]
pub struct ProblemSpec {
    dim: usize,
    objective: Objective,
    exact_subgradient: bool,
    lipschitz: f64,
    f_star: Option<f64>,
    x_star: Option<Point>,
    projection: Projection,
}

impl ProblemSpec {
    pub fn new(dim: usize, lipschitz: f64, objective: Objective) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("problem dimension must be >= 1"));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::invalid(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        Ok(ProblemSpec {
            dim,
            objective,
            exact_subgradient: false,
            lipschitz,
            f_star: None,
            x_star: None,
            projection: Projection::Identity,
        })
    }

    pub fn with_projection(mut self, projection: Projection) -> Result<Self> {
        let pd = match &projection {
            Projection::Identity => self.dim,
            Projection::Ball { center, .. } => center.len(),
            Projection::Box { lo, .. } => lo.len(),
        };
        if pd != self.dim {
            return Err(Error::invalid(format!(
                "projection has dimension {pd}, problem has {}",
                self.dim
            )));
        }
        self.projection = projection;
        Ok(self)
    }

    pub fn with_exact_subgradient(mut self, exact: bool) -> Self {
        self.exact_subgradient = exact;
        self
    }

    pub fn with_optimal_value(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    /// Registers a minimizer; `f(x_*)` must agree with a registered `f_*`.
    pub fn with_minimizer(mut self, x_star: Point) -> Result<Self> {
        if x_star.dim() != self.dim {
            return Err(Error::invalid("minimizer has the wrong dimension"));
        }
        let fx = self.value(&x_star);
        match self.f_star {
            Some(fs) if (fx - fs).abs() > 1e-12 => {
                return Err(Error::invalid(format!(
                    "f(x_*) = {fx} disagrees with f_* = {fs}"
                )))
            }
            None => self.f_star = Some(fx),
            _ => {}
        }
        self.x_star = Some(x_star);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.objective)(x.as_slice())
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn has_exact_subgradient(&self) -> bool {
        self.exact_subgradient
    }

    pub fn optimal_value(&self) -> Option<f64> {
        self.f_star
    }

    pub fn minimizer(&self) -> Option<&Point> {
        self.x_star.as_ref()
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn project(&self, x: &Point) -> Point {
        project(x, &self.projection)
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("exact_subgradient", &self.exact_subgradient)
            .field("f_star", &self.f_star)
            .field("x_star", &self.x_star)
            .field("projection", &self.projection)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sg(v: &[f64]) -> Subgradient {
        Subgradient::new(v.to_vec()).unwrap()
    }

    #[test]
    fn clip_scales_long_vectors_to_lambda() {
        let u = sg(&[3.0, 4.0]);
        let c = clip(&u, 2.0).unwrap();
        assert!((c.norm() - 2.0).abs() < 1e-15);
        assert!((c.as_slice()[0] - 1.2).abs() < 1e-15);
        assert!((c.as_slice()[1] - 1.6).abs() < 1e-15);
    }

    #[test]
    fn clip_keeps_short_vectors_and_zero() {
        let u = sg(&[0.6, 0.8]);
        assert_eq!(clip(&u, 2.0).unwrap(), u);
        let z = Subgradient::zeros(3);
        assert_eq!(clip(&z, 0.5).unwrap(), z);
    }

    #[test]
    fn clip_rejects_nonpositive_level() {
        let u = sg(&[1.0]);
        assert!(matches!(clip(&u, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(clip(&u, -1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(clip(&u, f64::NAN), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn projections_match_closed_forms() {
        let x = Point::new(vec![3.0, -4.0]).unwrap();
        assert_eq!(project(&x, &Projection::Identity), x);
        let ball = Projection::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = project(&x, &ball);
        assert!((p.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((p.as_slice()[1] + 0.8).abs() < 1e-15);
        let bx = Projection::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let x = Point::new(vec![2.0, -1.0]).unwrap();
        assert_eq!(project(&x, &bx).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn batch_average_examples() {
        let avg = batch_average(&[sg(&[2.0, 0.0]), sg(&[0.0, 2.0])]).unwrap();
        assert_eq!(avg.as_slice(), &[1.0, 1.0]);
        let avg = batch_average(&[sg(&[3.0, 1.0])]).unwrap();
        assert_eq!(avg.as_slice(), &[3.0, 1.0]);
        let avg = batch_average(&[sg(&[1.0, 1.0]), sg(&[-1.0, -1.0])]).unwrap();
        assert_eq!(avg.as_slice(), &[0.0, 0.0]);
        assert!(batch_average(&[]).is_err());
        assert!(batch_average(&[sg(&[1.0]), sg(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn nonfinite_coordinates_are_rejected() {
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
        assert!(Subgradient::new(vec![f64::INFINITY]).is_err());
        assert!(Point::new(vec![]).is_err());
    }

    #[test]
    fn noise_regime_interpolates_to_exact_constant_at_p2() {
        let r = NoiseRegime::new(2.0, 1.0, 4).unwrap();
        assert!((r.sigma_m - 0.5).abs() < 1e-15);
        let r = NoiseRegime::new(1.5, 2.0, 3).unwrap();
        let lower = 2f64.powf(1.5) / 3f64.powf(0.5);
        assert!(r.sigma_m_pow_p() >= lower - 1e-12);
        assert!(r.sigma_m_pow_p() <= 2.0 * lower + 1e-12);
        assert!(NoiseRegime::with_sigma_m(1.5, 1.0, 1, 3.0).is_err());
        assert!(NoiseRegime::new(1.0, 1.0, 1).is_err());
        assert!(NoiseRegime::new(1.5, 1.0, 0).is_err());
    }

    #[test]
    fn minimizer_must_match_optimal_value() {
        let f: Objective = Arc::new(|x| x.iter().map(|v| v.abs()).sum());
        let spec = ProblemSpec::new(2, 2f64.sqrt(), f.clone())
            .unwrap()
            .with_optimal_value(0.0);
        assert!(spec.clone().with_minimizer(Point::zeros(2)).is_ok());
        assert!(spec
            .with_minimizer(Point::new(vec![1.0, 0.0]).unwrap())
            .is_err());
        assert!(ProblemSpec::new(2, 0.0, f).is_err());
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Point {
        Point::new((0..d).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()).unwrap()
    }

    #[test]
    fn projections_are_idempotent_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 4;
        let descriptors = [
            Projection::Identity,
            Projection::ball(vec![0.5, -0.5, 0.0, 1.0], 1.3).unwrap(),
            Projection::boxed(vec![-1.0, 0.0, -2.0, 0.5], vec![1.0, 0.5, 2.0, 0.5]).unwrap(),
        ];
        for proj in &descriptors {
            for _ in 0..1000 {
                let x = random_point(&mut rng, d, 5.0);
                let y = random_point(&mut rng, d, 5.0);
                let px = project(&x, proj);
                let py = project(&y, proj);
                let ppx = project(&px, proj);
                assert!(px.distance(&ppx) <= 1e-12, "{proj:?} not idempotent");
                assert!(px.distance(&py) <= x.distance(&y) + 1e-12, "{proj:?} expands");
            }
        }
    }

    proptest! {
        #[test]
        fn clip_norm_is_bounded(v in prop::collection::vec(-1e6f64..1e6, 1..12), lam in 1e-6f64..1e6) {
            let u = Subgradient::new(v).unwrap();
            let c = clip(&u, lam).unwrap();
            prop_assert!(c.norm() <= lam * (1.0 + 1e-12));
            if u.norm() <= lam {
                prop_assert_eq!(&c, &u);
            }
            // parallel: c = s·u with s in (0, 1]
            let s = if u.norm() > 0.0 { c.norm() / u.norm() } else { 1.0 };
            for (ci, ui) in c.as_slice().iter().zip(u.as_slice()) {
                prop_assert!((ci - s * ui).abs() <= 1e-9 * (1.0 + ui.abs()));
            }
        }

        #[test]
        fn clip_is_positively_homogeneous(v in prop::collection::vec(-1e3f64..1e3, 1..8), lam in 1e-3f64..1e3, c in 1e-3f64..1e3) {
            let u = Subgradient::new(v.clone()).unwrap();
            let cu = Subgradient::new(v.iter().map(|x| c * x).collect()).unwrap();
            let lhs = clip(&cu, c * lam).unwrap();
            let rhs = clip(&u, lam).unwrap();
            for (l, r) in lhs.as_slice().iter().zip(rhs.as_slice()) {
                prop_assert!((l - c * r).abs() <= 1e-9 * (1.0 + (c * r).abs()));
            }
        }
    }
}
