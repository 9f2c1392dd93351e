//! Kernelized C-SsGM for supervised learning with a Lipschitz loss.
//!
//! The iterate is never formed. After `k` steps it is
//! `x_{k+1} = Σ_{i<=k} Σ_j a_ij φ(Z_j^i)` with `x_1 = 0`, and everything the
//! method needs (losses at new points, the batch-direction norm, predictions)
//! is a kernel sum against the stored inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelFn {
    /// `K(z, z') = <z, z'>`.
    Linear,
    /// `K(z, z') = exp(-‖z - z'‖² / (2 h²))`.
    Gaussian { bandwidth: f64 },
}

impl KernelFn {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        Ok(KernelFn::Gaussian { bandwidth })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelFn::Linear => crate::types::dot(a, b),
            KernelFn::Gaussian { bandwidth } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

impl FromStr for KernelFn {
    type Err = Error;

    /// `linear` or `gaussian:<bandwidth>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(KernelFn::Linear),
            Some(("gaussian", h)) => {
                let h: f64 = h
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad gaussian bandwidth '{h}'")))?;
                KernelFn::gaussian(h)
            }
            _ => Err(Error::invalid(format!(
                "unknown kernel '{s}' (expected linear or gaussian:<h>)"
            ))),
        }
    }
}

impl fmt::Display for KernelFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFn::Linear => f.write_str("linear"),
            KernelFn::Gaussian { bandwidth } => write!(f, "gaussian:{bandwidth}"),
        }
    }
}

/// Convex 1-Lipschitz losses `ℓ(t, y)` in the prediction `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossFn {
    /// `max(0, 1 - y t)`.
    Hinge,
    /// `|t - y|`.
    Absolute,
}

impl LossFn {
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    pub fn value(&self, t: f64, y: f64) -> f64 {
        match self {
            LossFn::Hinge => (1.0 - y * t).max(0.0),
            LossFn::Absolute => (t - y).abs(),
        }
    }

    /// A subderivative in `t`; the kink takes the boundary value 0.
    pub fn derivative(&self, t: f64, y: f64) -> f64 {
        match self {
            LossFn::Hinge => {
                if y * t < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossFn::Absolute => {
                if t > y {
                    1.0
                } else if t < y {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for LossFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(LossFn::Hinge),
            "absolute" | "abs" => Ok(LossFn::Absolute),
            _ => Err(Error::invalid(format!(
                "unknown loss '{s}' (expected hinge or absolute)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub z: Vec<f64>,
    pub y: f64,
}

impl Example {
    pub fn new(z: Vec<f64>, y: f64) -> Self {
        Example { z, y }
    }
}

/// `𝓛 · mean ‖φ(Z)‖` over a batch, the plug-in Lipschitz constant.
pub fn kernel_lipschitz(kernel: &KernelFn, loss: &LossFn, batch: &[Example]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("need at least one example to estimate L"));
    }
    let mean = batch
        .iter()
        .map(|e| kernel.eval(&e.z, &e.z).max(0.0).sqrt())
        .sum::<f64>()
        / batch.len() as f64;
    Ok(loss.lipschitz() * mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predictor {
    Last,
    Average,
}

/// Handle to a query registered for streaming predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QueryId(usize);

#[derive(Clone, Debug)]
struct Query {
    z: Vec<f64>,
    last: f64,
    avg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelStepReport {
    /// `‖ū_k‖`.
    pub direction_norm: f64,
    /// `ρ_k = 1/max(‖ū_k‖/λ_k, 1)`.
    pub rho: f64,
    pub clipped: bool,
}

#[derive(Clone, Debug)]
pub struct KernelModel {
    kernel: KernelFn,
    loss: LossFn,
    m: usize,
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
    coeffs: Vec<f64>,
    queries: Vec<Query>,
}

impl KernelModel {
    pub fn new(kernel: KernelFn, loss: LossFn, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("batch size m must be >= 1"));
        }
        Ok(KernelModel {
            kernel,
            loss,
            m,
            inputs: Vec::new(),
            labels: Vec::new(),
            coeffs: Vec::new(),
            queries: Vec::new(),
        })
    }

    pub fn kernel(&self) -> &KernelFn {
        &self.kernel
    }

    pub fn loss(&self) -> &LossFn {
        &self.loss
    }

    pub fn batch_size(&self) -> usize {
        self.m
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.coeffs.len() / self.m
    }

    /// `a_ij` in step-major order.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn stored_inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn stored_labels(&self) -> &[f64] {
        &self.labels
    }

    /// One clipped step on a fresh batch.
    pub fn step(&mut self, batch: &[Example], gamma: f64, lambda: f64) -> Result<KernelStepReport> {
        if batch.len() != self.m {
            return Err(Error::invalid(format!(
                "batch has {} examples, model expects {}",
                batch.len(),
                self.m
            )));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("step size must be >= 0, got {gamma}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid(format!("clip level must be > 0, got {lambda}")));
        }
        if let Some(e) = batch.iter().find(|e| !e.y.is_finite() || e.z.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid(format!("non-finite example {:?}", e)));
        }

        let alpha: Vec<f64> = batch
            .iter()
            .map(|e| self.loss.derivative(self.predict_last(&e.z), e.y))
            .collect();

        let mut quad = 0.0;
        for (j, ej) in batch.iter().enumerate() {
            for (l, el) in batch.iter().enumerate() {
                quad += alpha[j] * alpha[l] * self.kernel.eval(&ej.z, &el.z);
            }
        }
        let mut norm2 = quad / (self.m * self.m) as f64;
        if norm2 < -1e-10 {
            return Err(Error::KernelPsd { value: norm2 });
        }
        norm2 = norm2.max(0.0);
        let direction_norm = norm2.sqrt();
        let clipped = direction_norm > lambda;
        let rho = 1.0 / (direction_norm / lambda).max(1.0);
        let w = gamma * rho / self.m as f64;

        for q in &mut self.queries {
            let delta: f64 = batch
                .iter()
                .zip(&alpha)
                .map(|(e, a)| a * self.kernel.eval(&e.z, &q.z))
                .sum();
            q.last -= w * delta;
        }
        let k = self.steps() as f64;
        for q in &mut self.queries {
            q.avg = (k + 1.0) / (k + 2.0) * q.avg + q.last / (k + 2.0);
        }

        for (e, a) in batch.iter().zip(&alpha) {
            self.inputs.push(e.z.clone());
            self.labels.push(e.y);
            self.coeffs.push(-w * a);
        }
        Ok(KernelStepReport {
            direction_norm,
            rho,
            clipped,
        })
    }

    /// `<x_{k+1}, φ(z)>` by the full expansion sum.
    pub fn predict_last(&self, z: &[f64]) -> f64 {
        self.inputs
            .iter()
            .zip(&self.coeffs)
            .map(|(zi, a)| a * self.kernel.eval(zi, z))
            .sum()
    }

    /// `<x̄_{k+1}, φ(z)>` from the coefficients: step `i` contributes to the
    /// iterates `x_{i+1}, …, x_{k+1}`, i.e. with weight `(k+1-i)/(k+1)`.
    pub fn predict_average_direct(&self, z: &[f64]) -> f64 {
        let k = self.steps();
        let mut acc = 0.0;
        for i in 0..k {
            let s: f64 = (0..self.m)
                .map(|j| {
                    let idx = i * self.m + j;
                    self.coeffs[idx] * self.kernel.eval(&self.inputs[idx], z)
                })
                .sum();
            acc += (k - i) as f64 * s;
        }
        acc / (k + 1) as f64
    }

    /// Registers `z` for streaming predictions. Registering on an untrained
    /// model is free; later registration pays one direct evaluation.
    pub fn register(&mut self, z: Vec<f64>) -> QueryId {
        let last = self.predict_last(&z);
        let avg = self.predict_average_direct(&z);
        self.queries.push(Query { z, last, avg });
        QueryId(self.queries.len() - 1)
    }

    fn query(&self, id: QueryId) -> Result<&Query> {
        self.queries
            .get(id.0)
            .ok_or_else(|| Error::invalid(format!("unknown query id {}", id.0)))
    }

    /// Streaming value of `<x_{k+1}, φ(z)>`.
    pub fn predict_last_registered(&self, id: QueryId) -> Result<f64> {
        Ok(self.query(id)?.last)
    }

    /// Streaming value of `<x̄_{k+1}, φ(z)>`.
    pub fn predict_average_registered(&self, id: QueryId) -> Result<f64> {
        Ok(self.query(id)?.avg)
    }

    /// Average-iterate prediction for a registered point, looked up by value.
    pub fn predict_average(&self, z: &[f64]) -> Result<f64> {
        self.queries
            .iter()
            .find(|q| q.z == z)
            .map(|q| q.avg)
            .ok_or_else(|| Error::MustRegister(z.to_vec()))
    }

    pub fn predict(&self, z: &[f64], which: Predictor) -> f64 {
        match which {
            Predictor::Last => self.predict_last(z),
            Predictor::Average => self.predict_average_direct(z),
        }
    }

    /// Mean loss over `test`.
    pub fn risk(&self, test: &[Example], which: Predictor) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::invalid("risk needs a nonempty test set"));
        }
        Ok(test
            .iter()
            .map(|e| self.loss.value(self.predict(&e.z, which), e.y))
            .sum::<f64>()
            / test.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_examples(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Example> {
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
                let y = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                Example::new(z, y)
            })
            .collect()
    }

    #[test]
    fn kernel_symmetry_and_psd() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for kernel in [KernelFn::Linear, KernelFn::gaussian(0.7).unwrap()] {
            for _ in 0..20 {
                let pts = random_examples(&mut r, 20, 3);
                let coef: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
                let mut q = 0.0;
                for i in 0..20 {
                    for j in 0..20 {
                        let kij = kernel.eval(&pts[i].z, &pts[j].z);
                        assert_eq!(kij, kernel.eval(&pts[j].z, &pts[i].z));
                        q += coef[i] * coef[j] * kij;
                    }
                }
                assert!(q >= -1e-8);
            }
        }
    }

    #[test]
    fn loss_derivatives_are_bounded_and_losses_convex() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for loss in [LossFn::Hinge, LossFn::Absolute] {
            for _ in 0..10_000 {
                let y = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
                assert!(loss.derivative(a, y).abs() <= loss.lipschitz());
                let mid = loss.value(0.5 * (a + b), y);
                assert!(mid <= 0.5 * (loss.value(a, y) + loss.value(b, y)) + 1e-12);
                assert!(loss.value(b, y) >= loss.value(a, y) + loss.derivative(a, y) * (b - a) - 1e-12);
            }
        }
        assert_eq!(LossFn::Hinge.derivative(1.0, 1.0), 0.0);
        assert_eq!(LossFn::Hinge.derivative(0.5, -1.0), 1.0);
        assert_eq!(LossFn::Absolute.derivative(2.0, 2.0), 0.0);
    }

    #[test]
    fn first_step_uses_zero_predictions() {
        let mut model = KernelModel::new(KernelFn::Linear, LossFn::Hinge, 2).unwrap();
        let batch = vec![Example::new(vec![1.0, 0.0], 1.0), Example::new(vec![0.0, 2.0], -1.0)];
        model.step(&batch, 1.0, 100.0).unwrap();
        // α = (ℓ'(0, 1), ℓ'(0, -1)) = (-1, 1); a = -(γ/m)α.
        assert_eq!(model.coefficients(), &[0.5, -0.5]);
        assert_eq!(model.steps(), 1);
    }

    #[test]
    fn single_sample_norm_is_alpha_squared_times_diagonal() {
        let mut model = KernelModel::new(KernelFn::Linear, LossFn::Absolute, 1).unwrap();
        let rep = model.step(&[Example::new(vec![3.0, 4.0], 1.0)], 0.1, 2.0).unwrap();
        assert!((rep.direction_norm - 5.0).abs() < 1e-15);
        assert!(rep.clipped);
        assert!((rep.rho - 0.4).abs() < 1e-15);
        assert!((model.coefficients()[0] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn prediction_examples() {
        let model = KernelModel::new(KernelFn::Linear, LossFn::Hinge, 1).unwrap();
        assert_eq!(model.predict_last(&[1.0, 2.0]), 0.0);
        let mut model = model;
        // α = ℓ'(0, 1) = -1, γ = 0.5 gives a = 0.5; pick y = -1 for a = -0.5.
        model.step(&[Example::new(vec![1.0, 0.0], -1.0)], 0.5, 10.0).unwrap();
        assert_eq!(model.coefficients(), &[-0.5]);
        assert_eq!(model.predict_last(&[2.0, 0.0]), -1.0);
        assert_eq!(model.predict_average_direct(&[2.0, 0.0]), -0.5);
    }

    #[test]
    fn zero_step_size_keeps_model_at_zero() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut model = KernelModel::new(KernelFn::gaussian(1.0).unwrap(), LossFn::Hinge, 1).unwrap();
        let q = model.register(vec![0.1, 0.2]);
        for e in random_examples(&mut r, 50, 2) {
            model.step(&[e], 0.0, 1e12).unwrap();
        }
        assert_eq!(model.predict_average_registered(q).unwrap(), 0.0);
        assert_eq!(model.predict_last_registered(q).unwrap(), 0.0);
    }

    #[test]
    fn unregistered_average_query_is_refused() {
        let model = KernelModel::new(KernelFn::Linear, LossFn::Hinge, 1).unwrap();
        assert!(matches!(model.predict_average(&[1.0]), Err(Error::MustRegister(_))));
    }

    #[test]
    fn streaming_predictions_match_direct_sums() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for (kernel, m) in [(KernelFn::Linear, 1), (KernelFn::gaussian(0.8).unwrap(), 3)] {
            let mut model = KernelModel::new(kernel, LossFn::Hinge, m).unwrap();
            let queries = random_examples(&mut r, 5, 3);
            let ids: Vec<QueryId> = queries.iter().map(|q| model.register(q.z.clone())).collect();
            let mut history = vec![vec![0.0; queries.len()]];
            for k in 1..=100u32 {
                let batch = random_examples(&mut r, m, 3);
                let frozen = model.coefficients().to_vec();
                model.step(&batch, 1.0 / (k as f64).sqrt(), 2.0).unwrap();
                assert_eq!(&model.coefficients()[..frozen.len()], &frozen[..]);
                assert_eq!(model.coefficients().len(), k as usize * m);
                history.push(queries.iter().map(|q| model.predict_last(&q.z)).collect());
                for (i, (q, id)) in queries.iter().zip(&ids).enumerate() {
                    let full = model.predict_last(&q.z);
                    assert!((model.predict_last_registered(*id).unwrap() - full).abs() < 1e-10);
                    let mean = history.iter().map(|h| h[i]).sum::<f64>() / history.len() as f64;
                    assert!((model.predict_average_registered(*id).unwrap() - mean).abs() < 1e-10);
                    assert!((model.predict_average_direct(&q.z) - mean).abs() < 1e-10);
                    assert_eq!(model.predict_average(&q.z).unwrap(), model.predict_average_registered(*id).unwrap());
                }
            }
        }
    }

    #[test]
    fn late_registration_starts_from_direct_values() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let mut model = KernelModel::new(KernelFn::gaussian(1.0).unwrap(), LossFn::Absolute, 2).unwrap();
        for _ in 0..10 {
            model.step(&random_examples(&mut r, 2, 2), 0.3, 1.0).unwrap();
        }
        let id = model.register(vec![0.5, -0.5]);
        for _ in 0..10 {
            model.step(&random_examples(&mut r, 2, 2), 0.3, 1.0).unwrap();
        }
        let direct = model.predict_average_direct(&[0.5, -0.5]);
        assert!((model.predict_average_registered(id).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn empty_model_hinge_risk_is_one() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let model = KernelModel::new(KernelFn::Linear, LossFn::Hinge, 1).unwrap();
        let test = random_examples(&mut r, 30, 4);
        assert_eq!(model.risk(&test, Predictor::Last).unwrap(), 1.0);
        assert_eq!(model.risk(&test, Predictor::Average).unwrap(), 1.0);
        assert!(model.risk(&[], Predictor::Last).is_err());
    }

    #[test]
    fn clipped_update_norm_is_bounded() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let mut model = KernelModel::new(KernelFn::gaussian(0.5).unwrap(), LossFn::Hinge, 4).unwrap();
        for _ in 0..50 {
            let batch = random_examples(&mut r, 4, 3);
            let (gamma, lambda) = (0.7, 0.3);
            let rep = model.step(&batch, gamma, lambda).unwrap();
            let n = model.steps();
            let a = &model.coefficients()[(n - 1) * 4..];
            let z = &model.stored_inputs()[(n - 1) * 4..];
            let mut q = 0.0;
            for j in 0..4 {
                for l in 0..4 {
                    q += a[j] * a[l] * model.kernel().eval(&z[j], &z[l]);
                }
            }
            assert!(q.max(0.0).sqrt() <= gamma * lambda * (1.0 + 1e-12));
            assert!(rep.rho * rep.direction_norm <= lambda * (1.0 + 1e-12));
        }
    }

    #[test]
    fn parsing() {
        assert_eq!("linear".parse::<KernelFn>().unwrap(), KernelFn::Linear);
        assert_eq!("gaussian:0.5".parse::<KernelFn>().unwrap(), KernelFn::Gaussian { bandwidth: 0.5 });
        assert!("gaussian:-1".parse::<KernelFn>().is_err());
        assert!("poly".parse::<KernelFn>().is_err());
        assert_eq!("hinge".parse::<LossFn>().unwrap(), LossFn::Hinge);
        assert!("square".parse::<LossFn>().is_err());
    }

    #[test]
    fn lipschitz_plug_in() {
        let batch = vec![Example::new(vec![3.0, 4.0], 1.0), Example::new(vec![0.0, 1.0], 1.0)];
        assert_eq!(kernel_lipschitz(&KernelFn::Linear, &LossFn::Hinge, &batch).unwrap(), 3.0);
        let g = KernelFn::gaussian(1.0).unwrap();
        assert_eq!(kernel_lipschitz(&g, &LossFn::Absolute, &batch).unwrap(), 1.0);
    }
}
