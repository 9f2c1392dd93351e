//! The clipped stochastic subgradient iteration:
//! sample a batch, average it, clip, step, project, and fold the new iterate
//! into the running average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::types::{batch_average, Point, ProblemSpec, Subgradient};

/// Coordinates beyond this magnitude count as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Source of unbiased stochastic subgradients.
pub trait SubgradientOracle {
    /// Draws `m` independent samples at `x`.
    fn sample(&mut self, x: &Point, m: usize) -> Result<Vec<Subgradient>>;
}

impl<O: SubgradientOracle + ?Sized> SubgradientOracle for &mut O {
    fn sample(&mut self, x: &Point, m: usize) -> Result<Vec<Subgradient>> {
        (**self).sample(x, m)
    }
}

/// Per-iteration step size and (optional) clip level. `None` disables clipping.
pub trait StepPolicy {
    fn step_and_clip(&self, k: u64) -> Result<(f64, Option<f64>)>;

    /// Horizon the policy was tuned for, if any.
    fn horizon(&self) -> Option<u64> {
        None
    }
}

impl StepPolicy for Schedule {
    fn step_and_clip(&self, k: u64) -> Result<(f64, Option<f64>)> {
        let (g, l) = Schedule::step_and_clip(self, k)?;
        Ok((g, Some(l)))
    }

    fn horizon(&self) -> Option<u64> {
        if self.params().mode.needs_horizon() {
            self.params().horizon
        } else {
            None
        }
    }
}

/// Last iterate `x_k`, running average `x̄_k` and the iteration counter `k`.
#[derive(Clone, Debug)]
pub struct SolverState {
    k: u64,
    x: Point,
    x_bar: Point,
}

impl SolverState {
    /// Starts at `x1`, projected onto the feasible set if necessary.
    pub fn new(x1: Point, spec: &ProblemSpec) -> Result<Self> {
        if x1.dim() != spec.dim() {
            return Err(Error::invalid(format!(
                "initial point has dimension {}, problem has {}",
                x1.dim(),
                spec.dim()
            )));
        }
        let x = spec.project(&x1);
        Ok(SolverState {
            k: 1,
            x_bar: x.clone(),
            x,
        })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn x(&self) -> &Point {
        &self.x
    }

    pub fn x_bar(&self) -> &Point {
        &self.x_bar
    }
}

/// What happened during one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub gamma: f64,
    pub lambda: Option<f64>,
    /// `‖ū_k‖ > λ_k`.
    pub clipped: bool,
    /// `‖x_{k+1} - x_k‖`.
    pub step_norm: f64,
}

/// Advances `state` from `x_k` to `x_{k+1}`.
pub fn step<O, P>(
    state: &mut SolverState,
    oracle: &mut O,
    policy: &P,
    spec: &ProblemSpec,
    batch_size: usize,
) -> Result<StepInfo>
where
    O: SubgradientOracle + ?Sized,
    P: StepPolicy + ?Sized,
{
    let k = state.k;
    let (gamma, lambda) = policy.step_and_clip(k)?;
    let samples = oracle.sample(&state.x, batch_size)?;
    if samples.len() != batch_size {
        return Err(Error::invalid(format!(
            "oracle returned {} samples, expected {batch_size}",
            samples.len()
        )));
    }
    let mut direction = batch_average(&samples)?;
    if direction.dim() != state.x.dim() {
        return Err(Error::invalid("oracle sample has the wrong dimension"));
    }
    let clipped = match lambda {
        Some(l) => direction.clip_in_place(l)?,
        None => false,
    };

    let mut next = state.x.clone();
    next.as_mut_slice()
        .iter_mut()
        .zip(direction.as_slice())
        .for_each(|(xi, ui)| *xi -= gamma * ui);
    spec.projection().apply_in_place(next.as_mut_slice());

    if next
        .as_slice()
        .iter()
        .any(|c| !c.is_finite() || c.abs() > DIVERGENCE_BOUND)
    {
        return Err(Error::Diverged { iteration: k });
    }

    let step_norm = next.distance(&state.x);
    let w = 1.0 / (k + 1) as f64;
    state
        .x_bar
        .as_mut_slice()
        .iter_mut()
        .zip(next.as_slice())
        .for_each(|(a, xi)| *a += (xi - *a) * w);
    state.x = next;
    state.k = k + 1;
    Ok(StepInfo {
        gamma,
        lambda,
        clipped,
        step_norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub iterations: u64,
    /// Record every `stride`-th iteration (the last one is always recorded).
    pub stride: u64,
    pub batch_size: usize,
}

impl RunOptions {
    pub fn new(iterations: u64, stride: u64, batch_size: usize) -> Self {
        RunOptions {
            iterations,
            stride,
            batch_size,
        }
    }
}

/// State of iteration `k` (before its update) plus the parameters used by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    /// `f(x_k)`.
    pub f_last: f64,
    /// `f(x̄_k)`.
    pub f_avg: f64,
    /// `‖x_k - x_*‖` when the minimizer is known.
    pub dist: Option<f64>,
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub clipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub stride: u64,
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Fraction of recorded iterations whose batch average was clipped.
    pub fn clip_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.clipped).count() as f64 / self.rows.len() as f64
    }
}

/// Runs `iterations` updates from `x1` and records the trace.
///
/// Row `k` describes `x_k` and `x̄_k = (x_1 + … + x_k)/k`; for finite-horizon
/// policies the last row is therefore the horizon iterate `x_K`.
pub fn run<O, P>(
    x1: Point,
    oracle: &mut O,
    policy: &P,
    spec: &ProblemSpec,
    options: RunOptions,
) -> Result<RunTrace>
where
    O: SubgradientOracle + ?Sized,
    P: StepPolicy + ?Sized,
{
    let RunOptions {
        iterations,
        stride,
        batch_size,
    } = options;
    if iterations < 1 {
        return Err(Error::invalid("a run needs at least one iteration"));
    }
    if stride < 1 {
        return Err(Error::invalid("recording stride must be >= 1"));
    }
    if batch_size < 1 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    if let Some(h) = policy.horizon() {
        if h != iterations {
            return Err(Error::invalid(format!(
                "finite-horizon schedule tuned for {h} iterations, run asked for {iterations}"
            )));
        }
    }

    let mut state = SolverState::new(x1, spec)?;
    let capacity = (iterations / stride + 1).min(1 << 20) as usize;
    let mut rows = Vec::with_capacity(capacity);
    for k in 1..=iterations {
        let record = k % stride == 0 || k == iterations;
        let snapshot = record.then(|| {
            let f_last = spec.value(&state.x);
            let f_avg = spec.value(&state.x_bar);
            let dist = spec.minimizer().map(|xs| state.x.distance(xs));
            (f_last, f_avg, dist)
        });
        let info = step(&mut state, oracle, policy, spec, batch_size)?;
        if let Some((f_last, f_avg, dist)) = snapshot {
            rows.push(TraceRow {
                k,
                f_last,
                f_avg,
                dist,
                gamma: info.gamma,
                lambda: info.lambda,
                clipped: info.clipped,
            });
        }
    }
    Ok(RunTrace { stride, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{l1_problem, NoisyL1Oracle};
    use crate::schedule::{ScheduleMode, ScheduleParams};
    use crate::types::Projection;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    struct Constant(Vec<f64>);

    impl SubgradientOracle for Constant {
        fn sample(&mut self, _x: &Point, m: usize) -> Result<Vec<Subgradient>> {
            Ok(vec![Subgradient::new(self.0.clone())?; m])
        }
    }

    struct Fixed(f64, Option<f64>);

    impl StepPolicy for Fixed {
        fn step_and_clip(&self, _k: u64) -> Result<(f64, Option<f64>)> {
            Ok((self.0, self.1))
        }
    }

    fn flat_spec(d: usize) -> ProblemSpec {
        ProblemSpec::new(d, 1.0, Arc::new(|x: &[f64]| x.iter().sum())).unwrap()
    }

    #[test]
    fn unclipped_step_is_explicit_gradient_step() {
        let spec = flat_spec(2);
        let mut state = SolverState::new(Point::new(vec![1.0, 2.0]).unwrap(), &spec).unwrap();
        let mut oracle = Constant(vec![3.0, 4.0]);
        let info = step(&mut state, &mut oracle, &Fixed(0.1, Some(100.0)), &spec, 1).unwrap();
        assert!(!info.clipped);
        assert!((state.x().as_slice()[0] - 0.7).abs() < 1e-15);
        assert!((state.x().as_slice()[1] - 1.6).abs() < 1e-15);
        assert_eq!(state.k(), 2);
    }

    #[test]
    fn clipping_halves_the_direction() {
        let spec = flat_spec(2);
        let mut state = SolverState::new(Point::new(vec![1.0, 2.0]).unwrap(), &spec).unwrap();
        let mut oracle = Constant(vec![3.0, 4.0]);
        let info = step(&mut state, &mut oracle, &Fixed(0.1, Some(2.5)), &spec, 3).unwrap();
        assert!(info.clipped);
        assert!((state.x().as_slice()[0] - 0.85).abs() < 1e-15);
        assert!((state.x().as_slice()[1] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn average_of_two_iterates() {
        let spec = flat_spec(2);
        let mut state = SolverState::new(Point::zeros(2), &spec).unwrap();
        let mut oracle = Constant(vec![-10.0, -10.0]);
        step(&mut state, &mut oracle, &Fixed(0.1, None), &spec, 1).unwrap();
        assert_eq!(state.x().as_slice(), &[1.0, 1.0]);
        assert_eq!(state.x_bar().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn infeasible_start_is_projected_and_iterates_stay_feasible() {
        let proj = Projection::ball(vec![0.0, 0.0], 1.0).unwrap();
        let spec = flat_spec(2).with_projection(proj).unwrap();
        let mut state = SolverState::new(Point::new(vec![3.0, 4.0]).unwrap(), &spec).unwrap();
        assert!((state.x().norm() - 1.0).abs() < 1e-12);
        let mut oracle = Constant(vec![-5.0, 1.0]);
        for _ in 0..50 {
            step(&mut state, &mut oracle, &Fixed(0.3, Some(2.0)), &spec, 1).unwrap();
            let px = spec.project(state.x());
            assert!(px.distance(state.x()) <= 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported_with_iteration() {
        let spec = flat_spec(1);
        let x1 = Point::new(vec![0.0]).unwrap();
        let mut oracle = Constant(vec![1e300]);
        let err = run(x1, &mut oracle, &Fixed(1e10, None), &spec, RunOptions::new(5, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::Diverged { iteration: 1 }));
    }

    #[test]
    fn single_iteration_run_has_one_row() {
        let spec = flat_spec(1);
        let mut oracle = Constant(vec![1.0]);
        let trace = run(Point::zeros(1), &mut oracle, &Fixed(0.1, None), &spec, RunOptions::new(1, 10, 1)).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].k, 1);
    }

    #[test]
    fn rows_follow_stride_and_include_final() {
        let spec = flat_spec(1);
        let mut oracle = Constant(vec![1.0]);
        let trace = run(Point::zeros(1), &mut oracle, &Fixed(0.1, None), &spec, RunOptions::new(25, 10, 1)).unwrap();
        let ks: Vec<u64> = trace.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![10, 20, 25]);
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let spec = flat_spec(1);
        let sched = Schedule::new(ScheduleParams {
            mode: ScheduleMode::FiniteHorizon,
            gamma: 1.0,
            lambda: 1.0,
            epsilon: 0.01,
            p: 1.5,
            lipschitz: 1.0,
            horizon: Some(10),
        })
        .unwrap();
        let mut oracle = Constant(vec![1.0]);
        assert!(run(Point::zeros(1), &mut oracle, &sched, &spec, RunOptions::new(9, 1, 1)).is_err());
    }

    fn l1_setup(d: usize, seed: u64, noisy: bool) -> (ProblemSpec, NoisyL1Oracle<ChaCha8Rng>) {
        let spec = l1_problem(d).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let oracle = if noisy {
            NoisyL1Oracle::pareto(d, 1.5, rng).unwrap()
        } else {
            NoisyL1Oracle::noiseless(d, rng)
        };
        (spec, oracle)
    }

    #[test]
    fn noiseless_l1_descends_monotonically_until_near_zero() {
        let (spec, mut oracle) = l1_setup(2, 0, false);
        let sched = Schedule::new(ScheduleParams {
            mode: ScheduleMode::Anytime,
            gamma: 0.05,
            lambda: 0.01,
            epsilon: 0.01,
            p: 2.0,
            lipschitz: 2f64.sqrt(),
            horizon: None,
        })
        .unwrap();
        let x1 = Point::new(vec![1.0, 0.0]).unwrap();
        let trace = run(x1, &mut oracle, &sched, &spec, RunOptions::new(2000, 1, 1)).unwrap();
        let mut prev = f64::INFINITY;
        for row in &trace.rows {
            if row.f_last <= row.gamma {
                break;
            }
            assert!(row.f_last < prev, "k = {}", row.k);
            prev = row.f_last;
        }
        assert!(trace.last().unwrap().f_last < 0.01);
    }

    #[test]
    fn runs_are_deterministic_and_average_matches_direct_mean() {
        let d = 5;
        let sched = Schedule::new(ScheduleParams {
            mode: ScheduleMode::EpochDoubling,
            gamma: 0.5,
            lambda: 0.1,
            epsilon: 0.01,
            p: 1.5,
            lipschitz: (d as f64).sqrt(),
            horizon: Some(1000),
        })
        .unwrap();
        let x1 = Point::new(vec![0.3, -0.2, 0.5, 0.1, -0.7]).unwrap();

        let (spec, mut a) = l1_setup(d, 42, true);
        let (_, mut b) = l1_setup(d, 42, true);
        let ta = run(x1.clone(), &mut a, &sched, &spec, RunOptions::new(1000, 7, 1)).unwrap();
        let tb = run(x1.clone(), &mut b, &sched, &spec, RunOptions::new(1000, 7, 1)).unwrap();
        assert_eq!(ta, tb);

        let (spec, mut oracle) = l1_setup(d, 3, true);
        let mut state = SolverState::new(x1, &spec).unwrap();
        let mut iterates = vec![state.x().clone()];
        for _ in 0..999 {
            let (g, l) = sched.step_and_clip(state.k()).unwrap();
            let prev = state.x().clone();
            let info = step(&mut state, &mut oracle, &sched, &spec, 1).unwrap();
            assert!(prev.distance(state.x()) <= g * l * (1.0 + 1e-12));
            assert_eq!(info.gamma, g);
            iterates.push(state.x().clone());
            let k = iterates.len();
            for i in 0..d {
                let mean = iterates.iter().map(|p| p.as_slice()[i]).sum::<f64>() / k as f64;
                assert!((mean - state.x_bar().as_slice()[i]).abs() < 1e-10);
            }
        }
    }
}
