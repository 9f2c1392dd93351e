//! Empirical means against the expectation envelopes on a problem where
//! every constant is known: `f(x) = |x|` in one dimension, `‖x_1 - x_*‖ = 1`,
//! Pareto noise calibrated to `E|ξ|^p = 1`, so `σ = 1`, `L = 1` and `m = 1`.

use csgm_core::harness::{run_experiment, ExperimentConfig};
use csgm_core::theory::{envelope_avg, envelope_last};
use csgm_core::{NoiseRegime, ScheduleMode};

fn curve(schedule: ScheduleMode, p: f64) -> (ExperimentConfig, csgm_core::harness::AggregateCurve) {
    let cfg = ExperimentConfig {
        d: 1,
        p,
        schedule,
        gamma: 0.5,
        lambda: 2.0,
        horizon: 20_000,
        stride: 500,
        runs: 400,
        seed: 31,
        ..ExperimentConfig::default()
    };
    let c = run_experiment(&cfg).unwrap().curve;
    (cfg, c)
}

#[test]
fn anytime_means_stay_below_both_envelopes() {
    for p in [1.5, 2.0] {
        let (cfg, c) = curve(ScheduleMode::Anytime, p);
        let sigma_m = NoiseRegime::new(p, 1.0, 1).unwrap().sigma_m;
        let params = cfg.schedule_params();
        for (i, &k) in c.k.iter().enumerate() {
            let ea = envelope_avg(&params, sigma_m, k, 1.0).unwrap();
            let el = envelope_last(&params, sigma_m, k, 1.0).unwrap();
            assert!(c.mean_f_avg[i] <= ea, "p={p} k={k}: avg {} > {ea}", c.mean_f_avg[i]);
            assert!(c.mean_f_last[i] <= el, "p={p} k={k}: last {} > {el}", c.mean_f_last[i]);
        }
    }
}

#[test]
fn finite_horizon_end_points_stay_below_envelopes() {
    let p = 1.5;
    let sigma_m = NoiseRegime::new(p, 1.0, 1).unwrap().sigma_m;
    let (cfg, c) = curve(ScheduleMode::FiniteHorizon, p);
    let k = cfg.horizon;
    assert!(c.final_avg() <= envelope_avg(&cfg.schedule_params(), sigma_m, k, 1.0).unwrap());
    let (cfg, c) = curve(ScheduleMode::EpochDoubling, p);
    assert!(c.final_last() <= envelope_last(&cfg.schedule_params(), sigma_m, k, 1.0).unwrap());
}
