//! Simulation against the exact estimators for non-exponential laws, and
//! shape checks on the preset sweeps.

use aoi_core::analytic::{self, EstimatorOptions};
use aoi_core::experiments::{self, presets, Estimator, SweepResult};
use aoi_core::rng::derive_seed;
use aoi_core::sim::{self, Discipline, SimConfig};
use aoi_core::DistributionSpec;
use rayon::prelude::*;

fn law(json: &str) -> DistributionSpec {
    DistributionSpec::from_json(json).unwrap()
}

fn systems() -> Vec<(DistributionSpec, DistributionSpec)> {
    vec![
        (
            law(r#"{"kind":"uniform","lower":0.2,"upper":1.8}"#),
            law(r#"{"kind":"rayleigh","scale":0.5}"#),
        ),
        (
            law(r#"{"kind":"erlang","shape":3,"rate":2}"#),
            law(r#"{"kind":"shifted_exponential","rate":2,"shift":0.2}"#),
        ),
        (
            law(r#"{"kind":"hyperexponential","weights":[0.3,0.7],"rates":[0.5,3]}"#),
            law(r#"{"kind":"uniform","lower":0,"upper":1}"#),
        ),
        (
            law(r#"{"kind":"deterministic","value":1}"#),
            law(r#"{"kind":"exponential","rate":1.5}"#),
        ),
        (
            law(r#"{"kind":"rayleigh","scale":1}"#),
            law(r#"{"kind":"deterministic","value":0.4}"#),
        ),
    ]
}

#[test]
fn simulation_agrees_with_exact_for_general_laws() {
    let cases: Vec<(usize, Discipline)> = (0..systems().len())
        .flat_map(|i| {
            [
                (i, Discipline::Dropping),
                (i, Discipline::PreemptionInService),
            ]
        })
        .collect();
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|&(i, d)| {
            let (y, s) = &systems()[i];
            let seed = derive_seed(900, i as u64 * 2 + (d == Discipline::Dropping) as u64);
            let run = sim::run_simulation(&SimConfig::new(y.clone(), s.clone(), d, 100_000, seed))
                .unwrap();
            let exact =
                analytic::exact_age(d, y, s, &EstimatorOptions::default().with_seed(seed)).unwrap();
            let tol = 3.0 * run.estimate.ci_half_width.hypot(exact.ci_half_width);
            let gap = (run.estimate.value - exact.value).abs();
            (gap > tol).then(|| {
                format!(
                    "{y} / {s} {}: sim {} vs exact {} (tol {tol})",
                    d.as_str(),
                    run.estimate.value,
                    exact.value
                )
            })
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn monte_carlo_preemption_matches_quadrature() {
    for (i, (y, s)) in systems().iter().enumerate() {
        let quad = analytic::exact_age_preemption(y, s, &EstimatorOptions::default()).unwrap();
        let opts = EstimatorOptions {
            force_monte_carlo: true,
            ..EstimatorOptions::default()
        }
        .with_seed(derive_seed(901, i as u64));
        let mc = analytic::exact_age_preemption(y, s, &opts).unwrap();
        assert!(
            (mc.value - quad.value).abs() <= 3.0 * mc.ci_half_width + 1e-9,
            "{y} / {s}: mc {} ± {} vs quadrature {}",
            mc.value,
            mc.ci_half_width,
            quad.value
        );
    }
}

fn exact_series(result: &SweepResult) -> Vec<(f64, f64)> {
    result
        .series(Estimator::Exact)
        .iter()
        .map(|r| (r.value.unwrap(), r.ci.unwrap()))
        .collect()
}

fn trimmed(mut spec: experiments::SweepSpec) -> experiments::SweepSpec {
    spec.estimators.retain(|e| *e != Estimator::Simulate);
    spec
}

#[test]
fn dropping_age_falls_with_rate_and_rises_with_shift() {
    let by_rate = experiments::run_sweep(&trimmed(presets::dropping_rate())).unwrap();
    for w in exact_series(&by_rate).windows(2) {
        assert!(w[1].0 <= w[0].0 + 3.0 * w[0].1.hypot(w[1].1), "{w:?}");
    }
    let by_shift = experiments::run_sweep(&trimmed(presets::dropping_shift())).unwrap();
    for w in exact_series(&by_shift).windows(2) {
        assert!(w[1].0 >= w[0].0 - 3.0 * w[0].1.hypot(w[1].1), "{w:?}");
    }
    for result in [&by_rate, &by_shift] {
        for (e, c) in result
            .series(Estimator::Exact)
            .iter()
            .zip(result.series(Estimator::Corollary1))
        {
            let tol = 3.0 * e.ci.unwrap().hypot(c.ci.unwrap());
            assert!(e.value.unwrap() <= c.value.unwrap() + tol, "{e:?} vs {c:?}");
        }
    }
}

#[test]
fn ordering_bound_is_a_lower_bound_for_imrl_interarrivals() {
    let result = experiments::run_sweep(&trimmed(presets::dropping_imrl())).unwrap();
    for (e, m) in result
        .series(Estimator::Exact)
        .iter()
        .zip(result.series(Estimator::Mg11))
    {
        assert_eq!(m.applicability.to_string(), "reversed_under_imrl");
        assert!(m.value.unwrap() <= e.value.unwrap() + 3.0 * e.ci.unwrap());
    }
}

#[test]
fn every_row_uses_a_declared_estimator() {
    for name in presets::NAMES {
        let mut spec = presets::by_name(name).unwrap();
        spec.interarrival.grid.truncate(2);
        spec.sim_cycles = 2_000;
        spec.options.mc_samples = 20_000;
        let result = experiments::run_sweep(&spec).unwrap();
        assert!(result
            .rows
            .iter()
            .all(|r| spec.estimators.contains(&r.estimator)));
        assert_eq!(result.rows.len(), 2 * spec.estimators.len());
    }
}
