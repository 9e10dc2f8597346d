//! Upper bounds on the average age.
//!
//! All of these are moment arithmetic; the only Monte Carlo input is the pair
//! `(E[K], E[K²])` for the general dropping bound when no closed form exists.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, EstimatorOptions, KMoments};
use crate::distributions::{DistributionSpec, GridSpec, MrlVerdict};
use crate::error::{AoiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Dropping, arbitrary laws, from the moments of `K`.
    CorollaryOneDropping,
    /// Dropping with exponential service.
    Gm11,
    /// Dropping with exponential interarrivals and service.
    Mm11,
    /// Exact M/M/1/1 dropping age, reported alongside its bound.
    Mm11Exact,
    /// Age of the M/G/1/1 system with the same mean interarrival time.
    Mg11Ordering,
    /// Preemption in service, arbitrary laws.
    CorollaryTwoPreemption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Applicability {
    Unconditional,
    /// Upper bound; interarrivals verified DMRL and service verified NBUE.
    #[serde(rename = "requires_dmrl_nbue")]
    RequiresDmrlAndNbue,
    /// Interarrivals verified IMRL (service NBUE): expected to be a lower bound.
    ReversedUnderImrl,
    /// Neither condition could be verified on the MRL grid.
    Unverified,
}

impl Applicability {
    pub fn as_str(self) -> &'static str {
        match self {
            Applicability::Unconditional => "unconditional",
            Applicability::RequiresDmrlAndNbue => "requires_dmrl_nbue",
            Applicability::ReversedUnderImrl => "reversed_under_imrl",
            Applicability::Unverified => "unverified",
        }
    }
}

impl fmt::Display for Applicability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    /// Nonzero only when Monte Carlo inputs are involved.
    pub ci_half_width: f64,
    pub kind: BoundKind,
    pub applicability: Applicability,
    pub inputs: BTreeMap<String, f64>,
}

fn report(
    value: f64,
    ci_half_width: f64,
    kind: BoundKind,
    applicability: Applicability,
    inputs: &[(&str, f64)],
) -> BoundReport {
    BoundReport {
        value,
        ci_half_width,
        kind,
        applicability,
        inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

fn positive_mean(y: &DistributionSpec) -> Result<f64> {
    let m = y.mean();
    if m > 0.0 {
        Ok(m)
    } else {
        Err(AoiError::InvalidParameter(
            "interarrival law must have a positive mean".into(),
        ))
    }
}

/// `E[Y²]/2E[Y] + E[Y](E[K²]/2E[K] - 1/2) + E[S]`.
pub fn ub_dropping_general(
    y: &DistributionSpec,
    s: &DistributionSpec,
    k: &KMoments,
) -> Result<BoundReport> {
    let ey = positive_mean(y)?;
    if !(k.mean.value >= 1.0 && k.second_moment.value >= k.mean.value) {
        return Err(AoiError::InvalidParameter(format!(
            "inconsistent K moments ({}, {})",
            k.mean.value, k.second_moment.value
        )));
    }
    let value = y.second_moment() / (2.0 * ey) + ey * (0.5 * k.ratio.value - 0.5) + s.mean();
    Ok(report(
        value,
        0.5 * ey * k.ratio.ci_half_width,
        BoundKind::CorollaryOneDropping,
        Applicability::Unconditional,
        &[
            ("mean_y", ey),
            ("second_moment_y", y.second_moment()),
            ("mean_s", s.mean()),
            ("mean_k", k.mean.value),
            ("second_moment_k", k.second_moment.value),
        ],
    ))
}

/// Exponential service with rate `mu`: `K` is geometric with
/// `p = 1 - E[e^{-μY}]`.
pub fn ub_dropping_gm(y: &DistributionSpec, mu: f64) -> Result<BoundReport> {
    let ey = positive_mean(y)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(AoiError::InvalidParameter(format!(
            "service rate must be > 0, got {mu}"
        )));
    }
    let transform = y.laplace(mu)?;
    let p = 1.0 - transform;
    let value = y.second_moment() / (2.0 * ey) + ey * (1.0 / p - 1.0) + 1.0 / mu;
    Ok(report(
        value,
        0.0,
        BoundKind::Gm11,
        Applicability::Unconditional,
        &[
            ("mean_y", ey),
            ("second_moment_y", y.second_moment()),
            ("service_rate", mu),
            ("laplace_y_at_mu", transform),
        ],
    ))
}

/// Exact M/M/1/1 dropping age and its bound `1/λ + 2/μ`.
pub fn mm11(lambda: f64, mu: f64) -> Result<(BoundReport, BoundReport)> {
    for (name, v) in [("lambda", lambda), ("mu", mu)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(AoiError::InvalidParameter(format!(
                "{name} must be > 0, got {v}"
            )));
        }
    }
    let inputs = [("lambda", lambda), ("mu", mu)];
    let bound = 1.0 / lambda + 2.0 / mu;
    Ok((
        report(
            bound - 1.0 / (lambda + mu),
            0.0,
            BoundKind::Mm11Exact,
            Applicability::Unconditional,
            &inputs,
        ),
        report(
            bound,
            0.0,
            BoundKind::Mm11,
            Applicability::Unconditional,
            &inputs,
        ),
    ))
}

/// Age of the M/G/1/1 dropping system whose exponential interarrivals have
/// mean `mean_y`:
/// `(E[Yᵉ²] + 2E[Yᵉ]E[S] + E[S²]) / 2(E[Yᵉ] + E[S]) + E[S]`.
///
/// Only the mean of the original interarrival law matters; pair the result
/// with [`ordering_applicability`] to label it.
pub fn mg11_ordering_bound(mean_y: f64, s: &DistributionSpec) -> Result<BoundReport> {
    if !(mean_y > 0.0 && mean_y.is_finite()) {
        return Err(AoiError::InvalidParameter(format!(
            "mean interarrival must be > 0, got {mean_y}"
        )));
    }
    let es = s.mean();
    let ye2 = 2.0 * mean_y * mean_y;
    let value = (ye2 + 2.0 * mean_y * es + s.second_moment()) / (2.0 * (mean_y + es)) + es;
    Ok(report(
        value,
        0.0,
        BoundKind::Mg11Ordering,
        Applicability::RequiresDmrlAndNbue,
        &[
            ("mean_y", mean_y),
            ("mean_s", es),
            ("second_moment_s", s.second_moment()),
        ],
    ))
}

/// Labels the M/G/1/1 comparison from the MRL classifier.
pub fn ordering_applicability(
    y: &DistributionSpec,
    s: &DistributionSpec,
    grid: &GridSpec,
    tol: f64,
) -> Result<Applicability> {
    let verdict = y.classify_mrl(grid, tol)?.verdict;
    if !s.check_nbue(grid, tol)? {
        return Ok(Applicability::Unverified);
    }
    Ok(match verdict {
        MrlVerdict::Dmrl | MrlVerdict::ConstantMrl => Applicability::RequiresDmrlAndNbue,
        MrlVerdict::Imrl => Applicability::ReversedUnderImrl,
        MrlVerdict::Inconclusive => Applicability::Unverified,
    })
}

/// `E[Y²]/2E[Y] + E[Y](1 - p)/p + E[S̃]` with `p = Pr(Y > S)`.
pub fn ub_preemption(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<BoundReport> {
    let ey = positive_mean(y)?;
    let p = analytic::success_probability(y, s, opts)?;
    if p.value <= 0.0 {
        return Err(AoiError::ZeroSuccessProbability);
    }
    let s_tilde = analytic::conditional_mean_service(y, s, opts)?;
    let value = y.second_moment() / (2.0 * ey) + ey * (1.0 - p.value) / p.value + s_tilde.value;
    let ci = ey * p.ci_half_width / (p.value * p.value) + s_tilde.ci_half_width;
    Ok(report(
        value,
        ci,
        BoundKind::CorollaryTwoPreemption,
        Applicability::Unconditional,
        &[
            ("mean_y", ey),
            ("second_moment_y", y.second_moment()),
            ("success_probability", p.value),
            ("conditional_mean_service", s_tilde.value),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DEFAULT_MRL_TOL;

    fn det(v: f64) -> DistributionSpec {
        DistributionSpec::deterministic(v).unwrap()
    }

    fn exp(r: f64) -> DistributionSpec {
        DistributionSpec::exponential(r).unwrap()
    }

    #[test]
    fn corollary_one_examples() {
        let b = ub_dropping_general(&exp(1.0), &exp(1.0), &KMoments::exact(2.0, 6.0)).unwrap();
        assert!((b.value - 3.0).abs() < 1e-12);
        let b = ub_dropping_general(&det(2.0), &det(1.0), &KMoments::exact(1.0, 1.0)).unwrap();
        assert!((b.value - 2.0).abs() < 1e-12);
        let b = ub_dropping_general(&det(1.0), &det(1.5), &KMoments::exact(2.0, 4.0)).unwrap();
        assert!((b.value - 2.5).abs() < 1e-12);
        assert_eq!(b.applicability, Applicability::Unconditional);
    }

    #[test]
    fn gm11_examples() {
        let b = ub_dropping_gm(&exp(1.0), 1.0).unwrap();
        assert!((b.value - 3.0).abs() < 1e-12);
        let b = ub_dropping_gm(&det(2.0), 1.0).unwrap();
        let expected = 1.0 + 2.0 * (1.0 / (1.0 - (-2.0f64).exp()) - 1.0) + 1.0;
        assert!((b.value - expected).abs() < 1e-12);
        assert!((b.value - 2.3130).abs() < 1e-4);
        assert!(ub_dropping_gm(&det(0.0), 1.0).is_err());
        assert!(ub_dropping_gm(&exp(1.0), 0.0).is_err());
    }

    #[test]
    fn mm11_examples() {
        let (exact, bound) = mm11(1.0, 1.0).unwrap();
        assert_eq!((exact.value, bound.value), (2.5, 3.0));
        assert_eq!(exact.kind, BoundKind::Mm11Exact);
        let (exact, _) = mm11(100.0, 1.0).unwrap();
        assert!((exact.value - (0.01 + 2.0 - 1.0 / 101.0)).abs() < 1e-12);
        assert!((exact.value - 2.0001).abs() < 1e-4);
        let (exact, _) = mm11(2.0, 1.0).unwrap();
        assert!((exact.value - (0.5 + 2.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert!(mm11(0.0, 1.0).is_err());
    }

    #[test]
    fn mg11_examples() {
        assert!((mg11_ordering_bound(1.0, &exp(1.0)).unwrap().value - 2.5).abs() < 1e-12);
        assert!((mg11_ordering_bound(1.0, &det(1.0)).unwrap().value - 2.25).abs() < 1e-12);
        assert!((mg11_ordering_bound(2.0, &det(0.0)).unwrap().value - 2.0).abs() < 1e-12);
        assert!(mg11_ordering_bound(0.0, &det(1.0)).is_err());
    }

    #[test]
    fn corollary_two_examples() {
        let opts = EstimatorOptions::default();
        let b = ub_preemption(&exp(1.0), &exp(1.0), &opts).unwrap();
        assert!((b.value - 2.5).abs() < 1e-12);
        let b = ub_preemption(&det(2.0), &det(1.0), &opts).unwrap();
        assert!((b.value - 2.0).abs() < 1e-12);
        assert!(matches!(
            ub_preemption(&det(1.0), &det(2.0), &opts),
            Err(AoiError::ZeroSuccessProbability)
        ));
    }

    #[test]
    fn specialisation_chain() {
        for y in [
            det(0.7),
            DistributionSpec::uniform(0.0, 2.0).unwrap(),
            DistributionSpec::shifted_exponential(2.0, 0.4).unwrap(),
            DistributionSpec::rayleigh(1.1).unwrap(),
        ] {
            for mu in [0.3, 1.0, 2.5] {
                let p = 1.0 - y.laplace(mu).unwrap();
                let general = ub_dropping_general(&y, &exp(mu), &KMoments::geometric(p)).unwrap();
                let gm = ub_dropping_gm(&y, mu).unwrap();
                assert!((general.value - gm.value).abs() < 1e-12, "{y} mu={mu}");
            }
        }
        for (l, m) in [(0.5, 1.0), (1.0, 1.0), (2.0, 0.5)] {
            let gm = ub_dropping_gm(&exp(l), m).unwrap();
            let (_, bound) = mm11(l, m).unwrap();
            assert!((gm.value - bound.value).abs() < 1e-12);
        }
    }

    #[test]
    fn applicability_labels() {
        let g = GridSpec::default();
        let se = DistributionSpec::shifted_exponential(1.0, 0.5).unwrap();
        assert_eq!(
            ordering_applicability(&se, &se, &g, DEFAULT_MRL_TOL).unwrap(),
            Applicability::RequiresDmrlAndNbue
        );
        let h = DistributionSpec::hyperexponential(vec![0.5, 0.5], vec![0.5, 2.0]).unwrap();
        assert_eq!(
            ordering_applicability(&h, &se, &g, DEFAULT_MRL_TOL).unwrap(),
            Applicability::ReversedUnderImrl
        );
        assert_eq!(
            ordering_applicability(&se, &h, &g, DEFAULT_MRL_TOL).unwrap(),
            Applicability::Unverified
        );
    }

    #[test]
    fn bounds_dominate_exact_on_small_grid() {
        let opts = EstimatorOptions {
            mc_samples: 100_000,
            ..EstimatorOptions::default()
        };
        let y = DistributionSpec::uniform(0.0, 2.0).unwrap();
        let s = DistributionSpec::rayleigh(0.7).unwrap();
        let exact = analytic::exact_age_preemption(&y, &s, &opts).unwrap();
        let bound = ub_preemption(&y, &s, &opts).unwrap();
        assert!(bound.value >= exact.value - 3.0 * exact.ci_half_width);

        let exact = analytic::exact_age_dropping(&y, &s, &opts).unwrap();
        let k = analytic::moments_of_k_dropping(&y, &s, &opts).unwrap();
        let bound = ub_dropping_general(&y, &s, &k).unwrap();
        assert!(bound.value >= exact.value - 3.0 * (exact.ci_half_width + bound.ci_half_width));
    }
}
