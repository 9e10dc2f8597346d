//! Exact average age for both disciplines.
//!
//! Dropping: with `A_k = Y_1 + … + Y_{k-1}` the partial sums of the
//! interarrival walk,
//!
//! ```text
//! Δ = E[Y²] / 2E[Y] + Σ_k E[A_k F̄_S(A_k)] / E[K] + E[S],
//! E[K]  = Σ_k Pr(A_k < S),
//! E[K²] = Σ_k (2k - 1) Pr(A_k < S).
//! ```
//!
//! The sums are estimated by walking sample paths of `A_k` and weighting each
//! step with `F̄_S(A_k)` analytically, which removes the service-time noise
//! entirely (a Rao–Blackwellised estimator).
//!
//! Preemption in service:
//!
//! ```text
//! Δ = E[Y²] / 2E[Y] + E[Y F̄_S(Y)] / Pr(Y > S) + E[S | S < Y].
//! ```
//!
//! The middle denominator is the success probability `p = 1 - E[F̄_S(Y)]`.
//! The variant with `E[F̄_S(Y)]` in the denominator is available through
//! [`PreemptionDenominator::FailureProbability`] for comparison only; it does
//! not reproduce the M/M/1/1 preemptive age `1/λ + 1/μ` when `λ ≠ μ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{AoiError, Result};
use crate::rng::{substream, SimRng};
use crate::sim::{AgeEstimate, Method, Z_95};

/// Terms allowed per random-walk path before giving up.
pub const MAX_WALK_TERMS: usize = 10_000;
const CHUNK: u64 = 8_192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreemptionDenominator {
    /// `Pr(Y > S)`, consistent with the geometric structure of `K`.
    #[default]
    SuccessProbability,
    /// `E[F̄_S(Y)] = Pr(Y < S)`.
    FailureProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub mc_samples: u64,
    pub k_truncation_epsilon: f64,
    pub quadrature_rel_tol: f64,
    pub seed: u64,
    /// Skip the exponential/exponential closed forms.
    pub force_generic: bool,
    /// Use paired Monte Carlo draws instead of quadrature for preemption terms.
    pub force_monte_carlo: bool,
    pub denominator: PreemptionDenominator,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            mc_samples: 1_000_000,
            k_truncation_epsilon: 1e-8,
            quadrature_rel_tol: 1e-9,
            seed: 1,
            force_generic: false,
            force_monte_carlo: false,
            denominator: PreemptionDenominator::SuccessProbability,
        }
    }
}

impl EstimatorOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < 10_000 {
            return Err(AoiError::InvalidConfig(format!(
                "mc_samples must be >= 10^4, got {}",
                self.mc_samples
            )));
        }
        for (name, v) in [
            ("k_truncation_epsilon", self.k_truncation_epsilon),
            ("quadrature_rel_tol", self.quadrature_rel_tol),
        ] {
            if !(v > 0.0 && v < 1e-2) {
                return Err(AoiError::InvalidConfig(format!(
                    "{name} must lie in (0, 1e-2), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A scalar estimate with a 95% half-width (statistical for Monte Carlo,
/// the accumulated error bound for quadrature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub value: f64,
    pub ci_half_width: f64,
}

impl Scalar {
    pub fn exact(value: f64) -> Self {
        Scalar {
            value,
            ci_half_width: 0.0,
        }
    }
}

/// Running first and second (cross) moments of a small vector of observables.
#[derive(Debug, Clone, PartialEq)]
struct MomentSums {
    n: u64,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

impl MomentSums {
    fn new(dim: usize) -> Self {
        MomentSums {
            n: 0,
            sum: vec![0.0; dim],
            cross: vec![0.0; dim * dim],
        }
    }

    fn dim(&self) -> usize {
        self.sum.len()
    }

    fn add(&mut self, x: &[f64]) {
        let d = self.dim();
        self.n += 1;
        for i in 0..d {
            self.sum[i] += x[i];
            for j in 0..d {
                self.cross[i * d + j] += x[i] * x[j];
            }
        }
    }

    fn merge(&mut self, other: &MomentSums) {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        let n = self.n as f64;
        let d = self.dim();
        (self.cross[i * d + j] - n * self.mean(i) * self.mean(j)) / (n - 1.0)
    }

    /// Standard error of `f(means)` by the delta method, given the gradient.
    fn delta_std_error(&self, gradient: &[f64]) -> f64 {
        let d = self.dim();
        let mut var = 0.0;
        for i in 0..d {
            for j in 0..d {
                var += gradient[i] * gradient[j] * self.cov(i, j);
            }
        }
        (var.max(0.0) / self.n as f64).sqrt()
    }

    fn mean_half_width(&self, i: usize) -> f64 {
        let g: Vec<f64> = (0..self.dim())
            .map(|j| f64::from(u8::from(i == j)))
            .collect();
        Z_95 * self.delta_std_error(&g)
    }
}

/// Splits `n` replicates into fixed-size chunks, each driven by its own
/// substream, and merges the per-chunk sums in chunk order.
fn replicate<F>(n: u64, seed: u64, dim: usize, body: F) -> Result<MomentSums>
where
    F: Fn(&mut SimRng, &mut MomentSums) -> Result<()> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<MomentSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c + 1);
            let mut sums = MomentSums::new(dim);
            let count = CHUNK.min(n - c * CHUNK);
            for _ in 0..count {
                body(&mut rng, &mut sums)?;
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let mut total = MomentSums::new(dim);
    for p in &partials {
        total.merge(p);
    }
    Ok(total)
}

fn require_positive_mean(y: &DistributionSpec) -> Result<()> {
    if y.mean() > 0.0 {
        Ok(())
    } else {
        Err(AoiError::InvalidParameter(
            "interarrival law must have a positive mean".into(),
        ))
    }
}

fn both_exponential(y: &DistributionSpec, s: &DistributionSpec) -> Option<(f64, f64)> {
    Some((y.exponential_rate()?, s.exponential_rate()?))
}

/// Monte Carlo estimates of the random-walk functionals behind the dropping
/// formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkEstimate {
    /// `Σ_k E[A_k F̄_S(A_k)]`.
    pub crossing_sum: Scalar,
    pub k_mean: Scalar,
    pub k_second_moment: Scalar,
    /// `crossing_sum / E[K]` with a delta-method half-width.
    pub crossing_ratio: Scalar,
    /// `E[K²] / E[K]` with a delta-method half-width.
    pub k_ratio: Scalar,
    pub replicates: u64,
}

/// Walks `A_2, A_3, …` along one sample path of the interarrival law and
/// returns `(Σ A_k F̄, 1 + Σ F̄, 1 + Σ (2k-1) F̄)`.
fn walk_path(
    y: &DistributionSpec,
    s: &DistributionSpec,
    eps: f64,
    rng: &mut SimRng,
) -> Result<[f64; 3]> {
    let mut a = 0.0;
    let mut crossing = 0.0;
    let mut k_sum = 0.0;
    let mut k2_sum = 0.0;
    for k in 2..=MAX_WALK_TERMS + 1 {
        a += y.sample(rng);
        let tail = s.ccdf(a);
        if tail == 0.0 {
            return Ok([crossing, 1.0 + k_sum, 1.0 + k2_sum]);
        }
        let weight = (2 * k - 1) as f64;
        crossing += a * tail;
        k_sum += tail;
        k2_sum += weight * tail;
        if tail <= eps * k_sum && a * tail <= eps * crossing && weight * tail <= eps * k2_sum {
            return Ok([crossing, 1.0 + k_sum, 1.0 + k2_sum]);
        }
    }
    Err(AoiError::TruncationNotReached {
        terms: MAX_WALK_TERMS,
    })
}

pub fn dropping_walk(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<WalkEstimate> {
    opts.validate()?;
    require_positive_mean(y)?;
    let eps = opts.k_truncation_epsilon;
    let sums = replicate(opts.mc_samples, opts.seed, 3, |rng, acc| {
        acc.add(&walk_path(y, s, eps, rng)?);
        Ok(())
    })?;
    let (x, k, k2) = (sums.mean(0), sums.mean(1), sums.mean(2));
    let ratio = x / k;
    let k_ratio = k2 / k;
    Ok(WalkEstimate {
        crossing_sum: Scalar {
            value: x,
            ci_half_width: sums.mean_half_width(0),
        },
        k_mean: Scalar {
            value: k,
            ci_half_width: sums.mean_half_width(1),
        },
        k_second_moment: Scalar {
            value: k2,
            ci_half_width: sums.mean_half_width(2),
        },
        crossing_ratio: Scalar {
            value: ratio,
            ci_half_width: Z_95 * sums.delta_std_error(&[1.0 / k, -ratio / k, 0.0]),
        },
        k_ratio: Scalar {
            value: k_ratio,
            ci_half_width: Z_95 * sums.delta_std_error(&[0.0, -k_ratio / k, 1.0 / k]),
        },
        replicates: sums.n,
    })
}

pub fn exact_age_dropping(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<AgeEstimate> {
    opts.validate()?;
    require_positive_mean(y)?;
    let renewal = y.second_moment() / (2.0 * y.mean());
    if let (Some((lambda, mu)), false) = (both_exponential(y, s), opts.force_generic) {
        return Ok(AgeEstimate {
            value: 1.0 / lambda + 2.0 / mu - 1.0 / (lambda + mu),
            ci_half_width: 0.0,
            cycles_used: 0,
            method: Method::Analytic,
        });
    }
    let walk = dropping_walk(y, s, opts)?;
    Ok(AgeEstimate {
        value: renewal + walk.crossing_ratio.value + s.mean(),
        ci_half_width: walk.crossing_ratio.ci_half_width,
        cycles_used: walk.replicates,
        method: Method::Analytic,
    })
}

/// First and second moments of the number of arrivals per dropping cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMoments {
    pub mean: Scalar,
    pub second_moment: Scalar,
    /// `E[K²] / E[K]`, the quantity the first dropping bound needs.
    pub ratio: Scalar,
}

impl KMoments {
    /// Moments of a geometric law on `{1, 2, …}` with success probability `p`.
    pub fn geometric(p: f64) -> Self {
        let mean = 1.0 / p;
        let second = (2.0 - p) / (p * p);
        KMoments {
            mean: Scalar::exact(mean),
            second_moment: Scalar::exact(second),
            ratio: Scalar::exact(second / mean),
        }
    }

    pub fn exact(mean: f64, second_moment: f64) -> Self {
        KMoments {
            mean: Scalar::exact(mean),
            second_moment: Scalar::exact(second_moment),
            ratio: Scalar::exact(second_moment / mean),
        }
    }
}

pub fn moments_of_k_dropping(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<KMoments> {
    opts.validate()?;
    require_positive_mean(y)?;
    if let (Some((lambda, mu)), false) = (both_exponential(y, s), opts.force_generic) {
        return Ok(KMoments::geometric(mu / (lambda + mu)));
    }
    let walk = dropping_walk(y, s, opts)?;
    Ok(KMoments {
        mean: walk.k_mean,
        second_moment: walk.k_second_moment,
        ratio: walk.k_ratio,
    })
}

/// Monte Carlo estimate of the pmf of `K` under dropping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPmf {
    /// `pmf[i]` estimates `Pr(K = i + 1)`.
    pub pmf: Vec<f64>,
    pub ci_half_width: Vec<f64>,
    /// `Pr(K > k_max)`.
    pub tail_mass: f64,
    pub replicates: u64,
}

impl KPmf {
    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

/// Conditional on a walk path, `Pr(K = k) = F̄_S(A_k) - F̄_S(A_{k+1})` with
/// `F̄_S(A_1) := 1`; averaging over paths gives the pmf.
pub fn k_pmf(
    y: &DistributionSpec,
    s: &DistributionSpec,
    k_max: usize,
    opts: &EstimatorOptions,
) -> Result<KPmf> {
    opts.validate()?;
    require_positive_mean(y)?;
    if k_max < 1 {
        return Err(AoiError::InvalidParameter("k_max must be >= 1".into()));
    }
    let dim = k_max + 1;
    let chunks = opts.mc_samples.div_ceil(CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(opts.seed, c + 1);
            let count = CHUNK.min(opts.mc_samples - c * CHUNK);
            let mut sum = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            let mut probs = vec![0.0; dim];
            for _ in 0..count {
                let mut a = 0.0;
                let mut prev = 1.0;
                probs.iter_mut().for_each(|p| *p = 0.0);
                for slot in probs.iter_mut().take(k_max) {
                    a += y.sample(&mut rng);
                    let tail = if prev == 0.0 { 0.0 } else { s.ccdf(a) };
                    *slot = prev - tail;
                    prev = tail;
                }
                probs[k_max] = prev;
                for i in 0..dim {
                    sum[i] += probs[i];
                    sq[i] += probs[i] * probs[i];
                }
            }
            (sum, sq, count)
        })
        .collect();
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut n = 0u64;
    for (s_, q_, c) in &partials {
        n += c;
        for i in 0..dim {
            sum[i] += s_[i];
            sq[i] += q_[i];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|v| v / nf).collect();
    let half: Vec<f64> = (0..dim)
        .map(|i| {
            let var = ((sq[i] - nf * mean[i] * mean[i]) / (nf - 1.0)).max(0.0);
            Z_95 * (var / nf).sqrt()
        })
        .collect();
    Ok(KPmf {
        pmf: mean[..k_max].to_vec(),
        ci_half_width: half[..k_max].to_vec(),
        tail_mass: mean[k_max],
        replicates: n,
    })
}

/// Quadrature evaluation of the preemption ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreemptionTerms {
    /// `E[Y²] / 2E[Y]`.
    pub renewal: f64,
    /// `E[Y F̄_S(Y)] = E[Y; S > Y]`.
    pub crossing: Scalar,
    /// `p = Pr(S <= Y) = 1 - E[F̄_S(Y)]` (ties are successes).
    pub success_probability: Scalar,
    /// `E[S; S <= Y]`, so that `E[S̃] = conditional_service_mass / p`.
    pub conditional_service_mass: Scalar,
}

impl PreemptionTerms {
    pub fn conditional_mean_service(&self) -> f64 {
        self.conditional_service_mass.value / self.success_probability.value
    }
}

fn preemption_terms_quadrature(
    y: &DistributionSpec,
    s: &DistributionSpec,
    tol: f64,
) -> Result<PreemptionTerms> {
    let s_breaks = s.breakpoints();
    let crossing = y.expect(|v| v * s.ccdf(v), &s_breaks, tol)?;
    let failure = y.expect(|v| s.ccdf(v), &s_breaks, tol)?;
    let service = s.expect(|v| v * y.survival_inclusive(v), &y.breakpoints(), tol)?;
    Ok(PreemptionTerms {
        renewal: y.second_moment() / (2.0 * y.mean()),
        crossing: Scalar {
            value: crossing.value,
            ci_half_width: crossing.abs_error,
        },
        success_probability: Scalar {
            value: (1.0 - failure.value).clamp(0.0, 1.0),
            ci_half_width: failure.abs_error,
        },
        conditional_service_mass: Scalar {
            value: service.value,
            ci_half_width: service.abs_error,
        },
    })
}

pub fn preemption_terms(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<PreemptionTerms> {
    opts.validate()?;
    require_positive_mean(y)?;
    preemption_terms_quadrature(y, s, opts.quadrature_rel_tol)
}

/// Paired draws `(Y, S)`; observables `Y·1{S>Y}`, `1{S<=Y}`, `S·1{S<=Y}`.
fn paired_draws(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<MomentSums> {
    replicate(opts.mc_samples, opts.seed, 3, |rng, acc| {
        let yv = y.sample(rng);
        let sv = s.sample(rng);
        if sv <= yv {
            acc.add(&[0.0, 1.0, sv]);
        } else {
            acc.add(&[yv, 0.0, 0.0]);
        }
        Ok(())
    })
}

/// `p = Pr(Y > S)`, ties counted as successes to match the simulator.
pub fn success_probability(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<Scalar> {
    opts.validate()?;
    if let (Some((lambda, mu)), false) = (both_exponential(y, s), opts.force_generic) {
        return Ok(Scalar::exact(mu / (lambda + mu)));
    }
    if opts.force_monte_carlo {
        let sums = paired_draws(y, s, opts)?;
        return Ok(Scalar {
            value: sums.mean(1),
            ci_half_width: sums.mean_half_width(1),
        });
    }
    let failure = y.expect(|v| s.ccdf(v), &s.breakpoints(), opts.quadrature_rel_tol)?;
    Ok(Scalar {
        value: (1.0 - failure.value).clamp(0.0, 1.0),
        ci_half_width: failure.abs_error,
    })
}

/// `E[S̃] = E[S | S < Y]`.
pub fn conditional_mean_service(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<Scalar> {
    opts.validate()?;
    if let (Some((lambda, mu)), false) = (both_exponential(y, s), opts.force_generic) {
        return Ok(Scalar::exact(1.0 / (lambda + mu)));
    }
    if opts.force_monte_carlo {
        let sums = paired_draws(y, s, opts)?;
        let p = sums.mean(1);
        if p == 0.0 {
            return Err(AoiError::ZeroSuccessProbability);
        }
        let value = sums.mean(2) / p;
        return Ok(Scalar {
            value,
            ci_half_width: Z_95 * sums.delta_std_error(&[0.0, -value / p, 1.0 / p]),
        });
    }
    let p = success_probability(y, s, opts)?;
    if p.value <= 0.0 {
        return Err(AoiError::ZeroSuccessProbability);
    }
    let mass = s.expect(
        |v| v * y.survival_inclusive(v),
        &y.breakpoints(),
        opts.quadrature_rel_tol,
    )?;
    let value = mass.value / p.value;
    Ok(Scalar {
        value,
        ci_half_width: (mass.abs_error + value * p.ci_half_width) / p.value,
    })
}

pub fn exact_age_preemption(
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<AgeEstimate> {
    opts.validate()?;
    require_positive_mean(y)?;
    let analytic = |value: f64, ci_half_width: f64, cycles_used: u64| AgeEstimate {
        value,
        ci_half_width,
        cycles_used,
        method: Method::Analytic,
    };
    if let (Some((lambda, mu)), false) = (both_exponential(y, s), opts.force_generic) {
        let value = match opts.denominator {
            PreemptionDenominator::SuccessProbability => 1.0 / lambda + 1.0 / mu,
            PreemptionDenominator::FailureProbability => 1.0 / lambda + 2.0 / (lambda + mu),
        };
        return Ok(analytic(value, 0.0, 0));
    }
    let renewal = y.second_moment() / (2.0 * y.mean());

    if opts.force_monte_carlo {
        let sums = paired_draws(y, s, opts)?;
        let (a, p, c) = (sums.mean(0), sums.mean(1), sums.mean(2));
        if p == 0.0 {
            return Err(AoiError::ZeroSuccessProbability);
        }
        let (middle, grad) = match opts.denominator {
            PreemptionDenominator::SuccessProbability => {
                (a / p, [1.0 / p, -(a + c) / (p * p), 1.0 / p])
            }
            PreemptionDenominator::FailureProbability => {
                let q = 1.0 - p;
                let middle = if a == 0.0 { 0.0 } else { a / q };
                let d_a = if q > 0.0 { 1.0 / q } else { 0.0 };
                (
                    middle,
                    [
                        d_a,
                        middle / q.max(f64::MIN_POSITIVE) - c / (p * p),
                        1.0 / p,
                    ],
                )
            }
        };
        let value = renewal + middle + c / p;
        let half = Z_95 * sums.delta_std_error(&grad);
        return Ok(analytic(value, half, sums.n));
    }

    let terms = preemption_terms_quadrature(y, s, opts.quadrature_rel_tol)?;
    let p = terms.success_probability.value;
    if p <= 0.0 {
        return Err(AoiError::ZeroSuccessProbability);
    }
    let denom = match opts.denominator {
        PreemptionDenominator::SuccessProbability => p,
        PreemptionDenominator::FailureProbability => 1.0 - p,
    };
    let middle = if terms.crossing.value == 0.0 {
        0.0
    } else {
        terms.crossing.value / denom
    };
    let err = (terms.crossing.ci_half_width
        + middle * terms.success_probability.ci_half_width
        + terms.conditional_service_mass.ci_half_width)
        / denom.max(p);
    Ok(analytic(
        renewal + middle + terms.conditional_mean_service(),
        err,
        0,
    ))
}

/// Dispatches on the discipline.
pub fn exact_age(
    discipline: crate::sim::Discipline,
    y: &DistributionSpec,
    s: &DistributionSpec,
    opts: &EstimatorOptions,
) -> Result<AgeEstimate> {
    match discipline {
        crate::sim::Discipline::Dropping => exact_age_dropping(y, s, opts),
        crate::sim::Discipline::PreemptionInService => exact_age_preemption(y, s, opts),
    }
}
