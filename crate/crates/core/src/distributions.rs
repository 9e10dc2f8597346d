//! Interarrival and service-time laws.
//!
//! A [`DistributionSpec`] is a validated parametric law on `[0, ∞)`. Besides
//! sampling it exposes the analytic descriptors the age formulas need:
//! moments, complementary cdf, Laplace transform, expectations of arbitrary
//! functions, and the mean residual life together with a grid-based
//! DMRL / IMRL / NBUE classifier.

use std::fmt;

use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::quadrature::{self, Quad};

/// Relative tolerance used for Laplace transforms computed by quadrature.
pub const LAPLACE_REL_TOL: f64 = 1e-9;
/// Relative tolerance used for the tail integral behind the mean residual life.
pub const MRL_REL_TOL: f64 = 1e-8;
/// Default absolute tolerance on MRL differences when classifying.
pub const DEFAULT_MRL_TOL: f64 = 1e-6;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Raw parametric description of a law, as it appears in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    Exponential { rate: f64 },
    ShiftedExponential { rate: f64, shift: f64 },
    Deterministic { value: f64 },
    Uniform { lower: f64, upper: f64 },
    Rayleigh { scale: f64 },
    Erlang { shape: u32, rate: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
}

/// A validated nonnegative law.
///
/// Construction (including deserialization) rejects parameters outside their
/// ranges, so every method below may assume a well-formed law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Law", into = "Law")]
pub struct DistributionSpec(Law);

impl TryFrom<Law> for DistributionSpec {
    type Error = AoiError;

    fn try_from(law: Law) -> Result<Self> {
        DistributionSpec::new(law)
    }
}

impl From<DistributionSpec> for Law {
    fn from(spec: DistributionSpec) -> Law {
        spec.0
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = serde_json::to_string(&self.0).map_err(|_| fmt::Error)?;
        f.write_str(&json)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(AoiError::InvalidParameter(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(AoiError::InvalidParameter(format!(
            "{name} must be finite and >= 0, got {v}"
        )))
    }
}

impl DistributionSpec {
    pub fn new(law: Law) -> Result<Self> {
        match &law {
            Law::Exponential { rate } => positive("rate", *rate)?,
            Law::ShiftedExponential { rate, shift } => {
                positive("rate", *rate)?;
                nonnegative("shift", *shift)?;
            }
            Law::Deterministic { value } => nonnegative("value", *value)?,
            Law::Uniform { lower, upper } => {
                nonnegative("lower", *lower)?;
                if !(upper.is_finite() && upper > lower) {
                    return Err(AoiError::InvalidParameter(format!(
                        "upper must be finite and > lower ({lower}), got {upper}"
                    )));
                }
            }
            Law::Rayleigh { scale } => positive("scale", *scale)?,
            Law::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(AoiError::InvalidParameter("shape must be >= 1".into()));
                }
                positive("rate", *rate)?;
            }
            Law::Hyperexponential { weights, rates } => {
                if weights.len() < 2 || weights.len() != rates.len() {
                    return Err(AoiError::InvalidParameter(format!(
                        "hyperexponential needs >= 2 phases with matching weights/rates, got {} weights and {} rates",
                        weights.len(),
                        rates.len()
                    )));
                }
                for &w in weights {
                    positive("weight", w)?;
                }
                for &r in rates {
                    positive("rate", r)?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(AoiError::InvalidParameter(format!(
                        "weights must sum to 1, got {total}"
                    )));
                }
            }
        }
        Ok(DistributionSpec(law))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Law::Exponential { rate })
    }

    pub fn shifted_exponential(rate: f64, shift: f64) -> Result<Self> {
        Self::new(Law::ShiftedExponential { rate, shift })
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::new(Law::Deterministic { value })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::new(Law::Uniform { lower, upper })
    }

    pub fn rayleigh(scale: f64) -> Result<Self> {
        Self::new(Law::Rayleigh { scale })
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        Self::new(Law::Erlang { shape, rate })
    }

    pub fn hyperexponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        Self::new(Law::Hyperexponential { weights, rates })
    }

    /// Parses a JSON object such as `{"kind":"exponential","rate":1.0}`.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AoiError::Parse(e.to_string()))
    }

    pub fn law(&self) -> &Law {
        &self.0
    }

    pub fn kind_name(&self) -> &'static str {
        match self.0 {
            Law::Exponential { .. } => "exponential",
            Law::ShiftedExponential { .. } => "shifted_exponential",
            Law::Deterministic { .. } => "deterministic",
            Law::Uniform { .. } => "uniform",
            Law::Rayleigh { .. } => "rayleigh",
            Law::Erlang { .. } => "erlang",
            Law::Hyperexponential { .. } => "hyperexponential",
        }
    }

    /// Rate of an exponential law, `None` for every other kind.
    pub fn exponential_rate(&self) -> Option<f64> {
        match self.0 {
            Law::Exponential { rate } => Some(rate),
            _ => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.0, Law::Deterministic { .. })
    }

    /// Draws one variate by inverse-transform sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u = || -> f64 { Open01.sample(rng) };
        match &self.0 {
            Law::Exponential { rate } => -u().ln() / rate,
            Law::ShiftedExponential { rate, shift } => shift - u().ln() / rate,
            Law::Deterministic { value } => *value,
            Law::Uniform { lower, upper } => lower + (upper - lower) * u(),
            Law::Rayleigh { scale } => scale * (-2.0 * u().ln()).sqrt(),
            Law::Erlang { shape, rate } => {
                let log_sum: f64 = (0..*shape).map(|_| u().ln()).sum();
                -log_sum / rate
            }
            Law::Hyperexponential { weights, rates } => {
                let pick = u();
                let mut acc = 0.0;
                let mut phase = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if pick < acc {
                        phase = i;
                        break;
                    }
                }
                -u().ln() / rates[phase]
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.0 {
            Law::Exponential { rate } => 1.0 / rate,
            Law::ShiftedExponential { rate, shift } => shift + 1.0 / rate,
            Law::Deterministic { value } => *value,
            Law::Uniform { lower, upper } => 0.5 * (lower + upper),
            Law::Rayleigh { scale } => scale * (std::f64::consts::FRAC_PI_2).sqrt(),
            Law::Erlang { shape, rate } => f64::from(*shape) / rate,
            Law::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w / r).sum()
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match &self.0 {
            Law::Exponential { rate } => 2.0 / (rate * rate),
            Law::ShiftedExponential { rate, shift } => {
                shift * shift + 2.0 * shift / rate + 2.0 / (rate * rate)
            }
            Law::Deterministic { value } => value * value,
            Law::Uniform { lower, upper } => (lower * lower + lower * upper + upper * upper) / 3.0,
            Law::Rayleigh { scale } => 2.0 * scale * scale,
            Law::Erlang { shape, rate } => {
                let k = f64::from(*shape);
                k * (k + 1.0) / (rate * rate)
            }
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| 2.0 * w / (r * r))
                .sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    /// `Pr(X > x)`. Point masses use the strict convention, so a
    /// deterministic law at `v` has `ccdf(v) = 0`.
    pub fn ccdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match &self.0 {
            Law::Exponential { rate } => (-rate * x).exp(),
            Law::ShiftedExponential { rate, shift } => {
                if x <= *shift {
                    1.0
                } else {
                    (-rate * (x - shift)).exp()
                }
            }
            Law::Deterministic { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Uniform { lower, upper } => {
                if x <= *lower {
                    1.0
                } else if x >= *upper {
                    0.0
                } else {
                    (upper - x) / (upper - lower)
                }
            }
            Law::Rayleigh { scale } => (-x * x / (2.0 * scale * scale)).exp(),
            Law::Erlang { shape, rate } => {
                let z = rate * x;
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..*shape {
                    term *= z / f64::from(j);
                    sum += term;
                }
                ((-z).exp() * sum).min(1.0)
            }
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (-r * x).exp())
                .sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.ccdf(x)
    }

    /// Probability mass sitting exactly at `x` (nonzero only for deterministic laws).
    pub fn atom(&self, x: f64) -> f64 {
        match self.0 {
            Law::Deterministic { value } if value == x => 1.0,
            _ => 0.0,
        }
    }

    /// `Pr(X >= x)`.
    pub fn survival_inclusive(&self, x: f64) -> f64 {
        self.ccdf(x) + self.atom(x)
    }

    /// Density, or `None` for the point-mass law.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        if x < 0.0 {
            return Some(0.0);
        }
        let d = match &self.0 {
            Law::Exponential { rate } => rate * (-rate * x).exp(),
            Law::ShiftedExponential { rate, shift } => {
                if x < *shift {
                    0.0
                } else {
                    rate * (-rate * (x - shift)).exp()
                }
            }
            Law::Deterministic { .. } => return None,
            Law::Uniform { lower, upper } => {
                if x < *lower || x > *upper {
                    0.0
                } else {
                    1.0 / (upper - lower)
                }
            }
            Law::Rayleigh { scale } => {
                let s2 = scale * scale;
                x / s2 * (-x * x / (2.0 * s2)).exp()
            }
            Law::Erlang { shape, rate } => {
                if x == 0.0 {
                    return Some(if *shape == 1 { *rate } else { 0.0 });
                }
                let k = f64::from(*shape);
                let log_fact: f64 = (1..*shape).map(|j| f64::from(j).ln()).sum();
                (k * rate.ln() + (k - 1.0) * x.ln() - rate * x - log_fact).exp()
            }
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r * (-r * x).exp())
                .sum(),
        };
        Some(d)
    }

    /// Closed support interval `[lo, hi]`; `hi` may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match &self.0 {
            Law::ShiftedExponential { shift, .. } => (*shift, f64::INFINITY),
            Law::Deterministic { value } => (*value, *value),
            Law::Uniform { lower, upper } => (*lower, *upper),
            _ => (0.0, f64::INFINITY),
        }
    }

    /// Points where the cdf or density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.0 {
            Law::ShiftedExponential { shift, .. } => vec![*shift],
            Law::Deterministic { value } => vec![*value],
            Law::Uniform { lower, upper } => vec![*lower, *upper],
            _ => Vec::new(),
        }
    }

    /// `E[f(X)]` by quadrature against the density (exact for the point mass).
    /// `extra_breaks` should list discontinuities of `f`.
    pub fn expect<F: Fn(f64) -> f64>(
        &self,
        f: F,
        extra_breaks: &[f64],
        rel_tol: f64,
    ) -> Result<Quad> {
        if let Law::Deterministic { value } = self.0 {
            return Ok(Quad {
                value: f(value),
                abs_error: 0.0,
            });
        }
        let (lo, hi) = self.support();
        let mut breaks = self.breakpoints();
        breaks.extend_from_slice(extra_breaks);
        quadrature::integrate_piecewise(
            |x| {
                let d = self.pdf(x).unwrap_or(0.0);
                if d == 0.0 {
                    0.0
                } else {
                    f(x) * d
                }
            },
            lo,
            hi,
            &breaks,
            rel_tol,
        )
    }

    /// `E[e^{-sX}]` for `s >= 0`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(AoiError::InvalidParameter(format!(
                "Laplace argument must be finite and >= 0, got {s}"
            )));
        }
        if s == 0.0 {
            return Ok(1.0);
        }
        let v = match &self.0 {
            Law::Exponential { rate } => rate / (rate + s),
            Law::ShiftedExponential { rate, shift } => (-s * shift).exp() * rate / (rate + s),
            Law::Deterministic { value } => (-s * value).exp(),
            Law::Erlang { shape, rate } => (rate / (rate + s)).powi(*shape as i32),
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + s))
                .sum(),
            Law::Uniform { .. } | Law::Rayleigh { .. } => {
                self.expect(|x| (-s * x).exp(), &[], LAPLACE_REL_TOL)?.value
            }
        };
        Ok(v)
    }

    /// Smallest `x` with `cdf(x) >= p`, for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        match &self.0 {
            Law::Exponential { rate } => -(1.0 - p).ln() / rate,
            Law::ShiftedExponential { rate, shift } => shift - (1.0 - p).ln() / rate,
            Law::Deterministic { value } => *value,
            Law::Uniform { lower, upper } => lower + p * (upper - lower),
            Law::Rayleigh { scale } => scale * (-2.0 * (1.0 - p).ln()).sqrt(),
            Law::Erlang { .. } | Law::Hyperexponential { .. } => {
                let mut hi = self.mean().max(1e-12);
                while self.cdf(hi) < p {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) >= p {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                hi
            }
        }
    }

    /// `∫_t^∞ Pr(X > x) dx`, the stop-loss transform at `t`.
    pub fn tail_integral(&self, t: f64) -> Result<Quad> {
        let (_, hi) = self.support();
        let breaks = self.breakpoints();
        quadrature::integrate_piecewise(|x| self.ccdf(x), t, hi, &breaks, MRL_REL_TOL)
    }

    /// Mean residual life `E[X - t | X > t]`.
    pub fn mean_residual_life(&self, t: f64) -> Result<f64> {
        let tail = self.ccdf(t);
        if tail <= 0.0 {
            return Err(AoiError::TailEmpty { t });
        }
        Ok(self.tail_integral(t)?.value / tail)
    }

    /// Samples the mean residual life on `[0, q]`, `q` the capped quantile.
    /// Grid points where the tail is empty are skipped.
    pub fn mrl_grid(&self, grid: &GridSpec) -> Result<Vec<(f64, f64)>> {
        grid.validate()?;
        let cap = self.quantile(grid.quantile_cap);
        let n = grid.points;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let t = cap * i as f64 / (n - 1) as f64;
            if self.ccdf(t) > 0.0 {
                out.push((t, self.mean_residual_life(t)?));
            }
        }
        Ok(out)
    }

    pub fn classify_mrl(&self, grid: &GridSpec, tol: f64) -> Result<MrlClassification> {
        let samples = self.mrl_grid(grid)?;
        Ok(MrlClassification::from_grid(samples, tol))
    }

    /// New better than used in expectation: `m(t) <= E[X]` on the grid.
    pub fn check_nbue(&self, grid: &GridSpec, tol: f64) -> Result<bool> {
        let mean = self.mean();
        Ok(self.mrl_grid(grid)?.iter().all(|&(_, m)| m <= mean + tol))
    }

    /// The same law rescaled in time so that its mean becomes `mean`.
    pub fn scaled_to_mean(&self, mean: f64) -> Result<Self> {
        positive("mean", mean)?;
        let current = self.mean();
        if current <= 0.0 {
            return Err(AoiError::InvalidParameter(
                "cannot rescale a law with zero mean".into(),
            ));
        }
        let f = mean / current;
        let law = match &self.0 {
            Law::Exponential { rate } => Law::Exponential { rate: rate / f },
            Law::ShiftedExponential { rate, shift } => Law::ShiftedExponential {
                rate: rate / f,
                shift: shift * f,
            },
            Law::Deterministic { value } => Law::Deterministic { value: value * f },
            Law::Uniform { lower, upper } => Law::Uniform {
                lower: lower * f,
                upper: upper * f,
            },
            Law::Rayleigh { scale } => Law::Rayleigh { scale: scale * f },
            Law::Erlang { shape, rate } => Law::Erlang {
                shape: *shape,
                rate: rate / f,
            },
            Law::Hyperexponential { weights, rates } => Law::Hyperexponential {
                weights: weights.clone(),
                rates: rates.iter().map(|r| r / f).collect(),
            },
        };
        Self::new(law)
    }

    /// Returns a copy with one named parameter replaced.
    ///
    /// Every kind accepts `mean` (time rescaling). Hyperexponential laws also
    /// accept `rate`, read as the overall arrival rate `1 / mean`.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        if name == "mean" {
            return self.scaled_to_mean(value);
        }
        let mut law = self.0.clone();
        let slot: Option<&mut f64> = match (&mut law, name) {
            (Law::Exponential { rate }, "rate") => Some(rate),
            (Law::ShiftedExponential { rate, .. }, "rate") => Some(rate),
            (Law::ShiftedExponential { shift, .. }, "shift") => Some(shift),
            (Law::Deterministic { value }, "value") => Some(value),
            (Law::Uniform { lower, .. }, "lower") => Some(lower),
            (Law::Uniform { upper, .. }, "upper") => Some(upper),
            (Law::Rayleigh { scale }, "scale") => Some(scale),
            (Law::Erlang { rate, .. }, "rate") => Some(rate),
            (Law::Erlang { shape, .. }, "shape") => {
                if value.fract() != 0.0 || value < 1.0 || value > f64::from(u32::MAX) {
                    return Err(AoiError::InvalidParameter(format!(
                        "erlang shape must be a positive integer, got {value}"
                    )));
                }
                *shape = value as u32;
                None
            }
            (Law::Hyperexponential { .. }, "rate") => {
                positive("rate", value)?;
                return self.scaled_to_mean(1.0 / value);
            }
            _ => {
                return Err(AoiError::InvalidParameter(format!(
                    "{} has no parameter '{name}'",
                    self.kind_name()
                )))
            }
        };
        if let Some(slot) = slot {
            *slot = value;
        }
        Self::new(law)
    }
}

/// Grid used for mean-residual-life classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub quantile_cap: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 200,
            quantile_cap: 0.999,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(AoiError::InvalidParameter(
                "MRL grid needs at least 2 points".into(),
            ));
        }
        if !(self.quantile_cap > 0.0 && self.quantile_cap < 1.0) {
            return Err(AoiError::InvalidParameter(format!(
                "quantile cap must lie in (0, 1), got {}",
                self.quantile_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MrlVerdict {
    #[serde(rename = "DMRL")]
    Dmrl,
    #[serde(rename = "IMRL")]
    Imrl,
    #[serde(rename = "ConstantMRL")]
    ConstantMrl,
    Inconclusive,
}

impl fmt::Display for MrlVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MrlVerdict::Dmrl => "DMRL",
            MrlVerdict::Imrl => "IMRL",
            MrlVerdict::ConstantMrl => "ConstantMRL",
            MrlVerdict::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrlClassification {
    pub verdict: MrlVerdict,
    pub grid: Vec<(f64, f64)>,
    pub tolerance: f64,
}

impl MrlClassification {
    pub fn from_grid(grid: Vec<(f64, f64)>, tolerance: f64) -> Self {
        let (lo, hi) = grid
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, m)| {
                (lo.min(m), hi.max(m))
            });
        let diffs: Vec<f64> = grid.windows(2).map(|w| w[1].1 - w[0].1).collect();
        let verdict = if hi - lo <= tolerance {
            MrlVerdict::ConstantMrl
        } else if diffs.iter().all(|&d| d <= tolerance) {
            MrlVerdict::Dmrl
        } else if diffs.iter().all(|&d| d >= -tolerance) {
            MrlVerdict::Imrl
        } else {
            MrlVerdict::Inconclusive
        };
        MrlClassification {
            verdict,
            grid,
            tolerance,
        }
    }

    /// Nonincreasing MRL (constant counts, as for the exponential law).
    pub fn is_dmrl(&self) -> bool {
        matches!(self.verdict, MrlVerdict::Dmrl | MrlVerdict::ConstantMrl)
    }
}
