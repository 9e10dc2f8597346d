//! Parameter sweeps over the interarrival law.
//!
//! A [`SweepSpec`] names one interarrival parameter to vary and the
//! estimators to evaluate at every grid point. Points run in parallel; rows
//! are assembled in grid order, and every point draws from seeds derived
//! from `(seed, point index)` so that the output is reproducible byte for
//! byte and stable when the grid is extended.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, EstimatorOptions};
use crate::bounds::{self, Applicability};
use crate::distributions::{DistributionSpec, GridSpec, DEFAULT_MRL_TOL};
use crate::error::{AoiError, Result};
use crate::rng::derive_seed;
use crate::sim::{self, Discipline, SimConfig};

pub const CSV_HEADER: &str = "param,estimator,value,ci,applicability";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Simulate,
    Exact,
    Corollary1,
    Gm11,
    Mg11,
    Corollary2,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Simulate,
        Estimator::Exact,
        Estimator::Corollary1,
        Estimator::Gm11,
        Estimator::Mg11,
        Estimator::Corollary2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Simulate => "simulate",
            Estimator::Exact => "exact",
            Estimator::Corollary1 => "corollary1",
            Estimator::Gm11 => "gm11",
            Estimator::Mg11 => "mg11",
            Estimator::Corollary2 => "corollary2",
        }
    }

    fn seed_stream(self) -> u64 {
        match self {
            Estimator::Simulate => 0,
            // Common random numbers: the first dropping bound reuses the walk
            // paths of the exact estimator.
            Estimator::Exact | Estimator::Corollary1 => 1,
            Estimator::Gm11 | Estimator::Mg11 => 2,
            Estimator::Corollary2 => 3,
        }
    }

    fn discipline(self) -> Option<Discipline> {
        match self {
            Estimator::Simulate | Estimator::Exact => None,
            Estimator::Corollary1 | Estimator::Gm11 | Estimator::Mg11 => Some(Discipline::Dropping),
            Estimator::Corollary2 => Some(Discipline::PreemptionInService),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = AoiError;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| AoiError::Parse(format!("unknown estimator '{s}'")))
    }
}

/// Interarrival template plus the parameter being swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweptLaw {
    pub template: DistributionSpec,
    pub parameter: String,
    pub grid: Vec<f64>,
}

fn default_cycles() -> u64 {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub discipline: Discipline,
    pub interarrival: SweptLaw,
    pub service: DistributionSpec,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub options: EstimatorOptions,
    #[serde(default = "default_cycles")]
    pub sim_cycles: u64,
    /// Base seed; point `i` uses `derive_seed(seed, i)`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mrl_grid: GridSpec,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec =
            serde_json::from_str(text).map_err(|e| AoiError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AoiError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = &self.interarrival.grid;
        if grid.is_empty() {
            return Err(AoiError::InvalidConfig("sweep grid is empty".into()));
        }
        if grid
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(AoiError::InvalidConfig(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(AoiError::InvalidConfig("no estimators requested".into()));
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return Err(AoiError::InvalidConfig("duplicate estimator".into()));
        }
        for e in &self.estimators {
            if let Some(d) = e.discipline() {
                if d != self.discipline {
                    return Err(AoiError::InvalidConfig(format!(
                        "estimator {e} does not apply to the {} discipline",
                        self.discipline.as_str()
                    )));
                }
            }
            if *e == Estimator::Gm11 && self.service.exponential_rate().is_none() {
                return Err(AoiError::InvalidConfig(
                    "gm11 requires exponential service".into(),
                ));
            }
        }
        if self.estimators.contains(&Estimator::Simulate) && self.sim_cycles < 1 {
            return Err(AoiError::InvalidConfig("sim_cycles must be >= 1".into()));
        }
        self.options.validate()?;
        for &v in grid {
            self.interarrival
                .template
                .with_parameter(&self.interarrival.parameter, v)?;
        }
        Ok(())
    }
}

/// How a row should be read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowTag {
    /// Simulation or exact estimate.
    Estimate,
    Bound(Applicability),
    /// The estimator failed at this point; carries the error name.
    Divergent(String),
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowTag::Estimate => f.write_str("estimate"),
            RowTag::Bound(a) => f.write_str(a.as_str()),
            RowTag::Divergent(name) => write!(f, "divergent:{name}"),
        }
    }
}

impl FromStr for RowTag {
    type Err = AoiError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("divergent:") {
            return Ok(RowTag::Divergent(name.to_string()));
        }
        Ok(match s {
            "estimate" => RowTag::Estimate,
            "unconditional" => RowTag::Bound(Applicability::Unconditional),
            "requires_dmrl_nbue" => RowTag::Bound(Applicability::RequiresDmrlAndNbue),
            "reversed_under_imrl" => RowTag::Bound(Applicability::ReversedUnderImrl),
            "unverified" => RowTag::Bound(Applicability::Unverified),
            other => return Err(AoiError::Parse(format!("unknown applicability '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub estimator: Estimator,
    /// `None` when the estimator diverged at this point.
    pub value: Option<f64>,
    pub ci: Option<f64>,
    pub applicability: RowTag,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Rows of one estimator, in grid order.
    pub fn series(&self, estimator: Estimator) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator)
            .collect()
    }

    pub fn estimators(&self) -> Vec<Estimator> {
        let mut out: Vec<Estimator> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.estimator) {
                out.push(r.estimator);
            }
        }
        out
    }

    pub fn row(&self, param: f64, estimator: Estimator) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.param == param && r.estimator == estimator)
    }
}

fn failed(param: f64, estimator: Estimator, err: AoiError) -> SweepRow {
    SweepRow {
        param,
        estimator,
        value: None,
        ci: None,
        applicability: RowTag::Divergent(err.name().to_string()),
    }
}

fn evaluate(
    spec: &SweepSpec,
    estimator: Estimator,
    y: &DistributionSpec,
    seed: u64,
) -> Result<(f64, f64, RowTag)> {
    let s = &spec.service;
    let opts = spec.options.with_seed(seed);
    match estimator {
        Estimator::Simulate => {
            let cfg = SimConfig::new(y.clone(), s.clone(), spec.discipline, spec.sim_cycles, seed);
            let run = sim::run_simulation(&cfg)?;
            Ok((
                run.estimate.value,
                run.estimate.ci_half_width,
                RowTag::Estimate,
            ))
        }
        Estimator::Exact => {
            let e = analytic::exact_age(spec.discipline, y, s, &opts)?;
            Ok((e.value, e.ci_half_width, RowTag::Estimate))
        }
        Estimator::Corollary1 => {
            let k = analytic::moments_of_k_dropping(y, s, &opts)?;
            let b = bounds::ub_dropping_general(y, s, &k)?;
            Ok((b.value, b.ci_half_width, RowTag::Bound(b.applicability)))
        }
        Estimator::Gm11 => {
            let mu = s.exponential_rate().ok_or_else(|| {
                AoiError::InvalidConfig("gm11 requires exponential service".into())
            })?;
            let b = bounds::ub_dropping_gm(y, mu)?;
            Ok((b.value, b.ci_half_width, RowTag::Bound(b.applicability)))
        }
        Estimator::Mg11 => {
            let b = bounds::mg11_ordering_bound(y.mean(), s)?;
            let a = bounds::ordering_applicability(y, s, &spec.mrl_grid, DEFAULT_MRL_TOL)?;
            Ok((b.value, b.ci_half_width, RowTag::Bound(a)))
        }
        Estimator::Corollary2 => {
            let b = bounds::ub_preemption(y, s, &opts)?;
            Ok((b.value, b.ci_half_width, RowTag::Bound(b.applicability)))
        }
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let per_point: Vec<Vec<SweepRow>> = spec
        .interarrival
        .grid
        .par_iter()
        .enumerate()
        .map(|(i, &param)| {
            let point_seed = derive_seed(spec.seed, i as u64);
            let y = spec
                .interarrival
                .template
                .with_parameter(&spec.interarrival.parameter, param);
            spec.estimators
                .iter()
                .map(|&e| {
                    let y = match &y {
                        Ok(y) => y,
                        Err(err) => {
                            return failed(param, e, AoiError::InvalidParameter(err.to_string()))
                        }
                    };
                    match evaluate(spec, e, y, derive_seed(point_seed, e.seed_stream())) {
                        Ok((value, ci, tag)) => SweepRow {
                            param,
                            estimator: e,
                            value: Some(value),
                            ci: Some(ci),
                            applicability: tag,
                        },
                        Err(err) => failed(param, e, err),
                    }
                })
                .collect()
        })
        .collect();
    Ok(SweepResult {
        rows: per_point.into_iter().flatten().collect(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV text with header `param,estimator,value,ci,applicability`. Floats use
/// the shortest representation that parses back to the same bits.
pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.param,
            r.estimator,
            fmt_opt(r.value),
            fmt_opt(r.ci),
            r.applicability
        );
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(AoiError::InvalidParameter("sweep result is empty".into()));
    }
    fs::write(path, to_csv(result)).map_err(|e| AoiError::io(path, e))
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| AoiError::Parse(format!("line {line}: bad number '{field}'")))
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line).map(Some)
    }
}

pub fn parse_csv(text: &str) -> Result<SweepResult> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| AoiError::Parse(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(AoiError::Parse(format!("unexpected header '{header}'")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| AoiError::Parse(e.to_string()))?;
        if record.len() != 5 {
            return Err(AoiError::Parse(format!("line {line}: expected 5 fields")));
        }
        rows.push(SweepRow {
            param: parse_f64(&record[0], line)?,
            estimator: record[1].parse()?,
            value: parse_opt(&record[2], line)?,
            ci: parse_opt(&record[3], line)?,
            applicability: record[4].parse()?,
        });
    }
    Ok(SweepResult { rows })
}

pub fn read_csv(path: &Path) -> Result<SweepResult> {
    let text = fs::read_to_string(path).map_err(|e| AoiError::io(path, e))?;
    parse_csv(&text)
}

/// Index of the minimum when it lies strictly inside the series, i.e. the
/// series first decreases and then increases.
pub fn interior_minimum(values: &[f64]) -> Option<usize> {
    let (idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    (idx > 0 && idx + 1 < values.len()).then_some(idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Default for ChartStyle {
    fn default() -> Self {
        ChartStyle {
            title: "Average age of information".into(),
            x_label: "param".into(),
            y_label: "average age".into(),
        }
    }
}

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn colour(e: Estimator) -> &'static str {
    match e {
        Estimator::Simulate => "#1f77b4",
        Estimator::Exact => "#d62728",
        Estimator::Corollary1 => "#2ca02c",
        Estimator::Gm11 => "#9467bd",
        Estimator::Mg11 => "#ff7f0e",
        Estimator::Corollary2 => "#8c564b",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders one line per estimator, with a translucent CI band for series that
/// carry one, and a marker at an interior minimum of the simulated or exact
/// series.
pub fn render_svg(result: &SweepResult, style: &ChartStyle) -> Result<String> {
    if result.rows.is_empty() {
        return Err(AoiError::InvalidParameter("sweep result is empty".into()));
    }
    let finite: Vec<&SweepRow> = result.rows.iter().filter(|r| r.value.is_some()).collect();
    let (mut x_lo, mut x_hi) = result
        .rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.param), hi.max(r.param))
        });
    let (mut y_lo, mut y_hi) =
        finite
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                let v = r.value.unwrap_or(0.0);
                let c = r.ci.unwrap_or(0.0);
                (lo.min(v - c), hi.max(v + c))
            });
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if x_hi - x_lo <= 0.0 {
        let pad = if x_lo == 0.0 { 0.5 } else { 0.1 * x_lo.abs() };
        x_lo -= pad;
        x_hi += pad;
    }
    let y_pad = if y_hi - y_lo > 0.0 {
        0.05 * (y_hi - y_lo)
    } else {
        0.1 * y_lo.abs().max(1.0)
    };
    y_lo -= y_pad;
    y_hi += y_pad;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&style.title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&style.y_label)
    );

    for (slot, e) in result.estimators().into_iter().enumerate() {
        let series: Vec<(f64, f64, f64)> = result
            .series(e)
            .into_iter()
            .filter_map(|r| Some((r.param, r.value?, r.ci.unwrap_or(0.0))))
            .collect();
        let c = colour(e);
        if series.iter().any(|p| p.2 > 0.0) {
            let upper = series
                .iter()
                .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 + p.2)));
            let lower = series
                .iter()
                .rev()
                .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 - p.2)));
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon class="ci-band" points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<String> = series
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-estimator="{e}" points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &series {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#,
                sx(p.0),
                sy(p.1)
            );
        }
        if matches!(e, Estimator::Simulate | Estimator::Exact)
            && series.len() == result.series(e).len()
        {
            let values: Vec<f64> = series.iter().map(|p| p.1).collect();
            if let Some(i) = interior_minimum(&values) {
                let (px, py) = (sx(series[i].0), sy(series[i].1));
                let _ = writeln!(
                    svg,
                    r#"<circle class="local-min" cx="{px:.2}" cy="{py:.2}" r="7" fill="none" stroke="{c}" stroke-width="2"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" fill="{c}">min {e}</text>"#,
                    py - 12.0
                );
            }
        }
        let ly = TOP + 10.0 + 20.0 * slot as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{e}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_chart(result: &SweepResult, path: &Path) -> Result<()> {
    emit_chart_with(result, &ChartStyle::default(), path)
}

pub fn emit_chart_with(result: &SweepResult, style: &ChartStyle, path: &Path) -> Result<()> {
    let svg = render_svg(result, style)?;
    fs::write(path, svg).map_err(|e| AoiError::io(path, e))
}

/// Built-in sweeps. Every preset uses shifted-exponential service with rate 1
/// and shift 0.1.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 4] = ["dropping-rate", "dropping-shift", "dropping-imrl", "preemption-rate"];

    fn service() -> DistributionSpec {
        DistributionSpec::shifted_exponential(1.0, 0.1).expect("valid law")
    }

    fn spec(
        name: &str,
        discipline: Discipline,
        template: DistributionSpec,
        parameter: &str,
        grid: &[f64],
        estimators: &[Estimator],
    ) -> SweepSpec {
        SweepSpec {
            name: name.into(),
            discipline,
            interarrival: SweptLaw {
                template,
                parameter: parameter.into(),
                grid: grid.to_vec(),
            },
            service: service(),
            estimators: estimators.to_vec(),
            options: EstimatorOptions::default(),
            sim_cycles: default_cycles(),
            seed: 2018,
            mrl_grid: GridSpec::default(),
        }
    }

    /// Dropping, shifted-exponential interarrivals (shift 0.5) against their rate.
    pub fn dropping_rate() -> SweepSpec {
        spec(
            "dropping-rate",
            Discipline::Dropping,
            DistributionSpec::shifted_exponential(1.0, 0.5).expect("valid law"),
            "rate",
            &[0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0],
            &[
                Estimator::Simulate,
                Estimator::Exact,
                Estimator::Corollary1,
                Estimator::Mg11,
            ],
        )
    }

    /// Dropping, shifted-exponential interarrivals (rate 1) against their shift.
    pub fn dropping_shift() -> SweepSpec {
        spec(
            "dropping-shift",
            Discipline::Dropping,
            DistributionSpec::shifted_exponential(1.0, 0.0).expect("valid law"),
            "shift",
            &[0.0, 0.25, 0.5, 1.0, 1.5, 2.0],
            &[
                Estimator::Simulate,
                Estimator::Exact,
                Estimator::Corollary1,
                Estimator::Mg11,
            ],
        )
    }

    /// Dropping with IMRL (hyperexponential) interarrivals against the overall rate.
    pub fn dropping_imrl() -> SweepSpec {
        spec(
            "dropping-imrl",
            Discipline::Dropping,
            DistributionSpec::hyperexponential(vec![0.5, 0.5], vec![0.5, 2.0]).expect("valid law"),
            "rate",
            &[0.25, 0.5, 1.0, 2.0, 4.0],
            &[
                Estimator::Simulate,
                Estimator::Exact,
                Estimator::Corollary1,
                Estimator::Mg11,
            ],
        )
    }

    /// Preemption in service with exponential interarrivals against their rate.
    pub fn preemption_rate() -> SweepSpec {
        spec(
            "preemption-rate",
            Discipline::PreemptionInService,
            DistributionSpec::shifted_exponential(1.0, 0.0).expect("valid law"),
            "rate",
            &[0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0],
            &[Estimator::Simulate, Estimator::Exact, Estimator::Corollary2],
        )
    }

    pub fn by_name(name: &str) -> Option<SweepSpec> {
        match name {
            "dropping-rate" => Some(dropping_rate()),
            "dropping-shift" => Some(dropping_shift()),
            "dropping-imrl" => Some(dropping_imrl()),
            "preemption-rate" => Some(preemption_rate()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mut spec: SweepSpec) -> SweepSpec {
        spec.options.mc_samples = 20_000;
        spec.sim_cycles = 5_000;
        spec
    }

    #[test]
    fn rows_follow_grid_and_estimators() {
        let spec = small(presets::dropping_rate());
        let result = run_sweep(&spec).unwrap();
        assert_eq!(
            result.rows.len(),
            spec.interarrival.grid.len() * spec.estimators.len()
        );
        for (i, chunk) in result.rows.chunks(spec.estimators.len()).enumerate() {
            for (row, e) in chunk.iter().zip(&spec.estimators) {
                assert_eq!(row.param, spec.interarrival.grid[i]);
                assert_eq!(row.estimator, *e);
                assert!(row.value.unwrap().is_finite());
            }
        }
        assert!(result
            .series(Estimator::Mg11)
            .iter()
            .all(|r| r.applicability == RowTag::Bound(Applicability::RequiresDmrlAndNbue)));
    }

    #[test]
    fn divergent_points_are_recorded() {
        let mut spec = small(presets::preemption_rate());
        spec.interarrival.template = DistributionSpec::deterministic(1.0).unwrap();
        spec.interarrival.parameter = "value".into();
        spec.interarrival.grid = vec![0.05, 2.0];
        spec.service = DistributionSpec::deterministic(1.0).unwrap();
        spec.sim_cycles = 10;
        let result = run_sweep(&spec).unwrap();
        let first = result.row(0.05, Estimator::Simulate).unwrap();
        assert_eq!(
            first.applicability,
            RowTag::Divergent("DivergentAge".into())
        );
        assert_eq!(first.value, None);
        let exact = result.row(0.05, Estimator::Exact).unwrap();
        assert_eq!(
            exact.applicability,
            RowTag::Divergent("ZeroSuccessProbability".into())
        );
        assert_eq!(result.row(2.0, Estimator::Exact).unwrap().value, Some(2.0));
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = presets::dropping_rate();
        spec.interarrival.grid = vec![1.0, 1.0];
        assert!(spec.validate().is_err());
        let mut spec = presets::dropping_rate();
        spec.estimators.push(Estimator::Corollary2);
        assert!(spec.validate().is_err());
        let mut spec = presets::dropping_rate();
        spec.estimators = vec![Estimator::Gm11];
        assert!(spec.validate().is_err());
        let mut spec = presets::dropping_rate();
        spec.estimators.clear();
        assert!(spec.validate().is_err());
        let mut spec = presets::dropping_rate();
        spec.interarrival.parameter = "upper".into();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let spec = small(presets::dropping_imrl());
        let mut result = run_sweep(&spec).unwrap();
        result.rows.push(SweepRow {
            param: 9.0,
            estimator: Estimator::Simulate,
            value: None,
            ci: None,
            applicability: RowTag::Divergent("DivergentAge".into()),
        });
        let text = to_csv(&result);
        assert!(text.starts_with("param,estimator,value,ci,applicability\n"));
        assert_eq!(parse_csv(&text).unwrap(), result);
    }

    #[test]
    fn single_point_chart() {
        let result = SweepResult {
            rows: vec![SweepRow {
                param: 1.0,
                estimator: Estimator::Exact,
                value: Some(2.5),
                ci: Some(0.0),
                applicability: RowTag::Estimate,
            }],
        };
        let svg = render_svg(&result, &ChartStyle::default()).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("NaN"));
        assert!(render_svg(&SweepResult::default(), &ChartStyle::default()).is_err());
    }

    #[test]
    fn chart_marks_interior_minimum() {
        let rows = [(1.0, 3.0), (2.0, 2.0), (3.0, 2.5)]
            .iter()
            .map(|&(p, v)| SweepRow {
                param: p,
                estimator: Estimator::Exact,
                value: Some(v),
                ci: Some(0.1),
                applicability: RowTag::Estimate,
            })
            .collect();
        let svg = render_svg(&SweepResult { rows }, &ChartStyle::default()).unwrap();
        assert!(svg.contains(r#"class="local-min""#));
        assert!(svg.contains(r#"class="ci-band""#));
        assert_eq!(interior_minimum(&[3.0, 2.0, 1.0]), None);
        assert_eq!(interior_minimum(&[3.0, 2.0, 2.5]), Some(1));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = presets::preemption_rate();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        assert_eq!(SweepSpec::from_json(&text).unwrap(), spec);
        let minimal = r#"{
            "name": "m",
            "discipline": "dropping",
            "interarrival": {"template": {"kind": "exponential", "rate": 1.0}, "parameter": "rate", "grid": [0.5, 1.0]},
            "service": {"kind": "exponential", "rate": 1.0},
            "estimators": ["exact", "gm11"]
        }"#;
        let spec = SweepSpec::from_json(minimal).unwrap();
        assert_eq!(spec.sim_cycles, 100_000);
        assert_eq!(spec.options, EstimatorOptions::default());
    }
}
