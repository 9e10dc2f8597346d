//! Output records. Each command yields one [`Report`], printed either as a
//! plain-text table or as JSON matching `schema/output.schema.json`.

use std::fmt::Write as _;

use aoi_core::analytic::{EstimatorOptions, KPmf, PreemptionDenominator};
use aoi_core::bounds::BoundReport;
use aoi_core::experiments::{SweepResult, SweepSpec};
use aoi_core::sim::{AgeEstimate, Discipline, SimConfig, SimRun};
use aoi_core::{AoiError, DistributionSpec, GridSpec, MrlClassification, MrlVerdict};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct System {
    discipline: Discipline,
    interarrival: DistributionSpec,
    service: DistributionSpec,
}

#[derive(Debug, Serialize)]
pub struct KRow {
    k: usize,
    probability: f64,
    ci_half_width: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepRowOut {
    param: f64,
    estimator: String,
    value: Option<f64>,
    ci: Option<f64>,
    applicability: String,
}

#[derive(Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Report {
    Simulate {
        #[serde(flatten)]
        system: System,
        seed: u64,
        cycles: u64,
        estimate: AgeEstimate,
        direct_age: f64,
        elapsed: f64,
    },
    Exact {
        #[serde(flatten)]
        system: System,
        seed: u64,
        denominator: PreemptionDenominator,
        estimate: AgeEstimate,
    },
    Bound {
        #[serde(flatten)]
        system: System,
        seed: u64,
        bounds: Vec<BoundReport>,
    },
    Sweep {
        name: String,
        discipline: Discipline,
        parameter: String,
        seed: u64,
        rows: Vec<SweepRowOut>,
    },
    CheckProperties {
        dist: DistributionSpec,
        mean: f64,
        variance: f64,
        mrl: MrlVerdict,
        nbue: bool,
        grid_points: usize,
        tolerance: f64,
    },
    Kpmf {
        interarrival: DistributionSpec,
        service: DistributionSpec,
        seed: u64,
        pmf: Vec<KRow>,
        tail_mass: f64,
        mean: f64,
        replicates: u64,
    },
}

fn system(discipline: Discipline, y: &DistributionSpec, s: &DistributionSpec) -> System {
    System {
        discipline,
        interarrival: y.clone(),
        service: s.clone(),
    }
}

impl Report {
    pub fn simulate(cfg: &SimConfig, run: &SimRun) -> Self {
        Report::Simulate {
            system: system(cfg.discipline, &cfg.interarrival, &cfg.service),
            seed: cfg.seed,
            cycles: cfg.target_cycles,
            estimate: run.estimate,
            direct_age: run.direct_age(),
            elapsed: run.elapsed,
        }
    }

    pub fn exact(
        discipline: Discipline,
        y: &DistributionSpec,
        s: &DistributionSpec,
        opts: &EstimatorOptions,
        estimate: &AgeEstimate,
    ) -> Self {
        Report::Exact {
            system: system(discipline, y, s),
            seed: opts.seed,
            denominator: opts.denominator,
            estimate: *estimate,
        }
    }

    pub fn bound(
        discipline: Discipline,
        y: &DistributionSpec,
        s: &DistributionSpec,
        seed: u64,
        bounds: Vec<BoundReport>,
    ) -> Self {
        Report::Bound {
            system: system(discipline, y, s),
            seed,
            bounds,
        }
    }

    pub fn sweep(spec: &SweepSpec, result: &SweepResult) -> Self {
        Report::Sweep {
            name: spec.name.clone(),
            discipline: spec.discipline,
            parameter: spec.interarrival.parameter.clone(),
            seed: spec.seed,
            rows: result
                .rows
                .iter()
                .map(|r| SweepRowOut {
                    param: r.param,
                    estimator: r.estimator.to_string(),
                    value: r.value,
                    ci: r.ci,
                    applicability: r.applicability.to_string(),
                })
                .collect(),
        }
    }

    pub fn properties(
        dist: &DistributionSpec,
        grid: &GridSpec,
        tolerance: f64,
        class: &MrlClassification,
        nbue: bool,
    ) -> Self {
        Report::CheckProperties {
            dist: dist.clone(),
            mean: dist.mean(),
            variance: dist.variance(),
            mrl: class.verdict,
            nbue,
            grid_points: grid.points,
            tolerance,
        }
    }

    pub fn kpmf(y: &DistributionSpec, s: &DistributionSpec, seed: u64, pmf: &KPmf) -> Self {
        Report::Kpmf {
            interarrival: y.clone(),
            service: s.clone(),
            seed,
            pmf: pmf
                .pmf
                .iter()
                .zip(&pmf.ci_half_width)
                .enumerate()
                .map(|(i, (&p, &c))| KRow {
                    k: i + 1,
                    probability: p,
                    ci_half_width: c,
                })
                .collect(),
            tail_mass: pmf.tail_mass,
            mean: pmf.mean(),
            replicates: pmf.replicates,
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report is serialisable");
        out.push('\n');
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Simulate {
                system,
                seed,
                cycles,
                estimate,
                direct_age,
                ..
            } => {
                header(&mut out, system);
                let _ = writeln!(out, "seed           {seed}");
                let _ = writeln!(out, "cycles         {cycles}");
                let _ = writeln!(
                    out,
                    "average age    {} ± {}",
                    estimate.value, estimate.ci_half_width
                );
                let _ = writeln!(out, "direct check   {direct_age}");
            }
            Report::Exact {
                system,
                seed,
                estimate,
                ..
            } => {
                header(&mut out, system);
                let _ = writeln!(out, "seed           {seed}");
                let _ = writeln!(
                    out,
                    "average age    {} ± {}",
                    estimate.value, estimate.ci_half_width
                );
            }
            Report::Bound { system, bounds, .. } => {
                header(&mut out, system);
                let _ = writeln!(
                    out,
                    "{:<26} {:>22} {:>12}  applicability",
                    "bound", "value", "ci"
                );
                for b in bounds {
                    let kind = serde_json::to_value(b.kind).expect("serialisable");
                    let _ = writeln!(
                        out,
                        "{:<26} {:>22} {:>12.3e}  {}",
                        kind.as_str().unwrap_or_default(),
                        b.value,
                        b.ci_half_width,
                        b.applicability
                    );
                }
            }
            Report::Sweep {
                name,
                parameter,
                rows,
                ..
            } => {
                let _ = writeln!(out, "sweep {name} over {parameter}");
                let _ = writeln!(
                    out,
                    "{:>10} {:<11} {:>22} {:>12}  applicability",
                    "param", "estimator", "value", "ci"
                );
                for r in rows {
                    let value = r.value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
                    let ci =
                        r.ci.map(|v| format!("{v:.3e}"))
                            .unwrap_or_else(|| "-".into());
                    let _ = writeln!(
                        out,
                        "{:>10} {:<11} {:>22} {:>12}  {}",
                        r.param, r.estimator, value, ci, r.applicability
                    );
                }
            }
            Report::CheckProperties {
                dist,
                mean,
                variance,
                mrl,
                nbue,
                ..
            } => {
                let _ = writeln!(out, "law            {dist}");
                let _ = writeln!(out, "mean           {mean}");
                let _ = writeln!(out, "variance       {variance}");
                let _ = writeln!(out, "MRL class      {mrl}");
                let _ = writeln!(out, "NBUE           {nbue}");
            }
            Report::Kpmf {
                pmf,
                tail_mass,
                mean,
                ..
            } => {
                let _ = writeln!(out, "{:>5} {:>22} {:>12}", "k", "Pr(K = k)", "ci");
                for r in pmf {
                    let _ = writeln!(
                        out,
                        "{:>5} {:>22} {:>12.3e}",
                        r.k, r.probability, r.ci_half_width
                    );
                }
                let _ = writeln!(out, "tail mass      {tail_mass}");
                let _ = writeln!(out, "mean (trunc.)  {mean}");
            }
        }
        out
    }
}

fn header(out: &mut String, system: &System) {
    let _ = writeln!(out, "discipline     {}", system.discipline.as_str());
    let _ = writeln!(out, "interarrival   {}", system.interarrival);
    let _ = writeln!(out, "service        {}", system.service);
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    error: &'static str,
    message: String,
    flag: Option<&'static str>,
}

impl ErrorBody {
    pub fn new(error: &AoiError, flag: Option<&'static str>) -> Self {
        ErrorBody {
            error: error.name(),
            message: error.to_string(),
            flag,
        }
    }
}
