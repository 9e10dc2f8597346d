//! `aoi`: command-line access to the simulator, exact estimators and bounds.
//!
//! Exit status is 0 on success, 1 when the system itself has no finite age
//! (or the numerics cannot certify one), and 2 for usage errors.

mod args;
mod report;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use aoi_core::analytic::{self, EstimatorOptions};
use aoi_core::bounds;
use aoi_core::distributions::DEFAULT_MRL_TOL;
use aoi_core::experiments::{self, presets, SweepSpec};
use aoi_core::sim::{self, Discipline, SimConfig, TraceEvent};
use aoi_core::{AoiError, GridSpec};
use clap::Parser;

use args::{Cli, Command, ConfigFile, McArgs};
use report::Report;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_CYCLES: u64 = 100_000;

/// A failure together with the flag it should be attributed to, if any.
struct Failure {
    error: AoiError,
    flag: Option<&'static str>,
}

impl From<AoiError> for Failure {
    fn from(error: AoiError) -> Self {
        Failure { error, flag: None }
    }
}

fn at_flag(flag: &'static str) -> impl FnOnce(AoiError) -> Failure {
    move |error| Failure {
        error,
        flag: Some(flag),
    }
}

struct Context {
    config: ConfigFile,
    seed: u64,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let config = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| AoiError::Io {
                        path: path.clone(),
                        source: e,
                    })
                    .map_err(at_flag("--config"))?;
                serde_json::from_str(&text)
                    .map_err(|e| AoiError::Parse(format!("{}: {e}", path.display())))
                    .map_err(at_flag("--config"))?
            }
            None => ConfigFile::default(),
        };
        let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
        Ok(Context { config, seed })
    }

    fn options(
        &self,
        mc: Option<&McArgs>,
        samples: Option<u64>,
    ) -> Result<EstimatorOptions, Failure> {
        let mut opts = EstimatorOptions::default().with_seed(self.seed);
        if let Some(n) = samples.or(self.config.samples) {
            opts.mc_samples = n;
        }
        if let Some(mc) = mc {
            opts.force_generic = mc.force_generic;
            opts.force_monte_carlo = mc.monte_carlo;
            opts.denominator = mc.denominator.into();
        }
        opts.validate().map_err(at_flag("--samples"))?;
        Ok(opts)
    }

    fn grid(&self, points: Option<usize>) -> GridSpec {
        let mut grid = GridSpec::default();
        if let Some(p) = points.or(self.config.grid_points) {
            grid.points = p;
        }
        grid
    }
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    let ctx = Context::load(cli)?;
    match &cli.command {
        Command::Simulate(a) => {
            let discipline: Discipline = a.system.discipline.into();
            let cycles = a.cycles.or(ctx.config.cycles).unwrap_or(DEFAULT_CYCLES);
            let mut cfg = SimConfig::new(
                a.system.interarrival.clone(),
                a.system.service.clone(),
                discipline,
                cycles,
                ctx.seed,
            );
            if let Some(m) = a.max_events {
                cfg.max_events = m;
            }
            cfg.validate().map_err(at_flag("--cycles"))?;
            let run = match &a.trace {
                Some(path) => {
                    let mut events: Vec<TraceEvent> = Vec::new();
                    let run = sim::run_simulation_traced(&cfg, |e| events.push(*e))?;
                    sim::write_trace_csv(&events, path).map_err(at_flag("--trace"))?;
                    run
                }
                None => sim::run_simulation(&cfg)?,
            };
            Ok(Report::simulate(&cfg, &run))
        }
        Command::Exact(a) => {
            let opts = ctx.options(Some(&a.mc), a.mc.samples)?;
            let discipline = a.system.discipline.into();
            let est =
                analytic::exact_age(discipline, &a.system.interarrival, &a.system.service, &opts)?;
            Ok(Report::exact(
                discipline,
                &a.system.interarrival,
                &a.system.service,
                &opts,
                &est,
            ))
        }
        Command::Bound(a) => {
            let opts = ctx.options(Some(&a.mc), a.mc.samples)?;
            let (y, s) = (&a.system.interarrival, &a.system.service);
            let discipline: Discipline = a.system.discipline.into();
            let mut out = Vec::new();
            match discipline {
                Discipline::Dropping => {
                    let k = analytic::moments_of_k_dropping(y, s, &opts)?;
                    out.push(bounds::ub_dropping_general(y, s, &k)?);
                    if let Some(mu) = s.exponential_rate() {
                        out.push(bounds::ub_dropping_gm(y, mu)?);
                        if let Some(lambda) = y.exponential_rate() {
                            let (exact, bound) = bounds::mm11(lambda, mu)?;
                            out.push(bound);
                            out.push(exact);
                        }
                    }
                    let mut mg = bounds::mg11_ordering_bound(y.mean(), s)?;
                    let tol = ctx.config.tolerance.unwrap_or(DEFAULT_MRL_TOL);
                    mg.applicability = bounds::ordering_applicability(y, s, &ctx.grid(None), tol)?;
                    out.push(mg);
                }
                Discipline::PreemptionInService => out.push(bounds::ub_preemption(y, s, &opts)?),
            }
            Ok(Report::bound(discipline, y, s, ctx.seed, out))
        }
        Command::Sweep(a) => {
            let mut spec: SweepSpec = match (&a.spec, &a.preset) {
                (Some(path), _) => SweepSpec::from_file(path).map_err(at_flag("--spec"))?,
                (None, Some(name)) => presets::by_name(name)
                    .ok_or_else(|| AoiError::InvalidConfig(format!("unknown preset '{name}'")))
                    .map_err(at_flag("--preset"))?,
                (None, None) => {
                    return Err(at_flag("--spec")(AoiError::InvalidConfig(
                        "either --spec or --preset is required".into(),
                    )))
                }
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            if let Some(n) = a.samples {
                spec.options.mc_samples = n;
            }
            if let Some(c) = a.cycles {
                spec.sim_cycles = c;
            }
            spec.validate().map_err(at_flag("--spec"))?;
            let result = experiments::run_sweep(&spec)?;
            if let Some(path) = &a.csv {
                experiments::emit_csv(&result, path).map_err(at_flag("--csv"))?;
            }
            if let Some(path) = &a.svg {
                let style = experiments::ChartStyle {
                    title: spec.name.clone(),
                    x_label: spec.interarrival.parameter.clone(),
                    ..Default::default()
                };
                experiments::emit_chart_with(&result, &style, path).map_err(at_flag("--svg"))?;
            }
            Ok(Report::sweep(&spec, &result))
        }
        Command::CheckProperties(a) => {
            let grid = ctx.grid(a.grid_points);
            let tol = a
                .tolerance
                .or(ctx.config.tolerance)
                .unwrap_or(DEFAULT_MRL_TOL);
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(at_flag("--tolerance")(AoiError::InvalidParameter(format!(
                    "tolerance must be a finite nonnegative number, got {tol}"
                ))));
            }
            let class = a
                .dist
                .classify_mrl(&grid, tol)
                .map_err(at_flag("--grid-points"))?;
            let nbue = a.dist.check_nbue(&grid, tol)?;
            Ok(Report::properties(&a.dist, &grid, tol, &class, nbue))
        }
        Command::Kpmf(a) => {
            if a.k_max < 1 {
                return Err(at_flag("--k-max")(AoiError::InvalidParameter(
                    "k-max must be >= 1".into(),
                )));
            }
            let opts = ctx.options(None, a.samples)?;
            let pmf = analytic::k_pmf(&a.interarrival, &a.service, a.k_max, &opts)?;
            Ok(Report::kpmf(&a.interarrival, &a.service, ctx.seed, &pmf))
        }
    }
}

fn fail(json: bool, f: &Failure) -> ExitCode {
    let domain = f.error.is_domain();
    match (f.flag, domain) {
        (Some(flag), false) => eprintln!("error: {} (flag {flag})", f.error),
        _ => eprintln!("error: {}", f.error),
    }
    if json {
        let body = report::ErrorBody::new(&f.error, f.flag);
        println!(
            "{}",
            serde_json::to_string_pretty(&body).expect("serialisable")
        );
    }
    ExitCode::from(if domain { 1 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let mut stdout = std::io::stdout().lock();
            let text = if cli.json {
                report.to_json()
            } else {
                report.to_table()
            };
            if stdout.write_all(text.as_bytes()).is_err() {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(f) => fail(cli.json, &f),
    }
}
