//! Discrete-event simulation of a G/G/1/1 server.
//!
//! Only two events exist (next arrival, current service completion), so the
//! event list is two timestamps rather than a priority queue. When they
//! coincide the completion is handled first: the update is delivered and the
//! arrival then finds an idle server.
//!
//! Measurement starts at the first delivery. From there on the age is
//! integrated event by event, and independently rebuilt from per-cycle
//! records as a sum of trapezoids between consecutive deliveries.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{AoiError, Result};
use crate::rng::substream;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
pub const BATCHES: usize = 30;
pub const DEFAULT_EVENTS_PER_CYCLE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    /// Arrivals that find the server busy are discarded.
    Dropping,
    /// Arrivals that find the server busy replace the packet in service.
    #[serde(rename = "preemption", alias = "preemption_in_service")]
    PreemptionInService,
}

impl Discipline {
    pub fn as_str(self) -> &'static str {
        match self {
            Discipline::Dropping => "dropping",
            Discipline::PreemptionInService => "preemption",
        }
    }
}

impl std::str::FromStr for Discipline {
    type Err = AoiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dropping" => Ok(Discipline::Dropping),
            "preemption" | "preemption_in_service" => Ok(Discipline::PreemptionInService),
            other => Err(AoiError::InvalidParameter(format!(
                "unknown discipline '{other}' (expected dropping or preemption)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub interarrival: DistributionSpec,
    pub service: DistributionSpec,
    pub discipline: Discipline,
    /// Number of complete renewal cycles (deliveries after the first one).
    pub target_cycles: u64,
    pub seed: u64,
    /// Total arrival + departure events allowed before giving up.
    pub max_events: u64,
}

impl SimConfig {
    pub fn new(
        interarrival: DistributionSpec,
        service: DistributionSpec,
        discipline: Discipline,
        target_cycles: u64,
        seed: u64,
    ) -> Self {
        SimConfig {
            interarrival,
            service,
            discipline,
            target_cycles,
            seed,
            max_events: target_cycles.saturating_mul(DEFAULT_EVENTS_PER_CYCLE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_cycles < 1 {
            return Err(AoiError::InvalidConfig("target_cycles must be >= 1".into()));
        }
        if self.max_events < self.target_cycles {
            return Err(AoiError::InvalidConfig(format!(
                "max_events ({}) must be >= target_cycles ({})",
                self.max_events, self.target_cycles
            )));
        }
        if self.interarrival.mean() <= 0.0 {
            return Err(AoiError::InvalidConfig(
                "interarrival law must have a positive mean".into(),
            ));
        }
        Ok(())
    }
}

/// Observables of one renewal cycle, i.e. the stretch between two
/// consecutive successful arrivals.
///
/// `effective_interarrival = idle + busy + preempted`. Under dropping
/// `preempted` is zero and `busy` is the service time of the successful
/// packet; under preemption `busy` is the (conditioned) service time of the
/// successful packet and `preempted` collects the service spent on packets
/// that were later replaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub effective_interarrival: f64,
    pub idle: f64,
    pub busy: f64,
    pub preempted: f64,
    /// Arrivals consumed by the cycle, the successful one included.
    pub arrivals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Simulation,
    Analytic,
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeEstimate {
    pub value: f64,
    /// Half-width of a 95% confidence interval.
    pub ci_half_width: f64,
    /// Renewal cycles (simulation) or replicates (Monte Carlo) behind the value.
    pub cycles_used: u64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub estimate: AgeEstimate,
    pub cycles: Vec<CycleRecord>,
    /// Service time of the update delivered at the end of the last cycle.
    pub closing_busy: f64,
    /// Age area integrated event by event over the measurement window.
    pub direct_area: f64,
    /// Length of the measurement window.
    pub elapsed: f64,
}

impl SimRun {
    /// Time-average age from the event-by-event integration.
    pub fn direct_age(&self) -> f64 {
        self.direct_area / self.elapsed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Arrival found the server idle and entered service.
    ArrivalSuccess,
    ArrivalDropped,
    /// Arrival replaced the packet in service.
    ArrivalPreempt,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub event: EventKind,
    pub age_after_event: f64,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    generated: f64,
    service: f64,
    done: f64,
    index: u64,
}

/// State that exists once the first update has been delivered.
#[derive(Debug, Clone, Copy)]
struct Measuring {
    last_generated: f64,
    last_index: u64,
    last_busy: f64,
    idle_since: Option<f64>,
    idle: f64,
    preempted: f64,
}

pub fn run_simulation(config: &SimConfig) -> Result<SimRun> {
    run_simulation_traced(config, |_| {})
}

/// Runs the simulation and hands every post-warm-up event to `trace`.
pub fn run_simulation_traced<F: FnMut(&TraceEvent)>(
    config: &SimConfig,
    mut trace: F,
) -> Result<SimRun> {
    config.validate()?;
    let target = config.target_cycles as usize;
    let mut rng = substream(config.seed, 0);

    let mut now = 0.0;
    let mut next_arrival = 0.0;
    let mut arrivals: u64 = 0;
    let mut in_service: Option<Packet> = None;
    let mut measuring: Option<Measuring> = None;
    let mut cycles = Vec::with_capacity(target);
    let mut direct_area = 0.0;
    let mut elapsed = 0.0;
    let mut events: u64 = 0;

    loop {
        if events >= config.max_events {
            return Err(AoiError::DivergentAge {
                successes: cycles.len() as u64,
                target: config.target_cycles,
                events,
            });
        }
        events += 1;

        let departure = in_service.filter(|p| p.done <= next_arrival);
        let t = departure.map_or(next_arrival, |p| p.done);
        if let Some(m) = &measuring {
            let dt = t - now;
            let age0 = now - m.last_generated;
            let age1 = t - m.last_generated;
            direct_area += 0.5 * dt * (age0 + age1);
            elapsed += dt;
        }
        now = t;

        if let Some(p) = departure {
            in_service = None;
            match measuring.as_mut() {
                Some(m) => {
                    cycles.push(CycleRecord {
                        effective_interarrival: p.generated - m.last_generated,
                        idle: m.idle,
                        busy: m.last_busy,
                        preempted: m.preempted,
                        arrivals: p.index - m.last_index,
                    });
                    m.last_generated = p.generated;
                    m.last_index = p.index;
                    m.last_busy = p.service;
                    m.idle = 0.0;
                    m.preempted = 0.0;
                    m.idle_since = Some(t);
                }
                None => {
                    measuring = Some(Measuring {
                        last_generated: p.generated,
                        last_index: p.index,
                        last_busy: p.service,
                        idle_since: Some(t),
                        idle: 0.0,
                        preempted: 0.0,
                    });
                }
            }
            if measuring.is_some() {
                trace(&TraceEvent {
                    time: t,
                    event: EventKind::Departure,
                    age_after_event: t - p.generated,
                });
            }
            if cycles.len() == target {
                return Ok(finish(config, cycles, p.service, direct_area, elapsed));
            }
            continue;
        }

        let index = arrivals;
        arrivals += 1;
        let kind = match (in_service, config.discipline) {
            (None, _) => {
                if let Some(m) = measuring.as_mut() {
                    if let Some(since) = m.idle_since.take() {
                        m.idle += t - since;
                    }
                }
                let s = config.service.sample(&mut rng);
                in_service = Some(Packet {
                    generated: t,
                    service: s,
                    done: t + s,
                    index,
                });
                EventKind::ArrivalSuccess
            }
            (Some(_), Discipline::Dropping) => EventKind::ArrivalDropped,
            (Some(old), Discipline::PreemptionInService) => {
                if let Some(m) = measuring.as_mut() {
                    m.preempted += t - old.generated;
                }
                let s = config.service.sample(&mut rng);
                in_service = Some(Packet {
                    generated: t,
                    service: s,
                    done: t + s,
                    index,
                });
                EventKind::ArrivalPreempt
            }
        };
        if let Some(m) = &measuring {
            trace(&TraceEvent {
                time: t,
                event: kind,
                age_after_event: t - m.last_generated,
            });
        }
        next_arrival = t + config.interarrival.sample(&mut rng);
    }
}

fn finish(
    config: &SimConfig,
    cycles: Vec<CycleRecord>,
    closing_busy: f64,
    direct_area: f64,
    elapsed: f64,
) -> SimRun {
    let (area, length) = cycle_contributions(&cycles, closing_busy);
    let value = area.iter().sum::<f64>() / length.iter().sum::<f64>();
    let ci_half_width = batch_means_half_width(&area, &length);
    SimRun {
        estimate: AgeEstimate {
            value,
            ci_half_width,
            cycles_used: config.target_cycles,
            method: Method::Simulation,
        },
        cycles,
        closing_busy,
        direct_area,
        elapsed,
    }
}

/// Per-cycle age area and length between consecutive deliveries: the age
/// climbs from `busy_n` to `G_n + busy_{n+1}`, so the area is the difference
/// of two triangles, `((G_n + busy_{n+1})² - busy_n²) / 2`.
pub fn cycle_contributions(cycles: &[CycleRecord], closing_busy: f64) -> (Vec<f64>, Vec<f64>) {
    let next_busy = cycles
        .iter()
        .skip(1)
        .map(|c| c.busy)
        .chain(std::iter::once(closing_busy));
    cycles
        .iter()
        .zip(next_busy)
        .map(|(c, next)| {
            let top = c.effective_interarrival + next;
            (0.5 * (top * top - c.busy * c.busy), top - c.busy)
        })
        .unzip()
}

/// Time-average age rebuilt from cycle records alone.
pub fn renewal_age(cycles: &[CycleRecord], closing_busy: f64) -> f64 {
    let (area, length) = cycle_contributions(cycles, closing_busy);
    area.iter().sum::<f64>() / length.iter().sum::<f64>()
}

fn batch_means_half_width(area: &[f64], length: &[f64]) -> f64 {
    let n = area.len();
    let batches = BATCHES.min(n);
    if batches < 2 {
        return 0.0;
    }
    let base = n / batches;
    let extra = n % batches;
    let mut start = 0;
    let mut ratios = Vec::with_capacity(batches);
    for b in 0..batches {
        let size = base + usize::from(b < extra);
        let a: f64 = area[start..start + size].iter().sum();
        let l: f64 = length[start..start + size].iter().sum();
        ratios.push(a / l);
        start += size;
    }
    let mean = ratios.iter().sum::<f64>() / batches as f64;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Z_95 * (var / batches as f64).sqrt()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub mean: f64,
    pub std_error: f64,
}

impl Moment {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Moment {
        let mut n = 0.0;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in values {
            n += 1.0;
            let delta = x - mean;
            mean += delta / n;
            m2 += delta * (x - mean);
        }
        let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
        Moment {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub cycles: usize,
    pub g: Moment,
    pub g2: Moment,
    pub k: Moment,
    pub k2: Moment,
    pub idle: Moment,
    pub busy: Moment,
    /// `1 / Ê[K]` with a delta-method standard error. Under preemption this
    /// estimates the per-arrival success probability `Pr(Y > S)`.
    pub success_probability: Moment,
}

impl CycleStats {
    /// Wald's identity residual `Ê[G] - Ê[K]·E[Y]` and its combined standard error.
    pub fn wald_residual(&self, mean_interarrival: f64) -> (f64, f64) {
        let gap = self.g.mean - self.k.mean * mean_interarrival;
        let se = (self.g.std_error.powi(2) + (mean_interarrival * self.k.std_error).powi(2)).sqrt();
        (gap, se)
    }
}

pub fn cycle_statistics(records: &[CycleRecord]) -> Result<CycleStats> {
    if records.len() < 2 {
        return Err(AoiError::InvalidParameter(format!(
            "cycle statistics need at least 2 records, got {}",
            records.len()
        )));
    }
    let g = Moment::of(records.iter().map(|r| r.effective_interarrival));
    let k = Moment::of(records.iter().map(|r| r.arrivals as f64));
    Ok(CycleStats {
        cycles: records.len(),
        g,
        g2: Moment::of(records.iter().map(|r| r.effective_interarrival.powi(2))),
        k,
        k2: Moment::of(records.iter().map(|r| (r.arrivals as f64).powi(2))),
        idle: Moment::of(records.iter().map(|r| r.idle)),
        busy: Moment::of(records.iter().map(|r| r.busy)),
        success_probability: Moment {
            mean: 1.0 / k.mean,
            std_error: k.std_error / (k.mean * k.mean),
        },
    })
}

/// Writes a trace as CSV with header `time,event,age_after_event`.
pub fn write_trace_csv(events: &[TraceEvent], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AoiError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for e in events {
        writer
            .serialize(e)
            .map_err(|e| AoiError::Parse(format!("{}: {e}", path.display())))?;
    }
    writer
        .into_inner()
        .map_err(|e| AoiError::io(path, e.into_error()))?
        .flush()
        .map_err(|e| AoiError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(v: f64) -> DistributionSpec {
        DistributionSpec::deterministic(v).unwrap()
    }

    fn exp(r: f64) -> DistributionSpec {
        DistributionSpec::exponential(r).unwrap()
    }

    #[test]
    fn deterministic_dropping_sawtooth() {
        let cfg = SimConfig::new(det(2.0), det(1.0), Discipline::Dropping, 50, 3);
        let run = run_simulation(&cfg).unwrap();
        assert!((run.estimate.value - 2.0).abs() < 1e-12);
        assert!(run.estimate.ci_half_width < 1e-12);
        for c in &run.cycles {
            assert_eq!(c.effective_interarrival, 2.0);
            assert_eq!(c.arrivals, 1);
            assert_eq!(c.busy, 1.0);
        }
    }

    #[test]
    fn deterministic_drops_every_other_arrival() {
        let cfg = SimConfig::new(det(1.0), det(1.5), Discipline::Dropping, 20, 0);
        let run = run_simulation(&cfg).unwrap();
        let stats = cycle_statistics(&run.cycles).unwrap();
        assert_eq!(stats.k.mean, 2.0);
        assert_eq!(stats.g.mean, 2.0);
        assert!((run.estimate.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_the_departure() {
        let cfg = SimConfig::new(det(1.0), det(1.0), Discipline::Dropping, 20, 0);
        let run = run_simulation(&cfg).unwrap();
        assert!(run.cycles.iter().all(|c| c.arrivals == 1));
        let cfg = SimConfig::new(det(1.0), det(1.0), Discipline::PreemptionInService, 20, 0);
        let run = run_simulation(&cfg).unwrap();
        assert!(run.cycles.iter().all(|c| c.arrivals == 1));
        assert!((run.estimate.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn preemption_never_completing_diverges() {
        let cfg = SimConfig::new(det(1.0), det(2.0), Discipline::PreemptionInService, 10, 0);
        assert!(matches!(
            run_simulation(&cfg),
            Err(AoiError::DivergentAge { successes: 0, .. })
        ));
    }

    #[test]
    fn mm11_dropping_age() {
        let cfg = SimConfig::new(exp(1.0), exp(1.0), Discipline::Dropping, 100_000, 11);
        let run = run_simulation(&cfg).unwrap();
        let est = run.estimate;
        assert!(
            (est.value - 2.5).abs() <= est.ci_half_width.max(0.02),
            "{est:?}"
        );
        let stats = cycle_statistics(&run.cycles).unwrap();
        assert!((stats.k.mean - 2.0).abs() < 4.0 * stats.k.std_error);
    }

    #[test]
    fn mm11_preemption_success_rate() {
        let cfg = SimConfig::new(
            exp(1.0),
            exp(1.0),
            Discipline::PreemptionInService,
            100_000,
            12,
        );
        let run = run_simulation(&cfg).unwrap();
        let stats = cycle_statistics(&run.cycles).unwrap();
        let p = stats.success_probability;
        assert!((p.mean - 0.5).abs() < 4.0 * p.std_error, "{p:?}");
    }

    #[test]
    fn two_accounting_paths_agree() {
        for discipline in [Discipline::Dropping, Discipline::PreemptionInService] {
            let cfg = SimConfig::new(
                DistributionSpec::shifted_exponential(1.5, 0.2).unwrap(),
                DistributionSpec::rayleigh(0.6).unwrap(),
                discipline,
                20_000,
                5,
            );
            let run = run_simulation(&cfg).unwrap();
            let renewal = renewal_age(&run.cycles, run.closing_busy);
            assert_eq!(renewal, run.estimate.value);
            assert!(
                (renewal - run.direct_age()).abs() < 1e-9 * renewal,
                "{renewal} vs {}",
                run.direct_age()
            );
        }
    }

    #[test]
    fn cycle_identity_holds() {
        for discipline in [Discipline::Dropping, Discipline::PreemptionInService] {
            let cfg = SimConfig::new(exp(2.0), exp(1.0), discipline, 5_000, 8);
            let run = run_simulation(&cfg).unwrap();
            for c in &run.cycles {
                let sum = c.idle + c.busy + c.preempted;
                assert!((c.effective_interarrival - sum).abs() < 1e-9);
                assert!(c.idle >= 0.0 && c.arrivals >= 1);
                if discipline == Discipline::Dropping {
                    assert_eq!(c.preempted, 0.0);
                }
            }
        }
    }

    #[test]
    fn trace_is_consistent() {
        let cfg = SimConfig::new(exp(1.0), exp(1.0), Discipline::PreemptionInService, 200, 4);
        let mut events = Vec::new();
        let run = run_simulation_traced(&cfg, |e| events.push(*e)).unwrap();
        assert_eq!(events[0].event, EventKind::Departure);
        let departures = events
            .iter()
            .filter(|e| e.event == EventKind::Departure)
            .count();
        assert_eq!(departures, run.cycles.len() + 1);
        assert!(events.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(events.iter().all(|e| e.age_after_event >= 0.0));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&events, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("time,event,age_after_event\n"));
        assert!(text.contains(",departure,"));
        assert!(text.contains(",arrival_preempt,"));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = SimConfig::new(exp(1.0), exp(1.0), Discipline::Dropping, 0, 0);
        assert!(run_simulation(&cfg).is_err());
        cfg.target_cycles = 10;
        cfg.max_events = 5;
        assert!(matches!(
            run_simulation(&cfg),
            Err(AoiError::InvalidConfig(_))
        ));
        let cfg = SimConfig::new(det(0.0), exp(1.0), Discipline::Dropping, 10, 0);
        assert!(run_simulation(&cfg).is_err());
        assert!(cycle_statistics(&[]).is_err());
    }

    #[test]
    fn discipline_names() {
        assert_eq!(
            "preemption".parse::<Discipline>().unwrap(),
            Discipline::PreemptionInService
        );
        assert_eq!(
            serde_json::to_string(&Discipline::PreemptionInService).unwrap(),
            "\"preemption\""
        );
        assert!("fifo".parse::<Discipline>().is_err());
    }
}
