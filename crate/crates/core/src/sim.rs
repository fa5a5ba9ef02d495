//! Slot-accurate Monte-Carlo simulation of source, channel and monitor.
//!
//! Each slot runs four steps in order:
//!
//! 1. policy: on a mismatch with an idle channel, start a transmission if the
//!    trigger fires, drawing the first phase from `gamma`;
//! 2. channel: an active transmission moves one phase step or is delivered;
//! 3. source: `X` moves by `Q`; any change while a transmission was active
//!    (including one delivered in step 2) preempts it;
//! 4. commit: a surviving delivery sets the estimate, then AoII is updated.
//!
//! Random draws come from three independent streams per replication (source,
//! channel, policy coin), so the source path does not depend on the policy.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::combinatorics::Polynomial;
use crate::cycle::{ChannelModel, SourceModel};
use crate::error::{Error, Result};
use crate::rng::{self, Categorical, Stream};
use crate::stats::{Estimate, Moments};
use rand::Rng;

/// Smallest accepted simulation horizon.
pub const MIN_HORIZON: u64 = 10_000;
/// Smallest accepted replication count.
pub const MIN_REPLICATIONS: u32 = 3;
/// Smallest accepted number of cycles for cycle-parameter estimation.
pub const MIN_CYCLES: u64 = 10_000;
/// Cap on per-slot trace dumps.
pub const MAX_TRACE_SLOTS: u64 = 100_000;

const SOURCE_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;
const COIN_STREAM: u64 = 2;

/// Transmission policy driving the simulator.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimPolicy {
    /// Threshold per estimate value.
    MultiThreshold { thresholds: Vec<u32> },
    /// One threshold for every estimate value.
    Uniform { threshold: u32 },
    /// Transmit with probability `xi` in each mismatch slot with an idle channel.
    RandomSampling { xi: f64 },
}

impl SimPolicy {
    pub fn validate(&self, states: usize) -> Result<()> {
        match self {
            SimPolicy::MultiThreshold { thresholds } => {
                if thresholds.len() != states {
                    return Err(Error::InvalidPolicy(format!(
                        "{} thresholds for {states} states",
                        thresholds.len()
                    )));
                }
                if thresholds.contains(&0) {
                    return Err(Error::InvalidPolicy("thresholds must be >= 1".into()));
                }
            }
            SimPolicy::Uniform { threshold } => {
                if *threshold == 0 {
                    return Err(Error::InvalidPolicy("threshold must be >= 1".into()));
                }
            }
            SimPolicy::RandomSampling { xi } => {
                if !(0.0..=1.0).contains(xi) {
                    return Err(Error::InvalidPolicy(format!("xi = {xi} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for SimPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimPolicy::MultiThreshold { thresholds } => {
                let t: Vec<String> = thresholds.iter().map(u32::to_string).collect();
                write!(f, "multi:{}", t.join(","))
            }
            SimPolicy::Uniform { threshold } => write!(f, "uniform:{threshold}"),
            SimPolicy::RandomSampling { xi } => write!(f, "rs:{xi}"),
        }
    }
}

impl FromStr for SimPolicy {
    type Err = Error;

    /// `multi:<t1,t2,...>`, `uniform:<t>` or `rs:<xi>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPolicy(format!("cannot parse policy '{s}'"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let policy = match kind.trim() {
            "multi" => SimPolicy::MultiThreshold {
                thresholds: arg
                    .split(',')
                    .map(|t| t.trim().parse::<u32>().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
            },
            "uniform" => SimPolicy::Uniform {
                threshold: arg.trim().parse().map_err(|_| bad())?,
            },
            "rs" => SimPolicy::RandomSampling {
                xi: arg.trim().parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        if let SimPolicy::RandomSampling { xi } = policy {
            if !(0.0..=1.0).contains(&xi) {
                return Err(Error::InvalidPolicy(format!("xi = {xi} outside [0, 1]")));
            }
        }
        if matches!(policy, SimPolicy::Uniform { threshold: 0 })
            || matches!(&policy, SimPolicy::MultiThreshold { thresholds } if thresholds.contains(&0))
        {
            return Err(Error::InvalidPolicy("thresholds must be >= 1".into()));
        }
        Ok(policy)
    }
}

/// When a threshold policy starts transmitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// First transmitting slot is the one where AoII equals the threshold.
    #[default]
    AtThreshold,
    /// First transmitting slot is the one where AoII exceeds the threshold.
    AboveThreshold,
}

/// Behavioural switches for sensitivity runs; defaults match the analytic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    pub trigger: Trigger,
    /// Charge `f(0)` in in-sync slots.
    pub charge_in_sync: bool,
    /// Fraction of the horizon discarded before averaging.
    pub warmup_fraction: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            trigger: Trigger::AtThreshold,
            charge_in_sync: false,
            warmup_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: u64,
    pub replications: u32,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < MIN_HORIZON {
            return Err(Error::MinimumSampleSize {
                requested: self.horizon,
                minimum: MIN_HORIZON,
            });
        }
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::MinimumSampleSize {
                requested: self.replications as u64,
                minimum: MIN_REPLICATIONS as u64,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChannelState {
    Idle,
    Transmitting { phase: usize },
}

/// Joint state at the start of a slot. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SystemState {
    pub source_state: usize,
    pub estimate: usize,
    pub aoii: u64,
    pub channel: ChannelState,
    pub clock: u64,
}

impl SystemState {
    /// In sync at `j` with an idle channel.
    pub fn synced(j: usize) -> Self {
        Self {
            source_state: j,
            estimate: j,
            aoii: 0,
            channel: ChannelState::Idle,
            clock: 0,
        }
    }
}

/// What happened during one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub penalty: f64,
    pub transmitting: bool,
    /// Phase occupied during the slot, if transmitting.
    pub phase: Option<usize>,
    /// `Some(j)` when this slot is an embedded point with value `j`.
    pub embedded: Option<usize>,
}

struct Streams {
    source: Stream,
    channel: Stream,
    coin: Stream,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            source: rng::stream(seed, SOURCE_STREAM),
            channel: rng::stream(seed, CHANNEL_STREAM),
            coin: rng::stream(seed, COIN_STREAM),
        }
    }
}

enum Rule {
    Thresholds(Vec<u64>),
    Random(f64),
}

/// Precomputed samplers and the resolved policy.
struct Engine<'a> {
    source_rows: Vec<Categorical>,
    phase_rows: &'a [Categorical],
    phase_start: &'a Categorical,
    phases: usize,
    penalties: &'a [Polynomial],
    rule: Rule,
    options: SimOptions,
}

impl<'a> Engine<'a> {
    fn new(
        source: &'a SourceModel,
        channel: &'a ChannelModel,
        policy: &SimPolicy,
        options: SimOptions,
    ) -> Result<Self> {
        let n = source.states();
        policy.validate(n)?;
        let rule = match policy {
            SimPolicy::MultiThreshold { thresholds } => {
                Rule::Thresholds(thresholds.iter().map(|&t| t as u64).collect())
            }
            SimPolicy::Uniform { threshold } => Rule::Thresholds(vec![*threshold as u64; n]),
            SimPolicy::RandomSampling { xi } => Rule::Random(*xi),
        };
        let q = source.q().matrix();
        let source_rows = (0..n)
            .map(|i| Categorical::new(q.row(i).iter().copied().collect::<Vec<_>>()))
            .collect();
        Ok(Self {
            source_rows,
            phase_rows: channel.dph().phase_samplers(),
            phase_start: channel.dph().start_sampler(),
            phases: channel.phases(),
            penalties: source.penalties(),
            rule,
            options,
        })
    }

    #[inline]
    fn step(&self, s: &mut SystemState, streams: &mut Streams) -> SlotOutcome {
        let mismatch = s.source_state != s.estimate;
        debug_assert_eq!(mismatch, s.aoii > 0);

        // (1) policy
        if mismatch && s.channel == ChannelState::Idle {
            let fire = match &self.rule {
                Rule::Thresholds(t) => {
                    let tau = t[s.estimate];
                    match self.options.trigger {
                        Trigger::AtThreshold => s.aoii >= tau,
                        Trigger::AboveThreshold => s.aoii > tau,
                    }
                }
                Rule::Random(xi) => streams.coin.random::<f64>() < *xi,
            };
            if fire {
                s.channel = ChannelState::Transmitting {
                    phase: self.phase_start.sample(&mut streams.channel),
                };
            }
        }
        let phase = match s.channel {
            ChannelState::Transmitting { phase } => Some(phase),
            ChannelState::Idle => None,
        };
        let penalty = if mismatch || self.options.charge_in_sync {
            self.penalties[s.estimate].eval(s.aoii as f64)
        } else {
            0.0
        };

        // (2) channel
        let mut delivered = false;
        if let Some(p) = phase {
            let next = self.phase_rows[p].sample(&mut streams.channel);
            if next == self.phases {
                delivered = true;
                s.channel = ChannelState::Idle;
            } else {
                s.channel = ChannelState::Transmitting { phase: next };
            }
        }

        // (3) source, with preemption
        let next_state = self.source_rows[s.source_state].sample(&mut streams.source);
        if next_state != s.source_state && phase.is_some() {
            s.channel = ChannelState::Idle;
            delivered = false;
        }

        // (4) commit
        if delivered {
            debug_assert_eq!(next_state, s.source_state);
            s.estimate = s.source_state;
        }
        s.source_state = next_state;
        let prev_aoii = s.aoii;
        s.aoii = if s.source_state == s.estimate {
            0
        } else {
            prev_aoii + 1
        };
        s.clock += 1;

        let embedded = (mismatch && s.aoii == 0).then_some(s.source_state);
        SlotOutcome {
            penalty,
            transmitting: phase.is_some(),
            phase,
            embedded,
        }
    }
}

/// Per-EV statistics of completed cycles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleStats {
    /// One-based embedded value.
    pub ev: usize,
    pub cycles: u64,
    pub mean_duration: f64,
    pub mean_regime2_slots: f64,
    pub mean_age_cost: f64,
    pub next_ev_frequencies: Vec<f64>,
}

/// Time averages of one replication after warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub penalty: f64,
    pub tx_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub policy: String,
    pub lambda: f64,
    pub avg_cost: Estimate,
    pub avg_penalty: Estimate,
    pub avg_tx_fraction: Estimate,
    pub cycle_stats: Vec<CycleStats>,
    pub per_replication: Vec<ReplicationSummary>,
    pub slots: u64,
    pub replications: u32,
    pub seed: u64,
}

impl SimulationReport {
    pub fn csv_header() -> &'static str {
        "policy,lambda,avg_cost,ci_half_width,avg_penalty,avg_tx_fraction,slots,replications,seed"
    }

    /// Average cost of the same sample paths under another `lambda`. The
    /// paths do not depend on `lambda`.
    pub fn cost_at(&self, lambda: f64) -> Estimate {
        let costs: Vec<f64> = self
            .per_replication
            .iter()
            .map(|r| r.penalty + lambda * r.tx_fraction)
            .collect();
        Estimate::from_replications(&costs)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.lambda,
            self.avg_cost.mean,
            self.avg_cost.half_width,
            self.avg_penalty.mean,
            self.avg_tx_fraction.mean,
            self.slots,
            self.replications,
            self.seed
        )
    }
}

#[derive(Default, Clone)]
struct CycleAccumulator {
    duration: Moments,
    regime2: Moments,
    age: Moments,
    next: Vec<u64>,
}

/// Long-run simulation with replication-level confidence intervals.
pub fn simulate(
    source: &SourceModel,
    channel: &ChannelModel,
    policy: &SimPolicy,
    lambda: f64,
    config: &SimConfig,
    options: &SimOptions,
) -> Result<SimulationReport> {
    config.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda = {lambda}")));
    }
    let engine = Engine::new(source, channel, policy, *options)?;
    let n = source.states();
    let warmup = (config.horizon as f64 * options.warmup_fraction).floor() as u64;
    let measured = (config.horizon - warmup) as f64;

    let mut costs = Vec::with_capacity(config.replications as usize);
    let mut penalties = Vec::with_capacity(config.replications as usize);
    let mut tx = Vec::with_capacity(config.replications as usize);
    let mut per_replication = Vec::with_capacity(config.replications as usize);
    let mut cycles = vec![
        CycleAccumulator {
            next: vec![0; n],
            ..Default::default()
        };
        n
    ];

    for rep in 0..config.replications {
        let mut streams = Streams::new(config.seed.wrapping_add(rep as u64));
        let mut state = SystemState::synced(0);
        let mut penalty_sum = 0.0;
        let mut tx_slots = 0u64;
        // (ev, duration, regime-2 slots, penalty) of the cycle in progress.
        let mut open: Option<(usize, u64, u64, f64)> = None;
        for slot in 0..config.horizon {
            let out = engine.step(&mut state, &mut streams);
            if slot < warmup {
                continue;
            }
            penalty_sum += out.penalty;
            tx_slots += out.transmitting as u64;
            if let Some(c) = open.as_mut() {
                c.1 += 1;
                c.2 += out.transmitting as u64;
                c.3 += out.penalty;
            }
            if let Some(j) = out.embedded {
                if let Some((ev, d, r2, a)) = open {
                    let acc = &mut cycles[ev];
                    acc.duration.push(d as f64);
                    acc.regime2.push(r2 as f64);
                    acc.age.push(a);
                    acc.next[j] += 1;
                }
                open = Some((j, 0, 0, 0.0));
            }
        }
        let p = penalty_sum / measured;
        let x = tx_slots as f64 / measured;
        penalties.push(p);
        tx.push(x);
        costs.push(p + lambda * x);
        per_replication.push(ReplicationSummary {
            penalty: p,
            tx_fraction: x,
        });
    }

    let cycle_stats = cycles
        .iter()
        .enumerate()
        .map(|(ev, acc)| {
            let total = acc.duration.count();
            CycleStats {
                ev: ev + 1,
                cycles: total,
                mean_duration: acc.duration.mean(),
                mean_regime2_slots: acc.regime2.mean(),
                mean_age_cost: acc.age.mean(),
                next_ev_frequencies: acc
                    .next
                    .iter()
                    .map(|&k| if total == 0 { f64::NAN } else { k as f64 / total as f64 })
                    .collect(),
            }
        })
        .collect();

    Ok(SimulationReport {
        policy: policy.to_string(),
        lambda,
        avg_cost: Estimate::from_replications(&costs),
        avg_penalty: Estimate::from_replications(&penalties),
        avg_tx_fraction: Estimate::from_replications(&tx),
        cycle_stats,
        per_replication,
        slots: config.horizon * config.replications as u64,
        replications: config.replications,
        seed: config.seed,
    })
}

/// Empirical `(a, c, d, rho)` for cycles of type `j` under threshold `tau`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleEstimate {
    pub ev: usize,
    pub threshold: u32,
    pub cycles: u64,
    pub age_cost: Estimate,
    pub tx_cost: Estimate,
    pub duration: Estimate,
    pub transition_row: Vec<Estimate>,
}

/// Simulates independent cycles, each started right after an embedded point
/// with value `j`, and stops each at the next embedded point.
pub fn estimate_cycle_parameters(
    source: &SourceModel,
    channel: &ChannelModel,
    j: usize,
    tau: u32,
    cycles: u64,
    seed: u64,
    options: &SimOptions,
) -> Result<CycleEstimate> {
    if cycles < MIN_CYCLES {
        return Err(Error::MinimumSampleSize {
            requested: cycles,
            minimum: MIN_CYCLES,
        });
    }
    let n = source.states();
    if j >= n {
        return Err(Error::ArgumentOutOfRange {
            what: "embedded value",
            value: j as i64,
            min: 0,
            max: n as i64 - 1,
        });
    }
    let policy = SimPolicy::Uniform { threshold: tau };
    let engine = Engine::new(source, channel, &policy, *options)?;
    let mut streams = Streams::new(seed);
    let mut age = Moments::default();
    let mut txm = Moments::default();
    let mut dur = Moments::default();
    let mut next = vec![0u64; n];
    for _ in 0..cycles {
        let mut s = SystemState::synced(j);
        let (mut d, mut c, mut a) = (0u64, 0u64, 0.0);
        loop {
            let out = engine.step(&mut s, &mut streams);
            d += 1;
            c += out.transmitting as u64;
            a += out.penalty;
            if let Some(k) = out.embedded {
                next[k] += 1;
                break;
            }
        }
        age.push(a);
        txm.push(c as f64);
        dur.push(d as f64);
    }
    let transition_row = next
        .iter()
        .map(|&k| {
            let p = k as f64 / cycles as f64;
            let se = (p * (1.0 - p) / cycles as f64).sqrt();
            Estimate {
                mean: p,
                std_error: se,
                half_width: 1.959963984540054 * se,
                samples: cycles,
            }
        })
        .collect();
    Ok(CycleEstimate {
        ev: j,
        threshold: tau,
        cycles,
        age_cost: age.estimate(),
        tx_cost: txm.estimate(),
        duration: dur.estimate(),
        transition_row,
    })
}

/// Outcome of the random-sampling line search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RsSearch {
    pub xi: f64,
    pub cost: Estimate,
    /// `(xi, cost)` for every grid point, in grid order.
    pub grid: Vec<(f64, Estimate)>,
}

/// Simulates each `xi` and returns the minimiser; ties go to the larger `xi`.
pub fn rs_line_search(
    source: &SourceModel,
    channel: &ChannelModel,
    lambda: f64,
    xi_grid: &[f64],
    config: &SimConfig,
    options: &SimOptions,
) -> Result<RsSearch> {
    if xi_grid.is_empty() {
        return Err(Error::InvalidConfig("empty xi grid".into()));
    }
    let mut grid = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let policy = SimPolicy::RandomSampling { xi };
        let report = simulate(source, channel, &policy, lambda, config, options)?;
        grid.push((xi, report.avg_cost));
    }
    let (xi, cost) = best_xi(&grid);
    Ok(RsSearch { xi, cost, grid })
}

/// Grid minimiser, preferring the larger `xi` on exact ties.
pub(crate) fn best_xi(grid: &[(f64, Estimate)]) -> (f64, Estimate) {
    grid.iter()
        .copied()
        .reduce(|best, cand| {
            let better =
                cand.1.mean < best.1.mean || (cand.1.mean == best.1.mean && cand.0 > best.0);
            if better {
                cand
            } else {
                best
            }
        })
        .expect("non-empty grid")
}

/// One row of a per-slot trace. Indices are one-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub clock: u64,
    pub source: usize,
    pub estimate: usize,
    pub aoii: u64,
    /// One-based phase, or `None` when idle.
    pub phase: Option<usize>,
    pub penalty: f64,
    pub delta: u8,
}

/// Per-slot trace of the first `slots` slots of replication 0.
pub fn trace(
    source: &SourceModel,
    channel: &ChannelModel,
    policy: &SimPolicy,
    slots: u64,
    seed: u64,
    options: &SimOptions,
) -> Result<Vec<TraceRecord>> {
    let engine = Engine::new(source, channel, policy, *options)?;
    let mut streams = Streams::new(seed);
    let mut s = SystemState::synced(0);
    let slots = slots.min(MAX_TRACE_SLOTS);
    let mut out = Vec::with_capacity(slots as usize);
    for _ in 0..slots {
        let before = s;
        let o = engine.step(&mut s, &mut streams);
        out.push(TraceRecord {
            clock: before.clock,
            source: before.source_state + 1,
            estimate: before.estimate + 1,
            aoii: before.aoii,
            phase: o.phase.map(|p| p + 1),
            penalty: o.penalty,
            delta: o.transmitting as u8,
        });
    }
    Ok(out)
}

/// CSV columns `clock,X,X_hat,AoII,channel,penalty,delta`; `channel` is the
/// phase or `idle`.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["clock", "X", "X_hat", "AoII", "channel", "penalty", "delta"])?;
    for r in records {
        w.write_record([
            r.clock.to_string(),
            r.source.to_string(),
            r.estimate.to_string(),
            r.aoii.to_string(),
            r.phase.map_or("idle".to_string(), |p| p.to_string()),
            r.penalty.to_string(),
            r.delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
