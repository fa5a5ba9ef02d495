//! Built-in scenarios, lambda sweeps of the SMDP policy against the
//! single-threshold (ST) and random-sampling (RS) benchmarks, and the
//! closed-form versus simulation battery for cycle parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::combinatorics::Polynomial;
use crate::cycle::{smdp_parameters, ChannelModel, SmdpParameters, SourceModel, DEFAULT_TAU_MAX};
use crate::error::{Error, Result};
use crate::sim::{self, estimate_cycle_parameters, simulate, SimConfig, SimOptions, SimPolicy};
use crate::smdp::{policy_iteration, uniform_threshold_search, Policy};
use crate::stats::Estimate;
use crate::stochastic::StochasticMatrix;

pub const DEFAULT_SEED: u64 = 20_240_521;
pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const DEFAULT_REPLICATIONS: u32 = 5;
/// Sigma multiplier of the validation battery.
pub const VALIDATION_SIGMAS: f64 = 3.0;

/// `0.05, 0.10, ..., 1.0`.
pub fn default_xi_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

pub fn default_sim_config() -> SimConfig {
    SimConfig {
        horizon: DEFAULT_HORIZON,
        replications: DEFAULT_REPLICATIONS,
        seed: DEFAULT_SEED,
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub source: SourceModel,
    pub channel: ChannelModel,
    pub lambda_grid: Vec<f64>,
    pub tau_max: u32,
    pub xi_grid: Vec<f64>,
    pub sim_config: SimConfig,
    /// Free-form provenance lines copied into CSV headers.
    pub notes: Vec<String>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidConfig("empty lambda grid".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidConfig(format!("lambda = {l} in grid")));
        }
        if self.xi_grid.is_empty() {
            return Err(Error::InvalidConfig("empty xi grid".into()));
        }
        if let Some(x) = self.xi_grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidConfig(format!("xi = {x} in grid")));
        }
        if self.tau_max == 0 {
            return Err(Error::InvalidConfig("tau_max must be at least 1".into()));
        }
        self.sim_config.validate()
    }

    /// Every parameter as `key: value` lines.
    pub fn provenance(&self) -> Vec<String> {
        let list = |v: &[f64]| {
            v.iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        };
        let q = self.source.q().matrix();
        let g = self.channel.g();
        let mut lines = vec![format!("scenario: {}", self.name)];
        lines.push(format!("states: {}", self.source.states()));
        for r in 0..q.nrows() {
            let row: Vec<f64> = q.row(r).iter().copied().collect();
            lines.push(format!("q_row_{}: {}", r + 1, list(&row)));
        }
        for (j, f) in self.source.penalties().iter().enumerate() {
            lines.push(format!("penalty_{} (ascending coefficients): {}", j + 1, list(f.coeffs())));
        }
        let gamma: Vec<f64> = self.channel.gamma().iter().copied().collect();
        lines.push(format!("channel_gamma: {}", list(&gamma)));
        for r in 0..g.nrows() {
            let row: Vec<f64> = g.row(r).iter().copied().collect();
            lines.push(format!("channel_g_row_{}: {}", r + 1, list(&row)));
        }
        lines.push(format!("lambda_grid: {}", list(&self.lambda_grid)));
        lines.push(format!("tau_max: {}", self.tau_max));
        lines.push(format!("xi_grid: {}", list(&self.xi_grid)));
        lines.push(format!("horizon: {}", self.sim_config.horizon));
        lines.push(format!("replications: {}", self.sim_config.replications));
        lines.push(format!("seed: {}", self.sim_config.seed));
        lines.extend(self.notes.iter().cloned());
        lines
    }
}

/// JSON form of a scenario. Optional fields fall back to the defaults of
/// this module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub q: Vec<Vec<f64>>,
    /// Ascending polynomial coefficients, one list per state.
    pub penalties: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub tau_max: Option<u32>,
    #[serde(default)]
    pub xi_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub sim_config: Option<SimConfig>,
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario> {
        let q = StochasticMatrix::from_rows(&self.q)?;
        let penalties = self
            .penalties
            .iter()
            .map(|c| Polynomial::new(c.clone()))
            .collect::<Result<Vec<_>>>()?;
        let scenario = Scenario {
            name: self.name.clone(),
            source: SourceModel::new(q, penalties)?,
            channel: ChannelModel::from_parts(&self.gamma, &self.g)?,
            lambda_grid: self.lambda_grid.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0]),
            tau_max: self.tau_max.unwrap_or(DEFAULT_TAU_MAX),
            xi_grid: self.xi_grid.clone().unwrap_or_else(default_xi_grid),
            sim_config: self.sim_config.unwrap_or_else(default_sim_config),
            notes: vec!["source: inline".into()],
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Ten-state source with diagonals spread over `[0.4, 0.6]` and a
/// geometric channel with success probability 0.8.
pub fn scenario_one() -> Scenario {
    let n = 10;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let stay = 0.4 + 0.2 * r as f64 / 9.0;
            let base = (1.0 - stay) / 9.0;
            let mut k = 0;
            (0..n)
                .map(|c| {
                    if c == r {
                        stay
                    } else {
                        let v = base * (0.5 + k as f64 / 8.0);
                        k += 1;
                        v
                    }
                })
                .collect()
        })
        .collect();
    let penalties = (1..=n)
        .map(|j| Polynomial::new(vec![0.0, 1.0 / (11 - j) as f64, 1.0 / j as f64]).unwrap())
        .collect();
    let source = SourceModel::new(StochasticMatrix::from_rows(&rows).unwrap(), penalties).unwrap();
    Scenario {
        name: "scenario1".into(),
        source,
        channel: ChannelModel::from_parts(&[1.0], &[vec![0.2]]).unwrap(),
        lambda_grid: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
        tau_max: DEFAULT_TAU_MAX,
        xi_grid: default_xi_grid(),
        sim_config: default_sim_config(),
        notes: vec![
            "off-diagonals: linearly spaced from 0.5(1-q_nn)/9 to 1.5(1-q_nn)/9, \
             ascending column order skipping the diagonal"
                .into(),
        ],
    }
}

/// Three-state source over a two-phase channel.
pub fn scenario_two() -> Scenario {
    let q = StochasticMatrix::from_rows(&[
        vec![0.60, 0.25, 0.15],
        vec![0.25, 0.55, 0.20],
        vec![0.20, 0.30, 0.50],
    ])
    .unwrap();
    let f = |c: Vec<f64>| Polynomial::new(c).unwrap();
    let penalties = vec![f(vec![0.5, 1.0]), f(vec![1.0, 0.5]), f(vec![0.25, 1.0 / 3.0])];
    Scenario {
        name: "scenario2".into(),
        source: SourceModel::new(q, penalties).unwrap(),
        channel: ChannelModel::from_parts(&[1.0, 0.0], &[vec![0.7, 0.2], vec![0.1, 0.6]])
            .unwrap(),
        lambda_grid: vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0],
        tau_max: DEFAULT_TAU_MAX,
        xi_grid: default_xi_grid(),
        sim_config: default_sim_config(),
        notes: Vec::new(),
    }
}

/// `scenario1` or `scenario2`.
pub fn builtin(name: &str) -> Result<Scenario> {
    match name {
        "scenario1" => Ok(scenario_one()),
        "scenario2" => Ok(scenario_two()),
        _ => Err(Error::InvalidConfig(format!("unknown scenario '{name}'"))),
    }
}

/// Which policies a sweep covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PolicySet {
    pub smdp: bool,
    pub st: bool,
    pub rs: bool,
}

impl PolicySet {
    pub const ALL: PolicySet = PolicySet {
        smdp: true,
        st: true,
        rs: true,
    };
}

impl Default for PolicySet {
    fn default() -> Self {
        Self::ALL
    }
}

impl FromStr for PolicySet {
    type Err = Error;

    /// Comma-separated subset of `smdp`, `st`, `rs`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = PolicySet {
            smdp: false,
            st: false,
            rs: false,
        };
        for part in s.split(',').map(str::trim) {
            match part {
                "smdp" => set.smdp = true,
                "st" => set.st = true,
                "rs" => set.rs = true,
                _ => return Err(Error::InvalidConfig(format!("unknown policy family '{part}'"))),
            }
        }
        Ok(set)
    }
}

impl fmt::Display for PolicySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.smdp, "smdp"), (self.st, "st"), (self.rs, "rs")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join(","))
    }
}

/// One lambda of a sweep. Fields of unselected policies stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// `ok`, or the error that stopped the sweep at this lambda.
    pub status: String,
    pub smdp_policy: Option<Policy>,
    pub smdp_gain: Option<f64>,
    pub smdp_sim: Option<Estimate>,
    pub st_tau: Option<u32>,
    pub st_gain: Option<f64>,
    pub st_sim: Option<Estimate>,
    pub rs_xi: Option<f64>,
    pub rs_sim: Option<Estimate>,
}

impl SweepRow {
    fn empty(lambda: f64) -> Self {
        Self {
            lambda,
            status: "ok".into(),
            smdp_policy: None,
            smdp_gain: None,
            smdp_sim: None,
            st_tau: None,
            st_gain: None,
            st_sim: None,
            rs_xi: None,
            rs_sim: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub policies: PolicySet,
    /// Rows in ascending lambda, up to and including a failed one.
    pub rows: Vec<SweepRow>,
    /// Boundary warnings from the solver, prefixed with their lambda.
    pub warnings: Vec<String>,
    pub failure: Option<(f64, Error)>,
}

/// Simulations keyed by policy; sample paths do not depend on lambda.
struct SimCache<'a> {
    scenario: &'a Scenario,
    options: &'a SimOptions,
    thresholds: BTreeMap<Vec<u32>, sim::SimulationReport>,
    rs: Option<Vec<(f64, sim::SimulationReport)>>,
}

impl SimCache<'_> {
    fn thresholds(&mut self, t: &[u32], lambda: f64) -> Result<Estimate> {
        if !self.thresholds.contains_key(t) {
            let policy = SimPolicy::MultiThreshold {
                thresholds: t.to_vec(),
            };
            let s = self.scenario;
            let r = simulate(&s.source, &s.channel, &policy, 0.0, &s.sim_config, self.options)?;
            self.thresholds.insert(t.to_vec(), r);
        }
        Ok(self.thresholds[t].cost_at(lambda))
    }

    fn rs(&mut self, lambda: f64) -> Result<(f64, Estimate)> {
        if self.rs.is_none() {
            let s = self.scenario;
            let mut reports = Vec::with_capacity(s.xi_grid.len());
            for &xi in &s.xi_grid {
                let policy = SimPolicy::RandomSampling { xi };
                reports.push((
                    xi,
                    simulate(&s.source, &s.channel, &policy, 0.0, &s.sim_config, self.options)?,
                ));
            }
            self.rs = Some(reports);
        }
        let grid: Vec<(f64, Estimate)> = self
            .rs
            .as_ref()
            .unwrap()
            .iter()
            .map(|(xi, r)| (*xi, r.cost_at(lambda)))
            .collect();
        Ok(sim::best_xi(&grid))
    }
}

/// Solves and simulates each lambda of the scenario grid in ascending order.
/// Errors while building the parameter tables are returned directly; an
/// error at one lambda ends the sweep with that row flagged.
pub fn run_sweep(
    scenario: &Scenario,
    policies: PolicySet,
    options: &SimOptions,
) -> Result<SweepOutcome> {
    let params = if policies.smdp || policies.st {
        Some(smdp_parameters(&scenario.source, &scenario.channel, scenario.tau_max)?)
    } else {
        None
    };
    let mut grid = scenario.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut cache = SimCache {
        scenario,
        options,
        thresholds: BTreeMap::new(),
        rs: None,
    };
    let mut outcome = SweepOutcome {
        policies,
        rows: Vec::with_capacity(grid.len()),
        warnings: Vec::new(),
        failure: None,
    };
    for lambda in grid {
        match sweep_row(params.as_ref(), &mut cache, policies, lambda, &mut outcome.warnings) {
            Ok(row) => outcome.rows.push(row),
            Err(e) => {
                let mut row = SweepRow::empty(lambda);
                row.status = format!("error: {e}");
                outcome.rows.push(row);
                outcome.failure = Some((lambda, e));
                break;
            }
        }
    }
    Ok(outcome)
}

fn sweep_row(
    params: Option<&SmdpParameters>,
    cache: &mut SimCache<'_>,
    policies: PolicySet,
    lambda: f64,
    warnings: &mut Vec<String>,
) -> Result<SweepRow> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda = {lambda}")));
    }
    let mut row = SweepRow::empty(lambda);
    if let Some(params) = params {
        let n = params.states();
        if policies.smdp {
            let solved = policy_iteration(params, lambda, &Policy::uniform(n, 1)?)?;
            warnings.extend(solved.warnings.iter().map(|w| format!("lambda {lambda}: {w}")));
            row.smdp_sim = Some(cache.thresholds(solved.policy.thresholds(), lambda)?);
            row.smdp_gain = Some(solved.gain);
            row.smdp_policy = Some(solved.policy);
        }
        if policies.st {
            let (tau, gain) = uniform_threshold_search(params, lambda, params.tau_max())?;
            row.st_sim = Some(cache.thresholds(&vec![tau; n], lambda)?);
            row.st_tau = Some(tau);
            row.st_gain = Some(gain);
        }
    }
    if policies.rs {
        let (xi, cost) = cache.rs(lambda)?;
        row.rs_xi = Some(xi);
        row.rs_sim = Some(cost);
    }
    Ok(row)
}

fn write_comments<W: Write>(out: &mut W, lines: &[String]) -> std::io::Result<()> {
    for l in lines {
        writeln!(out, "# {l}")?;
    }
    Ok(())
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// Cost CSV: provenance comments, then one row per lambda. Columns of
/// unselected policies are omitted.
pub fn write_sweep_csv<W: Write>(
    scenario: &Scenario,
    outcome: &SweepOutcome,
    mut out: W,
) -> std::io::Result<()> {
    let p = outcome.policies;
    let mut lines = scenario.provenance();
    lines.push(format!("policies: {p}"));
    write_comments(&mut out, &lines)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["lambda", "status"];
    if p.smdp {
        header.extend(["smdp_gain", "smdp_sim_cost", "smdp_ci"]);
    }
    if p.st {
        header.extend(["st_tau", "st_gain", "st_sim_cost", "st_ci"]);
    }
    if p.rs {
        header.extend(["rs_xi", "rs_sim_cost", "rs_ci"]);
    }
    w.write_record(&header)?;
    for r in &outcome.rows {
        let mean = |e: &Option<Estimate>| opt(&e.map(|e| e.mean));
        let ci = |e: &Option<Estimate>| opt(&e.map(|e| e.half_width));
        let mut rec = vec![r.lambda.to_string(), r.status.clone()];
        if p.smdp {
            rec.extend([opt(&r.smdp_gain), mean(&r.smdp_sim), ci(&r.smdp_sim)]);
        }
        if p.st {
            rec.extend([opt(&r.st_tau), opt(&r.st_gain), mean(&r.st_sim), ci(&r.st_sim)]);
        }
        if p.rs {
            rec.extend([opt(&r.rs_xi), mean(&r.rs_sim), ci(&r.rs_sim)]);
        }
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Threshold CSV: `lambda, policy, tau_1..tau_N` for the SMDP and ST optima.
pub fn write_thresholds_csv<W: Write>(
    scenario: &Scenario,
    outcome: &SweepOutcome,
    mut out: W,
) -> std::io::Result<()> {
    write_comments(&mut out, &scenario.provenance())?;
    let n = scenario.source.states();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["lambda".to_string(), "policy".into()];
    header.extend((1..=n).map(|j| format!("tau_{j}")));
    w.write_record(&header)?;
    for r in outcome.rows.iter().filter(|r| r.is_ok()) {
        if let Some(p) = &r.smdp_policy {
            let mut rec = vec![r.lambda.to_string(), "smdp".into()];
            rec.extend(p.thresholds().iter().map(u32::to_string));
            w.write_record(&rec)?;
        }
        if let Some(t) = r.st_tau {
            let mut rec = vec![r.lambda.to_string(), "st".into()];
            rec.extend(std::iter::repeat_n(t.to_string(), n));
            w.write_record(&rec)?;
        }
    }
    w.flush()
}

/// One closed-form quantity against its simulated estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationCheck {
    /// One-based embedded value.
    pub j: usize,
    pub tau: u32,
    /// `a`, `c`, `d` or `rho_<i>`.
    pub quantity: String,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub pass: bool,
}

impl ValidationCheck {
    pub fn cell(&self) -> String {
        format!("(j={}, tau={}, {})", self.j, self.tau, self.quantity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub cycles: u64,
    pub seed: u64,
    pub sigmas: f64,
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>3} {:>4} {:<8} {:>14} {:>14} {:>11} {:>7}  result\n",
            "j", "tau", "quantity", "analytic", "empirical", "std_error", "z"
        );
        for c in &self.checks {
            let z = if c.std_error > 0.0 {
                (c.empirical - c.analytic) / c.std_error
            } else {
                0.0
            };
            s.push_str(&format!(
                "{:>3} {:>4} {:<8} {:>14.8} {:>14.8} {:>11.3e} {:>7.2}  {}\n",
                c.j,
                c.tau,
                c.quantity,
                c.analytic,
                c.empirical,
                c.std_error,
                z,
                if c.pass { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

/// `{1,2,3} x {1,2,3,5}` with zero-based `j`.
pub fn default_validation_cells() -> Vec<(usize, u32)> {
    (0..3)
        .flat_map(|j| [1, 2, 3, 5].map(|tau| (j, tau)))
        .collect()
}

/// Compares closed-form cycle parameters with `cycles` simulated cycles per
/// cell at [`VALIDATION_SIGMAS`] standard errors.
pub fn validate_cycles(
    source: &SourceModel,
    channel: &ChannelModel,
    cells: &[(usize, u32)],
    cycles: u64,
    seed: u64,
    options: &SimOptions,
) -> Result<ValidationReport> {
    let tau_max = cells.iter().map(|c| c.1).max().unwrap_or(1).max(1);
    let params = smdp_parameters(source, channel, tau_max)?;
    validate_cycles_with(&params, source, channel, cells, cycles, seed, options)
}

/// As [`validate_cycles`] against a caller-supplied table. Cell `k` uses seed
/// `seed + k`.
pub fn validate_cycles_with(
    params: &SmdpParameters,
    source: &SourceModel,
    channel: &ChannelModel,
    cells: &[(usize, u32)],
    cycles: u64,
    seed: u64,
    options: &SimOptions,
) -> Result<ValidationReport> {
    if cycles < sim::MIN_CYCLES {
        return Err(Error::MinimumSampleSize {
            requested: cycles,
            minimum: sim::MIN_CYCLES,
        });
    }
    let mut checks = Vec::new();
    for (k, &(j, tau)) in cells.iter().enumerate() {
        if j >= params.states() || tau == 0 || tau > params.tau_max() {
            return Err(Error::InvalidConfig(format!(
                "validation cell (j={}, tau={tau}) outside the parameter table",
                j + 1
            )));
        }
        let want = params.get(j, tau);
        let got =
            estimate_cycle_parameters(source, channel, j, tau, cycles, seed + k as u64, options)?;
        let mut push = |quantity: String, analytic: f64, est: &Estimate| {
            checks.push(ValidationCheck {
                j: j + 1,
                tau,
                quantity,
                analytic,
                empirical: est.mean,
                std_error: est.std_error,
                pass: est.within_std_errors(analytic, VALIDATION_SIGMAS),
            })
        };
        push("a".into(), want.age_cost, &got.age_cost);
        push("c".into(), want.tx_cost, &got.tx_cost);
        push("d".into(), want.duration, &got.duration);
        for (i, (p, est)) in want.transition_row.iter().zip(&got.transition_row).enumerate() {
            // Binomial standard error at the closed-form probability.
            let se = (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / cycles as f64).sqrt();
            let est = Estimate {
                std_error: se,
                ..*est
            };
            push(format!("rho_{}", i + 1), *p, &est);
        }
    }
    Ok(ValidationReport {
        cycles,
        seed,
        sigmas: VALIDATION_SIGMAS,
        checks,
    })
}
