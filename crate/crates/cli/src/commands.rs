use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aoii::cycle::{smdp_parameters, SmdpParameters};
use aoii::experiments::{
    default_validation_cells, run_sweep, validate_cycles_with, write_sweep_csv,
    write_thresholds_csv, Scenario,
};
use aoii::sim::{simulate as run_simulation, trace, write_trace_csv, SimOptions, SimPolicy};
use aoii::smdp::{policy_iteration, Policy, SolverResult};
use serde_json::json;

use crate::config::Resolved;
use crate::{CliError, SCHEMA_VERSION};

/// Cycles per validation cell when none are configured.
pub const DEFAULT_CYCLES: u64 = 1_000_000;

/// File-name-safe form of a scenario name.
fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "scenario".into()
    } else {
        s
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn require_lambda(r: &Resolved) -> Result<f64, CliError> {
    r.lambda
        .ok_or_else(|| CliError::Parse("lambda is required: pass --lambda or set it in the config".into()))
}

fn solve_at(s: &Scenario, lambda: f64) -> Result<(SmdpParameters, SolverResult), CliError> {
    let params = smdp_parameters(&s.source, &s.channel, s.tau_max)?;
    let start = Policy::uniform(s.source.states(), 1)?;
    let solved = policy_iteration(&params, lambda, &start)?;
    Ok((params, solved))
}

pub fn solve(r: Resolved) -> Result<(), CliError> {
    let lambda = require_lambda(&r)?;
    let s = &r.scenario;
    let (_, solved) = solve_at(s, lambda)?;
    let stem = file_stem(&s.name);
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": s.name,
        "lambda": lambda,
        "tau_max": s.tau_max,
        "thresholds": solved.policy.thresholds(),
        "gain": solved.gain,
        "bias": solved.bias,
        "iterations": solved.iterations,
        "gain_trace": solved.trace,
        "warnings": solved.warnings,
    });
    write_json(&r.out.join(format!("solve_{stem}.json")), &doc)?;
    let n = s.source.states();
    write_with(&r.out.join(format!("solve_{stem}_thresholds.csv")), |w| {
        let taus: Vec<String> = (1..=n).map(|j| format!("tau_{j}")).collect();
        writeln!(w, "lambda,gain,iterations,{}", taus.join(","))?;
        writeln!(w, "{}", solved.csv_row(lambda))
    })?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("json value"));
    Ok(())
}

pub fn simulate(r: Resolved) -> Result<(), CliError> {
    let lambda = require_lambda(&r)?;
    let s = &r.scenario;
    let spec = r.policy.as_deref().unwrap_or("smdp");
    let (policy, solver) = if spec.trim() == "smdp" {
        let (_, solved) = solve_at(s, lambda)?;
        let p = SimPolicy::MultiThreshold {
            thresholds: solved.policy.thresholds().to_vec(),
        };
        (p, Some(solved))
    } else {
        (spec.parse::<SimPolicy>()?, None)
    };
    policy.validate(s.source.states())?;
    let options = SimOptions::default();
    let report = run_simulation(&s.source, &s.channel, &policy, lambda, &s.sim_config, &options)?;
    let stem = file_stem(&s.name);
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": s.name,
        "policy": policy.to_string(),
        "solver_gain": solver.as_ref().map(|x| x.gain),
        "report": report,
    });
    write_json(&r.out.join(format!("simulate_{stem}.json")), &doc)?;
    if let Some(path) = &r.trace {
        let slots = s.sim_config.horizon;
        let records = trace(&s.source, &s.channel, &policy, slots, s.sim_config.seed, &options)?;
        write_with(path, |w| write_trace_csv(&records, w).map_err(std::io::Error::from))?;
    }
    println!(
        "policy {}  cost {:.6} +/- {:.6}  penalty {:.6}  tx {:.6}",
        policy, report.avg_cost.mean, report.avg_cost.half_width, report.avg_penalty.mean,
        report.avg_tx_fraction.mean
    );
    Ok(())
}

pub fn sweep(r: Resolved) -> Result<(), CliError> {
    let s = &r.scenario;
    let outcome = run_sweep(s, r.policies, &SimOptions::default())?;
    let stem = file_stem(&s.name);
    let costs = r.out.join(format!("sweep_{stem}.csv"));
    let thresholds = r.out.join(format!("sweep_{stem}_thresholds.csv"));
    // Written even when a lambda failed, so completed rows survive.
    write_with(&costs, |w| write_sweep_csv(s, &outcome, w))?;
    write_with(&thresholds, |w| write_thresholds_csv(s, &outcome, w))?;
    if let Some((_, err)) = outcome.failure {
        return Err(err.into());
    }
    println!("{}\n{}", costs.display(), thresholds.display());
    Ok(())
}

/// Test hook that scales one closed-form entry before the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    /// One-based embedded value.
    pub j: usize,
    pub tau: u32,
    pub quantity: String,
    pub factor: f64,
}

impl Corruption {
    /// `j,tau,quantity,factor`.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Parse(format!("--corrupt expects j,tau,quantity,factor; got '{s}'"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [j, tau, quantity, factor] = parts[..] else {
            return Err(bad());
        };
        let c = Corruption {
            j: j.parse().map_err(|_| bad())?,
            tau: tau.parse().map_err(|_| bad())?,
            quantity: quantity.to_string(),
            factor: factor.parse().map_err(|_| bad())?,
        };
        if c.j == 0 || c.tau == 0 || !c.factor.is_finite() {
            return Err(bad());
        }
        Ok(c)
    }

    fn apply(&self, params: &mut SmdpParameters) -> Result<(), CliError> {
        if self.j > params.states() || self.tau > params.tau_max() {
            return Err(CliError::Parse(format!(
                "--corrupt cell (j={}, tau={}) outside the table",
                self.j, self.tau
            )));
        }
        let cell = params.get_mut(self.j - 1, self.tau);
        let target = match self.quantity.as_str() {
            "a" => &mut cell.age_cost,
            "c" => &mut cell.tx_cost,
            "d" => &mut cell.duration,
            q => {
                let i = q
                    .strip_prefix("rho_")
                    .and_then(|i| i.parse::<usize>().ok())
                    .filter(|i| (1..=cell.transition_row.len()).contains(i))
                    .ok_or_else(|| CliError::Parse(format!("--corrupt: unknown quantity '{q}'")))?;
                &mut cell.transition_row[i - 1]
            }
        };
        *target *= self.factor;
        Ok(())
    }
}

pub fn validate(r: Resolved, corrupt: Option<Corruption>) -> Result<(), CliError> {
    let s = &r.scenario;
    let cells: Vec<(usize, u32)> = default_validation_cells()
        .into_iter()
        .filter(|&(j, _)| j < s.source.states())
        .collect();
    let tau_max = cells.iter().map(|c| c.1).max().unwrap_or(1);
    let mut params = smdp_parameters(&s.source, &s.channel, tau_max)?;
    if let Some(c) = &corrupt {
        c.apply(&mut params)?;
    }
    let cycles = r.cycles.unwrap_or(DEFAULT_CYCLES);
    let report = validate_cycles_with(
        &params,
        &s.source,
        &s.channel,
        &cells,
        cycles,
        s.sim_config.seed,
        &SimOptions::default(),
    )?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": s.name,
        "passed": report.passed(),
        "report": report,
    });
    let path: PathBuf = r.out.join(format!("validate_{}.json", file_stem(&s.name)));
    write_json(&path, &doc)?;
    print!("{}", report.table());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(report.failures().map(|c| c.cell()).collect()))
    }
}
