//! Average-cost SMDP over the embedded values: policy evaluation,
//! improvement, policy iteration and the two threshold searches.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cycle::SmdpParameters;
use crate::error::{Error, Result};
use crate::linalg::is_irreducible;

/// Upper bound on exhaustive enumeration.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

/// Relative slack under which two improvement scores count as tied.
const TIE_TOL: f64 = 1e-12;

/// One threshold per embedded value (zero-based index, threshold >= 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Policy {
    thresholds: Vec<u32>,
}

impl Policy {
    pub fn new(thresholds: Vec<u32>) -> Result<Self> {
        if thresholds.is_empty() || thresholds.contains(&0) {
            return Err(Error::InvalidPolicy(
                "thresholds must be positive integers".into(),
            ));
        }
        Ok(Self { thresholds })
    }

    pub fn uniform(states: usize, tau: u32) -> Result<Self> {
        Self::new(vec![tau; states])
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn threshold(&self, j: usize) -> u32 {
        self.thresholds[j]
    }

    fn check(&self, params: &SmdpParameters) -> Result<()> {
        if self.thresholds.len() != params.states() {
            return Err(Error::InvalidPolicy(format!(
                "{} thresholds for {} states",
                self.thresholds.len(),
                params.states()
            )));
        }
        if let Some(t) = self.thresholds.iter().find(|&&t| t > params.tau_max()) {
            return Err(Error::InvalidPolicy(format!(
                "threshold {t} exceeds tau_max {}",
                params.tau_max()
            )));
        }
        Ok(())
    }
}

/// Gain and bias of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// Long-run average cost per slot.
    pub gain: f64,
    /// Relative values with the last state pinned to zero.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub policy: Policy,
    pub gain: f64,
    pub bias: Vec<f64>,
    pub iterations: usize,
    /// Gain after each evaluation step.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SolverResult {
    /// `lambda,gain,iterations,tau_1,...,tau_N`.
    pub fn csv_row(&self, lambda: f64) -> String {
        let mut fields = vec![
            lambda.to_string(),
            self.gain.to_string(),
            self.iterations.to_string(),
        ];
        fields.extend(self.policy.thresholds().iter().map(u32::to_string));
        fields.join(",")
    }
}

fn embedded_matrix(params: &SmdpParameters, policy: &Policy) -> DMatrix<f64> {
    let n = params.states();
    DMatrix::from_fn(n, n, |j, i| {
        params.get(j, policy.threshold(j)).transition_row[i]
    })
}

/// Solves `bias_j + gain d_j = r_j + sum_i rho_ji bias_i` with the last bias
/// pinned to zero.
pub fn policy_evaluate(params: &SmdpParameters, lambda: f64, policy: &Policy) -> Result<Evaluation> {
    policy.check(params)?;
    let n = params.states();
    let p = embedded_matrix(params, policy);
    if !is_irreducible(&p) {
        return Err(Error::NotUnichain);
    }
    // Unknowns: bias_0 .. bias_{n-2}, gain.
    let mut sys = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        let tau = policy.threshold(j);
        for i in 0..n - 1 {
            sys[(j, i)] = if i == j { 1.0 } else { 0.0 } - p[(j, i)];
        }
        sys[(j, n - 1)] = params.get(j, tau).duration;
        rhs[j] = params.reward(j, tau, lambda);
    }
    let x = sys.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let mut bias: Vec<f64> = x.iter().take(n - 1).copied().collect();
    bias.push(0.0);
    Ok(Evaluation {
        gain: x[n - 1],
        bias,
    })
}

/// Per state, the threshold minimising `r - gain d + rho . bias`; ties go
/// to the smallest threshold.
pub fn policy_improve(params: &SmdpParameters, lambda: f64, eval: &Evaluation) -> Policy {
    let n = params.states();
    let thresholds = (0..n)
        .map(|j| {
            let scores: Vec<f64> = (1..=params.tau_max())
                .map(|tau| {
                    let c = params.get(j, tau);
                    let future: f64 = c
                        .transition_row
                        .iter()
                        .zip(&eval.bias)
                        .map(|(p, b)| p * b)
                        .sum();
                    params.reward(j, tau, lambda) - eval.gain * c.duration + future
                })
                .collect();
            let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let slack = TIE_TOL * best.abs().max(1.0);
            scores.iter().position(|s| *s <= best + slack).unwrap() as u32 + 1
        })
        .collect();
    Policy { thresholds }
}

/// Alternates evaluation and improvement until the policy repeats.
pub fn policy_iteration(
    params: &SmdpParameters,
    lambda: f64,
    initial: &Policy,
) -> Result<SolverResult> {
    let mut policy = initial.clone();
    let mut seen = vec![policy.clone()];
    let mut trace = Vec::new();
    loop {
        let eval = policy_evaluate(params, lambda, &policy)?;
        trace.push(eval.gain);
        let next = policy_improve(params, lambda, &eval);
        if next == policy || seen.contains(&next) {
            let warnings = boundary_warnings(params, &policy);
            return Ok(SolverResult {
                policy,
                gain: eval.gain,
                bias: eval.bias,
                iterations: trace.len(),
                trace,
                warnings,
            });
        }
        seen.push(next.clone());
        policy = next;
    }
}

fn boundary_warnings(params: &SmdpParameters, policy: &Policy) -> Vec<String> {
    let tau_max = params.tau_max();
    let hits: Vec<String> = policy
        .thresholds()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == tau_max)
        .map(|(j, _)| (j + 1).to_string())
        .collect();
    if hits.is_empty() {
        return Vec::new();
    }
    let msg = format!(
        "optimal threshold at the search bound tau_max = {tau_max} for states {}; \
         the action space may be truncated",
        hits.join(",")
    );
    warn!("{msg}");
    vec![msg]
}

/// Best single system-wide threshold over `1..=tau_max` (smallest on ties).
pub fn uniform_threshold_search(
    params: &SmdpParameters,
    lambda: f64,
    tau_max: u32,
) -> Result<(u32, f64)> {
    let tau_max = tau_max.min(params.tau_max());
    let mut best: Option<(u32, f64)> = None;
    for tau in 1..=tau_max {
        let gain = policy_evaluate(params, lambda, &Policy::uniform(params.states(), tau)?)?.gain;
        if best.is_none_or(|(_, g)| gain < g) {
            best = Some((tau, gain));
        }
    }
    best.ok_or(Error::InvalidPolicy("tau_max must be at least 1".into()))
}

/// Result of [`exhaustive_search`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub policy: Policy,
    pub gain: f64,
    pub evaluations: u64,
    pub warnings: Vec<String>,
}

/// Evaluates every policy in `{1..tau_max}^N`.
pub fn exhaustive_search(
    params: &SmdpParameters,
    lambda: f64,
    tau_max: u32,
) -> Result<SearchResult> {
    let n = params.states();
    let tau_max = tau_max.min(params.tau_max());
    let size = (tau_max as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut current = vec![1u32; n];
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut evaluations = 0;
    loop {
        let gain = policy_evaluate(params, lambda, &Policy::new(current.clone())?)?.gain;
        evaluations += 1;
        if best.as_ref().is_none_or(|(_, g)| gain < *g) {
            best = Some((current.clone(), gain));
        }
        // Odometer increment, last state fastest.
        let mut k = n;
        loop {
            if k == 0 {
                let (thresholds, gain) = best.expect("at least one policy");
                let policy = Policy::new(thresholds)?;
                let warnings = boundary_warnings(params, &policy);
                return Ok(SearchResult {
                    policy,
                    gain,
                    evaluations,
                    warnings,
                });
            }
            k -= 1;
            if current[k] < tau_max {
                current[k] += 1;
                break;
            }
            current[k] = 1;
        }
    }
}
