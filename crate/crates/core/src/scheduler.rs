//! Epoch-based backoff learning for scheduling.
//!
//! The first rule uses growing epochs `T(j) = ⌈exp(√j)⌉` with step `1/j`
//! and no projection. The second uses a fixed epoch and step, adds a margin
//! `ε` to the observed arrival rate and clamps `r` to `[−n/ε, n/ε]`.

use serde::{Deserialize, Serialize};

use crate::conflict_graph::{is_strictly_admissible, IndependentSetFamily, RateVector};
use crate::gibbs::{objective_f, solve_r_star, DEFAULT_TOL};
use crate::{Error, Result};

/// `T(j) = ⌈exp(√j)⌉` (as `f64`, since it exceeds `u64` for `j ≳ 1964`) and `α(j) = 1/j`.
pub fn epoch_params_alg1(j: u64) -> Result<(f64, f64)> {
    if j == 0 {
        return Err(Error::InvalidInput("epoch index starts at 1".into()));
    }
    let j = j as f64;
    Ok((j.sqrt().exp().ceil(), 1.0 / j))
}

/// `r + step · (λ̂ − ŝ)`, no projection.
pub fn update_alg1_step(r: &[f64], lambda_hat: &[f64], s_hat: &[f64], step: f64) -> Vec<f64> {
    r.iter().zip(lambda_hat).zip(s_hat).map(|((r, l), s)| r + step * (l - s)).collect()
}

/// `r_i + (1/j)(λ̂_i − ŝ_i)`.
pub fn update_alg1(r: &[f64], lambda_hat: &[f64], s_hat: &[f64], j: u64) -> Result<Vec<f64>> {
    let (_, alpha) = epoch_params_alg1(j)?;
    Ok(update_alg1_step(r, lambda_hat, s_hat, alpha))
}

/// Componentwise clamp to `[−bound, bound]`.
pub fn project_box(x: &[f64], bound: f64) -> Vec<f64> {
    x.iter().map(|v| v.clamp(-bound, bound)).collect()
}

/// `[r + α(λ̂ + ε − ŝ)]` clamped to `[−n/ε, n/ε]`.
pub fn update_alg2(r: &[f64], lambda_hat: &[f64], s_hat: &[f64], epsilon: f64, alpha: f64, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = r
        .iter()
        .zip(lambda_hat)
        .zip(s_hat)
        .map(|((r, l), s)| r + alpha * (l + epsilon - s))
        .collect();
    project_box(&raw, n as f64 / epsilon)
}

/// Constants of the fixed-epoch rule at full strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alg2Constants {
    /// `exp(c (n²/ε) ln(n/ε))`.
    pub epoch_length: f64,
    /// `ε² n⁻² / (72 (K+1)²)`.
    pub alpha: f64,
    /// Drift window `⌈48·16·72 n⁵/ε⁶⌉`.
    pub drift_window: f64,
}

pub fn theory_constants_alg2(n: usize, epsilon: f64, k: f64, c: f64) -> Result<Alg2Constants> {
    if n <= 3 {
        return Err(Error::InvalidInput(format!("the fixed-epoch constants assume n > 3, got n = {n}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let nf = n as f64;
    Ok(Alg2Constants {
        epoch_length: (c * nf * nf / epsilon * (nf / epsilon).ln()).exp(),
        alpha: alpha_alg2(n, epsilon, k),
        drift_window: (48.0 * 16.0 * 72.0 * nf.powi(5) / epsilon.powi(6)).ceil(),
    })
}

/// Step size `ε² n⁻² / (72 (K+1)²)`; defined for every `n`.
pub fn alpha_alg2(n: usize, epsilon: f64, k: f64) -> f64 {
    let nf = n as f64;
    epsilon * epsilon / (nf * nf) / (72.0 * (k + 1.0).powi(2))
}

/// `G(r) = F(r, λ + ε1) − ‖r − r*(λ + ε1)‖²`.
#[derive(Debug, Clone)]
pub struct LyapunovG {
    pub epsilon: f64,
    pub lambda_eps: Vec<f64>,
    pub r_star: Vec<f64>,
    family: IndependentSetFamily,
}

impl LyapunovG {
    /// Requires `λ + 2ε1` strictly inside the capacity region.
    pub fn new(family: &IndependentSetFamily, lambda: &RateVector, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        let adm = is_strictly_admissible(lambda, family, 2.0 * epsilon)?;
        if !adm.admissible {
            return Err(Error::Infeasible { max_slack: adm.max_slack - 2.0 * epsilon });
        }
        let lambda_eps: Vec<f64> = lambda.as_slice().iter().map(|l| l + epsilon).collect();
        let r_star = solve_r_star(family, &RateVector::new(lambda_eps.clone())?, DEFAULT_TOL)?.r.into_vec();
        Ok(Self { epsilon, lambda_eps, r_star, family: family.clone() })
    }

    pub fn eval(&self, r: &[f64]) -> f64 {
        let dist: f64 = r.iter().zip(&self.r_star).map(|(a, b)| (a - b).powi(2)).sum();
        objective_f(&self.family, r, &self.lambda_eps) - dist
    }

    /// `−16 n³ / ε²`, valid on the box `[−n/ε, n/ε]ⁿ`.
    pub fn lower_bound(&self) -> f64 {
        let n = self.family.n() as f64;
        -16.0 * n.powi(3) / (self.epsilon * self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SchedulerMode {
    Alg1,
    Alg2 { epsilon: f64, epoch_length: f64, alpha: f64 },
}

/// Per-run scheduler state. `j` counts completed updates; the next epoch
/// uses step index `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub j: u64,
    pub r: Vec<f64>,
    pub mode: SchedulerMode,
    /// Start time `L(j)` of the current epoch.
    pub epoch_start: f64,
}

impl SchedulerState {
    pub fn new(n: usize, mode: SchedulerMode) -> Self {
        Self { j: 0, r: vec![0.0; n], mode, epoch_start: 0.0 }
    }

    /// Length of the current epoch.
    pub fn epoch_length(&self) -> f64 {
        match self.mode {
            SchedulerMode::Alg1 => epoch_params_alg1(self.j + 1).expect("index is positive").0,
            SchedulerMode::Alg2 { epoch_length, .. } => epoch_length,
        }
    }

    /// Applies the rule to the rates observed over an epoch of length `length`,
    /// using `step` in place of `1/j` for the first rule when given.
    pub fn update(&mut self, lambda_hat: &[f64], s_hat: &[f64], length: f64, step: Option<f64>) {
        self.r = match self.mode {
            SchedulerMode::Alg1 => {
                let a = step.unwrap_or(1.0 / (self.j + 1) as f64);
                update_alg1_step(&self.r, lambda_hat, s_hat, a)
            }
            SchedulerMode::Alg2 { epsilon, alpha, .. } => update_alg2(&self.r, lambda_hat, s_hat, epsilon, alpha, self.r.len()),
        };
        self.j += 1;
        self.epoch_start += length;
    }
}
