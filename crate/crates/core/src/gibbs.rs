//! Product-form stationary law of the CSMA chain and the concave objective
//! whose maximiser gives the backoff vector matching a target service rate.

use std::fmt::Write as _;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conflict_graph::{max_slack, IndependentSetFamily, RateVector};
use crate::{Error, Result};

/// Log backoff rates `r_i = ln R_i`. A masked node carries `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BackoffVector(Vec<f64>);

impl BackoffVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.is_nan() || **v == f64::INFINITY) {
            return Err(Error::InvalidInput(format!("backoff entry {i} = {v} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `max_i |r_i|` over unmasked entries.
    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.0)
    }
}

impl Deref for BackoffVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn sup_norm(r: &[f64]) -> f64 {
    r.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
}

/// `π^r` over a family, in the family's schedule order.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDistribution {
    pub probs: Vec<f64>,
    pub log_z: f64,
}

impl GibbsDistribution {
    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().filter(|&p| p > 0.0).fold(1.0, f64::min)
    }

    /// `mask,probability` rows with a header line.
    pub fn to_csv(&self, family: &IndependentSetFamily) -> String {
        let mut out = String::from("mask,probability\n");
        for (s, p) in family.schedules().iter().zip(&self.probs) {
            let _ = writeln!(out, "{},{:.17e}", s.mask(), p);
        }
        out
    }
}

fn log_weights(family: &IndependentSetFamily, r: &[f64]) -> Vec<f64> {
    family.schedules().iter().map(|s| s.dot(r)).collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σ_σ exp(σ·r)`.
pub fn log_partition(family: &IndependentSetFamily, r: &[f64]) -> f64 {
    log_sum_exp(&log_weights(family, r))
}

pub fn stationary_distribution(family: &IndependentSetFamily, r: &[f64]) -> GibbsDistribution {
    let w = log_weights(family, r);
    let log_z = log_sum_exp(&w);
    let mut probs: Vec<f64> = w.iter().map(|x| (x - log_z).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    GibbsDistribution { probs, log_z }
}

/// `s_i(r) = P_{π^r}(σ_i = 1)`.
pub fn service_rates(family: &IndependentSetFamily, r: &[f64]) -> Vec<f64> {
    family.mean_schedule(&stationary_distribution(family, r).probs)
}

/// `λ·r` skipping zero-rate coordinates, so masked `-inf` entries contribute nothing.
fn rate_dot(lambda: &[f64], r: &[f64]) -> f64 {
    lambda.iter().zip(r).filter(|(l, _)| **l != 0.0).map(|(l, x)| l * x).sum()
}

/// `F(r, λ) = λ·r − log Z(r)`.
pub fn objective_f(family: &IndependentSetFamily, r: &[f64], lambda: &[f64]) -> f64 {
    rate_dot(lambda, r) - log_partition(family, r)
}

/// `∇F = λ − s(r)`.
pub fn gradient_f(family: &IndependentSetFamily, r: &[f64], lambda: &[f64]) -> Vec<f64> {
    let s = service_rates(family, r);
    lambda.iter().zip(s).map(|(l, s)| l - s).collect()
}

/// Covariance of `σ` under `π^r`.
pub fn covariance(family: &IndependentSetFamily, r: &[f64]) -> DMatrix<f64> {
    let n = family.n();
    let pi = stationary_distribution(family, r);
    let mean = family.mean_schedule(&pi.probs);
    let mut second = DMatrix::<f64>::zeros(n, n);
    for (s, &p) in family.schedules().iter().zip(&pi.probs) {
        for i in s.nodes() {
            for j in s.nodes() {
                second[(i, j)] += p;
            }
        }
    }
    DMatrix::from_fn(n, n, |i, j| second[(i, j)] - mean[i] * mean[j])
}

/// Hessian of `F` in `r`: the negated covariance of `σ` under `π^r`.
pub fn hessian_f(family: &IndependentSetFamily, r: &[f64]) -> DMatrix<f64> {
    -covariance(family, r)
}

/// Shannon entropy with natural log and `0 log 0 = 0`.
pub fn entropy(nu: &[f64]) -> f64 {
    -nu.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `d(ν, π) = Σ ν log(ν/π)`.
pub fn kl_divergence(nu: &[f64], pi: &GibbsDistribution) -> f64 {
    nu.iter()
        .zip(&pi.probs)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, p)| if *p > 0.0 { v * (v / p).ln() } else { f64::INFINITY })
        .sum()
}

/// `log Z(r) − (E_μ[σ·r] + H(μ))`, nonnegative and zero only at `μ = π^r`.
pub fn variational_gap(family: &IndependentSetFamily, mu: &[f64], r: &[f64]) -> f64 {
    let energy: f64 = family
        .schedules()
        .iter()
        .zip(mu)
        .filter(|(_, m)| **m > 0.0)
        .map(|(s, m)| m * s.dot(r))
        .sum();
    log_partition(family, r) - energy - entropy(mu)
}

/// Result of the fixed-point solve.
#[derive(Debug, Clone, Serialize)]
pub struct RStar {
    pub r: BackoffVector,
    /// Zero-rate nodes, pinned at `-inf`.
    pub masked: Vec<usize>,
    /// Largest `ε` with `λ + ε·1 ∈ Λ` over the unmasked nodes.
    pub slack: f64,
    /// `log|I(G)| / min(ε, λ_min)`.
    pub norm_bound: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub const DEFAULT_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 1000;
const ARMIJO: f64 = 1e-4;

/// Finds `r*(λ)` with `s(r*) = λ` by damped Newton ascent on `F(·, λ)`.
pub fn solve_r_star(family: &IndependentSetFamily, lambda: &RateVector, tol: f64) -> Result<RStar> {
    let n = family.n();
    if lambda.len() != n {
        return Err(Error::InvalidInput(format!("rate vector has length {}, graph has {n} nodes", lambda.len())));
    }
    let lam = lambda.as_slice();
    let active: Vec<usize> = (0..n).filter(|&i| lam[i] > 0.0).collect();
    let masked: Vec<usize> = (0..n).filter(|&i| lam[i] == 0.0).collect();
    let active_mask = active.iter().fold(0u64, |m, &i| m | 1 << i);

    let mut r = vec![f64::NEG_INFINITY; n];
    if active.is_empty() {
        return Ok(RStar { r: BackoffVector(r), masked, slack: f64::INFINITY, norm_bound: 0.0, residual: 0.0, iterations: 0 });
    }
    let (slack, _, _) = max_slack(family, lam, active_mask)?;
    if slack <= 0.0 {
        return Err(Error::Infeasible { max_slack: slack });
    }
    let lambda_min = active.iter().map(|&i| lam[i]).fold(f64::INFINITY, f64::min);
    let norm_bound = (family.len() as f64).ln() / slack.min(lambda_min);

    let sub = family.restrict(active_mask);
    for &i in &active {
        r[i] = 0.0;
    }
    let eval = |r: &[f64]| objective_f(&sub, r, lam);
    let mut f = eval(&r);
    for it in 0..MAX_ITERS {
        let g = gradient_f(&sub, &r, lam);
        let g_a = DVector::from_iterator(active.len(), active.iter().map(|&i| g[i]));
        let residual = g_a.amax();
        if residual <= tol {
            return Ok(RStar { r: BackoffVector(r), masked, slack, norm_bound, residual, iterations: it });
        }
        let norm = sup_norm(&r);
        if norm > 2.0 * norm_bound {
            return Err(Error::Diverged { norm, bound: 2.0 * norm_bound });
        }
        let cov = covariance(&sub, &r);
        let cov_a = DMatrix::from_fn(active.len(), active.len(), |a, b| cov[(active[a], active[b])]);
        let dir = match cov_a.cholesky() {
            Some(ch) => {
                let d = ch.solve(&g_a);
                if d.dot(&g_a) > 0.0 { d } else { g_a.clone() }
            }
            None => g_a.clone(),
        };
        let slope = dir.dot(&g_a);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = r.clone();
            for (k, &i) in active.iter().enumerate() {
                trial[i] += t * dir[k];
            }
            let ft = eval(&trial);
            // below roundoff the Armijo test is meaningless; take the step
            if ft >= f + ARMIJO * t * slope || t * slope < 1e-14 {
                r = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged { iterations: it, residual });
        }
    }
    let g = gradient_f(&sub, &r, lam);
    let residual = active.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
    Err(Error::NotConverged { iterations: MAX_ITERS, residual })
}
