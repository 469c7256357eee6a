//! Joint rate control and backoff learning.
//!
//! Each node picks its admitted rate `λ_i = argmax_y βU_i(y) − r_i y` and
//! moves its price `r_i` against the gap between admitted rate and service.
//! The prices are the dual variables of the entropy-regularised utility
//! program, and also the backoff exponents of the chain.

use serde::{Deserialize, Serialize};

use crate::conflict_graph::{max_weight_independent_set, IndependentSetFamily, Schedule};
use crate::gibbs::{entropy, log_partition, stationary_distribution};
use crate::{Error, Result};

/// Strictly concave increasing utility on `[0, 1]` with `U(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UtilityFunction {
    /// `ln(1 + y/δ)`.
    LogShifted { delta: f64 },
    /// `w ln(1 + y/δ)`.
    WeightedLogShifted { weight: f64, delta: f64 },
    /// `((δ + y)^{1−a} − δ^{1−a}) / (1 − a)`.
    AlphaFairShifted { a: f64, delta: f64 },
}

impl Default for UtilityFunction {
    fn default() -> Self {
        UtilityFunction::LogShifted { delta: 1.0 }
    }
}

impl UtilityFunction {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        match *self {
            UtilityFunction::LogShifted { delta } if !(delta > 0.0 && delta.is_finite()) => bad(format!("shift must be positive, got {delta}")),
            UtilityFunction::WeightedLogShifted { weight, delta } if !(weight > 0.0 && delta > 0.0 && weight.is_finite() && delta.is_finite()) => {
                bad(format!("weight and shift must be positive, got w = {weight}, delta = {delta}"))
            }
            UtilityFunction::AlphaFairShifted { a, delta } if !(a > 0.0 && a != 1.0 && a.is_finite() && delta > 0.0 && delta.is_finite()) => {
                bad(format!("alpha-fair needs a > 0, a != 1 and delta > 0, got a = {a}, delta = {delta}"))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        match *self {
            UtilityFunction::LogShifted { delta } => (y / delta).ln_1p(),
            UtilityFunction::WeightedLogShifted { weight, delta } => weight * (y / delta).ln_1p(),
            UtilityFunction::AlphaFairShifted { a, delta } => ((delta + y).powf(1.0 - a) - delta.powf(1.0 - a)) / (1.0 - a),
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match *self {
            UtilityFunction::LogShifted { delta } => 1.0 / (delta + y),
            UtilityFunction::WeightedLogShifted { weight, delta } => weight / (delta + y),
            UtilityFunction::AlphaFairShifted { a, delta } => (delta + y).powf(-a),
        }
    }
}

/// `V = max_i U_i'(0)`.
pub fn max_marginal_utility(utilities: &[UtilityFunction]) -> f64 {
    utilities.iter().map(|u| u.derivative(0.0)).fold(0.0, f64::max)
}

/// `argmax_{y ∈ [0,1]} βU(y) − r y`.
pub fn lambda_argmax(u: &UtilityFunction, beta: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    if beta * u.derivative(0.0) <= r {
        return 0.0;
    }
    if beta * u.derivative(1.0) >= r {
        return 1.0;
    }
    match *u {
        UtilityFunction::LogShifted { delta } => (beta / r - delta).clamp(0.0, 1.0),
        UtilityFunction::WeightedLogShifted { weight, delta } => (beta * weight / r - delta).clamp(0.0, 1.0),
        UtilityFunction::AlphaFairShifted { .. } => {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if beta * u.derivative(mid) > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

pub fn lambda_of_r(utilities: &[UtilityFunction], beta: f64, r: &[f64]) -> Vec<f64> {
    utilities.iter().zip(r).map(|(u, &x)| lambda_argmax(u, beta, x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CongestionMode {
    Cc1,
    Cc2 { alpha: f64, epoch_length: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionState {
    pub j: u64,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: f64,
    pub mode: CongestionMode,
}

impl CongestionState {
    /// `r(0) = 0`, `λ(0) = 1`.
    pub fn new(n: usize, beta: f64, mode: CongestionMode) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { j: 0, r: vec![0.0; n], lambda: vec![1.0; n], beta, mode })
    }
}

/// `r ← [r + step (λ − ŝ)]₊`, then `λ ← λ(r)`. `step` defaults to `1/j`.
pub fn update_cc1(state: &mut CongestionState, s_hat: &[f64], utilities: &[UtilityFunction], step: Option<f64>) {
    let a = step.unwrap_or(1.0 / (state.j + 1) as f64);
    for i in 0..state.r.len() {
        state.r[i] = (state.r[i] + a * (state.lambda[i] - s_hat[i])).max(0.0);
    }
    state.lambda = lambda_of_r(utilities, state.beta, &state.r);
    state.j += 1;
}

/// `r ← [r − αŝ]₊ + αλ`, then `λ ← λ(r)`.
pub fn update_cc2(state: &mut CongestionState, s_hat: &[f64], utilities: &[UtilityFunction], alpha: f64) {
    for i in 0..state.r.len() {
        state.r[i] = (state.r[i] - alpha * s_hat[i]).max(0.0) + alpha * state.lambda[i];
    }
    state.lambda = lambda_of_r(utilities, state.beta, &state.r);
    state.j += 1;
}

/// `D(r) = log Z(r) + Σ_i max_y (βU_i(y) − r_i y)`.
pub fn dual_value(family: &IndependentSetFamily, utilities: &[UtilityFunction], beta: f64, r: &[f64]) -> f64 {
    let inner: f64 = utilities
        .iter()
        .zip(r)
        .map(|(u, &x)| {
            let y = lambda_argmax(u, beta, x);
            beta * u.value(y) - x * y
        })
        .sum();
    log_partition(family, r) + inner
}

/// `H(μ) + β Σ U_i(λ_i)`.
pub fn primal_value(utilities: &[UtilityFunction], beta: f64, mu: &[f64], lambda: &[f64]) -> f64 {
    entropy(mu) + beta * utilities.iter().zip(lambda).map(|(u, &y)| u.value(y)).sum::<f64>()
}

fn dual_gradient(family: &IndependentSetFamily, utilities: &[UtilityFunction], beta: f64, r: &[f64]) -> Vec<f64> {
    let s = family.mean_schedule(&stationary_distribution(family, r).probs);
    s.iter().zip(lambda_of_r(utilities, beta, r)).map(|(s, l)| s - l).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DualOptimum {
    pub r_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    pub dual_value: f64,
    pub residual: f64,
    pub iterations: usize,
}

const DUAL_MAX_ITERS: usize = 200_000;

/// Projected gradient descent on `D` over `r ≥ 0` with Armijo backtracking and
/// Barzilai–Borwein trial steps. Stops when `‖r − [r − ∇D]₊‖∞ ≤ tol`.
pub fn solve_dual_optimum(family: &IndependentSetFamily, utilities: &[UtilityFunction], beta: f64, tol: f64) -> Result<DualOptimum> {
    check_utilities(family, utilities)?;
    let n = family.n();
    let proj_residual = |r: &[f64], g: &[f64]| -> f64 { r.iter().zip(g).map(|(r, g)| (r - (r - g).max(0.0)).abs()).fold(0.0, f64::max) };
    let mut r = vec![0.0; n];
    let mut d = dual_value(family, utilities, beta, &r);
    let mut g = dual_gradient(family, utilities, beta, &r);
    let mut step = 1.0;
    for it in 0..DUAL_MAX_ITERS {
        let residual = proj_residual(&r, &g);
        if residual <= tol {
            let pi = stationary_distribution(family, &r);
            return Ok(DualOptimum {
                mu_star: pi.probs,
                lambda_bar: lambda_of_r(utilities, beta, &r),
                dual_value: d,
                residual,
                iterations: it,
                r_star: r,
            });
        }
        let mut t = step;
        let (next, d_next) = loop {
            let trial: Vec<f64> = r.iter().zip(&g).map(|(r, g)| (r - t * g).max(0.0)).collect();
            let dt = dual_value(family, utilities, beta, &trial);
            let decrease: f64 = g.iter().zip(r.iter().zip(&trial)).map(|(g, (a, b))| g * (a - b)).sum();
            if dt <= d - 1e-4 * decrease || decrease <= 1e-15 || t < 1e-14 {
                break (trial, dt);
            }
            t *= 0.5;
        };
        let g_next = dual_gradient(family, utilities, beta, &next);
        let sy: f64 = next.iter().zip(&r).zip(g_next.iter().zip(&g)).map(|((a, b), (c, e))| (a - b) * (c - e)).sum();
        let ss: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-6, 1e6) } else { (2.0 * t).min(1e6) };
        r = next;
        d = d_next;
        g = g_next;
    }
    Err(Error::NotConverged { iterations: DUAL_MAX_ITERS, residual: proj_residual(&r, &g) })
}

fn check_utilities(family: &IndependentSetFamily, utilities: &[UtilityFunction]) -> Result<()> {
    if utilities.len() != family.n() {
        return Err(Error::InvalidInput(format!("{} utilities for {} nodes", utilities.len(), family.n())));
    }
    utilities.iter().try_for_each(UtilityFunction::validate)
}

pub fn total_utility(utilities: &[UtilityFunction], lambda: &[f64]) -> f64 {
    utilities.iter().zip(lambda).map(|(u, &y)| u.value(y)).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct UtilityOptimum {
    pub lambda_star: Vec<f64>,
    pub value: f64,
    /// Frank–Wolfe duality gap at exit.
    pub fw_gap: f64,
    pub iterations: usize,
}

const FW_MAX_ITERS: usize = 1_000_000;

/// Maximises `Σ U_i(λ_i)` over the capacity region by Frank–Wolfe with away
/// steps; the linear oracle is a maximum-weight schedule.
pub fn solve_utility_optimum(family: &IndependentSetFamily, utilities: &[UtilityFunction], tol: f64) -> Result<UtilityOptimum> {
    check_utilities(family, utilities)?;
    let n = family.n();
    // active vertices and their convex weights; start at the empty schedule
    let mut active: Vec<(Schedule, f64)> = vec![(Schedule::EMPTY, 1.0)];
    let mut x = vec![0.0; n];
    let grad = |x: &[f64]| -> Vec<f64> { utilities.iter().zip(x).map(|(u, &y)| u.derivative(y)).collect() };
    for it in 0..FW_MAX_ITERS {
        let g = grad(&x);
        let gx: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        let (fw_vertex, fw_val) = max_weight_independent_set(&g, family);
        let fw_gap = fw_val - gx;
        if fw_gap <= tol {
            return Ok(UtilityOptimum { value: total_utility(utilities, &x), lambda_star: x, fw_gap, iterations: it });
        }
        let (away_k, away_val) = active
            .iter()
            .enumerate()
            .map(|(k, (s, _))| (k, s.dot(&g)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let away_gap = gx - away_val;
        let (dir, max_step, toward) = if fw_gap >= away_gap {
            let v: Vec<f64> = (0..n).map(|i| f64::from(u8::from(fw_vertex.contains(i))) - x[i]).collect();
            (v, 1.0, true)
        } else {
            let w = active[away_k].1;
            let s = active[away_k].0;
            let v: Vec<f64> = (0..n).map(|i| x[i] - f64::from(u8::from(s.contains(i)))).collect();
            (v, w / (1.0 - w), false)
        };
        // exact line search: the directional derivative is decreasing
        let slope = |t: f64| -> f64 { utilities.iter().enumerate().map(|(i, u)| u.derivative(x[i] + t * dir[i]) * dir[i]).sum() };
        let gamma = if slope(max_step) >= 0.0 {
            max_step
        } else {
            let (mut lo, mut hi) = (0.0, max_step);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        if toward {
            for (_, w) in active.iter_mut() {
                *w *= 1.0 - gamma;
            }
            match active.iter_mut().find(|(s, _)| *s == fw_vertex) {
                Some(entry) => entry.1 += gamma,
                None => active.push((fw_vertex, gamma)),
            }
        } else {
            let s = active[away_k].0;
            for (_, w) in active.iter_mut() {
                *w *= 1.0 + gamma;
            }
            let entry = active.iter_mut().find(|(v, _)| *v == s).expect("away vertex is active");
            entry.1 -= gamma;
        }
        active.retain(|(_, w)| *w > 1e-15);
        let total: f64 = active.iter().map(|(_, w)| w).sum();
        x = vec![0.0; n];
        for (s, w) in active.iter_mut() {
            *w /= total;
            for i in s.nodes() {
                x[i] += *w;
            }
        }
    }
    Err(Error::NotConverged { iterations: FW_MAX_ITERS, residual: f64::NAN })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    /// `Σ U(λ*) − Σ U(λ̄)`.
    pub gap: f64,
    /// `log|I(G)| / β`.
    pub bound: f64,
    pub lambda_star: Vec<f64>,
    pub fw_gap: f64,
    pub holds: bool,
}

pub fn utility_gap_certificate(
    family: &IndependentSetFamily,
    utilities: &[UtilityFunction],
    beta: f64,
    lambda_bar: &[f64],
    tol: f64,
) -> Result<GapCertificate> {
    let opt = solve_utility_optimum(family, utilities, tol)?;
    let gap = opt.value - total_utility(utilities, lambda_bar);
    let bound = (family.len() as f64).ln() / beta;
    Ok(GapCertificate { gap, bound, holds: gap <= bound + tol, lambda_star: opt.lambda_star, fw_gap: opt.fw_gap })
}

/// `β = 4n/ε`.
pub fn default_beta(n: usize, epsilon: f64) -> f64 {
    4.0 * n as f64 / epsilon
}

/// `exp(c β n V) · c (βV + α) n² / (β ε)`.
pub fn cc2_theory_period(n: usize, beta: f64, v: f64, alpha: f64, epsilon: f64, c: f64) -> f64 {
    let nf = n as f64;
    (c * beta * nf * v).exp() * c * (beta * v + alpha) * nf * nf / (beta * epsilon)
}

/// Upper end of the price box `βV + α`.
pub fn cc2_price_bound(beta: f64, v: f64, alpha: f64) -> f64 {
    beta * v + alpha
}

/// Queue ceiling `T (βV + 2α) / α`.
pub fn cc2_queue_bound(epoch_length: f64, beta: f64, v: f64, alpha: f64) -> f64 {
    epoch_length * (beta * v + 2.0 * alpha) / alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflict_graph::{enumerate_independent_sets, ConflictGraph};
    use crate::gibbs::service_rates;
    use proptest::prelude::*;

    fn fam(name: &str) -> IndependentSetFamily {
        enumerate_independent_sets(&ConflictGraph::preset(name).unwrap()).unwrap()
    }

    const LOG: UtilityFunction = UtilityFunction::LogShifted { delta: 1.0 };

    fn grid_argmax(u: &UtilityFunction, beta: f64, r: f64) -> f64 {
        // coarse grid then golden-section refinement
        let f = |y: f64| beta * u.value(y) - r * y;
        let mut best = 0.0;
        for k in 0..=1000 {
            let y = k as f64 / 1000.0;
            if f(y) > f(best) {
                best = y;
            }
        }
        let (mut a, mut b) = ((best - 1e-3f64).max(0.0), (best + 1e-3f64).min(1.0));
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(lambda_argmax(&LOG, 3.0, 0.0), 1.0);
        assert_eq!(lambda_argmax(&LOG, 3.0, 3.0), 0.0);
        assert_eq!(lambda_argmax(&LOG, 3.0, 7.0), 0.0);
        for (beta, r) in [(10.0, 6.0), (4.0, 2.5), (1.0, 0.9)] {
            let y = lambda_argmax(&LOG, beta, r);
            assert!((y - (beta / r - 1.0)).abs() < 1e-15);
            assert!((y - grid_argmax(&LOG, beta, r)).abs() < 1e-6);
        }
        let af = UtilityFunction::AlphaFairShifted { a: 2.0, delta: 0.5 };
        for r in [0.5, 1.0, 3.0] {
            let y = lambda_argmax(&af, 2.0, r);
            assert!((y - grid_argmax(&af, 2.0, r)).abs() < 1e-6, "r = {r}");
            if y > 0.0 && y < 1.0 {
                assert!((2.0 * af.derivative(y) - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn utility_validation() {
        assert!(UtilityFunction::LogShifted { delta: 0.0 }.validate().is_err());
        assert!(UtilityFunction::AlphaFairShifted { a: 1.0, delta: 1.0 }.validate().is_err());
        assert!(UtilityFunction::AlphaFairShifted { a: 0.0, delta: 1.0 }.validate().is_err());
        assert!(UtilityFunction::WeightedLogShifted { weight: 2.0, delta: 1.0 }.validate().is_ok());
        assert_eq!(max_marginal_utility(&[LOG, UtilityFunction::WeightedLogShifted { weight: 2.0, delta: 0.5 }]), 4.0);
        for u in [LOG, UtilityFunction::AlphaFairShifted { a: 0.5, delta: 1.0 }] {
            assert_eq!(u.value(0.0), 0.0);
        }
    }

    #[test]
    fn cc1_examples() {
        let mut st = CongestionState::new(2, 10.0, CongestionMode::Cc1).unwrap();
        st.r = vec![2.0, 3.0];
        st.lambda = vec![0.4, 0.4];
        update_cc1(&mut st, &[0.4, 0.4], &[LOG, LOG], None);
        assert_eq!(st.r, vec![2.0, 3.0]);
        update_cc1(&mut st, &[5.0, 0.0], &[LOG, LOG], Some(1.0));
        assert_eq!(st.r[0], 0.0);
        assert_eq!(st.lambda[0], 1.0);
    }

    #[test]
    fn cc2_examples() {
        let mut st = CongestionState::new(1, 5.0, CongestionMode::Cc2 { alpha: 0.1, epoch_length: 10.0 }).unwrap();
        update_cc2(&mut st, &[1.0], &[LOG], 0.1);
        assert!((st.r[0] - 0.1).abs() < 1e-15);
        // above βV the admitted rate is 0 and the price cannot grow
        let mut st = CongestionState::new(1, 5.0, CongestionMode::Cc2 { alpha: 0.1, epoch_length: 10.0 }).unwrap();
        st.r = vec![5.05];
        st.lambda = lambda_of_r(&[LOG], 5.0, &st.r);
        assert_eq!(st.lambda, vec![0.0]);
        update_cc2(&mut st, &[0.2], &[LOG], 0.1);
        assert!(st.r[0] <= 5.05);
    }

    #[test]
    fn cc2_long_run_stays_in_box() {
        let f = fam("cycle5");
        let us = [LOG; 5];
        let beta = 50.0;
        let alpha = 0.1;
        let mut st = CongestionState::new(5, beta, CongestionMode::Cc2 { alpha, epoch_length: 100.0 }).unwrap();
        for _ in 0..10_000 {
            let s = service_rates(&f, &st.r);
            update_cc2(&mut st, &s, &us, alpha);
            assert!(st.r.iter().all(|&x| (0.0..=cc2_price_bound(beta, 1.0, alpha)).contains(&x)));
        }
    }

    #[test]
    fn dual_at_zero() {
        let f = fam("cycle5");
        let v = dual_value(&f, &[LOG; 5], 3.0, &[0.0; 5]);
        assert!((v - (11f64.ln() + 3.0 * 5.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn dual_single_node_root() {
        let f = fam("single");
        let opt = solve_dual_optimum(&f, &[LOG], 10.0, 1e-10).unwrap();
        // root of e^r/(1+e^r) = 10/r − 1 by bisection
        let h = |r: f64| r.exp() / (1.0 + r.exp()) - (10.0 / r - 1.0);
        let (mut a, mut b) = (5.0, 10.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if h(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((opt.r_star[0] - a).abs() <= 1e-8);
        let s = service_rates(&f, &opt.r_star);
        assert!((s[0] - opt.lambda_bar[0]).abs() <= 1e-8);
    }

    #[test]
    fn strong_duality_on_presets() {
        for name in ["single", "clique2", "path3", "cycle5"] {
            let f = fam(name);
            let us = vec![LOG; f.n()];
            let opt = solve_dual_optimum(&f, &us, 10.0, 1e-9).unwrap();
            let primal = primal_value(&us, 10.0, &opt.mu_star, &opt.lambda_bar);
            assert!((primal - opt.dual_value).abs() <= 1e-6, "{name}");
            assert!(opt.lambda_bar.iter().all(|l| (0.0..=1.0).contains(l)));
            let s = f.mean_schedule(&opt.mu_star);
            assert!(s.iter().zip(&opt.lambda_bar).all(|(s, l)| *s >= l - 1e-8));
        }
    }

    #[test]
    fn utility_optimum_examples() {
        let single = solve_utility_optimum(&fam("single"), &[LOG], 1e-8).unwrap();
        assert!((single.lambda_star[0] - 1.0).abs() < 1e-12);
        let c2 = solve_utility_optimum(&fam("clique2"), &[LOG, LOG], 1e-8).unwrap();
        assert!(c2.fw_gap <= 1e-8);
        assert!((c2.lambda_star[0] - 0.5).abs() < 1e-4 && (c2.lambda_star[1] - 0.5).abs() < 1e-4);
        // grid search over the simplex edge x0 + x1 = 1
        let best = (0..=10_000).map(|k| k as f64 / 10_000.0).map(|a| LOG.value(a) + LOG.value(1.0 - a)).fold(f64::NEG_INFINITY, f64::max);
        assert!((c2.value - best).abs() < 1e-8);
    }

    #[test]
    fn gap_certificate_on_clique() {
        let f = fam("clique2");
        let us = [LOG, LOG];
        let opt = solve_dual_optimum(&f, &us, 10.0, 1e-10).unwrap();
        let cert = utility_gap_certificate(&f, &us, 10.0, &opt.lambda_bar, 1e-8).unwrap();
        assert!((cert.bound - 3f64.ln() / 10.0).abs() < 1e-15);
        assert!(cert.holds && cert.gap >= -1e-8);
        let big = utility_gap_certificate(&f, &us, 1e6, &opt.lambda_bar, 1e-8).unwrap();
        assert!(big.bound < 2e-6);
    }

    #[test]
    fn cc1_oracle_reaches_dual_optimum() {
        let f = fam("clique2");
        let us = [LOG, LOG];
        let opt = solve_dual_optimum(&f, &us, 10.0, 1e-10).unwrap();
        let mut st = CongestionState::new(2, 10.0, CongestionMode::Cc1).unwrap();
        for j in 1..=5_000u64 {
            let s = service_rates(&f, &st.r);
            update_cc1(&mut st, &s, &us, Some(10.0 / j as f64));
        }
        for i in 0..2 {
            assert!((st.r[i] - opt.r_star[i]).abs() <= 1e-2);
        }
    }

    #[test]
    fn theory_formulas() {
        assert_eq!(default_beta(5, 0.4), 50.0);
        assert_eq!(cc2_queue_bound(100.0, 50.0, 1.0, 0.1), 100.0 * 50.2 / 0.1);
        let t = cc2_theory_period(2, 1.0, 1.0, 0.1, 0.5, 1.0);
        assert!((t - 2f64.exp() * 1.1 * 4.0 / 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn argmax_is_optimal(beta in 0.5f64..50.0, r in 0.0f64..60.0, ys in proptest::collection::vec(0.0f64..1.0, 20), a in 0.2f64..3.0) {
            prop_assume!((a - 1.0).abs() > 1e-3);
            for u in [LOG, UtilityFunction::WeightedLogShifted { weight: 2.0, delta: 0.3 }, UtilityFunction::AlphaFairShifted { a, delta: 0.7 }] {
                let y = lambda_argmax(&u, beta, r);
                prop_assert!((0.0..=1.0).contains(&y));
                let best = beta * u.value(y) - r * y;
                for &z in &ys {
                    prop_assert!(best >= beta * u.value(z) - r * z - 1e-9);
                }
            }
        }

        #[test]
        fn dual_convex_on_segments(a in proptest::collection::vec(0.0f64..20.0, 5), b in proptest::collection::vec(0.0f64..20.0, 5)) {
            let f = fam("cycle5");
            let us = [LOG; 5];
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let lhs = dual_value(&f, &us, 10.0, &mid);
            let rhs = 0.5 * (dual_value(&f, &us, 10.0, &a) + dual_value(&f, &us, 10.0, &b));
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn weak_duality(r in proptest::collection::vec(0.0f64..20.0, 3)) {
            let f = fam("path3");
            let us = [LOG; 3];
            let pi = stationary_distribution(&f, &r);
            let s = f.mean_schedule(&pi.probs);
            // μ = π^r and λ = s(r) is primal feasible
            let primal = primal_value(&us, 10.0, &pi.probs, &s);
            prop_assert!(dual_value(&f, &us, 10.0, &r) >= primal - 1e-9);
        }
    }
}
