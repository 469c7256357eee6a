//! Glauber kernel, spectral and conductance diagnostics, distances.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::conflict_graph::IndependentSetFamily;
use crate::gibbs::{stationary_distribution, sup_norm, GibbsDistribution};
use crate::{Error, Result};

/// Largest state space on which subset-enumerating conductance runs.
pub const CONDUCTANCE_CAP: usize = 20;

/// Discrete single-site chain on the family; one step per tick of a
/// rate-`total_rate` Poisson clock reproduces the continuous chain.
#[derive(Debug, Clone)]
pub struct GlauberKernel {
    pub matrix: DMatrix<f64>,
    pub r: Vec<f64>,
    /// `R = Σ_k max(exp(r_k), 1)`.
    pub total_rate: f64,
}

impl GlauberKernel {
    /// `R(P − I)`, the generator of the continuous chain.
    pub fn generator(&self) -> DMatrix<f64> {
        let m = self.matrix.nrows();
        (&self.matrix - DMatrix::identity(m, m)) * self.total_rate
    }
}

/// Pick node `i` with probability `max(e^{r_i}, 1)/R`, then switch it off
/// with probability `min(e^{-r_i}, 1)` or on (if unblocked) with probability
/// `min(e^{r_i}, 1)`. Unblocked is read off the family: `σ ∪ {i}` must be a member.
pub fn build_glauber_kernel(family: &IndependentSetFamily, r: &[f64]) -> Result<GlauberKernel> {
    if r.len() != family.n() || r.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("kernel needs a finite backoff vector matching the graph".into()));
    }
    let m = family.len();
    let up: Vec<f64> = r.iter().map(|x| x.exp()).collect();
    let total_rate: f64 = up.iter().map(|u| u.max(1.0)).sum();
    let mut p = DMatrix::zeros(m, m);
    for (a, &s) in family.schedules().iter().enumerate() {
        let mut out = 0.0;
        for i in 0..family.n() {
            let (dest, prob) = if s.contains(i) {
                (family.position(s.without(i)), 1.0 / total_rate)
            } else {
                (family.position(s.with(i)), up[i] / total_rate)
            };
            if let Some(b) = dest {
                p[(a, b)] += prob;
                out += prob;
            }
        }
        p[(a, a)] += (1.0 - out).max(0.0);
    }
    Ok(GlauberKernel { matrix: p, r: r.to_vec(), total_rate })
}

/// Eigenvalues of a `π`-reversible kernel, descending, via `D^{1/2} P D^{-1/2}`.
pub fn spectrum(matrix: &DMatrix<f64>, pi: &[f64]) -> Vec<f64> {
    let m = matrix.nrows();
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let s = DMatrix::from_fn(m, m, |i, j| {
        let a = sq[i] * matrix[(i, j)] / sq[j];
        let b = sq[j] * matrix[(j, i)] / sq[i];
        0.5 * (a + b)
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Second-largest eigenvalue modulus: `max |λ|` over all eigenvalues but the top one.
pub fn spectral_gap(kernel: &GlauberKernel, pi: &GibbsDistribution) -> f64 {
    spectrum(&kernel.matrix, &pi.probs).iter().skip(1).fold(0.0, |m, x| m.max(x.abs()))
}

/// Second-largest eigenvalue, signed. `1 − λ₂` is the gap that governs the
/// continuous chain `e^{Rt(P−I)}`.
pub fn second_eigenvalue(kernel: &GlauberKernel, pi: &GibbsDistribution) -> f64 {
    spectrum(&kernel.matrix, &pi.probs).get(1).copied().unwrap_or(0.0)
}

/// `min_S Q(S, S^c) / (π(S) π(S^c))` over nonempty proper subsets, with
/// `Q(A, B) = Σ_{σ∈A, ρ∈B} π_σ W_σρ`.
pub fn conductance(matrix: &DMatrix<f64>, pi: &[f64]) -> Result<f64> {
    let m = pi.len();
    if m > CONDUCTANCE_CAP {
        return Err(Error::TooManyStates { size: m, cap: CONDUCTANCE_CAP });
    }
    if m < 2 {
        return Ok(f64::INFINITY);
    }
    let flow = DMatrix::from_fn(m, m, |i, j| pi[i] * matrix[(i, j)]);
    // Gray-code walk over subsets; toggling one state updates Q in O(m).
    let mut inside = vec![false; m];
    let mut mass = 0.0;
    let mut cut = 0.0;
    let mut best = f64::INFINITY;
    for step in 1u64..(1u64 << m) {
        let k = step.trailing_zeros() as usize;
        let mut to_in = 0.0;
        let mut to_out = 0.0;
        for j in 0..m {
            if j == k {
                continue;
            }
            if inside[j] {
                to_in += flow[(k, j)] + flow[(j, k)];
            } else {
                to_out += flow[(k, j)] + flow[(j, k)];
            }
        }
        // Q is symmetric for reversible kernels; track the two-way cut and halve.
        if inside[k] {
            inside[k] = false;
            mass -= pi[k];
            cut += to_in - to_out;
        } else {
            inside[k] = true;
            mass += pi[k];
            cut += to_out - to_in;
        }
        let members = inside.iter().filter(|&&b| b).count();
        if members == 0 || members == m {
            continue;
        }
        let outside: f64 = 1.0 - mass;
        let denom = mass * outside;
        if denom > 0.0 {
            best = best.min(0.5 * cut / denom);
        }
    }
    Ok(best)
}

/// Conductance of `W = exp(R(P − I))`, the unit-time continuous kernel.
pub fn conductance_continuous(kernel: &GlauberKernel, pi: &GibbsDistribution) -> Result<f64> {
    if pi.probs.len() > CONDUCTANCE_CAP {
        return Err(Error::TooManyStates { size: pi.probs.len(), cap: CONDUCTANCE_CAP });
    }
    conductance(&kernel.generator().exp(), &pi.probs)
}

pub fn tv_distance(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `sqrt(Σ μ (ν/μ − 1)²)` with reference `μ`.
pub fn chi2_distance(mu: &[f64], nu: &[f64]) -> f64 {
    mu.iter()
        .zip(nu)
        .map(|(&m, &v)| {
            if m > 0.0 {
                m * (v / m - 1.0).powi(2)
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingEstimate {
    /// `exp(c (n ‖r‖∞ + n)) · ln(1/δ)`.
    pub theory_bound: f64,
    /// `ln(1/(δ π_min)) / (R (1 − λ₂))`.
    pub spectral_estimate: f64,
}

pub fn mixing_time_estimate(family: &IndependentSetFamily, r: &[f64], delta: f64, c: f64) -> Result<MixingEstimate> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let kernel = build_glauber_kernel(family, r)?;
    let pi = stationary_distribution(family, r);
    Ok(mixing_from_parts(family.n(), r, delta, c, &kernel, &pi))
}

fn mixing_from_parts(n: usize, r: &[f64], delta: f64, c: f64, kernel: &GlauberKernel, pi: &GibbsDistribution) -> MixingEstimate {
    let n = n as f64;
    let theory_bound = (c * (n * sup_norm(r) + n)).exp() * (1.0 / delta).ln();
    let gap = 1.0 - second_eigenvalue(kernel, pi);
    let spectral_estimate = (1.0 / (delta * pi.min_prob())).ln() / (kernel.total_rate * gap);
    MixingEstimate { theory_bound, spectral_estimate }
}

/// Law at time `t` of the continuous chain started from `mu0`, as a
/// Poisson(`Rt`) mixture of kernel powers.
pub fn transient_distribution(kernel: &GlauberKernel, mu0: &[f64], t: f64) -> Vec<f64> {
    let m = mu0.len();
    let rt = kernel.total_rate * t;
    let mut row = nalgebra::RowDVector::from_row_slice(mu0);
    let mut out = vec![0.0; m];
    let mut log_w = -rt;
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        let w = log_w.exp();
        for (o, x) in out.iter_mut().zip(row.iter()) {
            *o += w * x;
        }
        acc += w;
        k += 1;
        if (acc >= 1.0 - 1e-16 && k as f64 > rt) || k > 100_000 {
            break;
        }
        row = &row * &kernel.matrix;
        log_w += rt.ln() - (k as f64).ln();
    }
    out
}

/// Summary record for one backoff vector.
#[derive(Debug, Clone, Serialize)]
pub struct ChainDiagnostics {
    pub states: usize,
    pub total_rate: f64,
    pub lambda_max: f64,
    pub second_eigenvalue: f64,
    /// Conductance of `P`; absent above [`CONDUCTANCE_CAP`] states.
    pub conductance: Option<f64>,
    /// Conductance of `exp(R(P − I))`; absent above [`CONDUCTANCE_CAP`] states.
    pub conductance_continuous: Option<f64>,
    /// `1 − Φ²/2` for `Φ` of `P`.
    pub cheeger_upper: Option<f64>,
    /// `Φ ≤ √2`, i.e. the Cheeger bound is non-vacuous.
    pub cheeger_applicable: bool,
    pub mixing: MixingEstimate,
}

pub fn chain_diagnostics(family: &IndependentSetFamily, r: &[f64], delta: f64, c: f64) -> Result<ChainDiagnostics> {
    let kernel = build_glauber_kernel(family, r)?;
    let pi = stationary_distribution(family, r);
    let ev = spectrum(&kernel.matrix, &pi.probs);
    let lambda_max = ev.iter().skip(1).fold(0.0, |m: f64, x| m.max(x.abs()));
    let (phi, phi_w) = if family.len() <= CONDUCTANCE_CAP {
        (Some(conductance(&kernel.matrix, &pi.probs)?), Some(conductance_continuous(&kernel, &pi)?))
    } else {
        (None, None)
    };
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(ChainDiagnostics {
        states: family.len(),
        total_rate: kernel.total_rate,
        lambda_max,
        second_eigenvalue: ev.get(1).copied().unwrap_or(0.0),
        conductance: phi,
        conductance_continuous: phi_w,
        cheeger_upper: phi.map(|p| 1.0 - p * p / 2.0),
        cheeger_applicable: phi.is_some_and(|p| p <= std::f64::consts::SQRT_2),
        mixing: mixing_from_parts(family.n(), r, delta, c, &kernel, &pi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflict_graph::{enumerate_independent_sets, ConflictGraph};
    use proptest::prelude::*;

    fn fam(name: &str) -> IndependentSetFamily {
        enumerate_independent_sets(&ConflictGraph::preset(name).unwrap()).unwrap()
    }

    #[test]
    fn single_node_kernel() {
        let f = fam("single");
        let k = build_glauber_kernel(&f, &[0.0]).unwrap();
        assert_eq!(k.total_rate, 1.0);
        // selection prob 1 and flip prob 1 in both states
        assert_eq!(k.matrix, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let pi = stationary_distribution(&f, &[0.0]);
        let ev = spectrum(&k.matrix, &pi.probs);
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] + 1.0).abs() < 1e-15);
        assert!((spectral_gap(&k, &pi) - 1.0).abs() < 1e-15);
        assert!((conductance(&k.matrix, &pi.probs).unwrap() - 2.0).abs() < 1e-15);
        let est = mixing_time_estimate(&f, &[0.0], 0.01, 1.0).unwrap();
        assert!((est.spectral_estimate - 200f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn blocked_moves_are_zero() {
        let f = fam("path3");
        let k = build_glauber_kernel(&f, &[0.3, -0.2, 1.0]).unwrap();
        let a = f.position(crate::Schedule::from_mask(0b001)).unwrap();
        let b = f.position(crate::Schedule::from_mask(0b011));
        assert!(b.is_none());
        let c = f.position(crate::Schedule::from_mask(0b101)).unwrap();
        let d = f.position(crate::Schedule::from_mask(0b100)).unwrap();
        // {0} -> {0,2} allowed, {0} -> {2} differs in two nodes
        assert!(k.matrix[(a, c)] > 0.0);
        assert_eq!(k.matrix[(a, d)], 0.0);
    }

    #[test]
    fn distances_trivial() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(tv_distance(&p, &p), 0.0);
        assert_eq!(chi2_distance(&p, &p), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn generator_matches_continuous_rates() {
        let f = fam("clique2");
        let r = [0.7, -1.2];
        let k = build_glauber_kernel(&f, &r).unwrap();
        let q = k.generator();
        // ∅ -> {0} at e^{r_0}, {0} -> ∅ at 1
        assert!((q[(0, 1)] - 0.7f64.exp()).abs() < 1e-12);
        assert!((q[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((q[(0, 2)] - (-1.2f64).exp()).abs() < 1e-12);
        assert_eq!(q[(1, 2)], 0.0);
    }

    #[test]
    fn uniformisation_matches_matrix_exponential() {
        for name in ["clique2", "path3", "cycle5"] {
            let f = fam(name);
            let r: Vec<f64> = (0..f.n()).map(|i| 0.4 * i as f64 - 0.5).collect();
            let k = build_glauber_kernel(&f, &r).unwrap();
            let mut mu0 = vec![0.0; f.len()];
            mu0[0] = 1.0;
            for t in [0.1, 1.0, 3.7] {
                let exact = nalgebra::RowDVector::from_row_slice(&mu0) * (k.generator() * t).exp();
                let uni = transient_distribution(&k, &mu0, t);
                for (a, b) in exact.iter().zip(&uni) {
                    assert!((a - b).abs() <= 1e-8, "{name} t={t}");
                }
            }
        }
    }

    #[test]
    fn power_iteration_agrees() {
        let f = fam("path3");
        let r = [0.3, -0.4, 0.8];
        let k = build_glauber_kernel(&f, &r).unwrap();
        let pi = stationary_distribution(&f, &r);
        let m = f.len();
        let sq: Vec<f64> = pi.probs.iter().map(|p| p.sqrt()).collect();
        let s = DMatrix::from_fn(m, m, |i, j| sq[i] * k.matrix[(i, j)] / sq[j]);
        let top = nalgebra::DVector::from_vec(sq.clone());
        let deflated = &s - &top * top.transpose();
        let mut v = nalgebra::DVector::from_fn(m, |i, _| 1.0 + i as f64);
        let mut est = 0.0;
        for _ in 0..20_000 {
            let w = &deflated * &v;
            est = w.norm() / v.norm();
            v = w / est;
        }
        assert!((est - spectral_gap(&k, &pi)).abs() <= 1e-8);
    }

    #[test]
    fn conductance_cap() {
        let f = fam("grid3x3");
        let k = build_glauber_kernel(&f, &[0.0; 9]).unwrap();
        let pi = stationary_distribution(&f, &[0.0; 9]);
        assert!(matches!(conductance(&k.matrix, &pi.probs), Err(Error::TooManyStates { size: 63, cap: 20 })));
        let d = chain_diagnostics(&f, &[0.0; 9], 0.01, 1.0).unwrap();
        assert!(d.conductance.is_none());
        assert!(d.lambda_max < 1.0);
    }

    fn brute_conductance(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
        let m = pi.len();
        let mut best = f64::INFINITY;
        for set in 1u32..(1 << m) - 1 {
            let mut q = 0.0;
            let mut ps = 0.0;
            for a in 0..m {
                if set >> a & 1 == 1 {
                    ps += pi[a];
                    for b in 0..m {
                        if set >> b & 1 == 0 {
                            q += pi[a] * p[(a, b)];
                        }
                    }
                }
            }
            best = best.min(q / (ps * (1.0 - ps)));
        }
        best
    }

    fn arb_case() -> impl Strategy<Value = (ConflictGraph, Vec<f64>)> {
        (1usize..=6).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let len = pairs.len();
            (Just(pairs), proptest::collection::vec(any::<bool>(), len), proptest::collection::vec(-2.0f64..2.0, n)).prop_map(
                move |(pairs, keep, r)| {
                    let edges: Vec<_> = pairs.into_iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| e).collect();
                    (ConflictGraph::new(n, &edges).unwrap(), r)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn kernel_is_reversible_and_stochastic((g, r) in arb_case()) {
            let f = enumerate_independent_sets(&g).unwrap();
            let k = build_glauber_kernel(&f, &r).unwrap();
            let pi = stationary_distribution(&f, &r);
            let m = f.len();
            for a in 0..m {
                prop_assert!((k.matrix.row(a).sum() - 1.0).abs() <= 1e-12);
                for b in 0..m {
                    prop_assert!(k.matrix[(a, b)] >= 0.0);
                    let lhs = pi.probs[a] * k.matrix[(a, b)];
                    let rhs = pi.probs[b] * k.matrix[(b, a)];
                    prop_assert!((lhs - rhs).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn cheeger_holds_for_signed_gap((g, r) in arb_case()) {
            let f = enumerate_independent_sets(&g).unwrap();
            prop_assume!(f.len() <= 12);
            let k = build_glauber_kernel(&f, &r).unwrap();
            let pi = stationary_distribution(&f, &r);
            let phi = conductance(&k.matrix, &pi.probs).unwrap();
            prop_assert!(phi > 0.0);
            prop_assert!((phi - brute_conductance(&k.matrix, &pi.probs)).abs() <= 1e-10 * phi.max(1.0));
            if phi <= std::f64::consts::SQRT_2 {
                prop_assert!(second_eigenvalue(&k, &pi) <= 1.0 - phi * phi / 2.0 + 1e-9);
            }
        }

        #[test]
        fn chi2_dominates_twice_tv(a in proptest::collection::vec(0.01f64..1.0, 2..12), b in proptest::collection::vec(0.0f64..1.0, 12)) {
            let sa: f64 = a.iter().sum();
            let mu: Vec<f64> = a.iter().map(|x| x / sa).collect();
            let raw = &b[..mu.len()];
            let sb: f64 = raw.iter().sum::<f64>() + 1e-12;
            let nu: Vec<f64> = raw.iter().map(|x| x / sb).collect();
            prop_assert!(chi2_distance(&mu, &nu) >= 2.0 * tv_distance(&mu, &nu) - 1e-12);
        }

        #[test]
        fn mixing_estimate_below_theory_bound((g, r) in arb_case(), delta in 0.001f64..0.5) {
            let f = enumerate_independent_sets(&g).unwrap();
            let est = mixing_time_estimate(&f, &r, delta, 1.0).unwrap();
            prop_assert!(est.spectral_estimate <= est.theory_bound);
            let tighter = mixing_time_estimate(&f, &r, delta / 2.0, 1.0).unwrap();
            prop_assert!(tighter.spectral_estimate > est.spectral_estimate);
            prop_assert!(tighter.theory_bound > est.theory_bound);
        }
    }
}
