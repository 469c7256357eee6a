//! Experiment orchestration.
//!
//! One run freezes `r(j)` for an epoch, drives the chain through it one unit
//! interval at a time, feeds the queues and the service accumulator, applies
//! the selected update rule and emits one [`MetricsRecord`]. The chain state
//! carries over between epochs.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::chain::CtmcSampler;
use crate::conflict_graph::{enumerate_independent_sets, ConflictGraph, IndependentSetFamily, RateVector, Schedule, DEFAULT_EXACT_CAP};
use crate::congestion::{
    cc2_theory_period, cc2_price_bound, cc2_queue_bound, default_beta, lambda_of_r, max_marginal_utility, solve_dual_optimum,
    total_utility, update_cc1, update_cc2, utility_gap_certificate, CongestionMode, CongestionState, GapCertificate, UtilityFunction,
};
use crate::gibbs::{gradient_f, service_rates, solve_r_star, DEFAULT_TOL};
use crate::scheduler::{alpha_alg2, epoch_params_alg1, theory_constants_alg2, update_alg1_step, update_alg2};
use crate::seeding::{stream_rng, Stream};
use crate::traffic::{sample_unit_arrivals, ArrivalKind, ArrivalSpec, QueueObserver, QueueState, ServiceAccumulator, DEFAULT_K};
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Epoch lengths above this are refused rather than simulated.
pub const MAX_EPOCH_LENGTH: f64 = 1e9;

/// Relative tolerance for the hard CC-2 bounds.
const BOUND_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sched1,
    Sched2,
    Cc1,
    Cc2,
}

impl Algorithm {
    fn is_congestion(self) -> bool {
        matches!(self, Algorithm::Cc1 | Algorithm::Cc2)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Stochastic,
    /// Updates see `λ` and `s(r)` instead of their empirical estimates.
    DeterministicOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    Preset {
        preset: String,
    },
    Edges {
        n: usize,
        edges: Vec<(usize, usize)>,
    },
    File {
        edge_list: PathBuf,
    },
}

impl GraphSource {
    pub fn load(&self) -> Result<ConflictGraph> {
        match self {
            GraphSource::Preset { preset } => ConflictGraph::preset(preset),
            GraphSource::Edges { n, edges } => ConflictGraph::new(*n, edges),
            GraphSource::File { edge_list } => ConflictGraph::parse_edge_list(&std::fs::read_to_string(edge_list)?),
        }
    }
}

/// A single value for every node, or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Clone> PerNode<T> {
    pub fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerNode::All(v) => Ok(vec![v.clone(); n]),
            PerNode::Each(v) if v.len() == n => Ok(v.clone()),
            PerNode::Each(v) => Err(Error::Config(format!("{what} has {} entries for {n} nodes", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalConfig {
    pub kind: ArrivalKind,
    pub lambda: PerNode<f64>,
    #[serde(default)]
    pub k: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Fixed epoch length for every epoch.
    pub epoch_length: Option<f64>,
    /// Upper limit on the growing epoch lengths of the first rules.
    pub epoch_length_cap: Option<f64>,
    pub alpha: Option<f64>,
    /// Multiplier `a` in the step `a/j` of the diminishing-step rules.
    pub step_scale: Option<f64>,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    /// Multiplier inside the exponential epoch-length formulas.
    pub c: Option<f64>,
    pub initial_queues: Option<PerNode<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub graph: GraphSource,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub arrivals: Option<ArrivalConfig>,
    #[serde(default)]
    pub utilities: Option<PerNode<UtilityFunction>>,
    pub epochs: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {}, expected {CONFIG_VERSION}", cfg.version)));
        }
        Ok(cfg)
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub j: u64,
    /// Epoch start `L(j)`.
    pub start: f64,
    /// Epoch length `T(j)`.
    pub length: f64,
    /// Prices in force during the epoch.
    pub r: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    /// Offered service used by the update.
    pub s_hat: Vec<f64>,
    /// Actual departures over the epoch divided by its length.
    pub served: Vec<f64>,
    pub queues: Vec<f64>,
    pub departures: Vec<f64>,
    /// Chain state at the epoch start and end, as bitmasks.
    pub schedule_start: Schedule,
    pub schedule_end: Schedule,
    /// Largest queue seen inside the epoch.
    pub peak_queue: f64,
    /// `max_i Q_i(t)/t` at the epoch end.
    pub max_queue_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<Vec<f64>>,
    /// `Σ U_i(λ̃_i)` with `λ̃` the average of `λ(0..=j)`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub avg_utility: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cc2Violations {
    pub price_box: u64,
    pub queue_coupling: u64,
    pub queue_bound: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub fixed_epoch_length: Option<f64>,
    pub epoch_length_cap: Option<f64>,
    pub alpha: Option<f64>,
    pub step_scale: f64,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub c: f64,
    pub theory_constants_overridden: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub mode: RunMode,
    pub seed: u64,
    pub epochs: u64,
    pub end_time: f64,
    pub params: EffectiveParams,
    pub final_r: Vec<f64>,
    pub final_queues: Vec<f64>,
    pub final_max_queue_rate: f64,
    pub max_conservation_error: f64,
    /// Fixed point targeted by the scheduling rule.
    pub r_star: Option<Vec<f64>>,
    pub r_error: Option<f64>,
    pub final_gradient_norm: Option<f64>,
    pub final_lambda: Option<Vec<f64>>,
    pub avg_utility: Option<f64>,
    pub dual_r_star: Option<Vec<f64>>,
    pub lambda_bar: Option<Vec<f64>>,
    pub gap_certificate: Option<GapCertificate>,
    pub cc2_violations: Option<Cc2Violations>,
    pub box_violations: u64,
    pub notes: Vec<String>,
}

enum Rule {
    Sched1 { lambda: Vec<f64> },
    Sched2 { lambda: Vec<f64>, epsilon: f64, alpha: f64 },
    Cc(CongestionState),
}

struct Plan {
    graph: ConflictGraph,
    family: Option<IndependentSetFamily>,
    arrivals: Option<ArrivalSpec>,
    utilities: Vec<UtilityFunction>,
    initial_queues: Vec<f64>,
    params: EffectiveParams,
    v: f64,
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Config(format!("{what} must be positive and finite, got {x}")))
    }
}

fn whole(x: f64, what: &str) -> Result<f64> {
    positive(x, what)?;
    if x.fract() != 0.0 {
        return Err(Error::Config(format!("{what} must be a whole number of time units, got {x}")));
    }
    Ok(x)
}

fn simulable(t: f64, what: &str) -> Result<f64> {
    if !(t <= MAX_EPOCH_LENGTH) {
        return Err(Error::Config(format!(
            "{what} {t:e} is too long to simulate; set overrides.epoch_length"
        )));
    }
    Ok(t.ceil().max(1.0))
}

impl Plan {
    fn build(cfg: &ExperimentConfig) -> Result<(Self, Rule)> {
        let graph = cfg.graph.load().map_err(|e| Error::Config(format!("graph: {e}")))?;
        let n = graph.n();
        let family = if n <= DEFAULT_EXACT_CAP { Some(enumerate_independent_sets(&graph)?) } else { None };
        let ov = &cfg.overrides;
        let c = ov.c.map(|c| positive(c, "c")).transpose()?.unwrap_or(1.0);
        let step_scale = ov.step_scale.map(|a| positive(a, "step_scale")).transpose()?.unwrap_or(1.0);
        let fixed = ov.epoch_length.map(|t| whole(t, "epoch_length")).transpose()?;
        let cap = ov.epoch_length_cap.map(|t| whole(t, "epoch_length_cap")).transpose()?;
        let epsilon = ov.epsilon.map(|e| positive(e, "epsilon")).transpose()?;
        let alpha = ov.alpha.map(|a| positive(a, "alpha")).transpose()?;
        let beta = ov.beta.map(|b| positive(b, "beta")).transpose()?;
        let initial_queues = match &ov.initial_queues {
            Some(q) => q.expand(n, "initial_queues")?,
            None => vec![0.0; n],
        };
        QueueState::new(initial_queues.clone()).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }

        let mut params = EffectiveParams {
            fixed_epoch_length: fixed,
            epoch_length_cap: cap,
            alpha,
            step_scale,
            epsilon,
            beta,
            c,
            theory_constants_overridden: false,
        };

        let (arrivals, utilities, rule, v) = if cfg.algorithm.is_congestion() {
            if cfg.arrivals.is_some() {
                return Err(Error::Config("congestion control runs take utilities, not arrivals".into()));
            }
            let utilities = cfg
                .utilities
                .as_ref()
                .ok_or_else(|| Error::Config("congestion control runs need utilities".into()))?
                .expand(n, "utilities")?;
            for u in &utilities {
                u.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
            let v = max_marginal_utility(&utilities);
            let beta = match (beta, epsilon) {
                (Some(b), _) => b,
                (None, Some(e)) => default_beta(n, e),
                (None, None) => return Err(Error::Config("set overrides.beta or overrides.epsilon".into())),
            };
            params.beta = Some(beta);
            let mode = match cfg.algorithm {
                Algorithm::Cc1 => CongestionMode::Cc1,
                _ => {
                    let alpha = alpha.ok_or_else(|| Error::Config("cc2 needs overrides.alpha".into()))?;
                    let t = match fixed {
                        Some(t) => {
                            params.theory_constants_overridden = true;
                            t
                        }
                        None => {
                            let e = epsilon.ok_or_else(|| Error::Config("cc2 needs overrides.epsilon or overrides.epoch_length".into()))?;
                            simulable(cc2_theory_period(n, beta, v, alpha, e, c), "theoretical epoch length")?
                        }
                    };
                    params.fixed_epoch_length = Some(t);
                    CongestionMode::Cc2 { alpha, epoch_length: t }
                }
            };
            (None, utilities, Rule::Cc(CongestionState::new(n, beta, mode)?), v)
        } else {
            if cfg.utilities.is_some() {
                return Err(Error::Config("scheduling runs take arrivals, not utilities".into()));
            }
            let a = cfg.arrivals.as_ref().ok_or_else(|| Error::Config("scheduling runs need arrivals".into()))?;
            if a.kind == ArrivalKind::Controlled {
                return Err(Error::Config("scheduling runs need a stochastic arrival kind".into()));
            }
            let lambda = RateVector::new(a.lambda.expand(n, "arrivals.lambda")?).map_err(|e| Error::Config(e.to_string()))?;
            let spec = ArrivalSpec::new(a.kind, lambda, a.k.unwrap_or(DEFAULT_K)).map_err(|e| Error::Config(e.to_string()))?;
            let lam = spec.lambda.as_slice().to_vec();
            let rule = match cfg.algorithm {
                Algorithm::Sched1 => Rule::Sched1 { lambda: lam },
                _ => {
                    let e = epsilon.ok_or_else(|| Error::Config("sched2 needs overrides.epsilon".into()))?;
                    let k = f64::from(spec.k);
                    let t = match fixed {
                        Some(t) => {
                            params.theory_constants_overridden = true;
                            t
                        }
                        None => simulable(theory_constants_alg2(n, e, k, c).map_err(|e| Error::Config(e.to_string()))?.epoch_length, "theoretical epoch length")?,
                    };
                    params.fixed_epoch_length = Some(t);
                    let alpha = match alpha {
                        Some(a) => {
                            params.theory_constants_overridden = true;
                            a
                        }
                        None => alpha_alg2(n, e, k),
                    };
                    params.alpha = Some(alpha);
                    Rule::Sched2 { lambda: lam, epsilon: e, alpha }
                }
            };
            (Some(spec), Vec::new(), rule, 0.0)
        };

        if cfg.mode == RunMode::DeterministicOracle && family.is_none() {
            return Err(Error::Config(format!("deterministic-oracle mode needs n <= {DEFAULT_EXACT_CAP}")));
        }
        Ok((Plan { graph, family, arrivals, utilities, initial_queues, params, v }, rule))
    }

    fn epoch_length(&self, j: u64) -> Result<f64> {
        if let Some(t) = self.params.fixed_epoch_length {
            return Ok(t);
        }
        let t = epoch_params_alg1(j + 1)?.0;
        Ok(self.params.epoch_length_cap.map_or(t, |cap| t.min(cap)))
    }
}

/// Runs `cfg`, passing each record to `sink` as it is produced.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, mut sink: F) -> Result<RunSummary>
where
    F: FnMut(&MetricsRecord) -> Result<()>,
{
    let (plan, mut rule) = Plan::build(cfg)?;
    let n = plan.graph.n();
    let seed = cfg.seed;
    let oracle = cfg.mode == RunMode::DeterministicOracle;
    let mut r = vec![0.0; n];
    let mut sampler = CtmcSampler::new(&plan.graph, &r, Schedule::EMPTY)?;
    let mut queues = QueueState::new(plan.initial_queues.clone())?;
    let mut max_cons: f64 = 0.0;
    let mut cc2 = matches!(&rule, Rule::Cc(s) if matches!(s.mode, CongestionMode::Cc2 { .. })).then(Cc2Violations::default);
    let mut box_violations = 0;
    let mut lambda_sum = vec![0.0; n];
    let mut last_avg_utility = None;
    let mut start = 0.0;

    for j in 0..cfg.epochs {
        let length = plan.epoch_length(j)?;
        sampler.set_backoff(&r).map_err(|e| Error::Numeric { epoch: j, detail: e.to_string() })?;
        let mut chain_rng = stream_rng(seed, Stream::Chain, j, 0);
        let mut arrival_rng = stream_rng(seed, Stream::Arrivals, j, 0);
        let departed_before = queues.departed.clone();
        let schedule_start = sampler.state();
        queues.reset_peak();

        let inflow: Option<Vec<f64>> = match &rule {
            Rule::Cc(s) => Some(s.lambda.clone()),
            _ => None,
        };
        let mut acc = ServiceAccumulator::new(n);
        let mut arrived = vec![0.0; n];
        for _ in 0..length as u64 {
            let mut obs = (&mut acc, QueueObserver { queues: &mut queues, inflow: inflow.as_deref() });
            sampler.advance(1.0, &mut chain_rng, &mut obs);
            if let Some(spec) = &plan.arrivals {
                let a = sample_unit_arrivals(spec, &mut arrival_rng)?;
                queues.deposit(&a);
                for i in 0..n {
                    arrived[i] += a[i];
                }
            }
        }
        let end = start + length;
        queues.t = end;
        max_cons = max_cons.max(queues.conservation_error());

        let r_epoch = r.clone();
        let (lambda_hat, s_hat) = if oracle {
            let fam = plan.family.as_ref().expect("checked at build");
            let lam = match &rule {
                Rule::Sched1 { lambda } | Rule::Sched2 { lambda, .. } => lambda.clone(),
                Rule::Cc(s) => s.lambda.clone(),
            };
            (lam, service_rates(fam, &r))
        } else {
            let lam = match &rule {
                Rule::Cc(s) => s.lambda.clone(),
                _ => arrived.iter().map(|a| a / length).collect(),
            };
            (lam, acc.rates())
        };

        let mut lambda_epoch = None;
        let mut avg_utility = None;
        match &mut rule {
            Rule::Sched1 { .. } => {
                r = update_alg1_step(&r, &lambda_hat, &s_hat, plan.params.step_scale / (j + 1) as f64);
            }
            Rule::Sched2 { epsilon, alpha, .. } => {
                r = update_alg2(&r, &lambda_hat, &s_hat, *epsilon, *alpha, n);
                let bound = n as f64 / *epsilon;
                box_violations += r.iter().filter(|x| x.abs() > bound).count() as u64;
            }
            Rule::Cc(state) => {
                let lam = state.lambda.clone();
                for i in 0..n {
                    lambda_sum[i] += lam[i];
                }
                let avg: Vec<f64> = lambda_sum.iter().map(|s| s / (j + 1) as f64).collect();
                avg_utility = Some(total_utility(&plan.utilities, &avg));
                match state.mode {
                    CongestionMode::Cc1 => update_cc1(state, &s_hat, &plan.utilities, Some(plan.params.step_scale / (j + 1) as f64)),
                    CongestionMode::Cc2 { alpha, epoch_length } => {
                        update_cc2(state, &s_hat, &plan.utilities, alpha);
                        let v = cc2.as_mut().expect("cc2 run");
                        let top = cc2_price_bound(state.beta, plan.v, alpha);
                        v.price_box += state.r.iter().filter(|&&x| x < 0.0 || x > top * (1.0 + BOUND_RTOL)).count() as u64;
                        v.queue_coupling += (0..n)
                            .filter(|&i| {
                                let cap = epoch_length / alpha * state.r[i];
                                queues.q[i] > cap + BOUND_RTOL * cap.max(1.0)
                            })
                            .count() as u64;
                        let qmax = cc2_queue_bound(epoch_length, state.beta, plan.v, alpha);
                        v.queue_bound += queues.peak.iter().filter(|&&q| q > qmax * (1.0 + BOUND_RTOL)).count() as u64;
                    }
                }
                r = state.r.clone();
                lambda_epoch = Some(lam);
            }
        }
        if let Some(i) = r.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric { epoch: j, detail: format!("r[{i}] = {} after update", r[i]) });
        }
        last_avg_utility = avg_utility.or(last_avg_utility);

        let record = MetricsRecord {
            j,
            start,
            length,
            r: r_epoch,
            lambda_hat,
            s_hat,
            served: queues.departed.iter().zip(&departed_before).map(|(a, b)| (a - b) / length).collect(),
            queues: queues.q.clone(),
            departures: queues.departed.clone(),
            schedule_start,
            schedule_end: sampler.state(),
            peak_queue: queues.peak.iter().copied().fold(0.0, f64::max),
            max_queue_rate: queues.q.iter().map(|q| q / end).fold(0.0, f64::max),
            lambda: lambda_epoch,
            avg_utility,
        };
        sink(&record)?;
        start = end;
    }

    summarize(cfg, &plan, &rule, r, queues, start, max_cons, cc2, box_violations, last_avg_utility)
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    cfg: &ExperimentConfig,
    plan: &Plan,
    rule: &Rule,
    r: Vec<f64>,
    queues: QueueState,
    end: f64,
    max_cons: f64,
    cc2_violations: Option<Cc2Violations>,
    box_violations: u64,
    avg_utility: Option<f64>,
) -> Result<RunSummary> {
    let mut notes = Vec::new();
    let mut s = RunSummary {
        algorithm: cfg.algorithm,
        mode: cfg.mode,
        seed: cfg.seed,
        epochs: cfg.epochs,
        end_time: end,
        params: plan.params.clone(),
        final_max_queue_rate: queues.q.iter().map(|q| q / end).fold(0.0, f64::max),
        final_queues: queues.q,
        max_conservation_error: max_cons,
        r_star: None,
        r_error: None,
        final_gradient_norm: None,
        final_lambda: None,
        avg_utility,
        dual_r_star: None,
        lambda_bar: None,
        gap_certificate: None,
        cc2_violations,
        box_violations,
        notes: Vec::new(),
        final_r: r,
    };
    let Some(fam) = &plan.family else {
        notes.push(format!("exact analysis skipped: more than {DEFAULT_EXACT_CAP} nodes"));
        s.notes = notes;
        return Ok(s);
    };
    match rule {
        Rule::Sched1 { lambda } | Rule::Sched2 { lambda, .. } => {
            let target: Vec<f64> = match rule {
                Rule::Sched2 { epsilon, .. } => lambda.iter().map(|l| l + epsilon).collect(),
                _ => lambda.clone(),
            };
            s.final_gradient_norm = Some(gradient_f(fam, &s.final_r, &target).iter().map(|g| g * g).sum::<f64>().sqrt());
            match solve_r_star(fam, &RateVector::new(target)?, DEFAULT_TOL) {
                Ok(rs) => {
                    let rs = rs.r.into_vec();
                    s.r_error = Some(
                        rs.iter()
                            .zip(&s.final_r)
                            .filter(|(a, _)| a.is_finite())
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max),
                    );
                    s.r_star = Some(rs);
                }
                Err(e) => notes.push(format!("fixed point unavailable: {e}")),
            }
        }
        Rule::Cc(state) => {
            s.final_lambda = Some(state.lambda.clone());
            match solve_dual_optimum(fam, &plan.utilities, state.beta, 1e-9) {
                Ok(d) => {
                    s.dual_r_star = Some(d.r_star);
                    s.lambda_bar = Some(d.lambda_bar);
                }
                Err(e) => notes.push(format!("dual optimum unavailable: {e}")),
            }
            match utility_gap_certificate(fam, &plan.utilities, state.beta, &lambda_of_r(&plan.utilities, state.beta, &state.r), 1e-8) {
                Ok(c) => s.gap_certificate = Some(c),
                Err(e) => notes.push(format!("utility optimum unavailable: {e}")),
            }
        }
    }
    s.notes = notes;
    Ok(s)
}

/// Runs `cfg`, writing one JSON line per epoch to `out`.
pub fn run_experiment<W: Write>(cfg: &ExperimentConfig, out: &mut W) -> Result<RunSummary> {
    run_experiment_with(cfg, |rec| {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

/// Runs `cfg` and keeps every record in memory.
pub fn run_experiment_collect(cfg: &ExperimentConfig) -> Result<(Vec<MetricsRecord>, RunSummary)> {
    let mut records = Vec::new();
    let summary = run_experiment_with(cfg, |rec| {
        records.push(rec.clone());
        Ok(())
    })?;
    Ok((records, summary))
}

/// `(t, max_i Q_i(t)/t)` at each epoch end.
pub fn rate_stability_trace(records: &[MetricsRecord]) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.start + r.length, r.max_queue_rate)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub window: usize,
    pub windows: usize,
    /// Mean of `L(k + N) − L(k)` with `L = Σ Q_i²` over non-overlapping windows.
    pub mean: f64,
    pub negative_fraction: f64,
    pub positive_fraction: f64,
}

pub fn drift_diagnostic(records: &[MetricsRecord], window: usize) -> Result<DriftReport> {
    if window == 0 {
        return Err(Error::InvalidInput("drift window must be at least one epoch".into()));
    }
    let lyap = |r: &MetricsRecord| r.queues.iter().map(|q| q * q).sum::<f64>();
    let diffs: Vec<f64> = (0..records.len())
        .step_by(window)
        .filter(|k| k + window < records.len())
        .map(|k| lyap(&records[k + window]) - lyap(&records[k]))
        .collect();
    if diffs.is_empty() {
        return Err(Error::InvalidInput(format!("{} records hold no window of {window} epochs", records.len())));
    }
    let m = diffs.len() as f64;
    Ok(DriftReport {
        window,
        windows: diffs.len(),
        mean: diffs.iter().sum::<f64>() / m,
        negative_fraction: diffs.iter().filter(|d| **d < 0.0).count() as f64 / m,
        positive_fraction: diffs.iter().filter(|d| **d > 0.0).count() as f64 / m,
    })
}
