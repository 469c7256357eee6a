//! Arrival processes and exact fluid queue dynamics.
//!
//! Stochastic arrivals are deposited at the end of each unit interval.
//! Controlled arrivals accrue continuously at the current rate. A queue
//! drains at unit rate while its node transmits and has work.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainTrajectory, Observer};
use crate::conflict_graph::{RateVector, Schedule};
use crate::{Error, Result};

pub const DEFAULT_K: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalKind {
    /// Increment `K` with probability `λ/K`, else 0.
    ScaledBernoulli,
    /// Sum of `K` Bernoulli(`λ/K`) draws.
    Binomial,
    /// Deterministic fluid at a rate set by the congestion controller.
    Controlled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSpec {
    pub kind: ArrivalKind,
    pub lambda: RateVector,
    pub k: u32,
}

impl ArrivalSpec {
    pub fn new(kind: ArrivalKind, lambda: RateVector, k: u32) -> Result<Self> {
        let spec = Self { kind, lambda, k };
        spec.validate()?;
        Ok(spec)
    }

    /// Stochastic kinds need `0 ≤ λ_i < K` so that a zero increment has positive probability.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArrivalSpec("K must be at least 1".into()));
        }
        if self.kind != ArrivalKind::Controlled {
            let k = f64::from(self.k);
            if let Some((i, l)) = self.lambda.as_slice().iter().enumerate().find(|(_, l)| **l >= k) {
                return Err(Error::InvalidArrivalSpec(format!(
                    "lambda[{i}] = {l} must be below K = {k} so that Pr(increment = 0) > 0"
                )));
            }
        }
        Ok(())
    }
}

/// One unit interval of increments, one entry per node.
pub fn sample_unit_arrivals<R: Rng + ?Sized>(spec: &ArrivalSpec, rng: &mut R) -> Result<Vec<f64>> {
    let k = f64::from(spec.k);
    let lam = spec.lambda.as_slice();
    match spec.kind {
        ArrivalKind::Controlled => Err(Error::InvalidArrivalSpec("controlled arrivals are not sampled".into())),
        ArrivalKind::ScaledBernoulli => Ok(lam
            .iter()
            .map(|&l| if l > 0.0 && rng.random::<f64>() < l / k { k } else { 0.0 })
            .collect()),
        ArrivalKind::Binomial => Ok(lam
            .iter()
            .map(|&l| {
                if l == 0.0 {
                    return 0.0;
                }
                (0..spec.k).filter(|_| rng.random::<f64>() < l / k).count() as f64
            })
            .collect()),
    }
}

/// Queue contents, cumulative arrivals and departures.
///
/// `arrived` counts the initial backlog, so `q = arrived − departed` always.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub q: Vec<f64>,
    pub departed: Vec<f64>,
    pub arrived: Vec<f64>,
    pub t: f64,
    /// Largest `q_i` seen since the last [`QueueState::reset_peak`].
    pub peak: Vec<f64>,
}

impl QueueState {
    pub fn new(initial: Vec<f64>) -> Result<Self> {
        if initial.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput("initial queues must be finite and nonnegative".into()));
        }
        let n = initial.len();
        Ok(Self { peak: initial.clone(), arrived: initial.clone(), q: initial, departed: vec![0.0; n], t: 0.0 })
    }

    pub fn empty(n: usize) -> Self {
        Self::new(vec![0.0; n]).expect("zeros are valid")
    }

    /// Adds arrivals at the current instant.
    pub fn deposit(&mut self, amounts: &[f64]) {
        for i in 0..self.q.len() {
            self.q[i] += amounts[i];
            self.arrived[i] += amounts[i];
            self.peak[i] = self.peak[i].max(self.q[i]);
        }
    }

    /// Runs for `dt` under `schedule` with continuous inflow `inflow` (per unit time).
    /// Within the piece every `q_i` is linear, or linear to zero then flat.
    pub fn serve(&mut self, dt: f64, schedule: Schedule, inflow: Option<&[f64]>) {
        for i in 0..self.q.len() {
            let a = inflow.map_or(0.0, |x| x[i]);
            self.arrived[i] += a * dt;
            if !schedule.contains(i) {
                self.q[i] += a * dt;
            } else if a >= 1.0 {
                self.q[i] += (a - 1.0) * dt;
                self.departed[i] += dt;
            } else {
                let empties_at = self.q[i] / (1.0 - a);
                if empties_at >= dt {
                    self.q[i] -= (1.0 - a) * dt;
                    self.departed[i] += dt;
                } else {
                    // drains, then passes the inflow straight through
                    self.departed[i] += self.q[i] + a * dt;
                    self.q[i] = 0.0;
                }
            }
            self.peak[i] = self.peak[i].max(self.q[i]);
        }
        self.t += dt;
    }

    pub fn reset_peak(&mut self) {
        self.peak.clone_from(&self.q);
    }

    /// `max_i |q_i − (arrived_i − departed_i)|`.
    pub fn conservation_error(&self) -> f64 {
        (0..self.q.len()).map(|i| (self.q[i] - (self.arrived[i] - self.departed[i])).abs()).fold(0.0, f64::max)
    }
}

/// Chain observer feeding a queue.
pub struct QueueObserver<'a> {
    pub queues: &'a mut QueueState,
    pub inflow: Option<&'a [f64]>,
}

impl Observer for QueueObserver<'_> {
    fn segment(&mut self, start: f64, end: f64, schedule: Schedule) {
        self.queues.serve(end - start, schedule, self.inflow);
    }
}

/// Replays `trajectory` into `state`, applying `deposits` (absolute time,
/// amounts) when the clock reaches them.
pub fn integrate_queues(
    state: &QueueState,
    trajectory: &ChainTrajectory,
    deposits: &[(f64, Vec<f64>)],
    inflow: Option<&[f64]>,
) -> Result<QueueState> {
    if (state.t - trajectory.start).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "trajectory starts at {} but queues are at {}",
            trajectory.start, state.t
        )));
    }
    let mut out = state.clone();
    let mut pending = deposits.iter().peekable();
    for (a, b, s) in trajectory.segments() {
        let mut t = a;
        while let Some((when, amounts)) = pending.peek() {
            if *when > b {
                break;
            }
            out.serve(when - t, s, inflow);
            out.deposit(amounts);
            t = *when;
            pending.next();
        }
        out.serve(b - t, s, inflow);
        out.t = b;
    }
    Ok(out)
}

/// Accumulates offered service `∫σ_i dt`, ignoring queue contents.
#[derive(Debug, Clone)]
pub struct ServiceAccumulator {
    pub busy: Vec<f64>,
    pub elapsed: f64,
}

impl ServiceAccumulator {
    pub fn new(n: usize) -> Self {
        Self { busy: vec![0.0; n], elapsed: 0.0 }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.busy.iter().map(|b| if self.elapsed > 0.0 { b / self.elapsed } else { 0.0 }).collect()
    }
}

impl Observer for ServiceAccumulator {
    fn segment(&mut self, start: f64, end: f64, schedule: Schedule) {
        let dt = end - start;
        self.elapsed += dt;
        for i in schedule.nodes() {
            self.busy[i] += dt;
        }
    }
}

/// `(λ̂, ŝ)` for one window: arrivals over the window length, and the busy
/// fraction of each node from pairing its start and end events.
pub fn empirical_rates(trajectory: &ChainTrajectory, arrivals: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = arrivals.len();
    let w = trajectory.duration;
    let lambda_hat = arrivals.iter().map(|a| a / w).collect();
    let mut busy = vec![0.0; n];
    let mut since: Vec<Option<f64>> = (0..n).map(|i| trajectory.initial.contains(i).then_some(trajectory.start)).collect();
    for ev in &trajectory.events {
        match ev.kind {
            crate::chain::EventKind::StartTransmit => since[ev.node] = Some(ev.time),
            crate::chain::EventKind::EndTransmit => {
                if let Some(t0) = since[ev.node].take() {
                    busy[ev.node] += ev.time - t0;
                }
            }
        }
    }
    for i in 0..n {
        if let Some(t0) = since[i] {
            busy[i] += trajectory.end() - t0;
        }
    }
    (lambda_hat, busy.into_iter().map(|b| b / w).collect())
}
