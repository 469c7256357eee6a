//! Continuous-time CSMA chain and its discrete Glauber skeleton.
//!
//! An idle node whose neighbours are all idle starts transmitting at rate
//! `exp(r_i)`; a transmitting node stops at rate 1. Blocked nodes carry no
//! clock: by memorylessness, redrawing a fresh clock when the medium clears
//! has the same law as restarting the backoff on every busy sensing.

mod diagnostics;

pub use diagnostics::*;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::conflict_graph::{ConflictGraph, IndependentSetFamily, Schedule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StartTransmit,
    EndTransmit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainEvent {
    pub time: f64,
    pub node: usize,
    pub kind: EventKind,
}

/// Receives the piecewise-constant path as it is generated.
pub trait Observer {
    /// The chain sat in `schedule` over `[start, end)`.
    fn segment(&mut self, start: f64, end: f64, schedule: Schedule);

    fn event(&mut self, _event: &ChainEvent) {}
}

impl Observer for () {
    fn segment(&mut self, _: f64, _: f64, _: Schedule) {}
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn segment(&mut self, start: f64, end: f64, schedule: Schedule) {
        (**self).segment(start, end, schedule);
    }

    fn event(&mut self, event: &ChainEvent) {
        (**self).event(event);
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn segment(&mut self, start: f64, end: f64, schedule: Schedule) {
        self.0.segment(start, end, schedule);
        self.1.segment(start, end, schedule);
    }

    fn event(&mut self, event: &ChainEvent) {
        self.0.event(event);
        self.1.event(event);
    }
}

/// Gillespie sampler whose state persists across calls, so `r` can be
/// changed between epochs without resetting the medium.
#[derive(Debug, Clone)]
pub struct CtmcSampler {
    neighbors: Vec<u64>,
    start_rates: Vec<f64>,
    state: Schedule,
    time: f64,
}

impl CtmcSampler {
    pub fn new(graph: &ConflictGraph, r: &[f64], initial: Schedule) -> Result<Self> {
        if !graph.is_independent(initial) {
            return Err(Error::InvalidInput(format!("initial schedule {initial} is not independent")));
        }
        let mut s = Self { neighbors: graph.neighbor_masks().to_vec(), start_rates: Vec::new(), state: initial, time: 0.0 };
        s.set_backoff(r)?;
        Ok(s)
    }

    /// Replaces the start rates by `exp(r_i)`.
    pub fn set_backoff(&mut self, r: &[f64]) -> Result<()> {
        if r.len() != self.neighbors.len() {
            return Err(Error::InvalidInput(format!("backoff has length {}, graph has {} nodes", r.len(), self.neighbors.len())));
        }
        let rates: Vec<f64> = r.iter().map(|x| x.exp()).collect();
        if let Some(i) = rates.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("start rate exp({}) of node {i} overflows", r[i])));
        }
        self.start_rates = rates;
        Ok(())
    }

    pub fn state(&self) -> Schedule {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances the chain by `duration`, reporting every segment and event.
    /// Returns the number of events.
    pub fn advance<R: Rng + ?Sized, O: Observer + ?Sized>(&mut self, duration: f64, rng: &mut R, obs: &mut O) -> usize {
        let end = self.time + duration;
        let n = self.neighbors.len();
        let mut rates = vec![0.0; n];
        let mut count = 0;
        loop {
            let mask = self.state.mask();
            let mut total = 0.0;
            for i in 0..n {
                rates[i] = if self.state.contains(i) {
                    1.0
                } else if self.neighbors[i] & mask == 0 {
                    self.start_rates[i]
                } else {
                    0.0
                };
                total += rates[i];
            }
            let dt = if total > 0.0 {
                let e: f64 = Exp1.sample(rng);
                e / total
            } else {
                f64::INFINITY
            };
            if self.time + dt >= end {
                obs.segment(self.time, end, self.state);
                self.time = end;
                return count;
            }
            let t = self.time + dt;
            obs.segment(self.time, t, self.state);
            self.time = t;

            let mut u = rng.random::<f64>() * total;
            let mut node = n - 1;
            for (i, &q) in rates.iter().enumerate() {
                if q > 0.0 {
                    node = i;
                    if u < q {
                        break;
                    }
                    u -= q;
                }
            }
            let kind = if self.state.contains(node) {
                self.state = self.state.without(node);
                EventKind::EndTransmit
            } else {
                assert!(self.neighbors[node] & mask == 0, "node {node} started while a neighbour transmits");
                self.state = self.state.with(node);
                EventKind::StartTransmit
            };
            count += 1;
            obs.event(&ChainEvent { time: t, node, kind });
        }
    }
}

/// A recorded path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrajectory {
    pub initial: Schedule,
    pub start: f64,
    pub duration: f64,
    pub events: Vec<ChainEvent>,
}

impl ChainTrajectory {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn final_schedule(&self) -> Schedule {
        self.segments().last().map_or(self.initial, |seg| seg.2)
    }

    /// `(start, end, schedule)` pieces covering the window.
    pub fn segments(&self) -> Vec<(f64, f64, Schedule)> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut state = self.initial;
        let mut t = self.start;
        for ev in &self.events {
            out.push((t, ev.time, state));
            state = match ev.kind {
                EventKind::StartTransmit => state.with(ev.node),
                EventKind::EndTransmit => state.without(ev.node),
            };
            t = ev.time;
        }
        out.push((t, self.end(), state));
        out
    }

    /// `time,node,kind` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,node,kind\n");
        for e in &self.events {
            let kind = match e.kind {
                EventKind::StartTransmit => "start",
                EventKind::EndTransmit => "end",
            };
            let _ = writeln!(out, "{:.17e},{},{}", e.time, e.node, kind);
        }
        out
    }
}

#[derive(Default)]
struct Recorder {
    events: Vec<ChainEvent>,
}

impl Observer for Recorder {
    fn segment(&mut self, _: f64, _: f64, _: Schedule) {}

    fn event(&mut self, event: &ChainEvent) {
        self.events.push(*event);
    }
}

/// Simulates the chain at fixed `r` over `[0, duration]`.
pub fn simulate_ctmc(graph: &ConflictGraph, r: &[f64], duration: f64, initial: Schedule, seed: u64) -> Result<ChainTrajectory> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidInput(format!("duration must be positive and finite, got {duration}")));
    }
    let mut sampler = CtmcSampler::new(graph, r, initial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = Recorder::default();
    sampler.advance(duration, &mut rng, &mut rec);
    Ok(ChainTrajectory { initial, start: 0.0, duration, events: rec.events })
}

/// Time-weighted occupancy of a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Occupancy {
    /// Fraction of the window each node spent transmitting.
    pub node_busy: Vec<f64>,
    /// Fraction of the window spent in each schedule, in family order.
    pub schedule_time: Vec<f64>,
}

/// Accumulates busy time per node and per schedule.
#[derive(Debug, Clone)]
pub struct OccupancyObserver<'f> {
    family: &'f IndependentSetFamily,
    pub node_time: Vec<f64>,
    pub schedule_time: Vec<f64>,
    pub elapsed: f64,
}

impl<'f> OccupancyObserver<'f> {
    pub fn new(family: &'f IndependentSetFamily) -> Self {
        Self { family, node_time: vec![0.0; family.n()], schedule_time: vec![0.0; family.len()], elapsed: 0.0 }
    }

    pub fn finish(&self) -> Occupancy {
        let w = if self.elapsed > 0.0 { self.elapsed } else { 1.0 };
        Occupancy {
            node_busy: self.node_time.iter().map(|x| x / w).collect(),
            schedule_time: self.schedule_time.iter().map(|x| x / w).collect(),
        }
    }
}

impl Observer for OccupancyObserver<'_> {
    fn segment(&mut self, start: f64, end: f64, schedule: Schedule) {
        let dt = end - start;
        self.elapsed += dt;
        for i in schedule.nodes() {
            self.node_time[i] += dt;
        }
        let k = self.family.position(schedule).expect("chain stays on independent sets");
        self.schedule_time[k] += dt;
    }
}

pub fn occupancy(trajectory: &ChainTrajectory, family: &IndependentSetFamily) -> Occupancy {
    let mut obs = OccupancyObserver::new(family);
    for (a, b, s) in trajectory.segments() {
        obs.segment(a, b, s);
    }
    obs.finish()
}
