//! Per-agent observations, observation histories, the global state and the
//! shared reward.

use std::collections::VecDeque;

use crate::env::{Action, ChannelOutcome};

/// Run lengths above this saturate the encoded `l` feature at 1.
pub const RUN_LENGTH_CAP: u64 = 64;
/// Features per history record: `z, a_prev, l, d_own, d_other`.
pub const RECORD_WIDTH: usize = 5;
pub const DEFAULT_HISTORY: usize = 8;

/// Slots since the agent's own last ACK and since anyone else's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DelayCounters {
    pub v_own: u64,
    pub v_other: u64,
}

impl DelayCounters {
    pub fn new(v_own: u64, v_other: u64) -> Self {
        Self { v_own, v_other }
    }

    /// `(d_own, d_other)`, with `(0.5, 0.5)` when both counters are zero.
    pub fn fractions(&self) -> (f64, f64) {
        let total = self.v_own + self.v_other;
        if total == 0 {
            (0.5, 0.5)
        } else {
            let own = self.v_own as f64 / total as f64;
            (own, 1.0 - own)
        }
    }
}

pub fn update_counters(counters: DelayCounters, outcome: &ChannelOutcome, agent: usize) -> DelayCounters {
    match outcome {
        ChannelOutcome::Success(i) if *i == agent => DelayCounters::new(0, counters.v_other + 1),
        ChannelOutcome::Success(_) => DelayCounters::new(counters.v_own + 1, 0),
        _ => DelayCounters::new(counters.v_own + 1, counters.v_other + 1),
    }
}

/// One entry of an agent's history: a run of identical `(z, a_prev)` slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    /// Carrier sense of the previous slot, `true` when busy.
    pub z: bool,
    pub a_prev: Action,
    /// Number of consecutive slots this `(z, a_prev)` pair has persisted.
    pub l: u64,
    pub d_own: f64,
    pub d_other: f64,
}

impl ObservationRecord {
    pub fn encode_into(&self, out: &mut [f64]) {
        out[0] = f64::from(u8::from(self.z));
        out[1] = self.a_prev.as_f64();
        out[2] = (self.l as f64 / RUN_LENGTH_CAP as f64).min(1.0);
        out[3] = self.d_own;
        out[4] = self.d_other;
    }
}

pub fn build_observation(counters: DelayCounters, z: bool, a_prev: Action, run_length: u64) -> ObservationRecord {
    let (d_own, d_other) = counters.fractions();
    ObservationRecord { z, a_prev, l: run_length.max(1), d_own, d_other }
}

/// The last `m` runs of an agent's per-slot observations, oldest first.
///
/// Consecutive slots with the same `(z, a_prev)` extend the newest record
/// rather than adding one, so the window spans events instead of slots.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    records: VecDeque<ObservationRecord>,
    m: usize,
}

impl HistoryWindow {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "history length must be positive");
        Self { records: VecDeque::with_capacity(m + 1), m }
    }

    pub fn capacity(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ObservationRecord> {
        self.records.iter()
    }

    pub fn newest(&self) -> Option<&ObservationRecord> {
        self.records.back()
    }

    /// Appends one slot's observation.
    pub fn push(&mut self, z: bool, a_prev: Action, counters: DelayCounters) {
        if let Some(last) = self.records.back_mut() {
            if last.z == z && last.a_prev == a_prev {
                *last = build_observation(counters, z, a_prev, last.l + 1);
                return;
            }
        }
        self.records.push_back(build_observation(counters, z, a_prev, 1));
        if self.records.len() > self.m {
            self.records.pop_front();
        }
    }

    /// Flat input of width `5·m`, zero-padded in front while the window fills.
    pub fn encode_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), RECORD_WIDTH * self.m);
        let pad = self.m - self.records.len();
        out[..pad * RECORD_WIDTH].fill(0.0);
        for (k, r) in self.records.iter().enumerate() {
            let at = (pad + k) * RECORD_WIDTH;
            r.encode_into(&mut out[at..at + RECORD_WIDTH]);
        }
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut v = vec![0.0; RECORD_WIDTH * self.m];
        self.encode_into(&mut v);
        v
    }

    /// Expands the runs back into the per-slot `(z, a_prev)` sequence they cover.
    pub fn expand(&self) -> Vec<(bool, Action)> {
        self.records
            .iter()
            .flat_map(|r| std::iter::repeat_n((r.z, r.a_prev), r.l as usize))
            .collect()
    }
}

/// Centralized state: previous joint action and normalized delay vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub joint_prev_action: Vec<Action>,
    pub d: Vec<f64>,
}

impl GlobalState {
    pub fn width(n: usize) -> usize {
        2 * n
    }

    /// Agent with the largest delay share; ties go to the lowest id.
    pub fn argmax_d(&self) -> usize {
        argmax_lowest(&self.d)
    }

    pub fn encode_into(&self, out: &mut [f64]) {
        let n = self.d.len();
        for (o, a) in out[..n].iter_mut().zip(&self.joint_prev_action) {
            *o = a.as_f64();
        }
        out[n..2 * n].copy_from_slice(&self.d);
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut v = vec![0.0; Self::width(self.d.len())];
        self.encode_into(&mut v);
        v
    }
}

/// Index of the first maximum.
pub fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `v` holds each agent's own counter `v^i`. Uniform when every counter is zero.
pub fn build_global_state(v: &[u64], joint_prev_action: &[Action]) -> GlobalState {
    assert!(!v.is_empty(), "global state needs at least one agent");
    let total: u64 = v.iter().sum();
    let d = if total == 0 {
        vec![1.0 / v.len() as f64; v.len()]
    } else {
        v.iter().map(|&x| x as f64 / total as f64).collect()
    };
    GlobalState { joint_prev_action: joint_prev_action.to_vec(), d }
}

/// Shared reward: +1 when the largest-delay agent gets its packet through,
/// 0 when nobody transmits, -1 otherwise.
pub fn compute_reward(d: &[f64], outcome: &ChannelOutcome) -> f64 {
    match outcome {
        ChannelOutcome::Idle | ChannelOutcome::Busy => 0.0,
        ChannelOutcome::Success(i) if *i == argmax_lowest(d) => 1.0,
        _ => -1.0,
    }
}
