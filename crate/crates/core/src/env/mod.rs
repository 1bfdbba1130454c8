//! Time-slotted single-channel BSS simulator.
//!
//! Every station acts on the same slot boundary. A station may start a
//! transmission only if it sensed the channel idle in the previous slot and
//! holds at least one packet. A transmission occupies the channel for
//! `packet_slots`, followed by `sifs_slots` and `ack_slots`; the outcome
//! (success with ACK, or collision without one) resolves on the last slot of
//! that busy period.

mod edca;
mod trace;
mod traffic;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use edca::{AccessCategory, EdcaStation};
pub use trace::TraceRecord;
pub use traffic::{generate_arrivals, ArrivalProcess, TrafficModel};

/// Per-slot decision of a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Action {
    #[default]
    Wait,
    Transmit,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Wait, Action::Transmit];

    pub fn index(self) -> usize {
        match self {
            Action::Wait => 0,
            Action::Transmit => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Wait
        } else {
            Action::Transmit
        }
    }

    pub fn as_f64(self) -> f64 {
        self.index() as f64
    }
}

/// Result of one slot on the shared channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelOutcome {
    Idle,
    /// A transmission period is in progress and has not resolved yet.
    Busy,
    /// The ACK for the given station was delivered in this slot.
    Success(usize),
    /// The ACK deadline passed for two or more simultaneous transmitters.
    Collision(Vec<usize>),
}

impl ChannelOutcome {
    pub fn is_idle(&self) -> bool {
        matches!(self, ChannelOutcome::Idle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub arrival_slot: u64,
    pub station: usize,
}

/// Slots from packet generation to the slot its ACK was received.
pub fn measure_delay(packet: &Packet, success_slot: u64) -> u64 {
    debug_assert!(success_slot >= packet.arrival_slot);
    success_slot - packet.arrival_slot
}

/// Converts a duration in microseconds into whole slots.
pub fn us_to_slots(us: f64, slot_us: f64) -> u32 {
    (us / slot_us).round() as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_stations: usize,
    pub slot_us: f64,
    pub sifs_slots: u32,
    pub difs_slots: u32,
    pub packet_slots: u32,
    pub ack_slots: u32,
    pub buffer_capacity: usize,
    pub traffic: Vec<TrafficModel>,
    pub rng_seed: u64,
}

impl SimConfig {
    pub const SLOT_US: f64 = 9.0;
    pub const SIFS_US: f64 = 18.0;
    pub const DIFS_US: f64 = 36.0;
    pub const PACKET_US: f64 = 1080.0;
    pub const BUFFER: usize = 10;

    /// 802.11 timing from the EDCA parameter table, with the same traffic on every station.
    pub fn standard(n_stations: usize, traffic: TrafficModel, rng_seed: u64) -> Self {
        let slot = Self::SLOT_US;
        Self {
            n_stations,
            slot_us: slot,
            sifs_slots: us_to_slots(Self::SIFS_US, slot),
            difs_slots: us_to_slots(Self::DIFS_US, slot),
            packet_slots: us_to_slots(Self::PACKET_US, slot),
            ack_slots: 1,
            buffer_capacity: Self::BUFFER,
            traffic: vec![traffic; n_stations],
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, reason: &str| Error::RangeViolation {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        if self.n_stations == 0 {
            return Err(range("n_stations", "must be at least 1"));
        }
        if self.packet_slots == 0 {
            return Err(range("packet_slots", "must be at least 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(range("buffer_capacity", "must be at least 1"));
        }
        if !(self.slot_us.is_finite() && self.slot_us > 0.0) {
            return Err(range("slot_us", "must be positive"));
        }
        if self.traffic.len() != self.n_stations {
            return Err(Error::RosterMismatch {
                key: "traffic".into(),
                reason: format!("{} traffic models for {} stations", self.traffic.len(), self.n_stations),
            });
        }
        for t in &self.traffic {
            t.validate()?;
        }
        Ok(())
    }

    /// Length of the busy period caused by one transmission attempt.
    pub fn busy_slots(&self) -> u64 {
        (self.packet_slots + self.sifs_slots + self.ack_slots) as u64
    }
}

/// Who decides for a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationRole {
    /// Decisions are supplied from outside, e.g. by a learning agent.
    External,
    /// Built-in EDCA contention with the given access category.
    Edca(AccessCategory),
}

/// Per-station accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationCounters {
    pub arrivals: u64,
    pub drops: u64,
    pub sent: u64,
    pub collided: u64,
    pub successes: u64,
    /// `(success_slot, delay_slots)` for every delivered packet.
    pub delays: Vec<(u64, u64)>,
}

#[derive(Debug, Clone)]
struct BusyPeriod {
    end: u64,
    transmitters: Vec<usize>,
}

/// What happened during one call to [`Bss::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub slot: u64,
    pub outcome: ChannelOutcome,
    /// Stations that started a transmission in this slot.
    pub started: Vec<usize>,
}

impl SlotReport {
    pub fn channel_busy(&self) -> bool {
        !self.outcome.is_idle()
    }
}

pub struct Bss {
    config: SimConfig,
    roles: Vec<StationRole>,
    edca: Vec<Option<EdcaStation>>,
    slot: u64,
    buffers: Vec<VecDeque<Packet>>,
    busy: Option<BusyPeriod>,
    prev_idle: bool,
    arrivals: ArrivalProcess,
    arrivals_ready: bool,
    edca_rng: ChaCha8Rng,
    counters: Vec<StationCounters>,
}

impl Bss {
    pub fn new(config: SimConfig, roles: Vec<StationRole>) -> Result<Self> {
        config.validate()?;
        if roles.len() != config.n_stations {
            return Err(Error::RosterMismatch {
                key: "roles".into(),
                reason: format!("{} roles for {} stations", roles.len(), config.n_stations),
            });
        }
        let edca = roles
            .iter()
            .map(|r| match r {
                StationRole::Edca(ac) => Some(EdcaStation::new(*ac, config.difs_slots)),
                StationRole::External => None,
            })
            .collect();
        let n = config.n_stations;
        Ok(Self {
            arrivals: ArrivalProcess::new(&config),
            edca_rng: ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0xEDCA_0000_0000_0001),
            buffers: vec![VecDeque::with_capacity(config.buffer_capacity); n],
            counters: vec![StationCounters::default(); n],
            config,
            roles,
            edca,
            slot: 0,
            busy: None,
            // Nothing was on air before the first slot.
            prev_idle: true,
            arrivals_ready: false,
        })
    }

    /// Convenience constructor for a BSS made only of EDCA stations.
    pub fn edca_only(config: SimConfig, ac: AccessCategory) -> Result<Self> {
        let roles = vec![StationRole::Edca(ac); config.n_stations];
        Self::new(config, roles)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn roles(&self) -> &[StationRole] {
        &self.roles
    }

    /// Index of the slot that the next `step` call simulates.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn counters(&self) -> &[StationCounters] {
        &self.counters
    }

    pub fn buffer_len(&self, station: usize) -> usize {
        self.buffers[station].len()
    }

    pub fn edca_station(&self, station: usize) -> Option<&EdcaStation> {
        self.edca[station].as_ref()
    }

    /// Whether the previous slot was sensed idle.
    pub fn sensed_idle(&self) -> bool {
        self.prev_idle
    }

    /// A station has a free choice this slot: idle channel in the previous
    /// slot and a non-empty buffer. Call after [`Bss::begin_slot`].
    pub fn can_transmit(&self, station: usize) -> bool {
        self.prev_idle && self.busy.is_none() && !self.buffers[station].is_empty()
    }

    /// Stations currently on air (including SIFS/ACK of their period).
    pub fn transmitting(&self, station: usize) -> bool {
        self.busy.as_ref().is_some_and(|b| b.transmitters.contains(&station))
    }

    /// Generates this slot's arrivals. Idempotent within a slot.
    pub fn begin_slot(&mut self) {
        if self.arrivals_ready {
            return;
        }
        self.arrivals_ready = true;
        let slot = self.slot;
        let counts = self.arrivals.sample(slot, &self.buffers, self.config.buffer_capacity);
        for (station, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let c = &mut self.counters[station];
                c.arrivals += 1;
                if self.buffers[station].len() >= self.config.buffer_capacity {
                    c.drops += 1;
                } else {
                    self.buffers[station].push_back(Packet { arrival_slot: slot, station });
                }
            }
        }
    }

    /// Fills in decisions for built-in EDCA stations; other entries are left untouched.
    pub fn decide_edca(&mut self, joint: &mut [Action]) {
        self.begin_slot();
        let idle = self.prev_idle && self.busy.is_none();
        for (i, st) in self.edca.iter_mut().enumerate() {
            if let Some(st) = st {
                if self.busy.as_ref().is_some_and(|b| b.transmitters.contains(&i)) {
                    joint[i] = Action::Wait;
                    st.observe_busy();
                    continue;
                }
                let has_packet = !self.buffers[i].is_empty();
                joint[i] = st.decide(idle, has_packet, &mut self.edca_rng);
            }
        }
    }

    /// Simulates one slot with the given joint action.
    pub fn step(&mut self, joint: &[Action]) -> Result<SlotReport> {
        let n = self.config.n_stations;
        if joint.len() != n {
            return Err(Error::ActionCount { expected: n, got: joint.len() });
        }
        self.begin_slot();
        let slot = self.slot;

        let (outcome, started) = match &self.busy {
            Some(period) => {
                for (i, a) in joint.iter().enumerate() {
                    if *a == Action::Transmit && !period.transmitters.contains(&i) {
                        return Err(Error::TransmitWhileBusy { station: i });
                    }
                }
                if slot == period.end {
                    (self.resolve(slot), Vec::new())
                } else {
                    (ChannelOutcome::Busy, Vec::new())
                }
            }
            None => {
                let started: Vec<usize> = joint
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a == Action::Transmit)
                    .map(|(i, _)| i)
                    .collect();
                for &i in &started {
                    if !self.prev_idle {
                        return Err(Error::TransmitWhileBusy { station: i });
                    }
                    if self.buffers[i].is_empty() {
                        return Err(Error::TransmitWithEmptyBuffer { station: i });
                    }
                }
                if started.is_empty() {
                    (ChannelOutcome::Idle, started)
                } else {
                    for &i in &started {
                        self.counters[i].sent += 1;
                    }
                    self.busy = Some(BusyPeriod {
                        end: slot + self.config.busy_slots() - 1,
                        transmitters: started.clone(),
                    });
                    let outcome = if self.config.busy_slots() == 1 {
                        self.resolve(slot)
                    } else {
                        ChannelOutcome::Busy
                    };
                    (outcome, started)
                }
            }
        };

        self.prev_idle = outcome.is_idle();
        self.slot += 1;
        self.arrivals_ready = false;
        Ok(SlotReport { slot, outcome, started })
    }

    fn resolve(&mut self, slot: u64) -> ChannelOutcome {
        let period = self.busy.take().expect("resolve without busy period");
        let outcome = if period.transmitters.len() == 1 {
            let i = period.transmitters[0];
            let packet = self.buffers[i].pop_front().expect("transmitter lost its packet");
            let c = &mut self.counters[i];
            c.successes += 1;
            c.delays.push((slot, measure_delay(&packet, slot)));
            ChannelOutcome::Success(i)
        } else {
            for &i in &period.transmitters {
                self.counters[i].collided += 1;
            }
            ChannelOutcome::Collision(period.transmitters)
        };
        for (i, st) in self.edca.iter_mut().enumerate() {
            if let Some(st) = st {
                st.on_outcome(i, &outcome, &mut self.edca_rng);
            }
        }
        outcome
    }
}
