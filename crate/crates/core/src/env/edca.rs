use rand::Rng;

use super::{Action, ChannelOutcome};

/// EDCA access categories with their contention window bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessCategory {
    Voice,
    Video,
    BestEffort,
}

impl AccessCategory {
    pub fn cw_min(self) -> u32 {
        match self {
            AccessCategory::Voice => 7,
            AccessCategory::Video => 15,
            AccessCategory::BestEffort => 31,
        }
    }

    pub fn cw_max(self) -> u32 {
        match self {
            AccessCategory::Voice => 15,
            AccessCategory::Video => 31,
            AccessCategory::BestEffort => 1023,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AccessCategory::Voice => "AC_VO",
            AccessCategory::Video => "AC_VI",
            AccessCategory::BestEffort => "AC_BE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "AC_VO" | "vo" | "voice" => Some(AccessCategory::Voice),
            "AC_VI" | "vi" | "video" => Some(AccessCategory::Video),
            "AC_BE" | "be" | "best_effort" => Some(AccessCategory::BestEffort),
            _ => None,
        }
    }
}

/// Listen-before-talk station with binary exponential backoff.
///
/// The station waits for `difs` idle slots, then counts down a backoff drawn
/// uniformly from `[0, cw]`, one step per further idle slot. Any busy slot
/// restarts the DIFS wait but keeps the remaining backoff.
#[derive(Debug, Clone, PartialEq)]
pub struct EdcaStation {
    pub ac: AccessCategory,
    pub cw: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Remaining backoff for the head-of-line packet, drawn lazily.
    pub backoff: Option<u32>,
    difs: u32,
    idle_run: u32,
}

impl EdcaStation {
    pub fn new(ac: AccessCategory, difs: u32) -> Self {
        Self {
            ac,
            cw: ac.cw_min(),
            cw_min: ac.cw_min(),
            cw_max: ac.cw_max(),
            backoff: None,
            difs,
            idle_run: 0,
        }
    }

    /// Decision for the current slot given the carrier-sense result of the previous one.
    pub fn decide<R: Rng + ?Sized>(&mut self, channel_idle: bool, has_packet: bool, rng: &mut R) -> Action {
        if !channel_idle {
            self.idle_run = 0;
            return Action::Wait;
        }
        self.idle_run = self.idle_run.saturating_add(1);
        if !has_packet {
            return Action::Wait;
        }
        let backoff = match self.backoff {
            Some(b) if self.idle_run > self.difs && b > 0 => b - 1,
            Some(b) => b,
            None => rng.random_range(0..=self.cw),
        };
        self.backoff = Some(backoff);
        if self.idle_run >= self.difs && backoff == 0 {
            Action::Transmit
        } else {
            Action::Wait
        }
    }

    /// Called while the station's own transmission is on air.
    pub fn observe_busy(&mut self) {
        self.idle_run = 0;
    }

    pub fn on_outcome<R: Rng + ?Sized>(&mut self, me: usize, outcome: &ChannelOutcome, rng: &mut R) {
        match outcome {
            ChannelOutcome::Success(i) if *i == me => {
                self.cw = self.cw_min;
                self.backoff = None;
            }
            ChannelOutcome::Collision(ids) if ids.contains(&me) => {
                self.cw = (2 * (self.cw + 1) - 1).min(self.cw_max);
                self.backoff = Some(rng.random_range(0..=self.cw));
            }
            _ => {}
        }
    }
}
