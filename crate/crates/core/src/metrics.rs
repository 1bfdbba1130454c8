//! Throughput, delay, jitter, collision rate and fairness.

use crate::env::{SimConfig, StationCounters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StationStats {
    pub successes: u64,
    pub sent: u64,
    pub collided: u64,
    pub drops: u64,
    pub delays: Vec<u64>,
}

/// Counters over a measurement window, plus the airtime a success occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub stations: Vec<StationStats>,
    pub total_slots: u64,
    pub packet_slots: u64,
    pub slot_us: f64,
}

impl RunStats {
    /// Snapshot of env counters, keeping only successes whose ACK slot is
    /// at or after `warmup` slots. Sent/collided/drop counts are whole-run.
    pub fn from_counters(config: &SimConfig, counters: &[StationCounters], total_slots: u64, warmup: u64) -> Self {
        let stations = counters
            .iter()
            .map(|c| {
                let delays: Vec<u64> = c.delays.iter().filter(|(s, _)| *s >= warmup).map(|(_, d)| *d).collect();
                StationStats {
                    successes: delays.len() as u64,
                    sent: c.sent,
                    collided: c.collided,
                    drops: c.drops,
                    delays,
                }
            })
            .collect();
        Self {
            stations,
            total_slots: total_slots.saturating_sub(warmup),
            packet_slots: config.packet_slots as u64,
            slot_us: config.slot_us,
        }
    }

    /// Difference of two cumulative counter snapshots, for window metrics.
    pub fn window(config: &SimConfig, before: &[StationCounters], after: &[StationCounters], slots: u64) -> Self {
        let stations = before
            .iter()
            .zip(after)
            .map(|(b, a)| StationStats {
                successes: a.successes - b.successes,
                sent: a.sent - b.sent,
                collided: a.collided - b.collided,
                drops: a.drops - b.drops,
                delays: a.delays[b.delays.len()..].iter().map(|(_, d)| *d).collect(),
            })
            .collect();
        Self { stations, total_slots: slots, packet_slots: config.packet_slots as u64, slot_us: config.slot_us }
    }
}

/// Per-station fraction of slots carrying a successful packet.
pub fn per_station_throughput(stats: &RunStats) -> Vec<f64> {
    if stats.total_slots == 0 {
        return vec![0.0; stats.stations.len()];
    }
    stats
        .stations
        .iter()
        .map(|s| (s.successes * stats.packet_slots) as f64 / stats.total_slots as f64)
        .collect()
}

pub fn throughput(stats: &RunStats) -> f64 {
    per_station_throughput(stats).iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySummary {
    pub mean_s: f64,
    /// Population variance, in s².
    pub jitter_s2: f64,
    /// Sorted `(delay_s, cumulative fraction)` pairs.
    pub cdf: Vec<(f64, f64)>,
}

pub fn delay_stats(stats: &RunStats) -> Result<DelaySummary> {
    let mut all: Vec<u64> = stats.stations.iter().flat_map(|s| s.delays.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::NoSuccesses);
    }
    all.sort_unstable();
    let to_s = stats.slot_us * 1e-6;
    let n = all.len() as f64;
    let mean = all.iter().map(|&d| d as f64).sum::<f64>() / n;
    let var = all.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n;
    let mut cdf = Vec::new();
    for (k, &d) in all.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        if all.get(k + 1) != Some(&d) {
            cdf.push((d as f64 * to_s, frac));
        }
    }
    Ok(DelaySummary { mean_s: mean * to_s, jitter_s2: var * to_s * to_s, cdf })
}

pub fn collision_rate(stats: &RunStats) -> Result<f64> {
    let sent: u64 = stats.stations.iter().map(|s| s.sent).sum();
    if sent == 0 {
        return Err(Error::NothingSent);
    }
    let collided: u64 = stats.stations.iter().map(|s| s.collided).sum();
    Ok(collided as f64 / sent as f64)
}

/// Jain's fairness index `(Σe)² / (N·Σe²)`.
pub fn jfi(e: &[f64]) -> Result<f64> {
    if e.is_empty() {
        return Err(Error::Empty("throughput vector"));
    }
    if e.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Numerical("fairness index needs finite non-negative inputs".into()));
    }
    let sum: f64 = e.iter().sum();
    let sq: f64 = e.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(Error::AllZero);
    }
    Ok((sum * sum / (e.len() as f64 * sq)).min(1.0))
}
