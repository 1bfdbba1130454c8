use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{Packet, SimConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficModel {
    /// Poisson arrivals with the given mean rate in packets per second.
    Poisson { rate_per_s: f64 },
    /// One packet every `period_ms`, with a random phase per station.
    Periodic { period_ms: f64 },
    /// The buffer is refilled to capacity every slot.
    Saturated,
}

impl TrafficModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TrafficModel::Poisson { rate_per_s } if !(rate_per_s.is_finite() && rate_per_s >= 0.0) => {
                Err(Error::RangeViolation {
                    key: "traffic.rate_per_s".into(),
                    reason: format!("{rate_per_s} is not a non-negative rate"),
                })
            }
            TrafficModel::Periodic { period_ms } if !(period_ms.is_finite() && period_ms > 0.0) => {
                Err(Error::RangeViolation {
                    key: "traffic.period_ms".into(),
                    reason: format!("{period_ms} is not a positive period"),
                })
            }
            _ => Ok(()),
        }
    }

    /// Period of a periodic source in whole slots (at least one).
    pub fn period_slots(period_ms: f64, slot_us: f64) -> u64 {
        ((period_ms * 1000.0 / slot_us).round() as u64).max(1)
    }

    /// Expected arrivals per slot; `None` for saturated sources.
    pub fn mean_per_slot(&self, slot_us: f64) -> Option<f64> {
        match *self {
            TrafficModel::Poisson { rate_per_s } => Some(rate_per_s * slot_us * 1e-6),
            TrafficModel::Periodic { period_ms } => Some(1.0 / Self::period_slots(period_ms, slot_us) as f64),
            TrafficModel::Saturated => None,
        }
    }
}

enum Source {
    Silent,
    Poisson(Poisson<f64>),
    Periodic { period: u64, phase: u64 },
    Saturated,
}

/// Seeded arrival generator for every station of a BSS.
pub struct ArrivalProcess {
    sources: Vec<Source>,
    rng: ChaCha8Rng,
}

impl ArrivalProcess {
    pub fn new(config: &SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let sources = config
            .traffic
            .iter()
            .map(|t| match *t {
                TrafficModel::Poisson { rate_per_s } => {
                    let mean = rate_per_s * config.slot_us * 1e-6;
                    match Poisson::new(mean) {
                        Ok(p) if mean > 0.0 => Source::Poisson(p),
                        _ => Source::Silent,
                    }
                }
                TrafficModel::Periodic { period_ms } => {
                    let period = TrafficModel::period_slots(period_ms, config.slot_us);
                    Source::Periodic { period, phase: rng.random_range(0..period) }
                }
                TrafficModel::Saturated => Source::Saturated,
            })
            .collect();
        Self { sources, rng }
    }

    /// Number of packets generated for each station in `slot`.
    pub fn sample(&mut self, slot: u64, buffers: &[VecDeque<Packet>], capacity: usize) -> Vec<usize> {
        self.sources
            .iter()
            .zip(buffers)
            .map(|(src, buf)| match src {
                Source::Silent => 0,
                Source::Poisson(p) => p.sample(&mut self.rng) as usize,
                Source::Periodic { period, phase } => usize::from(slot % period == *phase),
                Source::Saturated => capacity.saturating_sub(buf.len()),
            })
            .collect()
    }
}

/// Packets generated in `slot`, per station. Capacity is enforced by the caller.
pub fn generate_arrivals(
    process: &mut ArrivalProcess,
    slot: u64,
    buffers: &[VecDeque<Packet>],
    capacity: usize,
) -> Vec<Vec<Packet>> {
    process
        .sample(slot, buffers, capacity)
        .into_iter()
        .enumerate()
        .map(|(station, n)| vec![Packet { arrival_slot: slot, station }; n])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn process(model: TrafficModel, seed: u64) -> (ArrivalProcess, Vec<VecDeque<Packet>>) {
        let cfg = SimConfig::standard(1, model, seed);
        (ArrivalProcess::new(&cfg), vec![VecDeque::new()])
    }

    #[test]
    fn zero_rate_never_arrives() {
        let (mut p, bufs) = process(TrafficModel::Poisson { rate_per_s: 0.0 }, 1);
        for slot in 0..10_000 {
            assert!(generate_arrivals(&mut p, slot, &bufs, 10)[0].is_empty());
        }
    }

    #[test]
    fn periodic_spacing() {
        assert_eq!(TrafficModel::period_slots(20.0, 9.0), 2222);
        let (mut p, bufs) = process(TrafficModel::Periodic { period_ms: 20.0 }, 5);
        let slots: Vec<u64> = (0..10_000)
            .filter(|&s| !generate_arrivals(&mut p, s, &bufs, 10)[0].is_empty())
            .collect();
        assert!((4..=5).contains(&slots.len()));
        for w in slots.windows(2) {
            assert_eq!(w[1] - w[0], 2222);
        }
    }

    #[test]
    fn poisson_mean_matches_rate() {
        let n = 1_000_000u64;
        let (mut p, bufs) = process(TrafficModel::Poisson { rate_per_s: 2000.0 }, 11);
        let total: usize = (0..n).map(|s| p.sample(s, &bufs, 10)[0]).sum();
        let mean = 2000.0 * 9e-6;
        let sigma = (mean / n as f64).sqrt();
        let got = total as f64 / n as f64;
        assert!((got - mean).abs() < 3.0 * sigma, "mean {got} vs {mean}");
    }

    #[test]
    fn saturated_tops_up() {
        let (mut p, mut bufs) = process(TrafficModel::Saturated, 1);
        assert_eq!(p.sample(0, &bufs, 10)[0], 10);
        bufs[0].extend(std::iter::repeat_n(Packet { arrival_slot: 0, station: 0 }, 7));
        assert_eq!(p.sample(1, &bufs, 10)[0], 3);
    }

    #[test]
    fn rejects_negative_rate() {
        assert!(TrafficModel::Poisson { rate_per_s: -1.0 }.validate().is_err());
        assert!(TrafficModel::Periodic { period_ms: 0.0 }.validate().is_err());
    }
}
