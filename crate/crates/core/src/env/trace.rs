use std::fmt;

use super::ChannelOutcome;
use crate::error::{Error, Result};

/// One line of the per-slot debug trace: `<slot> <kind>[ <id>,<id>...]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub slot: u64,
    pub outcome: ChannelOutcome,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        self.to_string()
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = |why: &str| Error::Trace(format!("{why}: {line:?}"));
        let mut parts = line.split_ascii_whitespace();
        let slot = parts
            .next()
            .ok_or_else(|| bad("empty line"))?
            .parse::<u64>()
            .map_err(|_| bad("bad slot index"))?;
        let kind = parts.next().ok_or_else(|| bad("missing outcome"))?;
        let ids = match parts.next() {
            Some(list) => list
                .split(',')
                .map(|s| s.parse::<usize>().map_err(|_| bad("bad station id")))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        if parts.next().is_some() {
            return Err(bad("trailing fields"));
        }
        let outcome = match (kind, ids.len()) {
            ("idle", 0) => ChannelOutcome::Idle,
            ("busy", 0) => ChannelOutcome::Busy,
            ("success", 1) => ChannelOutcome::Success(ids[0]),
            ("collision", n) if n >= 2 => {
                let mut sorted = ids.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != n {
                    return Err(bad("repeated station id"));
                }
                ChannelOutcome::Collision(ids)
            }
            _ => return Err(bad("outcome and station ids disagree")),
        };
        Ok(Self { slot, outcome })
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            ChannelOutcome::Idle => write!(f, "{} idle", self.slot),
            ChannelOutcome::Busy => write!(f, "{} busy", self.slot),
            ChannelOutcome::Success(i) => write!(f, "{} success {i}", self.slot),
            ChannelOutcome::Collision(ids) => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "{} collision {}", self.slot, ids.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for outcome in [
            ChannelOutcome::Idle,
            ChannelOutcome::Busy,
            ChannelOutcome::Success(3),
            ChannelOutcome::Collision(vec![0, 2, 5]),
        ] {
            let r = TraceRecord { slot: 42, outcome };
            assert_eq!(TraceRecord::parse_line(&r.to_line()).unwrap(), r);
        }
    }

    #[test]
    fn rejects_malformed() {
        for line in ["", "x idle", "1 success", "1 collision 4", "1 collision 2,2", "1 idle 3", "1 busy x y", "1 nope"] {
            assert!(TraceRecord::parse_line(line).is_err(), "{line}");
        }
    }
}
