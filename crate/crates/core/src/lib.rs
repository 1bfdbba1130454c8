//! Slotted WLAN channel-access simulator with heterogeneous multi-agent
//! reinforcement learning, EDCA baselines, metrics and a linear
//! actor-critic convergence lab.

pub mod agents;
pub mod config;
pub mod convlab;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod obs;
pub mod qpmix;
pub mod runner;

pub use error::{Error, Result};
