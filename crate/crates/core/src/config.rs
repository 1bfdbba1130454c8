//! Scenario files: TOML text in, a fully resolved [`ScenarioSpec`] out.
//!
//! Every key has a default except `scenario` and `n_stations`. The resolved
//! spec serializes back to TOML that parses to the same value.

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::convlab::{FeatureKind, LabConfig, PowerLaw, StepSchedule};
use crate::env::{AccessCategory, SimConfig, TrafficModel};
use crate::error::{Error, Result};
use crate::qpmix::{LearningMode, Roster, RunConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Saturated,
    Unsaturated,
    Voip,
    MixedRoster,
    Coexistence,
    IndependentLearning,
    Convlab,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Saturated => "saturated",
            Scenario::Unsaturated => "unsaturated",
            Scenario::Voip => "voip",
            Scenario::MixedRoster => "mixed-roster",
            Scenario::Coexistence => "coexistence",
            Scenario::IndependentLearning => "independent-learning",
            Scenario::Convlab => "convlab",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrafficSpec {
    Poisson { rate_per_s: f64 },
    Periodic { period_ms: f64 },
    Saturated,
}

impl TrafficSpec {
    pub fn model(&self) -> TrafficModel {
        match *self {
            TrafficSpec::Poisson { rate_per_s } => TrafficModel::Poisson { rate_per_s },
            TrafficSpec::Periodic { period_ms } => TrafficModel::Periodic { period_ms },
            TrafficSpec::Saturated => TrafficModel::Saturated,
        }
    }

    fn check(&self, key: &str) -> Result<()> {
        let bad = |field: &str, v: f64| {
            Err(Error::RangeViolation { key: format!("{key}.{field}"), reason: format!("{v} must be positive and finite") })
        };
        match *self {
            TrafficSpec::Poisson { rate_per_s } if !(rate_per_s.is_finite() && rate_per_s >= 0.0) => {
                bad("rate_per_s", rate_per_s)
            }
            TrafficSpec::Periodic { period_ms } if !(period_ms.is_finite() && period_ms > 0.0) => {
                bad("period_ms", period_ms)
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterSpec {
    #[serde(default)]
    pub dqn: usize,
    #[serde(default)]
    pub ppo: usize,
    /// Access categories of the EDCA stations, e.g. `"AC_BE"`.
    #[serde(default)]
    pub edca: Vec<String>,
}

impl RosterSpec {
    pub fn total(&self) -> usize {
        self.dqn + self.ppo + self.edca.len()
    }

    pub fn roster(&self) -> Result<Roster> {
        let edca = self
            .edca
            .iter()
            .map(|s| {
                AccessCategory::parse(s).ok_or_else(|| Error::RangeViolation {
                    key: "roster.edca".into(),
                    reason: format!("unknown access category {s:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Roster { dqn: self.dqn, ppo: self.ppo, edca })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "d::slot_us")]
    pub slot_us: f64,
    #[serde(default = "d::sifs")]
    pub sifs_slots: u32,
    #[serde(default = "d::difs")]
    pub difs_slots: u32,
    #[serde(default = "d::packet")]
    pub packet_slots: u32,
    #[serde(default = "d::ack")]
    pub ack_slots: u32,
    #[serde(default = "d::buffer")]
    pub buffer_capacity: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            slot_us: d::slot_us(),
            sifs_slots: d::sifs(),
            difs_slots: d::difs(),
            packet_slots: d::packet(),
            ack_slots: d::ack(),
            buffer_capacity: d::buffer(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    Qpmix,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default = "d::gamma")]
    pub gamma: f64,
    #[serde(default = "d::batch")]
    pub batch_size: usize,
    #[serde(default = "d::replay")]
    pub buffer_capacity: usize,
    #[serde(default = "d::n_c")]
    pub n_c: u64,
    #[serde(default = "d::n_t")]
    pub n_t: u64,
    #[serde(default = "d::grad_clip")]
    pub grad_clip: f64,
    #[serde(default = "d::gae_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "d::mixer_hidden")]
    pub mixer_hidden: usize,
    #[serde(default = "d::history")]
    pub history: usize,
    #[serde(default = "d::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d::lr_q")]
    pub lr_q: f64,
    #[serde(default = "d::lr_actor")]
    pub lr_actor: f64,
    #[serde(default = "d::eps_start")]
    pub eps_start: f64,
    #[serde(default = "d::eps_min")]
    pub eps_min: f64,
    #[serde(default = "d::eps_decay")]
    pub eps_decay: f64,
    #[serde(default = "d::ppo_clip")]
    pub ppo_clip: f64,
    /// Resolved from the scenario when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeSpec>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        toml::from_str("").expect("every training key has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    /// Slots of the evaluation after training; 0 skips it.
    #[serde(default = "d::eval_slots")]
    pub slots: u64,
    /// Test traffic; the training traffic when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficSpec>,
    /// DQN exploration while executing; `train.eps_min` when absent. With 0
    /// every learner may settle on Wait and the channel stays idle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { slots: d::eval_slots(), traffic: None, epsilon: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabMode {
    /// Critics only, joint policy frozen.
    Frozen,
    /// Critic and actor on two time scales.
    TwoTimeScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvlabSpec {
    #[serde(default = "d::lab_features")]
    pub features: Vec<String>,
    #[serde(default = "d::lab_modes")]
    pub modes: Vec<LabMode>,
    #[serde(default = "d::lab_iterations")]
    pub iterations: u64,
    #[serde(default = "d::lab_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d::lab_p_max")]
    pub consensus_p_max: f64,
    #[serde(default = "d::lab_bound")]
    pub theta_bound: f64,
    #[serde(default = "d::lab_trace")]
    pub trace_every: u64,
    /// Critic schedule of frozen-policy runs.
    #[serde(default = "d::frozen_omega")]
    pub frozen_omega: PowerLaw,
    /// Both schedules of two-time-scale runs.
    #[serde(default = "d::schedule")]
    pub schedule: StepSchedule,
}

impl Default for ConvlabSpec {
    fn default() -> Self {
        toml::from_str("").expect("every lab key has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_stations: usize,
    #[serde(default = "d::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d::slots")]
    pub slots: u64,
    /// Slots per row of the training curve.
    #[serde(default = "d::window")]
    pub window: u64,
    /// Trailing training slots summarized as the final window.
    #[serde(default = "d::tail")]
    pub tail: u64,
    #[serde(default = "d::out_dir")]
    pub out_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roster: Option<RosterSpec>,
    /// Learner counts swept by coexistence runs; the rest are AC_BE stations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_learners: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficSpec>,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub convlab: ConvlabSpec,
}

/// Parses, fills scenario-dependent defaults and validates.
pub fn parse_config(text: &str) -> Result<ScenarioSpec> {
    let mut spec: ScenarioSpec = toml::from_str(text).map_err(map_toml_error)?;
    spec.resolve();
    spec.validate()?;
    Ok(spec)
}

fn map_toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return Error::UnknownKey(rest[..end].to_string());
        }
    }
    if let Some(rest) = msg.strip_prefix("unknown variant `") {
        if let Some(end) = rest.find('`') {
            return Error::Parse(format!("unknown value `{}`", &rest[..end]));
        }
    }
    Error::Parse(msg)
}

impl ScenarioSpec {
    fn resolve(&mut self) {
        let n = self.n_stations;
        if self.roster.is_none() {
            let (dqn, ppo) = match self.scenario {
                Scenario::MixedRoster => (n.saturating_sub(1), n.min(1)),
                Scenario::Coexistence => (0, 0),
                _ => (n.div_ceil(2), n / 2),
            };
            let edca = if self.scenario == Scenario::Coexistence { vec!["AC_BE".to_string(); n] } else { Vec::new() };
            self.roster = Some(RosterSpec { dqn, ppo, edca });
        }
        if self.scenario == Scenario::Coexistence && self.sweep_learners.is_none() {
            self.sweep_learners = Some((0..n).collect());
        }
        if self.traffic.is_none() {
            self.traffic = Some(match self.scenario {
                Scenario::Coexistence => TrafficSpec::Poisson { rate_per_s: 200.0 },
                _ => TrafficSpec::Saturated,
            });
        }
        if self.eval.traffic.is_none() {
            self.eval.traffic = Some(match self.scenario {
                Scenario::Unsaturated => TrafficSpec::Poisson { rate_per_s: 200.0 },
                Scenario::Voip => TrafficSpec::Periodic { period_ms: 20.0 },
                _ => self.traffic.clone().expect("resolved above"),
            });
        }
        if self.train.mode.is_none() {
            self.train.mode = Some(match self.scenario {
                Scenario::IndependentLearning => ModeSpec::Independent,
                _ => ModeSpec::Qpmix,
            });
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, reason: String| Err(Error::RangeViolation { key: key.into(), reason });
        if self.n_stations == 0 {
            return range("n_stations", "must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return range("seeds", "needs at least one seed".into());
        }
        if self.slots == 0 {
            return range("slots", "must be positive".into());
        }
        if self.window == 0 {
            return range("window", "must be positive".into());
        }
        if self.tail == 0 || self.tail > self.slots {
            return range("tail", format!("{} must lie in 1..={}", self.tail, self.slots));
        }
        if let Some(t) = &self.traffic {
            t.check("traffic")?;
        }
        if let Some(t) = &self.eval.traffic {
            t.check("eval.traffic")?;
        }
        if let Some(e) = self.eval.epsilon {
            if !(0.0..=1.0).contains(&e) {
                return range("eval.epsilon", format!("{e} must lie in [0, 1]"));
            }
        }
        if let Some(r) = &self.roster {
            r.roster()?;
            if r.total() != self.n_stations && self.scenario != Scenario::Convlab {
                return Err(Error::RosterMismatch {
                    key: "roster".into(),
                    reason: format!("{} stations listed, n_stations is {}", r.total(), self.n_stations),
                });
            }
        }
        if let Some(sweep) = &self.sweep_learners {
            if sweep.is_empty() || sweep.iter().any(|&k| k > self.n_stations) {
                return Err(Error::RosterMismatch {
                    key: "sweep_learners".into(),
                    reason: format!("counts must be nonempty and at most n_stations = {}", self.n_stations),
                });
            }
        }
        let s = &self.sim;
        if !(s.slot_us.is_finite() && s.slot_us > 0.0) {
            return range("sim.slot_us", format!("{} must be positive", s.slot_us));
        }
        if s.packet_slots == 0 || s.ack_slots == 0 || s.buffer_capacity == 0 {
            return range("sim", "packet_slots, ack_slots and buffer_capacity must be positive".into());
        }
        let t = &self.train;
        if !(0.0..1.0).contains(&t.gamma) {
            return range("train.gamma", format!("{} is outside [0, 1)", t.gamma));
        }
        if t.batch_size == 0 || t.buffer_capacity < t.batch_size {
            return range("train.batch_size", "must be positive and fit in the replay buffer".into());
        }
        if t.n_c == 0 {
            return range("train.n_c", "must be positive".into());
        }
        if t.n_t == 0 {
            return range("train.n_t", "must be positive".into());
        }
        if !(t.grad_clip > 0.0) {
            return range("train.grad_clip", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&t.gae_lambda) {
            return range("train.gae_lambda", format!("{} is outside [0, 1]", t.gae_lambda));
        }
        if t.mixer_hidden == 0 || t.history == 0 || t.hidden.is_empty() || t.hidden.contains(&0) {
            return range("train", "mixer_hidden, history and hidden widths must be positive".into());
        }
        for (key, lr) in [("train.lr_q", t.lr_q), ("train.lr_actor", t.lr_actor)] {
            if !(lr.is_finite() && lr > 0.0) {
                return range(key, format!("{lr} must be positive"));
            }
        }
        if !(0.0 <= t.eps_min && t.eps_min <= t.eps_start && t.eps_start <= 1.0) {
            return range("train.eps_start", "need 0 ≤ eps_min ≤ eps_start ≤ 1".into());
        }
        if !(t.eps_decay > 0.0 && t.eps_decay <= 1.0) {
            return range("train.eps_decay", format!("{} is outside (0, 1]", t.eps_decay));
        }
        if !(t.ppo_clip > 0.0 && t.ppo_clip < 1.0) {
            return range("train.ppo_clip", format!("{} is outside (0, 1)", t.ppo_clip));
        }
        let c = &self.convlab;
        for f in &c.features {
            if FeatureKind::parse(f).is_none() {
                return range("convlab.features", format!("unknown feature kind {f:?}"));
            }
        }
        if c.features.is_empty() || c.modes.is_empty() {
            return range("convlab", "features and modes must be nonempty".into());
        }
        if c.iterations == 0 {
            return range("convlab.iterations", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&c.epsilon) {
            return range("convlab.epsilon", format!("{} is outside [0, 1]", c.epsilon));
        }
        if !(0.0..=1.0).contains(&c.consensus_p_max) {
            return range("convlab.consensus_p_max", format!("{} is outside [0, 1]", c.consensus_p_max));
        }
        if !(c.theta_bound > 0.0) {
            return range("convlab.theta_bound", "must be positive".into());
        }
        c.frozen_omega.check("convlab.frozen_omega")?;
        c.schedule.validate()?;
        Ok(())
    }

    /// TOML of the resolved spec.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn traffic(&self) -> TrafficSpec {
        self.traffic.clone().unwrap_or(TrafficSpec::Saturated)
    }

    pub fn eval_traffic(&self) -> TrafficSpec {
        self.eval.traffic.clone().unwrap_or_else(|| self.traffic())
    }

    pub fn sim_config(&self, traffic: &TrafficSpec, seed: u64) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            n_stations: self.n_stations,
            slot_us: s.slot_us,
            sifs_slots: s.sifs_slots,
            difs_slots: s.difs_slots,
            packet_slots: s.packet_slots,
            ack_slots: s.ack_slots,
            buffer_capacity: s.buffer_capacity,
            traffic: vec![traffic.model(); self.n_stations],
            rng_seed: seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            gamma: t.gamma,
            batch_size: t.batch_size,
            buffer_capacity: t.buffer_capacity,
            n_c: t.n_c,
            n_t: t.n_t,
            grad_clip: t.grad_clip,
            gae_lambda: t.gae_lambda,
            mixer_hidden: t.mixer_hidden,
            history: t.history,
            agent: AgentConfig {
                hidden: t.hidden.clone(),
                lr_q: t.lr_q,
                lr_actor: t.lr_actor,
                eps_start: t.eps_start,
                eps_min: t.eps_min,
                eps_decay: t.eps_decay,
                clip: t.ppo_clip,
            },
            mode: match t.mode {
                Some(ModeSpec::Independent) => LearningMode::Independent,
                _ => LearningMode::Qpmix,
            },
        }
    }

    /// Rosters this spec runs: the configured one, or one per coexistence sweep entry.
    pub fn rosters(&self) -> Result<Vec<(String, Roster)>> {
        if let Some(sweep) = &self.sweep_learners {
            return Ok(sweep
                .iter()
                .map(|&k| {
                    let roster = Roster {
                        dqn: k.div_ceil(2),
                        ppo: k / 2,
                        edca: vec![AccessCategory::BestEffort; self.n_stations - k],
                    };
                    (format!("learners{k}"), roster)
                })
                .collect());
        }
        let r = self.roster.as_ref().map_or_else(|| Ok(Roster::default()), RosterSpec::roster)?;
        Ok(vec![("main".to_string(), r)])
    }

    /// Training run for one roster and seed.
    pub fn run_config(&self, roster: Roster, seed: u64) -> RunConfig {
        let learn = roster.n_learners() > 0;
        RunConfig {
            sim: self.sim_config(&self.traffic(), seed),
            roster,
            train: self.train_config(),
            slots: self.slots,
            window: self.window,
            tail: self.tail,
            learn,
            trace: false,
        }
    }

    /// Greedy evaluation run, on its own arrival stream.
    pub fn eval_config(&self, roster: Roster, seed: u64) -> RunConfig {
        let slots = self.eval.slots.max(1);
        let mut train = self.train_config();
        if let Some(e) = self.eval.epsilon {
            train.agent.eps_min = e;
        }
        RunConfig {
            sim: self.sim_config(&self.eval_traffic(), seed ^ EVAL_SEED_MASK),
            roster,
            train,
            slots,
            window: self.window,
            tail: slots,
            learn: false,
            trace: false,
        }
    }

    /// Lab runs: every seed × feature kind × mode.
    pub fn lab_configs(&self) -> Vec<LabConfig> {
        let c = &self.convlab;
        let mut out = Vec::new();
        for mode in &c.modes {
            for f in &c.features {
                let features = FeatureKind::parse(f).expect("validated");
                for &seed in &self.seeds {
                    let (schedule, train_actor) = match mode {
                        LabMode::Frozen => (StepSchedule { omega: c.frozen_omega, theta: c.schedule.theta }, false),
                        LabMode::TwoTimeScale => (c.schedule, true),
                    };
                    out.push(LabConfig {
                        seed,
                        features,
                        iterations: c.iterations,
                        schedule,
                        train_actor,
                        epsilon: c.epsilon,
                        consensus_p_max: c.consensus_p_max,
                        theta_bound: c.theta_bound,
                        trace_every: c.trace_every,
                    });
                }
            }
        }
        out
    }
}

/// Evaluation runs draw arrivals from `seed ^ EVAL_SEED_MASK`.
pub const EVAL_SEED_MASK: u64 = 0xE7A1_0000;

/// Defaults of the standard timing, training and lab setups.
mod d {
    use crate::agents::AgentConfig;
    use crate::convlab::{FeatureKind, LabConfig, PowerLaw, StepSchedule};
    use crate::env::{SimConfig, TrafficModel};
    use crate::qpmix::TrainConfig;

    fn sim() -> SimConfig {
        SimConfig::standard(1, TrafficModel::Saturated, 0)
    }
    fn train() -> TrainConfig {
        TrainConfig::default()
    }
    fn agent() -> AgentConfig {
        AgentConfig::default()
    }
    fn lab() -> LabConfig {
        LabConfig::frozen(0, FeatureKind::Tabular)
    }

    pub fn slot_us() -> f64 {
        sim().slot_us
    }
    pub fn sifs() -> u32 {
        sim().sifs_slots
    }
    pub fn difs() -> u32 {
        sim().difs_slots
    }
    pub fn packet() -> u32 {
        sim().packet_slots
    }
    pub fn ack() -> u32 {
        sim().ack_slots
    }
    pub fn buffer() -> usize {
        sim().buffer_capacity
    }
    pub fn gamma() -> f64 {
        train().gamma
    }
    pub fn batch() -> usize {
        train().batch_size
    }
    pub fn replay() -> usize {
        train().buffer_capacity
    }
    pub fn n_c() -> u64 {
        train().n_c
    }
    pub fn n_t() -> u64 {
        train().n_t
    }
    pub fn grad_clip() -> f64 {
        train().grad_clip
    }
    pub fn gae_lambda() -> f64 {
        train().gae_lambda
    }
    pub fn mixer_hidden() -> usize {
        train().mixer_hidden
    }
    pub fn history() -> usize {
        train().history
    }
    pub fn hidden() -> Vec<usize> {
        agent().hidden
    }
    pub fn lr_q() -> f64 {
        agent().lr_q
    }
    pub fn lr_actor() -> f64 {
        agent().lr_actor
    }
    pub fn eps_start() -> f64 {
        agent().eps_start
    }
    pub fn eps_min() -> f64 {
        agent().eps_min
    }
    pub fn eps_decay() -> f64 {
        agent().eps_decay
    }
    pub fn ppo_clip() -> f64 {
        agent().clip
    }
    pub fn eval_slots() -> u64 {
        20_000
    }
    pub fn seeds() -> Vec<u64> {
        vec![0, 1, 2]
    }
    pub fn slots() -> u64 {
        200_000
    }
    pub fn window() -> u64 {
        500
    }
    pub fn tail() -> u64 {
        20_000
    }
    pub fn out_dir() -> String {
        "out".into()
    }
    pub fn lab_features() -> Vec<String> {
        vec![FeatureKind::Tabular.name().into(), FeatureKind::Aggregated.name().into()]
    }
    pub fn lab_modes() -> Vec<super::LabMode> {
        vec![super::LabMode::Frozen, super::LabMode::TwoTimeScale]
    }
    pub fn lab_iterations() -> u64 {
        lab().iterations
    }
    pub fn lab_epsilon() -> f64 {
        lab().epsilon
    }
    pub fn lab_p_max() -> f64 {
        lab().consensus_p_max
    }
    pub fn lab_bound() -> f64 {
        lab().theta_bound
    }
    pub fn lab_trace() -> u64 {
        10_000
    }
    pub fn frozen_omega() -> PowerLaw {
        lab().schedule.omega
    }
    pub fn schedule() -> StepSchedule {
        LabConfig::two_time_scale(0, FeatureKind::Tabular).schedule
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_table_defaults() {
        let spec = parse_config("scenario = \"saturated\"\nn_stations = 4\n").unwrap();
        let t = spec.train_config();
        assert_eq!(t, TrainConfig::default());
        assert_eq!(spec.roster, Some(RosterSpec { dqn: 2, ppo: 2, edca: vec![] }));
        assert_eq!(spec.traffic, Some(TrafficSpec::Saturated));
        assert_eq!(spec.seeds, vec![0, 1, 2]);
        assert_eq!(spec.slots, 200_000);
        let sim = spec.sim_config(&spec.traffic(), 7);
        assert_eq!(sim, SimConfig::standard(4, TrafficModel::Saturated, 7));
    }

    #[test]
    fn mixed_roster_defaults_to_three_plus_one() {
        let spec = parse_config("scenario = \"mixed-roster\"\nn_stations = 4\n").unwrap();
        let r = spec.rosters().unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].1.dqn, r[0].1.ppo), (3, 1));
        let explicit = parse_config("scenario = \"saturated\"\nn_stations = 4\n[roster]\ndqn = 3\nppo = 1\n").unwrap();
        assert_eq!(explicit.rosters().unwrap()[0].1, r[0].1);
    }

    #[test]
    fn negative_rate_is_range_violation() {
        let err = parse_config(
            "scenario = \"unsaturated\"\nn_stations = 4\ntraffic = { model = \"poisson\", rate_per_s = -5.0 }\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::RangeViolation { ref key, .. } if key == "traffic.rate_per_s"), "{err:?}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("scenario = \"saturated\"\nn_stations = 4\nslotz = 5\n").unwrap_err();
        assert!(matches!(err, Error::UnknownKey(ref k) if k == "slotz"), "{err:?}");
        let err = parse_config("scenario = \"saturated\"\nn_stations = 4\n[train]\nlr = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::UnknownKey(ref k) if k == "lr"), "{err:?}");
    }

    #[test]
    fn roster_mismatch_is_named() {
        let err = parse_config("scenario = \"saturated\"\nn_stations = 4\n[roster]\ndqn = 1\n").unwrap_err();
        assert!(matches!(err, Error::RosterMismatch { ref key, .. } if key == "roster"), "{err:?}");
        let err = parse_config("scenario = \"coexistence\"\nn_stations = 4\nsweep_learners = [5]\n").unwrap_err();
        assert!(matches!(err, Error::RosterMismatch { ref key, .. } if key == "sweep_learners"), "{err:?}");
    }

    #[test]
    fn coexistence_sweeps_zero_to_three() {
        let spec = parse_config("scenario = \"coexistence\"\nn_stations = 4\n").unwrap();
        let rosters = spec.rosters().unwrap();
        assert_eq!(rosters.len(), 4);
        for (k, (_, r)) in rosters.iter().enumerate() {
            assert_eq!(r.n_learners(), k);
            assert_eq!(r.n_stations(), 4);
        }
        assert_eq!(spec.traffic, Some(TrafficSpec::Poisson { rate_per_s: 200.0 }));
    }

    #[test]
    fn scenario_specific_resolution() {
        let u = parse_config("scenario = \"unsaturated\"\nn_stations = 4\n").unwrap();
        assert_eq!(u.eval_traffic(), TrafficSpec::Poisson { rate_per_s: 200.0 });
        assert_eq!(u.traffic(), TrafficSpec::Saturated);
        let v = parse_config("scenario = \"voip\"\nn_stations = 8\n").unwrap();
        assert_eq!(v.eval_traffic(), TrafficSpec::Periodic { period_ms: 20.0 });
        let i = parse_config("scenario = \"independent-learning\"\nn_stations = 4\n").unwrap();
        assert_eq!(i.train_config().mode, LearningMode::Independent);
    }

    #[test]
    fn resolved_config_round_trips() {
        for text in [
            "scenario = \"saturated\"\nn_stations = 4\n",
            "scenario = \"coexistence\"\nn_stations = 4\n",
            "scenario = \"voip\"\nn_stations = 8\nseeds = [3]\n[train]\ngamma = 0.25\n",
            "scenario = \"convlab\"\nn_stations = 2\n[convlab]\niterations = 1000\n",
        ] {
            let spec = parse_config(text).unwrap();
            let emitted = spec.to_toml().unwrap();
            assert_eq!(parse_config(&emitted).unwrap(), spec, "{emitted}");
        }
    }

    #[test]
    fn bad_values_rejected() {
        for (text, key) in [
            ("seeds = []", "seeds"),
            ("[train]\ngamma = 1.5", "train.gamma"),
            ("[train]\nppo_clip = 0.0", "train.ppo_clip"),
            ("[roster]\ndqn = 2\nppo = 1\nedca = [\"AC_XX\"]", "roster.edca"),
            ("tail = 0", "tail"),
            ("[eval]\nepsilon = 1.5", "eval.epsilon"),
        ] {
            let err = parse_config(&format!("scenario = \"saturated\"\nn_stations = 4\n{text}\n")).unwrap_err();
            assert!(matches!(err, Error::RangeViolation { key: ref k, .. } if k == key), "{text}: {err:?}");
        }
    }

    #[test]
    fn eval_epsilon_defaults_to_floor() {
        let spec = parse_config("scenario = \"saturated\"\nn_stations = 4\n").unwrap();
        let roster = spec.rosters().unwrap().remove(0).1;
        assert_eq!(spec.eval_config(roster.clone(), 0).train.agent.eps_min, spec.train.eps_min);
        let greedy = parse_config("scenario = \"saturated\"\nn_stations = 4\n[eval]\nepsilon = 0.0\n").unwrap();
        assert_eq!(greedy.eval_config(roster, 0).train.agent.eps_min, 0.0);
    }

    #[test]
    fn invalid_lab_schedule_rejected() {
        let text = "scenario = \"convlab\"\nn_stations = 2\n[convlab.schedule]\nomega = { scale = 1.0, offset = 1.0, exponent = 0.9 }\ntheta = { scale = 1.0, offset = 1.0, exponent = 0.6 }\n";
        assert!(matches!(parse_config(text), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn lab_configs_cover_modes_features_seeds() {
        let spec = parse_config("scenario = \"convlab\"\nn_stations = 2\nseeds = [0, 1]\n").unwrap();
        let labs = spec.lab_configs();
        assert_eq!(labs.len(), 2 * 2 * 2);
        assert_eq!(labs.iter().filter(|l| l.train_actor).count(), 4);
        let reference = LabConfig::frozen(0, FeatureKind::Tabular);
        assert_eq!(labs[0].schedule.omega, reference.schedule.omega);
        assert_eq!((labs[0].seed, labs[0].features, labs[0].epsilon), (0, FeatureKind::Tabular, reference.epsilon));
        assert!(!labs[0].train_actor);
    }

    #[test]
    fn garbage_is_parse_error() {
        assert!(matches!(parse_config("scenario = "), Err(Error::Parse(_))));
        assert!(matches!(parse_config("scenario = \"nope\"\nn_stations = 1\n"), Err(Error::Parse(_))));
    }
}
