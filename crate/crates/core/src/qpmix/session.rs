//! The slot loop tying the BSS, observations, agents and trainer together.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::AgentKind;
use crate::env::{AccessCategory, Action, Bss, ChannelOutcome, SimConfig, StationCounters, StationRole, TraceRecord};
use crate::error::{Error, Result};
use crate::metrics::RunStats;
use crate::nn::Checkpoint;
use crate::obs::{build_global_state, compute_reward, update_counters, DelayCounters, GlobalState, HistoryWindow};

use super::replay::Transition;
use super::trainer::{TrainConfig, Trainer, UpdateLog};

/// Station roster: learners first (DQN, then PPO), then EDCA stations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Roster {
    pub dqn: usize,
    pub ppo: usize,
    pub edca: Vec<AccessCategory>,
}

impl Roster {
    pub fn n_learners(&self) -> usize {
        self.dqn + self.ppo
    }

    pub fn n_stations(&self) -> usize {
        self.n_learners() + self.edca.len()
    }

    pub fn kinds(&self) -> Vec<AgentKind> {
        let mut k = vec![AgentKind::Dqn; self.dqn];
        k.extend(std::iter::repeat_n(AgentKind::Ppo, self.ppo));
        k
    }

    pub fn roles(&self) -> Vec<StationRole> {
        let mut r = vec![StationRole::External; self.n_learners()];
        r.extend(self.edca.iter().map(|&ac| StationRole::Edca(ac)));
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub roster: Roster,
    pub train: TrainConfig,
    pub slots: u64,
    /// Slots per row of the time series.
    pub window: u64,
    /// Trailing slots summarized as the final window.
    pub tail: u64,
    /// Train while running; otherwise act greedily with fixed networks.
    pub learn: bool,
    pub trace: bool,
}

/// One row of the time series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub end_slot: u64,
    pub throughput: f64,
    pub per_station: Vec<f64>,
    /// Mean per-slot reward; each slot carries the reward of the transmission occupying it.
    pub avg_reward: f64,
    /// Per learner, the share of feasible decisions that chose to transmit.
    pub attempt_rate: Vec<f64>,
}

pub struct RunOutcome {
    pub windows: Vec<WindowRow>,
    pub updates: Vec<UpdateLog>,
    pub counters: Vec<StationCounters>,
    pub tail: RunStats,
    pub trace: Vec<TraceRecord>,
    pub checkpoint: Option<Checkpoint>,
    pub skipped_updates: u64,
}

struct Pending {
    obs: Vec<f64>,
    state: Vec<f64>,
    actions: Vec<Action>,
    probs: Vec<f64>,
    feasible: Vec<bool>,
    reward: Option<f64>,
}

struct Airtime {
    start: u64,
    d: Vec<f64>,
}

/// Runs the slot loop, training if `cfg.learn`.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutcome> {
    run(cfg, None)
}

/// Runs with networks from a checkpoint and no learning.
pub fn run_evaluation(cfg: &RunConfig, checkpoint: &Checkpoint) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    cfg.learn = false;
    run(&cfg, Some(checkpoint))
}

fn run(cfg: &RunConfig, checkpoint: Option<&Checkpoint>) -> Result<RunOutcome> {
    let n = cfg.roster.n_stations();
    if n != cfg.sim.n_stations {
        return Err(Error::RosterMismatch {
            key: "roster".into(),
            reason: format!("{} stations in roster, {} configured", n, cfg.sim.n_stations),
        });
    }
    if cfg.window == 0 {
        return Err(Error::RangeViolation { key: "window".into(), reason: "must be positive".into() });
    }
    let mut bss = Bss::new(cfg.sim.clone(), cfg.roster.roles())?;
    let n_learn = cfg.roster.n_learners();
    let seed = cfg.sim.rng_seed;
    let mut trainer = if n_learn > 0 {
        let mut t = Trainer::new(cfg.train.clone(), &cfg.roster.kinds(), GlobalState::width(n), seed ^ 0xA11CE)?;
        if let Some(ck) = checkpoint {
            t.load_checkpoint(ck)?;
        }
        if !cfg.learn {
            for l in &mut t.learners {
                if let super::trainer::Learner::Dqn(a) = l {
                    a.eps.value = cfg.train.agent.eps_min;
                }
            }
        }
        Some(t)
    } else {
        None
    };
    let obs_width = trainer.as_ref().map_or(0, |t| t.obs_width());
    let mut act_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xAC7_0000);

    let mut histories = vec![HistoryWindow::new(cfg.train.history); n_learn];
    let mut own = vec![DelayCounters::default(); n_learn];
    let mut v_all = vec![0u64; n];
    let mut prev_joint = vec![Action::Wait; n];
    let mut pending: Option<Pending> = None;
    let mut airtime: Option<Airtime> = None;

    let n_windows = cfg.slots.div_ceil(cfg.window) as usize;
    let mut reward_sums = vec![0.0; n_windows];
    let mut window_success = vec![vec![0u64; n]; n_windows];
    let mut attempts = vec![vec![(0u64, 0u64); n_learn]; n_windows];
    let mut updates = Vec::new();
    let mut skipped = 0u64;
    let mut trace = Vec::new();
    let tail_start = cfg.slots.saturating_sub(cfg.tail);
    let mut tail_before = bss.counters().to_vec();
    let mut obs_buf = vec![0.0; obs_width * n_learn];

    for slot in 0..cfg.slots {
        if slot == tail_start {
            tail_before = bss.counters().to_vec();
        }
        bss.begin_slot();
        let mut joint = vec![Action::Wait; n];
        bss.decide_edca(&mut joint);
        for (i, a) in joint.iter_mut().enumerate() {
            if bss.transmitting(i) {
                *a = Action::Transmit;
            }
        }

        let mut decided: Option<Pending> = None;
        if let (Some(tr), true) = (trainer.as_mut(), bss.sensed_idle()) {
            let state = build_global_state(&v_all, &prev_joint);
            let s_enc = state.encode();
            for (i, h) in histories.iter().enumerate() {
                h.encode_into(&mut obs_buf[i * obs_width..(i + 1) * obs_width]);
            }
            let feasible: Vec<bool> = (0..n_learn).map(|i| bss.can_transmit(i)).collect();
            if let Some(p) = pending.take() {
                if cfg.learn {
                    tr.push(Transition {
                        obs: p.obs,
                        state: p.state,
                        actions: p.actions,
                        probs: p.probs,
                        feasible: p.feasible,
                        reward: p.reward.expect("reward resolves before the next decision slot"),
                        next_obs: obs_buf.clone(),
                        next_state: s_enc.clone(),
                        next_feasible: feasible.clone(),
                    });
                }
            }
            let mut actions = Vec::with_capacity(n_learn);
            let mut probs = Vec::with_capacity(n_learn);
            for (i, learner) in tr.learners.iter().enumerate() {
                let obs = &obs_buf[i * obs_width..(i + 1) * obs_width];
                let d = learner.act(obs, feasible[i], &mut act_rng)?;
                if feasible[i] {
                    let cell = &mut attempts[(slot / cfg.window) as usize][i];
                    cell.0 += u64::from(d.action == Action::Transmit);
                    cell.1 += 1;
                }
                joint[i] = d.action;
                actions.push(d.action);
                probs.push(d.prob);
            }
            decided = Some(Pending { obs: obs_buf.clone(), state: s_enc, actions, probs, feasible, reward: None });
        }

        let report = bss.step(&joint)?;
        if !report.started.is_empty() {
            let d = build_global_state(&v_all, &prev_joint).d;
            airtime = Some(Airtime { start: slot, d });
        }
        match &report.outcome {
            ChannelOutcome::Success(_) | ChannelOutcome::Collision(_) => {
                let at = airtime.take().expect("outcome without a transmission start");
                let r = compute_reward(&at.d, &report.outcome);
                for s in at.start..=slot {
                    reward_sums[(s / cfg.window) as usize] += r;
                }
                if let ChannelOutcome::Success(i) = report.outcome {
                    window_success[(slot / cfg.window) as usize][i] += 1;
                }
                if let Some(p) = decided.as_mut().or(pending.as_mut()) {
                    p.reward = Some(r);
                }
            }
            ChannelOutcome::Idle => {
                if let Some(p) = decided.as_mut() {
                    p.reward = Some(0.0);
                }
            }
            ChannelOutcome::Busy => {}
        }
        if decided.is_some() {
            pending = decided;
        }

        for (i, v) in v_all.iter_mut().enumerate() {
            *v = if report.outcome == ChannelOutcome::Success(i) { 0 } else { *v + 1 };
        }
        let busy = report.channel_busy();
        for (i, h) in histories.iter_mut().enumerate() {
            own[i] = update_counters(own[i], &report.outcome, i);
            h.push(busy, joint[i], own[i]);
        }
        if cfg.trace {
            trace.push(TraceRecord { slot, outcome: report.outcome.clone() });
        }
        prev_joint = joint;

        if cfg.learn && (slot + 1) % cfg.train.n_c == 0 {
            if let Some(tr) = trainer.as_mut().filter(|t| t.ready()) {
                match tr.train_step() {
                    Ok(log) => updates.push(log),
                    Err(Error::Numerical(msg)) => {
                        warn!("slot {slot}: {msg}");
                        skipped += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let windows = (0..n_windows)
        .map(|w| {
            let start = w as u64 * cfg.window;
            let end = (start + cfg.window).min(cfg.slots);
            let len = (end - start) as f64;
            let per_station: Vec<f64> = window_success[w]
                .iter()
                .map(|&k| (k * cfg.sim.packet_slots as u64) as f64 / len)
                .collect();
            WindowRow {
                end_slot: end,
                throughput: per_station.iter().sum(),
                per_station,
                avg_reward: reward_sums[w] / len,
                attempt_rate: attempts[w].iter().map(|&(t, f)| if f == 0 { 0.0 } else { t as f64 / f as f64 }).collect(),
            }
        })
        .collect();
    let counters = bss.counters().to_vec();
    let tail = RunStats::window(&cfg.sim, &tail_before, &counters, cfg.slots - tail_start);
    Ok(RunOutcome {
        windows,
        updates,
        counters,
        tail,
        trace,
        checkpoint: trainer.as_ref().filter(|_| cfg.learn).map(|t| t.checkpoint()),
        skipped_updates: skipped,
    })
}
