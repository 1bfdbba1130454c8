//! Value-based (DQN) and policy-based (PPO) learning agents.

use rand::Rng;

use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::{Mlp, RmsProp};
use crate::obs::argmax_lowest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Dqn,
    Ppo,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Ppo => "ppo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub lr_q: f64,
    pub lr_actor: f64,
    pub eps_start: f64,
    pub eps_min: f64,
    pub eps_decay: f64,
    pub clip: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![250, 120, 120],
            lr_q: 5e-4,
            lr_actor: 1e-5,
            eps_start: 1.0,
            eps_min: 0.01,
            eps_decay: 0.998,
            clip: 0.2,
        }
    }
}

/// Multiplicatively decaying exploration rate with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon {
    pub value: f64,
    pub min: f64,
    pub decay: f64,
}

impl Epsilon {
    pub fn decay_step(&mut self) {
        self.value = (self.value * self.decay).max(self.min);
    }
}

/// An action together with what the trainer needs to remember about it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Q-value of the chosen action.
    pub q: f64,
    /// Probability with which the behavior policy chose `action`.
    pub prob: f64,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

/// Greedy action over the feasible set; ties go to Wait.
pub fn greedy(q: [f64; 2], can_transmit: bool) -> Action {
    if can_transmit {
        Action::from_index(argmax_lowest(&q))
    } else {
        Action::Wait
    }
}

pub struct DqnAgent {
    pub q: Mlp,
    pub target: Mlp,
    pub eps: Epsilon,
    pub opt: RmsProp,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(input: usize, cfg: &AgentConfig, rng: &mut R) -> Result<Self> {
        let q = Mlp::relu_net(&widths(input, &cfg.hidden, 2), rng)?;
        Ok(Self {
            target: q.clone(),
            opt: RmsProp::new(q.params().len(), cfg.lr_q),
            eps: Epsilon { value: cfg.eps_start, min: cfg.eps_min, decay: cfg.eps_decay },
            q,
        })
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<[f64; 2]> {
        Ok(pair(&self.q.predict(obs, 1)?))
    }

    /// ε-greedy over the feasible actions.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], can_transmit: bool, rng: &mut R) -> Result<Decision> {
        let q = self.q_values(obs)?;
        if !can_transmit {
            return Ok(Decision { action: Action::Wait, q: q[0], prob: 1.0 });
        }
        let eps = self.eps.value;
        let best = greedy(q, true);
        let action = if rng.random::<f64>() < eps {
            Action::from_index(rng.random_range(0..2))
        } else {
            best
        };
        let prob = if action == best { 1.0 - eps + eps / 2.0 } else { eps / 2.0 };
        Ok(Decision { action, q: q[action.index()], prob })
    }
}

pub fn dqn_act<R: Rng + ?Sized>(agent: &DqnAgent, obs: &[f64], rng: &mut R) -> Result<Decision> {
    agent.act(obs, true, rng)
}

pub struct PpoAgent {
    pub actor: Mlp,
    /// Actor as of the last refresh; denominators of the ratio.
    pub actor_old: Mlp,
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub clip: f64,
    pub opt_actor: RmsProp,
    pub opt_critic: RmsProp,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(input: usize, cfg: &AgentConfig, rng: &mut R) -> Result<Self> {
        if !(cfg.clip > 0.0 && cfg.clip < 1.0) {
            return Err(Error::RangeViolation { key: "clip".into(), reason: "must lie in (0, 1)".into() });
        }
        let actor = Mlp::relu_net(&widths(input, &cfg.hidden, 2), rng)?;
        let critic = Mlp::relu_net(&widths(input, &cfg.hidden, 2), rng)?;
        Ok(Self {
            actor_old: actor.clone(),
            opt_actor: RmsProp::new(actor.params().len(), cfg.lr_actor),
            opt_critic: RmsProp::new(critic.params().len(), cfg.lr_q),
            critic_target: critic.clone(),
            actor,
            critic,
            clip: cfg.clip,
        })
    }

    pub fn policy(&self, obs: &[f64]) -> Result<[f64; 2]> {
        Ok(softmax2(pair(&self.actor.predict(obs, 1)?)))
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<[f64; 2]> {
        Ok(pair(&self.critic.predict(obs, 1)?))
    }

    /// Samples from the policy restricted to the feasible actions.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], can_transmit: bool, rng: &mut R) -> Result<Decision> {
        let q = self.q_values(obs)?;
        if !can_transmit {
            return Ok(Decision { action: Action::Wait, q: q[0], prob: 1.0 });
        }
        let pi = self.policy(obs)?;
        let action = if rng.random::<f64>() < pi[1] { Action::Transmit } else { Action::Wait };
        Ok(Decision { action, q: q[action.index()], prob: pi[action.index()] })
    }

    pub fn refresh_old(&mut self) -> Result<()> {
        self.actor_old.restore(self.actor.params())
    }
}

pub fn ppo_act<R: Rng + ?Sized>(agent: &PpoAgent, obs: &[f64], rng: &mut R) -> Result<Decision> {
    agent.act(obs, true, rng)
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Generalized advantage estimates for every position of a truncated trajectory.
pub fn gae(deltas: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(Error::Empty("td errors"));
    }
    let mut out = vec![0.0; deltas.len()];
    let mut acc = 0.0;
    for t in (0..deltas.len()).rev() {
        acc = deltas[t] + gamma * lambda * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// One sample of the clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSample {
    pub logits: [f64; 2],
    pub action: Action,
    pub old_prob: f64,
    pub advantage: f64,
}

/// Clipped surrogate loss `-min(ρA, clip(ρ)A)` summed over samples, and its
/// gradient with respect to each sample's logits.
pub fn ppo_actor_loss(samples: &[SurrogateSample], clip: f64) -> Result<(f64, Vec<[f64; 2]>)> {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(samples.len());
    for s in samples {
        if !(s.old_prob > 0.0) {
            return Err(Error::Numerical("old policy probability is zero".into()));
        }
        let pi = softmax2(s.logits);
        let a = s.action.index();
        let ratio = pi[a] / s.old_prob;
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
        loss -= unclipped.min(clipped);
        // The unclipped arm carries the gradient unless the clipped arm is strictly smaller.
        let dratio = if unclipped <= clipped { -s.advantage } else { 0.0 };
        let mut g = [0.0; 2];
        for (k, gk) in g.iter_mut().enumerate() {
            let indicator = if k == a { 1.0 } else { 0.0 };
            *gk = dratio * ratio * (indicator - pi[k]);
        }
        grads.push(g);
    }
    Ok((loss, grads))
}
