//! Loss functions of the centralized trainer, each returning exact gradients.

use crate::agents::{greedy, ppo_actor_loss, SurrogateSample};
use crate::env::Action;
use crate::error::Result;
use crate::nn::{GradSet, Mlp};

use super::mixer::{Mixer, MixerGrads};
use super::replay::Transition;

/// Column-major view of sampled transitions, split per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub n_agents: usize,
    pub obs_width: usize,
    /// Per agent, `size × obs_width`.
    pub obs: Vec<Vec<f64>>,
    pub next_obs: Vec<Vec<f64>>,
    /// Per agent, chosen action index per sample.
    pub actions: Vec<Vec<usize>>,
    pub feasible: Vec<Vec<bool>>,
    pub next_feasible: Vec<Vec<bool>>,
    pub probs: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: Vec<f64>,
}

impl Batch {
    pub fn gather(ts: &[&Transition], n_agents: usize, obs_width: usize) -> Self {
        let size = ts.len();
        let per_agent = |f: &dyn Fn(&Transition, usize) -> Vec<f64>| -> Vec<Vec<f64>> {
            (0..n_agents).map(|i| ts.iter().flat_map(|t| f(t, i)).collect()).collect()
        };
        let block = |v: &[f64], i: usize| v[i * obs_width..(i + 1) * obs_width].to_vec();
        Self {
            size,
            n_agents,
            obs_width,
            obs: per_agent(&|t, i| block(&t.obs, i)),
            next_obs: per_agent(&|t, i| block(&t.next_obs, i)),
            actions: (0..n_agents).map(|i| ts.iter().map(|t| t.actions[i].index()).collect()).collect(),
            feasible: (0..n_agents).map(|i| ts.iter().map(|t| t.feasible[i]).collect()).collect(),
            next_feasible: (0..n_agents).map(|i| ts.iter().map(|t| t.next_feasible[i]).collect()).collect(),
            probs: (0..n_agents).map(|i| ts.iter().map(|t| t.probs[i]).collect()).collect(),
            state: ts.iter().flat_map(|t| t.state.iter().copied()).collect(),
            next_state: ts.iter().flat_map(|t| t.next_state.iter().copied()).collect(),
            reward: ts.iter().map(|t| t.reward).collect(),
        }
    }
}

/// Each agent's greedy target Q over its feasible next actions (`size × n_agents`).
pub fn greedy_targets(targets: &[&Mlp], batch: &Batch) -> Result<Vec<f64>> {
    let (b, n) = (batch.size, batch.n_agents);
    let mut out = vec![0.0; b * n];
    for (i, net) in targets.iter().enumerate() {
        let q = net.predict(&batch.next_obs[i], b)?;
        for k in 0..b {
            let qk = [q[2 * k], q[2 * k + 1]];
            out[k * n + i] = qk[greedy(qk, batch.next_feasible[i][k]).index()];
        }
    }
    Ok(out)
}

/// `y_tot = r + γ Q_tot(τ', greedy a', s'; θ⁻)`.
pub fn qtot_targets(targets: &[&Mlp], target_mixer: &Mixer, batch: &Batch, gamma: f64) -> Result<Vec<f64>> {
    let q = greedy_targets(targets, batch)?;
    let next = target_mixer.predict(&q, &batch.next_state, batch.size)?;
    Ok(batch.reward.iter().zip(next).map(|(r, v)| r + gamma * v).collect())
}

/// `Σ (y − Q_tot)²` with gradients for every agent Q-network and the mixer.
pub fn qtot_loss(qnets: &[&Mlp], mixer: &Mixer, batch: &Batch, y: &[f64]) -> Result<(f64, Vec<GradSet>, MixerGrads)> {
    let (b, n) = (batch.size, batch.n_agents);
    let mut q_joint = vec![0.0; b * n];
    let mut caches = Vec::with_capacity(n);
    for (i, net) in qnets.iter().enumerate() {
        let (q, cache) = net.forward(&batch.obs[i], b)?;
        for k in 0..b {
            q_joint[k * n + i] = q[2 * k + batch.actions[i][k]];
        }
        caches.push(cache);
    }
    let (qtot, mcache) = mixer.forward(&q_joint, &batch.state, b)?;
    let mut loss = 0.0;
    let mut dqtot = vec![0.0; b];
    for k in 0..b {
        let e = y[k] - qtot[k];
        loss += e * e;
        dqtot[k] = -2.0 * e;
    }
    let mut mgrads = mixer.zero_grads();
    let dq = mixer.backward(&mcache, &dqtot, &mut mgrads)?;
    let mut grads = Vec::with_capacity(n);
    for (i, net) in qnets.iter().enumerate() {
        let mut dout = vec![0.0; 2 * b];
        for k in 0..b {
            dout[2 * k + batch.actions[i][k]] = dq[k * n + i];
        }
        let mut g = net.zero_grad();
        net.backward_into(&caches[i], &dout, &mut g)?;
        grads.push(g);
    }
    Ok((loss, grads, mgrads))
}

/// `Σ (r + γ V(s'; θ⁻_V) − V(s; θ_V))²`.
pub fn v_loss(value: &Mlp, value_target: &Mlp, batch: &Batch, gamma: f64) -> Result<(f64, GradSet)> {
    let b = batch.size;
    let next = value_target.predict(&batch.next_state, b)?;
    let (v, cache) = value.forward(&batch.state, b)?;
    let mut loss = 0.0;
    let mut dv = vec![0.0; b];
    for k in 0..b {
        let e = batch.reward[k] + gamma * next[k] - v[k];
        loss += e * e;
        dv[k] = -2.0 * e;
    }
    let (g, _) = value.backward(&cache, &dv)?;
    Ok((loss, g))
}

/// Per-agent TD loss used when no mixer couples the agents.
pub fn independent_q_loss(qnet: &Mlp, target: &Mlp, batch: &Batch, agent: usize, gamma: f64) -> Result<(f64, GradSet)> {
    let b = batch.size;
    let next = greedy_targets(&[target], &single_agent_view(batch, agent))?;
    let (q, cache) = qnet.forward(&batch.obs[agent], b)?;
    let mut loss = 0.0;
    let mut dout = vec![0.0; 2 * b];
    for k in 0..b {
        let a = batch.actions[agent][k];
        let e = batch.reward[k] + gamma * next[k] - q[2 * k + a];
        loss += e * e;
        dout[2 * k + a] = -2.0 * e;
    }
    let (g, _) = qnet.backward(&cache, &dout)?;
    Ok((loss, g))
}

fn single_agent_view(batch: &Batch, agent: usize) -> Batch {
    Batch {
        size: batch.size,
        n_agents: 1,
        obs_width: batch.obs_width,
        obs: vec![batch.obs[agent].clone()],
        next_obs: vec![batch.next_obs[agent].clone()],
        actions: vec![batch.actions[agent].clone()],
        feasible: vec![batch.feasible[agent].clone()],
        next_feasible: vec![batch.next_feasible[agent].clone()],
        probs: vec![batch.probs[agent].clone()],
        state: Vec::new(),
        next_state: Vec::new(),
        reward: batch.reward.clone(),
    }
}

/// Clipped surrogate over the masked samples, differentiated through the actor.
/// `old_probs` holds the probability the acting policy gave each taken action.
pub fn actor_loss(
    actor: &Mlp,
    obs: &[f64],
    actions: &[usize],
    old_probs: &[f64],
    advantages: &[f64],
    mask: &[bool],
    clip: f64,
) -> Result<(f64, GradSet)> {
    let b = actions.len();
    let (logits, cache) = actor.forward(obs, b)?;
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    for k in 0..b {
        if !mask[k] {
            continue;
        }
        samples.push(SurrogateSample {
            logits: [logits[2 * k], logits[2 * k + 1]],
            action: Action::from_index(actions[k]),
            old_prob: old_probs[k],
            advantage: advantages[k],
        });
        rows.push(k);
    }
    let (loss, dlogits) = ppo_actor_loss(&samples, clip)?;
    let mut dout = vec![0.0; 2 * b];
    for (k, g) in rows.into_iter().zip(dlogits) {
        dout[2 * k] = g[0];
        dout[2 * k + 1] = g[1];
    }
    let (g, _) = actor.backward(&cache, &dout)?;
    Ok((loss, g))
}
