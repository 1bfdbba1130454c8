use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{gae, softmax2, AgentConfig, AgentKind, Decision, DqnAgent, PpoAgent};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, Checkpoint, GradSet, Mlp, RmsProp};

use super::losses::{actor_loss, independent_q_loss, qtot_loss, qtot_targets, v_loss, Batch};
use super::mixer::{value_head, Mixer};
use super::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearningMode {
    /// Centralized training through the mixing network.
    Qpmix,
    /// Every agent trains on its own experience; no mixer, no V.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Slots between training updates.
    pub n_c: u64,
    /// Updates between target-network copies.
    pub n_t: u64,
    pub grad_clip: f64,
    pub gae_lambda: f64,
    pub mixer_hidden: usize,
    pub history: usize,
    pub agent: AgentConfig,
    pub mode: LearningMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            batch_size: 32,
            buffer_capacity: 500,
            n_c: 10,
            n_t: 1000,
            grad_clip: 10.0,
            gae_lambda: 0.95,
            mixer_hidden: 16,
            history: crate::obs::DEFAULT_HISTORY,
            agent: AgentConfig::default(),
            mode: LearningMode::Qpmix,
        }
    }
}

pub enum Learner {
    Dqn(DqnAgent),
    Ppo(PpoAgent),
}

impl Learner {
    pub fn kind(&self) -> AgentKind {
        match self {
            Learner::Dqn(_) => AgentKind::Dqn,
            Learner::Ppo(_) => AgentKind::Ppo,
        }
    }

    /// The network whose Q-values feed the mixer.
    pub fn qnet(&self) -> &Mlp {
        match self {
            Learner::Dqn(a) => &a.q,
            Learner::Ppo(a) => &a.critic,
        }
    }

    pub fn qtarget(&self) -> &Mlp {
        match self {
            Learner::Dqn(a) => &a.target,
            Learner::Ppo(a) => &a.critic_target,
        }
    }

    pub fn act<R: rand::Rng + ?Sized>(&self, obs: &[f64], can_transmit: bool, rng: &mut R) -> Result<Decision> {
        match self {
            Learner::Dqn(a) => a.act(obs, can_transmit, rng),
            Learner::Ppo(a) => a.act(obs, can_transmit, rng),
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Learner::Dqn(a) => Some(a.eps.value),
            Learner::Ppo(_) => None,
        }
    }

    fn q_parts(&mut self) -> (&mut Mlp, &mut RmsProp) {
        match self {
            Learner::Dqn(a) => (&mut a.q, &mut a.opt),
            Learner::Ppo(a) => (&mut a.critic, &mut a.opt_critic),
        }
    }

    fn sync_target(&mut self) -> Result<()> {
        match self {
            Learner::Dqn(a) => a.target.restore(a.q.params()),
            Learner::Ppo(a) => a.critic_target.restore(a.critic.params()),
        }
    }
}

/// Losses and exploration after one update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateLog {
    pub update: u64,
    pub loss_q: f64,
    pub loss_v: f64,
    pub loss_actor: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub epsilon: f64,
    pub mean_reward: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub learners: Vec<Learner>,
    pub mixer: Mixer,
    pub mixer_target: Mixer,
    pub value: Mlp,
    pub value_target: Mlp,
    mixer_opt: Vec<RmsProp>,
    value_opt: RmsProp,
    pub buffer: ReplayBuffer,
    updates: u64,
    rng: ChaCha8Rng,
    obs_width: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, kinds: &[AgentKind], state_width: usize, seed: u64) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Empty("learning agents"));
        }
        if cfg.n_c == 0 || cfg.n_t == 0 || cfg.batch_size == 0 || cfg.buffer_capacity == 0 {
            return Err(Error::RangeViolation {
                key: "training".into(),
                reason: "n_c, n_t, batch_size and buffer_capacity must be positive".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs_width = crate::obs::RECORD_WIDTH * cfg.history;
        let learners = kinds
            .iter()
            .map(|k| {
                Ok(match k {
                    AgentKind::Dqn => Learner::Dqn(DqnAgent::new(obs_width, &cfg.agent, &mut rng)?),
                    AgentKind::Ppo => Learner::Ppo(PpoAgent::new(obs_width, &cfg.agent, &mut rng)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mixer = Mixer::new(kinds.len(), state_width, cfg.mixer_hidden, &mut rng)?;
        let value = value_head(state_width, cfg.mixer_hidden, &mut rng)?;
        let lr = cfg.agent.lr_q;
        Ok(Self {
            mixer_opt: mixer.nets().iter().map(|m| RmsProp::new(m.params().len(), lr)).collect(),
            value_opt: RmsProp::new(value.params().len(), lr),
            mixer_target: mixer.clone(),
            value_target: value.clone(),
            mixer,
            value,
            learners,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_2E_71A7),
            obs_width,
            cfg,
        })
    }

    pub fn obs_width(&self) -> usize {
        self.obs_width
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.batch_size
    }

    pub fn push(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One update of every network from a uniform replay sample.
    pub fn train_step(&mut self) -> Result<UpdateLog> {
        if self.buffer.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        let n = self.learners.len();
        let samples = self.buffer.sample(self.cfg.batch_size, &mut self.rng);
        let batch = Batch::gather(&samples, n, self.obs_width);
        let gamma = self.cfg.gamma;

        let mut loss_v = 0.0;
        let mut v_grad = None;
        let mut mixer_grads = None;
        let (loss_q, mut q_grads) = match self.cfg.mode {
            LearningMode::Qpmix => {
                let targets: Vec<&Mlp> = self.learners.iter().map(|l| l.qtarget()).collect();
                let y = qtot_targets(&targets, &self.mixer_target, &batch, gamma)?;
                let qnets: Vec<&Mlp> = self.learners.iter().map(|l| l.qnet()).collect();
                let (loss, grads, mg) = qtot_loss(&qnets, &self.mixer, &batch, &y)?;
                let (lv, gv) = v_loss(&self.value, &self.value_target, &batch, gamma)?;
                loss_v = lv;
                v_grad = Some(gv);
                mixer_grads = Some(mg);
                (loss, grads)
            }
            LearningMode::Independent => {
                let mut total = 0.0;
                let mut grads = Vec::with_capacity(n);
                for (i, l) in self.learners.iter().enumerate() {
                    let (loss, g) = independent_q_loss(l.qnet(), l.qtarget(), &batch, i, gamma)?;
                    total += loss;
                    grads.push(g);
                }
                (total, grads)
            }
        };

        let (loss_actor, mut actor_grads) = self.actor_grads()?;

        let mut all: Vec<&mut GradSet> = q_grads.iter_mut().collect();
        if let Some(mg) = mixer_grads.as_mut() {
            all.extend(mg.as_mut_refs());
        }
        if let Some(g) = v_grad.as_mut() {
            all.push(g);
        }
        all.extend(actor_grads.iter_mut().flatten());
        let all_finite = all.iter().all(|g| g.is_finite());
        if !all_finite {
            return Err(Error::Numerical("non-finite gradient; update skipped".into()));
        }
        let gn = clip_global_norm(&mut all, self.cfg.grad_clip);

        for (l, g) in self.learners.iter_mut().zip(&q_grads) {
            let (net, opt) = l.q_parts();
            opt.step(net.params_mut(), g)?;
        }
        if let Some(mg) = &mixer_grads {
            for ((net, opt), g) in self.mixer.nets_mut().into_iter().zip(&mut self.mixer_opt).zip(&mg.0) {
                opt.step(net.params_mut(), g)?;
            }
        }
        if let Some(g) = &v_grad {
            self.value_opt.step(self.value.params_mut(), g)?;
        }
        for (l, g) in self.learners.iter_mut().zip(&actor_grads) {
            if let (Learner::Ppo(a), Some(g)) = (l, g) {
                a.opt_actor.step(a.actor.params_mut(), g)?;
            }
        }

        self.updates += 1;
        for l in &mut self.learners {
            match l {
                Learner::Dqn(a) => a.eps.decay_step(),
                Learner::Ppo(a) => a.refresh_old()?,
            }
        }
        if self.updates % self.cfg.n_t == 0 {
            self.sync_targets()?;
        }
        let epsilon = self.learners.iter().filter_map(|l| l.epsilon()).next().unwrap_or(0.0);
        let mean_reward = batch.reward.iter().sum::<f64>() / batch.size as f64;
        Ok(UpdateLog { update: self.updates, loss_q, loss_v, loss_actor, grad_norm: gn, epsilon, mean_reward })
    }

    /// Copies every online network into its target.
    pub fn sync_targets(&mut self) -> Result<()> {
        for l in &mut self.learners {
            l.sync_target()?;
        }
        self.mixer_target = self.mixer.clone();
        self.value_target.restore(self.value.params())?;
        Ok(())
    }

    /// Actor gradients for PPO learners on the most recent contiguous window.
    /// Ratios are taken against the probabilities the acting policy recorded.
    fn actor_grads(&self) -> Result<(f64, Vec<Option<GradSet>>)> {
        let window = self.buffer.recent(self.cfg.batch_size);
        let mut total = 0.0;
        let mut out = Vec::with_capacity(self.learners.len());
        if window.is_empty() || !self.learners.iter().any(|l| l.kind() == AgentKind::Ppo) {
            out.resize_with(self.learners.len(), || None);
            return Ok((total, out));
        }
        let batch = Batch::gather(&window, self.learners.len(), self.obs_width);
        let shared = match self.cfg.mode {
            LearningMode::Qpmix => Some(self.centralized_advantages(&batch)?),
            LearningMode::Independent => None,
        };
        for (i, l) in self.learners.iter().enumerate() {
            let Learner::Ppo(agent) = l else {
                out.push(None);
                continue;
            };
            if !batch.feasible[i].iter().any(|&f| f) {
                out.push(None);
                continue;
            }
            let adv = match &shared {
                Some(a) => a.clone(),
                None => own_critic_advantages(agent, &batch, i)?,
            };
            let (loss, g) = actor_loss(
                &agent.actor,
                &batch.obs[i],
                &batch.actions[i],
                &batch.probs[i],
                &adv,
                &batch.feasible[i],
                agent.clip,
            )?;
            total += loss;
            out.push(Some(g));
        }
        Ok((total, out))
    }

    /// GAE over TD errors of the centralized state value, truncated at the window end.
    fn centralized_advantages(&self, batch: &Batch) -> Result<Vec<f64>> {
        let v = self.value.predict(&batch.state, batch.size)?;
        let v_next = self.value_target.predict(&batch.next_state, batch.size)?;
        let deltas: Vec<f64> = (0..batch.size)
            .map(|k| batch.reward[k] + self.cfg.gamma * v_next[k] - v[k])
            .collect();
        gae(&deltas, self.cfg.gamma, self.cfg.gae_lambda)
    }

    /// Saves every network under stable names.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (i, l) in self.learners.iter().enumerate() {
            ck.push(format!("learner{i}.{}.q", l.kind().name()), l.qnet());
            if let Learner::Ppo(a) = l {
                ck.push(format!("learner{i}.ppo.actor"), &a.actor);
            }
        }
        for (name, net) in ["mixer.w1", "mixer.b1", "mixer.w2", "mixer.b2"].iter().zip(self.mixer.nets()) {
            ck.push(*name, net);
        }
        ck.push("value", &self.value);
        ck
    }

    /// Restores networks saved by [`Trainer::checkpoint`]; the roster must match.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let missing = |name: &str| Error::Checkpoint(format!("missing network {name}"));
        for (i, l) in self.learners.iter_mut().enumerate() {
            let qname = format!("learner{i}.{}.q", l.kind().name());
            let q = ck.get(&qname).ok_or_else(|| missing(&qname))?;
            match l {
                Learner::Dqn(a) => {
                    a.q.restore(q.params())?;
                    a.target.restore(q.params())?;
                }
                Learner::Ppo(a) => {
                    a.critic.restore(q.params())?;
                    a.critic_target.restore(q.params())?;
                    let name = format!("learner{i}.ppo.actor");
                    let actor = ck.get(&name).ok_or_else(|| missing(&name))?;
                    a.actor.restore(actor.params())?;
                    a.refresh_old()?;
                }
            }
        }
        for (name, net) in ["mixer.w1", "mixer.b1", "mixer.w2", "mixer.b2"].iter().zip(self.mixer.nets_mut()) {
            net.restore(ck.get(name).ok_or_else(|| missing(name))?.params())?;
        }
        self.value.restore(ck.get("value").ok_or_else(|| missing("value"))?.params())?;
        self.sync_targets()
    }
}

/// `A = Q(τ, a) − Σ_a' π(a'|τ) Q(τ, a')` from the agent's own critic.
fn own_critic_advantages(agent: &PpoAgent, batch: &Batch, i: usize) -> Result<Vec<f64>> {
    let q = agent.critic.predict(&batch.obs[i], batch.size)?;
    let logits = agent.actor.predict(&batch.obs[i], batch.size)?;
    Ok((0..batch.size)
        .map(|k| {
            let pi = softmax2([logits[2 * k], logits[2 * k + 1]]);
            let qk = [q[2 * k], q[2 * k + 1]];
            qk[batch.actions[i][k]] - (pi[0] * qk[0] + pi[1] * qk[1])
        })
        .collect())
}
