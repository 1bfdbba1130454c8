//! Linear-function-approximation convergence lab: consensus TD critics and
//! softmax actors on small MDPs, checked against exact solves.

mod mdp;
mod td;
mod theory;

pub use mdp::{
    dot, pair_chain, policy_evaluation, sample_index, softmax, state_chain, stationary_distribution, AgentPolicy,
    FeatureKind, JointPolicy, LinearMdp, REFERENCE_GAMMA, SMOOTHING,
};
pub use td::{
    actor_update, advantage, consensus_td_update, disagreement_norm, grad_log_policy, mean_omega, softmax_policy,
    ConsensusWeights, PolicyFeatures,
};
pub use theory::{expected_actor_norm, pair_weights, solve_fixed_point, stationarity_probe, PowerLaw, StepSchedule};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Iterates whose norm reaches this are treated as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub seed: u64,
    pub features: FeatureKind,
    pub iterations: u64,
    pub schedule: StepSchedule,
    /// When false θ stays at zero and only the critics learn.
    pub train_actor: bool,
    /// Exploration of the value-based agent.
    pub epsilon: f64,
    /// Upper end of the off-diagonal consensus mass.
    pub consensus_p_max: f64,
    pub theta_bound: f64,
    /// Iterations between trace rows; 0 disables the trace.
    pub trace_every: u64,
}

impl LabConfig {
    /// Critic-only run under a frozen joint policy.
    pub fn frozen(seed: u64, features: FeatureKind) -> Self {
        Self {
            seed,
            features,
            iterations: 1_000_000,
            schedule: StepSchedule {
                omega: PowerLaw { scale: 0.5, offset: 150.0, exponent: 0.99 },
                theta: PowerLaw { scale: 0.2, offset: 300.0, exponent: 1.0 },
            },
            train_actor: false,
            epsilon: 0.9,
            consensus_p_max: 0.25,
            theta_bound: 10.0,
            trace_every: 0,
        }
    }

    /// Critic and actor on two time scales.
    pub fn two_time_scale(seed: u64, features: FeatureKind) -> Self {
        Self {
            schedule: StepSchedule {
                omega: PowerLaw { scale: 0.5, offset: 300.0, exponent: 0.6 },
                theta: PowerLaw { scale: 0.2, offset: 300.0, exponent: 0.9 },
            },
            train_actor: true,
            ..Self::frozen(seed, features)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub disagreement: f64,
    /// `‖ω̄ − ω_Θ‖` against the fixed point of the current policy.
    pub error: f64,
    pub actor_grad_norm: f64,
}

pub const TRACE_HEADER: &str = "iteration,disagreement,fixed_point_error,actor_grad_norm";

impl TraceRow {
    pub fn to_csv(&self) -> String {
        format!("{},{:.6e},{:.6e},{:.6e}", self.iteration, self.disagreement, self.error, self.actor_grad_norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabOutcome {
    pub mdp: LinearMdp,
    pub omegas: Vec<Vec<f64>>,
    pub policy: JointPolicy,
    pub fixed_point: Vec<f64>,
    pub error: f64,
    pub disagreement: f64,
    pub actor_grad_norm: f64,
    pub trace: Vec<TraceRow>,
}

/// Runs consensus TD (and optionally the actor) on the seeded reference MDP.
///
/// Agent 0 is value-based: ε-greedy on a snapshot of its initial critic, so
/// its factor of the joint policy never moves. Agent 1 is a softmax actor
/// driven by its own critic `ω¹`.
pub fn run_lab(cfg: &LabConfig) -> Result<LabOutcome> {
    if cfg.train_actor {
        cfg.schedule.validate()?;
    } else {
        cfg.schedule.omega.check("omega")?;
    }
    if !(0.0..=1.0).contains(&cfg.epsilon) || !(0.0..=1.0).contains(&cfg.consensus_p_max) {
        return Err(Error::RangeViolation {
            key: "convlab".into(),
            reason: "epsilon and consensus_p_max must lie in [0, 1]".into(),
        });
    }
    let mdp = LinearMdp::reference(cfg.seed, cfg.features);
    let n = mdp.n_agents();
    let a_n = mdp.n_joint();
    let k = mdp.k;
    let feats = PolicyFeatures::new(&mdp);

    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(100));
    let mut omegas: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| init.random::<f64>() * 2.0 - 1.0).collect()).collect();
    let snapshot = omegas[0].clone();
    let mut theta = vec![0.0; k];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let policy_of = |theta: &[f64]| JointPolicy {
        agents: vec![
            AgentPolicy::Value { epsilon: cfg.epsilon, omega: snapshot.clone() },
            AgentPolicy::Softmax { theta: theta.to_vec() },
        ],
    };
    let value_factor: Vec<Vec<f64>> = {
        let pol = policy_of(&theta);
        (0..mdp.n_states).map(|s| pol.agent_probs(&mdp, s, 0)).collect()
    };
    let sample_action = |s: usize, theta: &[f64], rng: &mut ChaCha8Rng| {
        let p1 = softmax_policy(feats.rows(s, 1), theta);
        let v = &value_factor[s];
        let joint = [v[0] * p1[0], v[0] * p1[1], v[1] * p1[0], v[1] * p1[1]];
        sample_index(&joint, rng)
    };
    debug_assert_eq!(a_n, 4);

    let mut trace = Vec::new();
    let mut frozen_fp = if cfg.train_actor { None } else { Some(solve_fixed_point(&mdp, &policy_of(&theta))?) };
    let mut s = 0;
    let mut a = sample_action(s, &theta, &mut rng);
    for t in 0..cfg.iterations {
        if cfg.trace_every > 0 && t % cfg.trace_every == 0 {
            trace.push(trace_row(&mdp, &omegas, &policy_of(&theta), frozen_fp.as_ref(), t, cfg.theta_bound)?);
        }
        let s_next = sample_index(mdp.transition_row(s, a), &mut rng);
        let a_next = sample_action(s_next, &theta, &mut rng);
        let c = ConsensusWeights::random(n, cfg.consensus_p_max, &mut rng);
        let r = mdp.reward(s, a);
        if cfg.train_actor {
            actor_update(&mut theta, &omegas[1], &mdp, &feats, s, a, 1, cfg.schedule.theta.at(t), cfg.theta_bound);
        }
        let beta = cfg.schedule.omega.at(t);
        consensus_td_update(&mut omegas, mdp.phi_row(s, a), mdp.phi_row(s_next, a_next), r, mdp.gamma, &c, beta);
        if omegas.iter().flatten().any(|x| !x.is_finite() || x.abs() >= DIVERGENCE_BOUND) {
            return Err(Error::Numerical(format!("critic diverged at iteration {t}")));
        }
        s = s_next;
        a = a_next;
    }

    let policy = policy_of(&theta);
    let fp = match frozen_fp.take() {
        Some(fp) => fp,
        None => solve_fixed_point(&mdp, &policy)?,
    };
    let last = trace_row(&mdp, &omegas, &policy, Some(&fp), cfg.iterations, cfg.theta_bound)?;
    if cfg.trace_every > 0 {
        trace.push(last);
    }
    Ok(LabOutcome {
        fixed_point: fp.as_slice().to_vec(),
        error: last.error,
        disagreement: last.disagreement,
        actor_grad_norm: last.actor_grad_norm,
        omegas,
        policy,
        mdp,
        trace,
    })
}

fn trace_row(
    mdp: &LinearMdp,
    omegas: &[Vec<f64>],
    policy: &JointPolicy,
    fp: Option<&nalgebra::DVector<f64>>,
    iteration: u64,
    bound: f64,
) -> Result<TraceRow> {
    let fp = match fp {
        Some(fp) => fp.clone(),
        None => solve_fixed_point(mdp, policy)?,
    };
    let bar = mean_omega(omegas);
    let error = bar.iter().zip(fp.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    Ok(TraceRow {
        iteration,
        disagreement: disagreement_norm(omegas),
        error,
        actor_grad_norm: expected_actor_norm(mdp, policy, fp.as_slice(), bound)?,
    })
}
