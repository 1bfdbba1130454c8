//! Step-size schedules, the direct fixed-point solve and the stationarity probe.

use nalgebra::{DMatrix, DVector};

use super::mdp::{pair_chain, stationary_distribution, JointPolicy, LinearMdp, AgentPolicy};
use super::td::{advantage, grad_log_policy, softmax_policy, PolicyFeatures};
use crate::error::{Error, Result};

/// `β_t = scale · (1 + t / offset)^(−exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub scale: f64,
    pub offset: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn at(&self, t: u64) -> f64 {
        self.scale * (1.0 + t as f64 / self.offset).powf(-self.exponent)
    }

    pub fn check(&self, key: &str) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidSchedule(format!("{key}: {reason}")));
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale {} must be positive", self.scale));
        }
        if !(self.offset.is_finite() && self.offset > 0.0) {
            return bad(format!("offset {} must be positive", self.offset));
        }
        // Σβ = ∞ needs p ≤ 1, Σβ² < ∞ needs p > 1/2.
        if !(self.exponent > 0.5 && self.exponent <= 1.0) {
            return bad(format!("exponent {} is outside (0.5, 1]", self.exponent));
        }
        Ok(())
    }
}

/// Critic and actor step sizes on two time scales.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub omega: PowerLaw,
    pub theta: PowerLaw,
}

impl StepSchedule {
    /// Both sums diverge, both square sums converge, `β_θ/β_ω → 0` and
    /// `β_{ω,t+1}/β_{ω,t} → 1`. The last holds for any power law.
    pub fn validate(&self) -> Result<()> {
        self.omega.check("omega")?;
        self.theta.check("theta")?;
        if self.theta.exponent <= self.omega.exponent {
            return Err(Error::InvalidSchedule(format!(
                "actor exponent {} must exceed critic exponent {}",
                self.theta.exponent, self.omega.exponent
            )));
        }
        Ok(())
    }
}

/// `D_Θ = diag(d_Θ(s) π_Θ(a|s))` over `(s, a)` pairs.
pub fn pair_weights(mdp: &LinearMdp, pi: &[f64]) -> Result<DVector<f64>> {
    let d = stationary_distribution(mdp, pi)?;
    let a_n = mdp.n_joint();
    Ok(DVector::from_iterator(pi.len(), pi.iter().enumerate().map(|(i, p)| d[i / a_n] * p)))
}

/// Solves `−κ Φᵀ D (γ P^π − I) Φ ω = Φᵀ D R` with `κ = 1/N`, the scaling the
/// consensus update carries on its TD term.
pub fn solve_fixed_point(mdp: &LinearMdp, policy: &JointPolicy) -> Result<DVector<f64>> {
    let pi = policy.table(mdp);
    let dw = pair_weights(mdp, &pi)?;
    let m = mdp.n_states * mdp.n_joint();
    let kappa = 1.0 / mdp.n_agents() as f64;
    let phi = mdp.phi_matrix();
    let dphi_t = phi.transpose() * DMatrix::from_diagonal(&dw);
    let a = (&dphi_t * (DMatrix::identity(m, m) - pair_chain(mdp, &pi) * mdp.gamma) * &phi) * kappa;
    let b = &dphi_t * DVector::from_column_slice(&mdp.r);
    let sv = a.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if !(lo > 1e-12 * hi.max(1.0)) {
        return Err(Error::Singular(format!("fixed-point system has condition {}", hi / lo)));
    }
    a.lu().solve(&b).ok_or_else(|| Error::Singular("fixed-point system".into()))
}

/// Norm of the projected expected actor update `E_{d_Θ, π_Θ}[A^j ψ^j]`
/// over every softmax agent, with the critic at its fixed point.
pub fn stationarity_probe(mdp: &LinearMdp, policy: &JointPolicy, bound: f64) -> Result<f64> {
    let omega = solve_fixed_point(mdp, policy)?;
    expected_actor_norm(mdp, policy, omega.as_slice(), bound)
}

/// Same as [`stationarity_probe`] for a given critic `ω`.
pub fn expected_actor_norm(mdp: &LinearMdp, policy: &JointPolicy, omega: &[f64], bound: f64) -> Result<f64> {
    let pi = policy.table(mdp);
    let d = stationary_distribution(mdp, &pi)?;
    let feats = PolicyFeatures::new(mdp);
    let a_n = mdp.n_joint();
    let mut total = 0.0;
    for (j, agent) in policy.agents.iter().enumerate() {
        let AgentPolicy::Softmax { theta } = agent else { continue };
        let mut g = vec![0.0; theta.len()];
        for s in 0..mdp.n_states {
            let rows = feats.rows(s, j);
            let pi_j = softmax_policy(rows, theta);
            for a in 0..a_n {
                let w = d[s] * pi[s * a_n + a];
                let adv = advantage(mdp, s, a, j, &pi_j, omega);
                let glp = grad_log_policy(rows, theta, mdp.agent_action(a, j));
                for (gi, x) in g.iter_mut().zip(glp) {
                    *gi += w * adv * x;
                }
            }
        }
        for (gi, t) in g.iter_mut().zip(theta) {
            if (*t >= bound && *gi > 0.0) || (*t <= -bound && *gi < 0.0) {
                *gi = 0.0;
            }
        }
        total += g.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(total.sqrt())
}
