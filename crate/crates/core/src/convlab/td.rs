//! Consensus TD critic updates, the policy-gradient actor step and the
//! consensus/disagreement split.

use rand::Rng;

use super::mdp::{dot, softmax, LinearMdp};
use crate::error::{Error, Result};

/// Mixing weights `c(i, k)`; every column sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusWeights {
    n: usize,
    /// Row-major `c[i·N + k]`.
    c: Vec<f64>,
}

impl ConsensusWeights {
    pub fn new(n: usize, c: Vec<f64>) -> Result<Self> {
        if n == 0 || c.len() != n * n {
            return Err(Error::WidthMismatch { expected: n * n, got: c.len() });
        }
        if c.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::RangeViolation { key: "consensus".into(), reason: "weights must be nonnegative".into() });
        }
        for k in 0..n {
            let col: f64 = (0..n).map(|i| c[i * n + k]).sum();
            if (col - 1.0).abs() > 1e-12 {
                return Err(Error::RangeViolation {
                    key: "consensus".into(),
                    reason: format!("column {k} sums to {col}"),
                });
            }
        }
        Ok(Self { n, c })
    }

    pub fn identity(n: usize) -> Self {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            c[i * n + i] = 1.0;
        }
        Self { n, c }
    }

    /// `𝟙𝟙ᵀ / N`.
    pub fn averaging(n: usize) -> Self {
        Self { n, c: vec![1.0 / n as f64; n * n] }
    }

    /// `(1 − p) I` plus `p` spread evenly over the other agents, `p ~ U[0, p_max]`.
    /// Doubly stochastic; for `N = 2` this is `[[1−p, p], [p, 1−p]]`.
    pub fn random<R: Rng + ?Sized>(n: usize, p_max: f64, rng: &mut R) -> Self {
        if n == 1 {
            return Self::identity(1);
        }
        let p = rng.random::<f64>() * p_max;
        let off = p / (n - 1) as f64;
        let mut c = vec![off; n * n];
        for i in 0..n {
            c[i * n + i] = 1.0 - p;
        }
        Self { n, c }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.c[i * self.n + k]
    }
}

/// One consensus TD step. Returns every agent's `δ̂^i`.
///
/// `δ̂^i = r + N⁻¹ Σ_k c(i,k) (γ φ'ᵀω^k − φᵀω^k)`, then `ω^i += β δ̂^i φ`.
pub fn consensus_td_update(
    omegas: &mut [Vec<f64>],
    phi: &[f64],
    phi_next: &[f64],
    reward: f64,
    gamma: f64,
    c: &ConsensusWeights,
    beta: f64,
) -> Vec<f64> {
    let n = omegas.len();
    assert_eq!(c.n(), n, "consensus weights sized for a different agent count");
    let td: Vec<f64> = omegas.iter().map(|w| gamma * dot(phi_next, w) - dot(phi, w)).collect();
    let deltas: Vec<f64> = (0..n)
        .map(|i| reward + (0..n).map(|k| c.get(i, k) * td[k]).sum::<f64>() / n as f64)
        .collect();
    for (w, d) in omegas.iter_mut().zip(&deltas) {
        for (x, f) in w.iter_mut().zip(phi) {
            *x += beta * d * f;
        }
    }
    deltas
}

/// `ω̄`, the average over agents.
pub fn mean_omega(omegas: &[Vec<f64>]) -> Vec<f64> {
    let n = omegas.len() as f64;
    let mut out = vec![0.0; omegas[0].len()];
    for w in omegas {
        for (o, x) in out.iter_mut().zip(w) {
            *o += x / n;
        }
    }
    out
}

/// `‖ω − 𝟙 ⊗ ω̄‖₂`.
pub fn disagreement_norm(omegas: &[Vec<f64>]) -> f64 {
    if omegas.is_empty() {
        return 0.0;
    }
    let bar = mean_omega(omegas);
    omegas
        .iter()
        .flat_map(|w| w.iter().zip(&bar).map(|(x, m)| (x - m) * (x - m)))
        .sum::<f64>()
        .sqrt()
}

/// `ψ^j(s, b)` for every state, agent and own action.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFeatures {
    n_agents: usize,
    rows: Vec<Vec<Vec<f64>>>,
}

impl PolicyFeatures {
    pub fn new(mdp: &LinearMdp) -> Self {
        let n_agents = mdp.n_agents();
        let mut rows = Vec::with_capacity(mdp.n_states * n_agents);
        for s in 0..mdp.n_states {
            for j in 0..n_agents {
                rows.push((0..mdp.agent_actions[j]).map(|b| mdp.psi(s, j, b)).collect());
            }
        }
        Self { n_agents, rows }
    }

    pub fn rows(&self, s: usize, j: usize) -> &[Vec<f64>] {
        &self.rows[s * self.n_agents + j]
    }
}

/// Softmax-linear policy over one agent's own actions.
pub fn softmax_policy(rows: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = rows.iter().map(|r| dot(r, theta)).collect();
    softmax(&logits)
}

/// `∇_θ log π(b) = ψ(b) − Σ_b' π(b') ψ(b')`.
pub fn grad_log_policy(rows: &[Vec<f64>], theta: &[f64], b: usize) -> Vec<f64> {
    let pi = softmax_policy(rows, theta);
    let mut g = rows[b].clone();
    for (p, r) in pi.iter().zip(rows) {
        for (gi, ri) in g.iter_mut().zip(r) {
            *gi -= p * ri;
        }
    }
    g
}

/// `A^j = Q(s,a;ω) − Σ_b π^j(b) Q(s, b, a^{−j}; ω)`.
pub fn advantage(mdp: &LinearMdp, s: usize, a: usize, j: usize, pi_j: &[f64], omega: &[f64]) -> f64 {
    let base: f64 = pi_j
        .iter()
        .enumerate()
        .map(|(b, p)| p * mdp.q(s, mdp.with_agent_action(a, j, b), omega))
        .sum();
    mdp.q(s, a, omega) - base
}

/// `θ^j ← Γ(θ^j + β A^j ∇log π^j)`, with `Γ` the box of half-width `bound`.
/// Returns `A^j`.
#[allow(clippy::too_many_arguments)]
pub fn actor_update(
    theta: &mut [f64],
    omega: &[f64],
    mdp: &LinearMdp,
    features: &PolicyFeatures,
    s: usize,
    a: usize,
    j: usize,
    beta: f64,
    bound: f64,
) -> f64 {
    let rows = features.rows(s, j);
    let pi = softmax_policy(rows, theta);
    let adv = advantage(mdp, s, a, j, &pi, omega);
    let g = grad_log_policy(rows, theta, mdp.agent_action(a, j));
    for (t, gi) in theta.iter_mut().zip(g) {
        *t = (*t + beta * adv * gi).clamp(-bound, bound);
    }
    adv
}
