//! Small enumerable MDPs with linear features and the product-form joint policy.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Feature construction for the reference family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// `Φ = I`, one weight per state-action pair.
    Tabular,
    /// One weight per `(s, a⁰ + a¹)`: `K = 3|S|` for two binary agents.
    Aggregated,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Tabular => "tabular",
            FeatureKind::Aggregated => "aggregated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tabular" => Some(FeatureKind::Tabular),
            "aggregated" => Some(FeatureKind::Aggregated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdp {
    pub n_states: usize,
    /// Action count per agent. Joint actions are mixed-radix, agent 0 most significant.
    pub agent_actions: Vec<usize>,
    /// `P[(s·A + a)·S + s']`.
    pub p: Vec<f64>,
    /// `R[s·A + a]`.
    pub r: Vec<f64>,
    /// Row-major `|S||A| × K`.
    pub phi: Vec<f64>,
    pub k: usize,
    pub gamma: f64,
}

/// Uniform smoothing mass mixed into every transition row.
pub const SMOOTHING: f64 = 0.05;
pub const REFERENCE_GAMMA: f64 = 0.3;

impl LinearMdp {
    pub fn new(
        n_states: usize,
        agent_actions: Vec<usize>,
        p: Vec<f64>,
        r: Vec<f64>,
        phi: Vec<f64>,
        k: usize,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self { n_states, agent_actions, p, r, phi, k, gamma };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::RangeViolation { key: key.into(), reason });
        if self.n_states == 0 || self.agent_actions.is_empty() || self.agent_actions.contains(&0) {
            return bad("mdp", "needs at least one state, one agent and one action per agent".into());
        }
        let (s, a) = (self.n_states, self.n_joint());
        if self.p.len() != s * a * s || self.r.len() != s * a || self.phi.len() != s * a * self.k {
            return bad("mdp", "table sizes do not match |S|, |A| and K".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("{} is outside [0, 1)", self.gamma));
        }
        for (row, chunk) in self.p.chunks(s).enumerate() {
            if chunk.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (chunk.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("transitions", format!("row {row} is not a distribution"));
            }
        }
        if self.r.iter().any(|x| !x.is_finite()) || self.phi.iter().any(|x| !x.is_finite()) {
            return bad("mdp", "non-finite reward or feature".into());
        }
        if self.k == 0 || self.phi_matrix().rank(1e-10) != self.k {
            return bad("features", format!("Φ does not have full column rank {}", self.k));
        }
        Ok(())
    }

    /// Seeded member of the reference family: `|S| = 2 + seed mod 3`, two
    /// binary agents, Dirichlet(1) transitions with uniform smoothing and
    /// rewards in `[0, 1)`.
    pub fn reference(seed: u64, features: FeatureKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 2 + (seed % 3) as usize;
        let agent_actions = vec![2, 2];
        let a = 4;
        let mut p = Vec::with_capacity(s * a * s);
        for _ in 0..s * a {
            let row: Vec<f64> = (0..s).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = row.iter().sum();
            p.extend(row.iter().map(|x| (1.0 - SMOOTHING) * x / total + SMOOTHING / s as f64));
        }
        let r = (0..s * a).map(|_| rng.random::<f64>()).collect();
        let (phi, k) = match features {
            FeatureKind::Tabular => {
                let n = s * a;
                let mut phi = vec![0.0; n * n];
                for i in 0..n {
                    phi[i * n + i] = 1.0;
                }
                (phi, n)
            }
            FeatureKind::Aggregated => {
                let k = 3 * s;
                let mut phi = vec![0.0; s * a * k];
                for st in 0..s {
                    for ja in 0..a {
                        phi[(st * a + ja) * k + 3 * st + ja / 2 + ja % 2] = 1.0;
                    }
                }
                (phi, k)
            }
        };
        Self { n_states: s, agent_actions, p, r, phi, k, gamma: REFERENCE_GAMMA }
    }

    pub fn n_agents(&self) -> usize {
        self.agent_actions.len()
    }

    pub fn n_joint(&self) -> usize {
        self.agent_actions.iter().product()
    }

    pub fn phi_row(&self, s: usize, a: usize) -> &[f64] {
        let i = s * self.n_joint() + a;
        &self.phi[i * self.k..(i + 1) * self.k]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states;
        let i = s * self.n_joint() + a;
        &self.p[i * n..(i + 1) * n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.r[s * self.n_joint() + a]
    }

    pub fn phi_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_states * self.n_joint(), self.k, &self.phi)
    }

    /// Agent `j`'s component of joint action `a`.
    pub fn agent_action(&self, a: usize, j: usize) -> usize {
        let stride: usize = self.agent_actions[j + 1..].iter().product();
        (a / stride) % self.agent_actions[j]
    }

    /// Joint action `a` with agent `j`'s component replaced by `b`.
    pub fn with_agent_action(&self, a: usize, j: usize, b: usize) -> usize {
        let stride: usize = self.agent_actions[j + 1..].iter().product();
        a - self.agent_action(a, j) * stride + b * stride
    }

    /// `Q(s, a) = φ(s, a)ᵀ ω`.
    pub fn q(&self, s: usize, a: usize, omega: &[f64]) -> f64 {
        dot(self.phi_row(s, a), omega)
    }

    /// Policy features `ψ^j(s, b)`: `φ` averaged over the other agents' actions.
    pub fn psi(&self, s: usize, j: usize, b: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        let mut count = 0.0;
        for a in 0..self.n_joint() {
            if self.agent_action(a, j) == b {
                for (o, f) in out.iter_mut().zip(self.phi_row(s, a)) {
                    *o += f;
                }
                count += 1.0;
            }
        }
        out.iter_mut().for_each(|o| *o /= count);
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How one agent picks its action.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentPolicy {
    /// ε-greedy on its own component of the joint argmax of `φᵀω`.
    Value { epsilon: f64, omega: Vec<f64> },
    /// Softmax over `ψ^j(s, b)ᵀ θ`.
    Softmax { theta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    pub agents: Vec<AgentPolicy>,
}

impl JointPolicy {
    /// Agent `j`'s distribution over its own actions in state `s`.
    pub fn agent_probs(&self, mdp: &LinearMdp, s: usize, j: usize) -> Vec<f64> {
        let n_own = mdp.agent_actions[j];
        match &self.agents[j] {
            AgentPolicy::Value { epsilon, omega } => {
                let mut best = 0;
                let mut best_q = f64::NEG_INFINITY;
                for a in 0..mdp.n_joint() {
                    let q = mdp.q(s, a, omega);
                    if q > best_q {
                        best_q = q;
                        best = a;
                    }
                }
                let mut p = vec![epsilon / n_own as f64; n_own];
                p[mdp.agent_action(best, j)] += 1.0 - epsilon;
                p
            }
            AgentPolicy::Softmax { theta } => {
                let logits: Vec<f64> = (0..n_own).map(|b| dot(&mdp.psi(s, j, b), theta)).collect();
                softmax(&logits)
            }
        }
    }

    /// `π_Θ(a | s)` over joint actions, the product of the agent factors.
    pub fn joint_probs(&self, mdp: &LinearMdp, s: usize) -> Vec<f64> {
        let factors: Vec<Vec<f64>> = (0..mdp.n_agents()).map(|j| self.agent_probs(mdp, s, j)).collect();
        (0..mdp.n_joint())
            .map(|a| factors.iter().enumerate().map(|(j, f)| f[mdp.agent_action(a, j)]).product())
            .collect()
    }

    /// `|S| × |A|` row-major table of joint probabilities.
    pub fn table(&self, mdp: &LinearMdp) -> Vec<f64> {
        (0..mdp.n_states).flat_map(|s| self.joint_probs(mdp, s)).collect()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Samples an index from a discrete distribution.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut c = 0.0;
    for (i, &x) in p.iter().enumerate() {
        c += x;
        if u < c {
            return i;
        }
    }
    p.len() - 1
}

/// State chain `P^Θ(s' | s) = Σ_a π(a|s) P(s'|s,a)`.
pub fn state_chain(mdp: &LinearMdp, pi: &[f64]) -> DMatrix<f64> {
    let (n, a_n) = (mdp.n_states, mdp.n_joint());
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..a_n {
            let w = pi[s * a_n + a];
            for (t, &p) in mdp.transition_row(s, a).iter().enumerate() {
                m[(s, t)] += w * p;
            }
        }
    }
    m
}

/// Solves `d P^Θ = d`, `Σ d = 1`.
pub fn stationary_distribution(mdp: &LinearMdp, pi: &[f64]) -> Result<DVector<f64>> {
    let n = mdp.n_states;
    let chain = state_chain(mdp, pi);
    let mut sys = chain.transpose() - DMatrix::identity(n, n);
    let mut rhs = DVector::zeros(n);
    for c in 0..n {
        sys[(n - 1, c)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let d = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("state chain has no unique stationary distribution".into()))?;
    if d.iter().any(|x| !x.is_finite() || *x < -1e-12) {
        return Err(Error::Singular("stationary solve produced an invalid distribution".into()));
    }
    Ok(d)
}

/// `(s, a)`-indexed chain `P^π[(s,a),(s',a')] = P(s'|s,a) π(a'|s')`.
pub fn pair_chain(mdp: &LinearMdp, pi: &[f64]) -> DMatrix<f64> {
    let (n, a_n) = (mdp.n_states, mdp.n_joint());
    let m = n * a_n;
    let mut out = DMatrix::zeros(m, m);
    for s in 0..n {
        for a in 0..a_n {
            for (t, &p) in mdp.transition_row(s, a).iter().enumerate() {
                for b in 0..a_n {
                    out[(s * a_n + a, t * a_n + b)] = p * pi[t * a_n + b];
                }
            }
        }
    }
    out
}

/// Exact `Q^π = (I − γ P^π)⁻¹ R`.
pub fn policy_evaluation(mdp: &LinearMdp, pi: &[f64]) -> Result<DVector<f64>> {
    let m = mdp.n_states * mdp.n_joint();
    let sys = DMatrix::identity(m, m) - pair_chain(mdp, pi) * mdp.gamma;
    sys.lu()
        .solve(&DVector::from_column_slice(&mdp.r))
        .ok_or_else(|| Error::Singular("policy evaluation system".into()))
}
