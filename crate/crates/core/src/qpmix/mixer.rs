use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, GradSet, Mlp};

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Monotonic mixing network.
///
/// Hypernetworks map the global state to the weights of a two-layer mixer
/// over the agents' Q-values: `Q_tot = w2ᵀ elu(W1ᵀ q + b1) + b2`, where the
/// weight heads end in `|·|` so `∂Q_tot/∂q_i ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    pub n_agents: usize,
    pub state_width: usize,
    pub hidden: usize,
    /// state → n_agents·hidden, entry `i·hidden + j` weights q_i into unit j.
    pub w1: Mlp,
    pub b1: Mlp,
    pub w2: Mlp,
    pub b2: Mlp,
}

#[derive(Debug, Clone)]
pub struct MixCache {
    batch: usize,
    q: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    u: Vec<f64>,
    caches: [crate::nn::Cache; 4],
}

/// Gradients for the four hypernetworks, in `Mixer::nets` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerGrads(pub [GradSet; 4]);

impl MixerGrads {
    pub fn as_mut_refs(&mut self) -> impl Iterator<Item = &mut GradSet> {
        self.0.iter_mut()
    }
}

impl Mixer {
    pub fn new<R: Rng + ?Sized>(n_agents: usize, state_width: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            n_agents,
            state_width,
            hidden,
            w1: Mlp::new(&[state_width, n_agents * hidden], &[Activation::Abs], rng)?,
            b1: Mlp::new(&[state_width, hidden], &[Activation::Identity], rng)?,
            w2: Mlp::new(&[state_width, hidden], &[Activation::Abs], rng)?,
            b2: Mlp::new(&[state_width, hidden, 1], &[Activation::Relu, Activation::Identity], rng)?,
        })
    }

    pub fn zeros(n_agents: usize, state_width: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            n_agents,
            state_width,
            hidden,
            w1: Mlp::zeros(&[state_width, n_agents * hidden], &[Activation::Abs])?,
            b1: Mlp::zeros(&[state_width, hidden], &[Activation::Identity])?,
            w2: Mlp::zeros(&[state_width, hidden], &[Activation::Abs])?,
            b2: Mlp::zeros(&[state_width, hidden, 1], &[Activation::Relu, Activation::Identity])?,
        })
    }

    pub fn nets(&self) -> [&Mlp; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn nets_mut(&mut self) -> [&mut Mlp; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn zero_grads(&self) -> MixerGrads {
        MixerGrads(self.nets().map(|m| m.zero_grad()))
    }

    fn check(&self, q: &[f64], s: &[f64], batch: usize) -> Result<()> {
        if q.len() != batch * self.n_agents {
            return Err(Error::WidthMismatch { expected: batch * self.n_agents, got: q.len() });
        }
        if s.len() != batch * self.state_width {
            return Err(Error::WidthMismatch { expected: batch * self.state_width, got: s.len() });
        }
        Ok(())
    }

    fn combine(&self, q: &[f64], w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        let (n, h) = (self.n_agents, self.hidden);
        let mut u = vec![0.0; batch * h];
        let mut out = vec![0.0; batch];
        for b in 0..batch {
            let qb = &q[b * n..(b + 1) * n];
            let w1b = &w1[b * n * h..(b + 1) * n * h];
            let ub = &mut u[b * h..(b + 1) * h];
            ub.copy_from_slice(&b1[b * h..(b + 1) * h]);
            for (i, &qi) in qb.iter().enumerate() {
                for (uj, &w) in ub.iter_mut().zip(&w1b[i * h..(i + 1) * h]) {
                    *uj += qi * w;
                }
            }
            let w2b = &w2[b * h..(b + 1) * h];
            out[b] = b2[b] + ub.iter().zip(w2b).map(|(&x, &w)| w * elu(x)).sum::<f64>();
        }
        (out, u)
    }

    /// `Q_tot` for a batch of joint Q-values and states.
    pub fn predict(&self, q: &[f64], s: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check(q, s, batch)?;
        let w1 = self.w1.predict(s, batch)?;
        let b1 = self.b1.predict(s, batch)?;
        let w2 = self.w2.predict(s, batch)?;
        let b2 = self.b2.predict(s, batch)?;
        Ok(self.combine(q, &w1, &b1, &w2, &b2, batch).0)
    }

    pub fn forward(&self, q: &[f64], s: &[f64], batch: usize) -> Result<(Vec<f64>, MixCache)> {
        self.check(q, s, batch)?;
        let (w1, c1) = self.w1.forward(s, batch)?;
        let (b1, c2) = self.b1.forward(s, batch)?;
        let (w2, c3) = self.w2.forward(s, batch)?;
        let (b2, c4) = self.b2.forward(s, batch)?;
        let (out, u) = self.combine(q, &w1, &b1, &w2, &b2, batch);
        Ok((out, MixCache { batch, q: q.to_vec(), w1, w2, u, caches: [c1, c2, c3, c4] }))
    }

    /// Accumulates hypernetwork gradients and returns `∂L/∂q` (batch × agents).
    pub fn backward(&self, cache: &MixCache, dqtot: &[f64], grads: &mut MixerGrads) -> Result<Vec<f64>> {
        let (n, h, batch) = (self.n_agents, self.hidden, cache.batch);
        if dqtot.len() != batch {
            return Err(Error::WidthMismatch { expected: batch, got: dqtot.len() });
        }
        let mut dq = vec![0.0; batch * n];
        let mut dw1 = vec![0.0; batch * n * h];
        let mut db1 = vec![0.0; batch * h];
        let mut dw2 = vec![0.0; batch * h];
        for b in 0..batch {
            let g = dqtot[b];
            let ub = &cache.u[b * h..(b + 1) * h];
            let w2b = &cache.w2[b * h..(b + 1) * h];
            let qb = &cache.q[b * n..(b + 1) * n];
            let w1b = &cache.w1[b * n * h..(b + 1) * n * h];
            for j in 0..h {
                dw2[b * h + j] = g * elu(ub[j]);
                db1[b * h + j] = g * w2b[j] * elu_grad(ub[j]);
            }
            let du = &db1[b * h..(b + 1) * h];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..h {
                    dw1[(b * n + i) * h + j] = du[j] * qb[i];
                    acc += du[j] * w1b[i * h + j];
                }
                dq[b * n + i] = acc;
            }
        }
        let [g1, g2, g3, g4] = &mut grads.0;
        self.w1.backward_into(&cache.caches[0], &dw1, g1)?;
        self.b1.backward_into(&cache.caches[1], &db1, g2)?;
        self.w2.backward_into(&cache.caches[2], &dw2, g3)?;
        self.b2.backward_into(&cache.caches[3], dqtot, g4)?;
        Ok(dq)
    }
}

/// State-value head `V(s)`.
pub fn value_head<R: Rng + ?Sized>(state_width: usize, hidden: usize, rng: &mut R) -> Result<Mlp> {
    Mlp::new(&[state_width, hidden, 1], &[Activation::Relu, Activation::Identity], rng)
}

/// `(Q_tot, V(s))` for one joint Q vector and state.
pub fn mix(mixer: &Mixer, value: &Mlp, q: &[f64], state: &[f64]) -> Result<(f64, f64)> {
    let qtot = mixer.predict(q, state, 1)?[0];
    let v = value.predict(state, 1)?[0];
    Ok((qtot, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_mixer_outputs_zero() {
        let m = Mixer::zeros(3, 6, 4).unwrap();
        let v = Mlp::zeros(&[6, 4, 1], &[Activation::Relu, Activation::Identity]).unwrap();
        let (qtot, val) = mix(&m, &v, &[1.0, -2.0, 5.0], &[0.3; 6]).unwrap();
        assert_eq!((qtot, val), (0.0, 0.0));
    }

    #[test]
    fn identity_configured_single_agent() {
        // W1 = 1, b1 = c keeps the ELU on its linear branch; W2 = 1, b2 = -c.
        let c = 100.0;
        let mut m = Mixer::zeros(1, 2, 1).unwrap();
        let bias = |mlp: &mut Mlp, v: f64| {
            let (_, b) = mlp.layout().offsets(mlp.layout().layers() - 1);
            mlp.params_mut().as_mut_slice()[b] = v;
        };
        bias(&mut m.w1, 1.0);
        bias(&mut m.b1, c);
        bias(&mut m.w2, 1.0);
        bias(&mut m.b2, -c);
        for q in [-3.5, 0.0, 0.25, 42.0] {
            let out = m.predict(&[q], &[0.7, -0.2], 1).unwrap()[0];
            assert!((out - q).abs() < 1e-12, "{out} vs {q}");
        }
    }

    #[test]
    fn increasing_a_q_never_lowers_qtot() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = Mixer::new(4, 8, 16, &mut rng).unwrap();
        for _ in 0..50 {
            let s: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let base = m.predict(&q, &s, 1).unwrap()[0];
            for i in 0..4 {
                let mut q2 = q.clone();
                q2[i] += 1.0;
                assert!(m.predict(&q2, &s, 1).unwrap()[0] >= base);
            }
        }
    }
}
