//! Fully connected networks with an exact backward pass and RMSProp.
//!
//! Batches are row-major `batch × width` slices.

mod checkpoint;
mod rmsprop;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use rmsprop::{clip_global_norm, RmsProp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Abs,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Abs => x.abs(),
        }
    }

    /// Derivative at pre-activation `x`.
    #[inline]
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Abs => {
                if x < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Abs => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Abs),
            _ => None,
        }
    }
}

/// Layer widths; layer `l` maps `widths[l]` to `widths[l + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    widths: Vec<usize>,
}

impl Layout {
    pub fn new(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Numerical(format!("invalid layer widths {widths:?}")));
        }
        Ok(Self { widths: widths.to_vec() })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of scalars: weights then biases for every layer.
    pub fn len(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offsets of layer `l`'s weight matrix (`out × in`, row-major) and bias.
    pub fn offsets(&self, l: usize) -> (usize, usize) {
        let mut at = 0;
        for w in self.widths.windows(2).take(l) {
            at += w[1] * w[0] + w[1];
        }
        (at, at + self.widths[l + 1] * self.widths[l])
    }
}

/// Flat parameter vector tagged with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layout: Layout,
    data: Vec<f64>,
}

/// Gradients share the parameter container.
pub type GradSet = ParamSet;

impl ParamSet {
    pub fn zeros(layout: Layout) -> Self {
        let data = vec![0.0; layout.len()];
        Self { layout, data }
    }

    pub fn from_vec(layout: Layout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::WidthMismatch { expected: layout.len(), got: data.len() });
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn check_layout(&self, other: &ParamSet) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::WidthMismatch { expected: self.len(), got: other.len() });
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &ParamSet) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Multilayer perceptron.
#[derive(Debug, Clone)]
pub struct Mlp {
    acts: Vec<Activation>,
    params: ParamSet,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.acts == other.acts && self.params == other.params
    }
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    batch: usize,
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Vec<f64>>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    /// Weights and biases drawn uniformly from `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], acts: &[Activation], rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(widths, acts)?;
        let layout = mlp.params.layout.clone();
        for l in 0..layout.layers() {
            let bound = 1.0 / (layout.widths[l] as f64).sqrt();
            let (w, _) = layout.offsets(l);
            let end = w + layout.widths[l + 1] * (layout.widths[l] + 1);
            for x in &mut mlp.params.data[w..end] {
                *x = rng.random_range(-bound..=bound);
            }
        }
        Ok(mlp)
    }

    pub fn zeros(widths: &[usize], acts: &[Activation]) -> Result<Self> {
        let layout = Layout::new(widths)?;
        if acts.len() != layout.layers() {
            return Err(Error::WidthMismatch { expected: layout.layers(), got: acts.len() });
        }
        Ok(Self { acts: acts.to_vec(), params: ParamSet::zeros(layout), version: fresh_version() })
    }

    pub fn from_params(acts: &[Activation], params: ParamSet) -> Result<Self> {
        if acts.len() != params.layout.layers() {
            return Err(Error::WidthMismatch { expected: params.layout.layers(), got: acts.len() });
        }
        if !params.is_finite() {
            return Err(Error::Numerical("non-finite parameters".into()));
        }
        Ok(Self { acts: acts.to_vec(), params, version: fresh_version() })
    }

    /// ReLU hidden layers and an identity output.
    pub fn relu_net<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let n = widths.len().saturating_sub(1);
        let mut acts = vec![Activation::Relu; n];
        if let Some(last) = acts.last_mut() {
            *last = Activation::Identity;
        }
        Self::new(widths, &acts, rng)
    }

    pub fn activations(&self) -> &[Activation] {
        &self.acts
    }

    pub fn layout(&self) -> &Layout {
        &self.params.layout
    }

    pub fn input_width(&self) -> usize {
        self.params.layout.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.params.layout.output_width()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Mutable access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.version = fresh_version();
        &mut self.params
    }

    pub fn zero_grad(&self) -> GradSet {
        ParamSet::zeros(self.params.layout.clone())
    }

    pub fn snapshot(&self) -> ParamSet {
        self.params.clone()
    }

    pub fn restore(&mut self, snapshot: &ParamSet) -> Result<()> {
        self.params.check_layout(snapshot)?;
        self.params_mut().data.copy_from_slice(&snapshot.data);
        Ok(())
    }

    /// Forward pass over a batch, returning outputs and the cache for `backward`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Cache)> {
        let layout = &self.params.layout;
        if x.len() != batch * layout.input_width() {
            return Err(Error::WidthMismatch { expected: batch * layout.input_width(), got: x.len() });
        }
        let mut inputs = Vec::with_capacity(layout.layers());
        let mut pre = Vec::with_capacity(layout.layers());
        let mut cur = x.to_vec();
        for l in 0..layout.layers() {
            let z = self.affine(l, &cur, batch);
            let a: Vec<f64> = z.iter().map(|&v| self.acts[l].apply(v)).collect();
            inputs.push(cur);
            pre.push(z);
            cur = a;
        }
        Ok((cur, Cache { version: self.version, batch, inputs, pre }))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let layout = &self.params.layout;
        if x.len() != batch * layout.input_width() {
            return Err(Error::WidthMismatch { expected: batch * layout.input_width(), got: x.len() });
        }
        let mut cur = self.affine(0, x, batch);
        for v in &mut cur {
            *v = self.acts[0].apply(*v);
        }
        for l in 1..layout.layers() {
            cur = self.affine(l, &cur, batch);
            for v in &mut cur {
                *v = self.acts[l].apply(*v);
            }
        }
        Ok(cur)
    }

    fn affine(&self, l: usize, x: &[f64], batch: usize) -> Vec<f64> {
        let layout = &self.params.layout;
        let (n_in, n_out) = (layout.widths[l], layout.widths[l + 1]);
        let (w, b) = layout.offsets(l);
        let bias = &self.params.data[b..b + n_out];
        let mut z = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            z.extend_from_slice(bias);
        }
        // z (batch × out) += x (batch × in) · Wᵀ
        gemm(batch, n_in, n_out, x, n_in, 1, &self.params.data[w..b], 1, n_in, &mut z);
        z
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward_into(&self, cache: &Cache, dout: &[f64], grads: &mut GradSet) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        self.params.check_layout(grads)?;
        let layout = &self.params.layout;
        let batch = cache.batch;
        if dout.len() != batch * layout.output_width() {
            return Err(Error::WidthMismatch { expected: batch * layout.output_width(), got: dout.len() });
        }
        let mut delta = dout.to_vec();
        for l in (0..layout.layers()).rev() {
            let (n_in, n_out) = (layout.widths[l], layout.widths[l + 1]);
            let act = self.acts[l];
            if act != Activation::Identity {
                for (d, &z) in delta.iter_mut().zip(&cache.pre[l]) {
                    *d *= act.grad(z);
                }
            }
            let (w, b) = layout.offsets(l);
            let x = &cache.inputs[l];
            {
                let (gw, gb) = grads.data[w..b + n_out].split_at_mut(b - w);
                // dW (out × in) += deltaᵀ · x
                gemm(n_out, batch, n_in, &delta, 1, n_out, x, n_in, 1, gw);
                for row in delta.chunks_exact(n_out) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            let mut dx = vec![0.0; batch * n_in];
            // dx (batch × in) = delta · W
            gemm(batch, n_out, n_in, &delta, n_out, 1, &self.params.data[w..b], n_in, 1, &mut dx);
            delta = dx;
        }
        Ok(delta)
    }

    /// Fresh gradients and the input gradient.
    pub fn backward(&self, cache: &Cache, dout: &[f64]) -> Result<(GradSet, Vec<f64>)> {
        let mut grads = self.zero_grad();
        let dx = self.backward_into(cache, dout, &mut grads)?;
        Ok((grads, dx))
    }
}

/// `c (m × n) += a (m × k) · b (k × n)` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(m * n <= c.len());
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Scalar reference forward pass.
    fn naive_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let layout = mlp.layout();
        let p = mlp.params().as_slice();
        let mut cur = x.to_vec();
        for l in 0..layout.layers() {
            let (n_in, n_out) = (layout.widths()[l], layout.widths()[l + 1]);
            let (w, b) = layout.offsets(l);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = p[b + o];
                for i in 0..n_in {
                    s += p[w + o * n_in + i] * cur[i];
                }
                next[o] = mlp.activations()[l].apply(s);
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mlp = Mlp::zeros(&[4, 3, 2], &[Activation::Relu, Activation::Identity]).unwrap();
        let (y, _) = mlp.forward(&[1.0, -2.0, 3.0, 0.5], 1).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut mlp = Mlp::zeros(&[3, 3], &[Activation::Identity]).unwrap();
        let (w, _) = mlp.layout().offsets(0);
        for i in 0..3 {
            mlp.params_mut().as_mut_slice()[w + i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.2, 4.0];
        assert_eq!(mlp.forward(&x, 1).unwrap().0, x.to_vec());
    }

    #[test]
    fn matches_scalar_forward() {
        let mut r = rng(3);
        let mlp = Mlp::relu_net(&[5, 3, 2], &mut r).unwrap();
        let batch = 4;
        let x: Vec<f64> = (0..batch * 5).map(|_| r.random_range(-2.0..2.0)).collect();
        let (y, _) = mlp.forward(&x, batch).unwrap();
        assert_eq!(mlp.predict(&x, batch).unwrap(), y);
        for b in 0..batch {
            let want = naive_forward(&mlp, &x[b * 5..b * 5 + 5]);
            for (got, want) in y[b * 2..b * 2 + 2].iter().zip(want) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mlp = Mlp::zeros(&[4, 2], &[Activation::Identity]).unwrap();
        assert!(matches!(mlp.forward(&[1.0; 3], 1), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut mlp = Mlp::relu_net(&[2, 2], &mut rng(1)).unwrap();
        let (_, cache) = mlp.forward(&[1.0, 2.0], 1).unwrap();
        mlp.params_mut().as_mut_slice()[0] += 1.0;
        assert!(matches!(mlp.backward(&cache, &[1.0, 1.0]), Err(Error::StaleCache)));
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mlp = Mlp::relu_net(&[3, 4, 2], &mut rng(2)).unwrap();
        let (_, cache) = mlp.forward(&[0.1, 0.2, 0.3], 1).unwrap();
        let (g, dx) = mlp.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn abs_grad_on_positive_side() {
        assert_eq!(Activation::Abs.grad(0.7), 1.0);
        assert_eq!(Activation::Abs.grad(-0.7), -1.0);
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let mut mlp = Mlp::relu_net(&[3, 5, 2], &mut rng(9)).unwrap();
        let snap = mlp.snapshot();
        for v in mlp.params_mut().as_mut_slice() {
            *v *= 1.7;
        }
        mlp.restore(&snap).unwrap();
        assert_eq!(mlp.params(), &snap);
    }
}
