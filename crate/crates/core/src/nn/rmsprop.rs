use super::{GradSet, ParamSet};
use crate::error::{Error, Result};

/// RMSProp with a per-parameter running mean of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    acc: Vec<f64>,
}

impl RmsProp {
    pub const RHO: f64 = 0.99;
    pub const EPS: f64 = 1e-5;

    pub fn new(n_params: usize, lr: f64) -> Self {
        Self::with(n_params, lr, Self::RHO, Self::EPS)
    }

    pub fn with(n_params: usize, lr: f64, rho: f64, eps: f64) -> Self {
        Self { lr, rho, eps, acc: vec![0.0; n_params] }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.acc
    }

    /// Applies one step, leaving everything untouched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradSet) -> Result<()> {
        params.check_layout(grads)?;
        self.step_slice(params.as_mut_slice(), grads.as_slice())
    }

    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.acc.len() || grads.len() != self.acc.len() {
            return Err(Error::WidthMismatch { expected: self.acc.len(), got: grads.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        for ((p, &g), a) in params.iter_mut().zip(grads).zip(self.acc.iter_mut()) {
            *a = self.rho * *a + (1.0 - self.rho) * g * g;
            *p -= self.lr * g / (a.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales all gradient sets together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut GradSet], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.as_mut_slice() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layout;

    fn scalar(v: f64) -> ParamSet {
        // A 1→1 layer has a weight and a bias; only the weight is used here.
        ParamSet::from_vec(Layout::new(&[1, 1]).unwrap(), vec![v, 0.0]).unwrap()
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = scalar(1.5);
        let mut opt = RmsProp::new(2, 0.1);
        opt.step(&mut p, &scalar(0.0)).unwrap();
        assert_eq!(p.as_slice()[0], 1.5);
    }

    #[test]
    fn single_step_by_hand() {
        let mut p = scalar(0.0);
        let mut opt = RmsProp::with(2, 0.1, 0.9, 1e-5);
        opt.step(&mut p, &scalar(1.0)).unwrap();
        assert!((opt.accumulator()[0] - 0.1).abs() < 1e-15);
        let want = 0.1 / (0.1f64.sqrt() + 1e-5);
        assert!((p.as_slice()[0] + want).abs() < 1e-12);
        assert!((want - 0.3162).abs() < 1e-4);
    }

    #[test]
    fn repeated_steps_shrink() {
        let mut p = scalar(0.0);
        let mut opt = RmsProp::with(2, 0.1, 0.9, 1e-5);
        opt.step(&mut p, &scalar(1.0)).unwrap();
        let first = -p.as_slice()[0];
        opt.step(&mut p, &scalar(1.0)).unwrap();
        let second = -p.as_slice()[0] - first;
        assert!(second < first);
    }

    #[test]
    fn non_finite_rejected_without_change() {
        let mut p = scalar(2.0);
        let mut opt = RmsProp::new(2, 0.1);
        assert!(matches!(opt.step(&mut p, &scalar(f64::NAN)), Err(Error::Numerical(_))));
        assert_eq!(p.as_slice()[0], 2.0);
        assert_eq!(opt.accumulator()[0], 0.0);
    }

    #[test]
    fn clipping_caps_joint_norm() {
        let mut a = scalar(3.0);
        let mut b = scalar(4.0);
        let before = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((before - 5.0).abs() < 1e-12);
        let after = (a.norm_sq() + b.norm_sq()).sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }
}
