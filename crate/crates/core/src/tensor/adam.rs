use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step and keyed by parameter position.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates `params[i]` in place using `grads[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch(params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    detail: format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
                });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self
                .m
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.numel())
        {
            return Err(Error::ShapeMismatch {
                op: "adam",
                detail: "parameter set changed between steps".into(),
            });
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // After one step the bias-corrected ratio is sign(g) (up to eps).
        let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = Tensor::new(vec![3], vec![0.3, -4.0, 0.0]).unwrap();
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        adam.step(&mut [&mut p], &[g]).unwrap();
        let d = p.data();
        assert!((d[0] - 0.9).abs() < 1e-6);
        assert!((d[1] - -1.9).abs() < 1e-6);
        assert_eq!(d[2], 0.5);
    }

    #[test]
    fn matches_scalar_reference() {
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.8,
            beta2: 0.95,
            eps: 1e-6,
        };
        let mut p = Tensor::scalar(2.0);
        let mut adam = Adam::new(cfg);
        let (mut w, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for t in 1..=20 {
            // gradient of (w - 0.5)^2
            let g = 2.0 * (p.item() - 0.5);
            adam.step(&mut [&mut p], &[Tensor::scalar(g)]).unwrap();
            let gr = 2.0 * (w - 0.5);
            m = 0.8 * m + 0.2 * gr;
            v = 0.95 * v + 0.05 * gr * gr;
            let mh = m / (1.0 - 0.8f64.powi(t));
            let vh = v / (1.0 - 0.95f64.powi(t));
            w -= 0.01 * mh / (vh.sqrt() + 1e-6);
            assert!((p.item() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut p = Tensor::zeros(&[2, 2]);
        let g = Tensor::zeros(&[4]);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(
            adam.step(&mut [&mut p], &[g]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_gradient_only_advances_time() {
        let mut p = Tensor::new(vec![2], vec![0.3, -1.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p.data(), &[0.3, -1.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn quadratic_bowl_descends() {
        let mut w = Tensor::new(vec![3], vec![1.0, -0.5, 2.0]).unwrap();
        let mut adam = Adam::new(AdamConfig {
            lr: 0.01,
            ..Default::default()
        });
        let mut norms = Vec::new();
        for _ in 0..100 {
            let g = Tensor::new(vec![3], w.data().iter().map(|x| 2.0 * x).collect()).unwrap();
            adam.step(&mut [&mut w], &[g]).unwrap();
            norms.push(w.norm());
        }
        assert!(norms[5..].windows(2).all(|p| p[1] < p[0]));
    }
}
