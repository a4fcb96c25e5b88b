use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimiser state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                actual: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut opt = Adam::new(AdamConfig::default(), 2);
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn descends_scalar_quadratic() {
        // J = θ²/2, dJ/dθ = θ
        let mut theta = [1.0];
        let mut opt = Adam::new(AdamConfig::default(), 1);
        let g = [theta[0]];
        opt.step(&mut theta, &g).unwrap();
        assert!(theta[0] < 1.0);
    }

    #[test]
    fn ten_steps_halve_a_quadratic() {
        let loss = |p: &[f64]| 0.5 * (p[0] * p[0] + 4.0 * p[1] * p[1]);
        let mut p = vec![1.0, 1.0];
        let initial = loss(&p);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
            2,
        );
        for _ in 0..10 {
            let g = [p[0], 4.0 * p[1]];
            opt.step(&mut p, &g).unwrap();
        }
        assert!(loss(&p) < initial / 2.0, "{} vs {}", loss(&p), initial);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut p = vec![0.5];
        let mut opt = Adam::new(AdamConfig::default(), 1);
        assert!(matches!(
            opt.step(&mut p, &[f64::NAN]),
            Err(Error::NonFiniteGradient)
        ));
        assert_eq!(p, vec![0.5]);
        assert_eq!(opt.steps(), 0);
    }
}
