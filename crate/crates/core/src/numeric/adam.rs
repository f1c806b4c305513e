use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments for an ordered list of tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Changes the step size without touching the moment estimates.
    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.config.learning_rate = learning_rate;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }

    /// Applies one update in place. Nothing is modified when a gradient is
    /// non-finite.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != self.first[i].shape() {
                return Err(Error::Shape(format!("tensor {i}: shape differs from optimizer state")));
            }
            if !g.is_finite() {
                return Err(Error::Divergence {
                    stage: "adam".into(),
                    step: self.step as usize + 1,
                    detail: format!("non-finite gradient in tensor {i}"),
                    trace: None,
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(state: &mut AdamState, p: &mut Matrix, g: f64) {
        state.step(&mut [p], &[Matrix::scalar(g)]).unwrap();
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = Matrix::scalar(0.0);
        let mut s = AdamState::new(AdamConfig::with_learning_rate(1e-3), &[&p]);
        scalar_step(&mut s, &mut p, 1.0);
        // m̂ = v̂ = 1 → Δ = −lr / (1 + ε)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-18);
        assert!((p.item() + 9.99999e-4).abs() < 1e-9);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn two_identical_gradients_follow_recurrence() {
        let (lr, b1, b2, eps, g) = (1e-3, 0.9, 0.999, 1e-8, 0.37);
        let mut p = Matrix::scalar(1.0);
        let mut s = AdamState::new(AdamConfig::with_learning_rate(lr), &[&p]);
        scalar_step(&mut s, &mut p, g);
        let after_one = p.item();
        scalar_step(&mut s, &mut p, g);

        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        let m2 = b1 * m1 + (1.0 - b1) * g;
        let v2 = b2 * v1 + (1.0 - b2) * g * g;
        let m_hat = m2 / (1.0 - b1 * b1);
        let v_hat = v2 / (1.0 - b2 * b2);
        let second = lr * m_hat / (v_hat.sqrt() + eps);
        assert!(((after_one - p.item()) - second).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = Matrix::from_rows(&[vec![0.5, -2.0]]).unwrap();
        let before = p.clone();
        let mut s = AdamState::new(AdamConfig::default(), &[&p]);
        for _ in 0..5 {
            s.step(&mut [&mut p], &[Matrix::zeros(1, 2)]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step_count(), 5);
        assert!(s.first_moments()[0].as_slice().iter().all(|&v| v == 0.0));
        assert!(s.second_moments()[0].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = Matrix::scalar(1.0);
        let mut s = AdamState::new(AdamConfig::default(), &[&p]);
        let err = s.step(&mut [&mut p], &[Matrix::scalar(f64::NAN)]).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert_eq!(p.item(), 1.0);
        assert_eq!(s.step_count(), 0);
    }
}
