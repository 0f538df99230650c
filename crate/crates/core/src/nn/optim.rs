use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{BdgError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Classical momentum: `v ← μv + g; p ← p − lr·v`.
    SgdMomentum { momentum: f64 },
    /// Adam with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn sgd_momentum(lr: f64, momentum: f64) -> Self {
        Self::new(OptimizerKind::SgdMomentum { momentum }, lr)
    }

    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn adam(lr: f64) -> Self {
        Self::new(
            OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            lr,
        )
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to `params` given matching `grads`.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(BdgError::State(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(BdgError::State(format!(
                    "parameter {i} has shape {:?} but gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        } else if self.first.len() != grads.len()
            || self.first.iter().zip(grads).any(|(b, g)| b.shape() != g.shape())
        {
            return Err(BdgError::State(
                "moment buffers are not shape-congruent with gradients".into(),
            ));
        }

        self.steps += 1;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.first) {
                    for ((pi, &gi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(v.data_mut().iter_mut())
                    {
                        *vi = momentum * *vi + gi;
                        *pi -= self.lr * *vi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((pi, &gi), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut())
                        .zip(v.data_mut().iter_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *pi -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(a: f64, b: f64) -> Tensor {
        Tensor::matrix(1, 2, vec![a, b]).unwrap()
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = vec2(1.0, -2.0);
        let g = vec2(0.5, 0.25);
        let mut opt = Optimizer::sgd_momentum(0.1, 0.0);
        opt.step(vec![&mut p], std::slice::from_ref(&g)).unwrap();
        assert_eq!(p.data(), &[1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn two_momentum_steps_closed_form() {
        let (lr, mu) = (0.1, 0.9);
        let mut p = vec2(0.0, 0.0);
        let g = vec2(1.0, -3.0);
        let mut opt = Optimizer::sgd_momentum(lr, mu);
        opt.step(vec![&mut p], std::slice::from_ref(&g)).unwrap();
        opt.step(vec![&mut p], std::slice::from_ref(&g)).unwrap();
        for (pi, gi) in p.data().iter().zip(g.data()) {
            assert!((pi + lr * gi * (2.0 + mu)).abs() < 1e-15);
        }
        assert_eq!(opt.steps(), 2);
    }

    #[test]
    fn adam_first_step_bounded_by_lr() {
        for scale in [1e-6, 1.0, 1e6] {
            let mut p = vec2(0.0, 0.0);
            let g = vec2(scale, -3.0 * scale);
            let mut opt = Optimizer::adam(5e-4);
            opt.step(vec![&mut p], &[g]).unwrap();
            for &pi in p.data() {
                assert!(pi.abs() <= 5e-4 * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut p = vec2(0.3, -0.7);
        let mut opt = Optimizer::adam(5e-4);
        opt.step(vec![&mut p], &[vec2(0.0, 0.0)]).unwrap();
        assert_eq!(p.data(), &[0.3, -0.7]);
    }

    #[test]
    fn shape_mismatch_is_state_error() {
        let mut p = vec2(0.0, 0.0);
        let mut opt = Optimizer::sgd_momentum(0.1, 0.9);
        let bad = Tensor::zeros(&[2, 1]);
        assert!(matches!(opt.step(vec![&mut p], &[bad]), Err(BdgError::State(_))));
        opt.step(vec![&mut p], &[vec2(1.0, 1.0)]).unwrap();
        let mut q = Tensor::zeros(&[1, 3]);
        let g = Tensor::zeros(&[1, 3]);
        assert!(matches!(opt.step(vec![&mut q], &[g]), Err(BdgError::State(_))));
    }
}
