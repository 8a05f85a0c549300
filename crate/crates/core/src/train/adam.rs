use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Matrix<T>> = params
            .tensors()
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        OptimState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update applied in place.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut OptimState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    let grads = grads.tensors();
    let mut params = params.tensors_mut();
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::Shape("gradient and parameter tensor lists differ".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let correction1 = T::one() - b1.powi(t);
    let correction2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.eps));
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].1;
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let m = state.first[k].as_mut_slice();
        let v = state.second[k].as_mut_slice();
        for (((x, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProbeParams;

    fn scalar(v: f64) -> ModelParams<f64> {
        ModelParams::Probe(ProbeParams {
            weight: Matrix::from_vec(1, 1, vec![v]).unwrap(),
        })
    }

    fn value(p: &ModelParams<f64>) -> f64 {
        p.tensors()[0].1.as_slice()[0]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = ModelParams::Probe(ProbeParams::<f64>::init(3, 2, 0));
        let before = p.clone();
        let mut state = OptimState::new(&p);
        adam_step(&mut p, &before.zeros_like(), &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let cfg = AdamConfig { learning_rate: 0.01, ..Default::default() };
        let w = Matrix::<f64>::from_vec(1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        let mut p = ModelParams::Probe(ProbeParams { weight: w });
        let g = ModelParams::Probe(ProbeParams {
            weight: Matrix::from_vec(1, 3, vec![3.0, -0.5, 1e-3]).unwrap(),
        });
        let mut state = OptimState::new(&p);
        adam_step(&mut p, &g, &mut state, &cfg).unwrap();
        let got = p.tensors()[0].1.as_slice().to_vec();
        assert!((got[0] + 0.01).abs() < 1e-9);
        assert!((got[1] - 0.01).abs() < 1e-9);
        assert!((got[2] + 0.01).abs() < 1e-7);
    }

    #[test]
    fn three_step_trace() {
        // hand trace: theta0 = 1, grads 0.5, -0.2, 0.1, lr 0.1, default betas
        let cfg = AdamConfig { learning_rate: 0.1, ..Default::default() };
        let mut p = scalar(1.0);
        let mut state = OptimState::new(&p);
        let expected = [0.900000002, 0.8654394181165108, 0.8275002408356956];
        for (g, want) in [0.5, -0.2, 0.1].into_iter().zip(expected) {
            adam_step(&mut p, &scalar(g), &mut state, &cfg).unwrap();
            assert!((value(&p) - want).abs() < 1e-12, "{} vs {want}", value(&p));
        }
    }
}
