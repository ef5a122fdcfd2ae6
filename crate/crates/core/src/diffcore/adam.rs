use super::tensor::Tensor;
use crate::error::{ensure, Result};

/// Adam moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn for_param(param: &Tensor) -> Self {
        Self {
            first_moment: vec![0.0; param.len()],
            second_moment: vec![0.0; param.len()],
            step_count: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter. Gradients are left in
/// place; the caller zeroes them.
pub fn adam_step(params: &mut [&mut Tensor], states: &mut [&mut AdamState], cfg: &AdamConfig) -> Result<()> {
    ensure!(
        params.len() == states.len(),
        "{} parameters but {} optimizer states",
        params.len(),
        states.len()
    );
    for (p, s) in params.iter_mut().zip(states.iter_mut()) {
        ensure!(
            s.first_moment.len() == p.len() && s.second_moment.len() == p.len(),
            "optimizer state length {} does not match parameter length {}",
            s.first_moment.len(),
            p.len()
        );
        let grad = p
            .grad()
            .ok_or_else(|| crate::UncleError::Contract("adam_step: parameter has no gradient".into()))?
            .to_vec();
        s.step_count += 1;
        let bc1 = 1.0 - cfg.beta1.powi(s.step_count as i32);
        let bc2 = 1.0 - cfg.beta2.powi(s.step_count as i32);
        let values = p.values_mut();
        for (((w, g), m), v) in values
            .iter_mut()
            .zip(&grad)
            .zip(s.first_moment.iter_mut())
            .zip(s.second_moment.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v]).unwrap().with_grad()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = scalar_param(0.0);
        w.accumulate_grad(&[1.0]).unwrap();
        let mut s = AdamState::for_param(&w);
        adam_step(&mut [&mut w], &mut [&mut s], &AdamConfig::with_lr(1e-3)).unwrap();
        assert!((w.values()[0] + 1e-3).abs() < 1e-6);
        assert_eq!(s.step_count, 1);
        assert_eq!(w.grad(), Some(&[1.0][..]));
    }

    #[test]
    fn zero_gradient_leaves_param_alone() {
        let mut w = scalar_param(0.7);
        w.accumulate_grad(&[0.0]).unwrap();
        let mut s = AdamState::for_param(&w);
        for _ in 0..5 {
            adam_step(&mut [&mut w], &mut [&mut s], &AdamConfig::default()).unwrap();
        }
        assert_eq!(w.values()[0], 0.7);
        assert_eq!(s.step_count, 5);
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut w = scalar_param(0.0);
        let mut s = AdamState::for_param(&w);
        for _ in 0..100 {
            let g = 2.0 * (w.values()[0] - 2.0);
            w.zero_grad();
            w.accumulate_grad(&[g]).unwrap();
            adam_step(&mut [&mut w], &mut [&mut s], &AdamConfig::with_lr(0.1)).unwrap();
        }
        assert!((w.values()[0] - 2.0).abs() < 0.05, "w = {}", w.values()[0]);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut w = scalar_param(0.0);
        let mut s = AdamState::for_param(&w);
        assert!(adam_step(&mut [&mut w], &mut [&mut s], &AdamConfig::default()).is_err());
        let mut short = AdamState {
            first_moment: vec![],
            second_moment: vec![],
            step_count: 0,
        };
        w.accumulate_grad(&[1.0]).unwrap();
        assert!(adam_step(&mut [&mut w], &mut [&mut short], &AdamConfig::default()).is_err());
    }
}
