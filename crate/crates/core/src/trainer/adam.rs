use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, size: usize) -> Self {
        Self { config, m: vec![0.0; size], v: vec![0.0; size], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "Adam state has {} slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Aborted(format!("non-finite gradient at slot {i}")));
        }
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// One standalone Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut Adam) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut a = Adam::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, -2.0];
        a.step(&mut p, &[0.5, -0.5]).unwrap();
        let after_one = p.clone();
        let (m, v) = (a.m.clone(), a.v.clone());
        a.m.iter_mut().for_each(|x| *x = 0.0);
        a.v.iter_mut().for_each(|x| *x = 0.0);
        a.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, after_one);

        let mut b = Adam::new(AdamConfig::default(), 2);
        b.m = m.clone();
        b.v = v.clone();
        b.t = 1;
        let mut q = vec![0.0, 0.0];
        b.step(&mut q, &[0.0, 0.0]).unwrap();
        assert!(b.m[0].abs() < m[0].abs() && b.v[0] < v[0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut a = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![0.0; 3];
        a.step(&mut p, &[3.0, -0.2, 1e3]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-9);
        assert!((p[2] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn descends_a_quadratic_bowl() {
        let mut a = Adam::new(AdamConfig { learning_rate: 1e-2, ..Default::default() }, 1);
        let mut theta = vec![1.0];
        for _ in 0..100 {
            let g = [2.0 * theta[0]];
            adam_step(&mut theta, &g, &mut a).unwrap();
        }
        assert!(theta[0].abs() < 1.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut a = Adam::new(AdamConfig::default(), 1);
        assert!(matches!(a.step(&mut [0.0], &[f64::NAN]), Err(Error::Aborted(_))));
    }
}
