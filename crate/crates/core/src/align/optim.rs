/// Adam with decoupled weight decay over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(n_params: usize, lr: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            weight_decay,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. `decay[i]` selects which parameters are decayed.
    /// `frozen[i]` parameters are left untouched.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        decay: impl Fn(usize) -> bool,
        frozen: impl Fn(usize) -> bool,
    ) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            if frozen(i) {
                continue;
            }
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            if decay(i) {
                params[i] -= self.lr * self.weight_decay * params[i];
            }
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut opt = AdamW::new(2, 0.1, 1e-12, 0.0);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5], |_| true, |_| false);
        assert!((p[0] - 0.9).abs() < 1e-9);
        assert!((p[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn zero_lr_is_identity_and_decay_is_decoupled() {
        let mut opt = AdamW::new(1, 0.0, 1e-8, 0.5);
        let mut p = vec![2.0];
        opt.step(&mut p, &[1.0], |_| true, |_| false);
        assert_eq!(p, vec![2.0]);
        let mut opt = AdamW::new(2, 0.1, 1e-8, 0.5);
        let mut p = vec![2.0, 2.0];
        opt.step(&mut p, &[0.0, 0.0], |i| i == 0, |_| false);
        assert!((p[0] - 1.9).abs() < 1e-12);
        assert_eq!(p[1], 2.0);
    }

    #[test]
    fn frozen_parameters_stay_put() {
        let mut opt = AdamW::new(2, 0.1, 1e-8, 0.1);
        let mut p = vec![1.0, 1.0];
        opt.step(&mut p, &[1.0, 1.0], |_| true, |i| i == 1);
        assert_eq!(p[1], 1.0);
        assert!(p[0] < 1.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = AdamW::new(1, 0.05, 1e-8, 0.0);
        let mut p = vec![5.0];
        for _ in 0..2000 {
            let g = 2.0 * (p[0] - 1.5);
            opt.step(&mut p, &[g], |_| false, |_| false);
        }
        assert!((p[0] - 1.5).abs() < 1e-2);
    }
}
