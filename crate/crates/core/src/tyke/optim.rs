use std::f64::consts::PI;

use super::ModelParams;

/// Cosine annealing from `base_lr` down to `min_lr` over `period` epochs:
///
/// `lr(t) = min_lr + (base_lr - min_lr) * (1 + cos(pi * t / period)) / 2`
///
/// Past `period` the cosine keeps going (the rate climbs back up); there are
/// no warm restarts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub period: f64,
}

impl CosineSchedule {
    /// Period of four quarter cycles.
    pub fn from_quarter_cycle(base_lr: f64, min_lr: f64, quarter_cycle: f64) -> Self {
        Self {
            base_lr,
            min_lr,
            period: 4.0 * quarter_cycle,
        }
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        let t = epoch as f64;
        self.min_lr + (self.base_lr - self.min_lr) * (1.0 + (PI * t / self.period).cos()) / 2.0
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(n_params: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
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

    /// One update over parameter/gradient slice pairs, laid out in the same
    /// order on every call.
    pub fn step_slices<'a, I>(&mut self, pairs: I, lr: f64)
    where
        I: IntoIterator<Item = (&'a mut [f64], &'a [f64])>,
    {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let mut offset = 0;
        for (params, grads) in pairs {
            assert_eq!(params.len(), grads.len(), "parameter/gradient length");
            let m = &mut self.m[offset..offset + params.len()];
            let v = &mut self.v[offset..offset + params.len()];
            for i in 0..params.len() {
                let g = grads[i];
                params[i] -= lr * self.weight_decay * params[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += params.len();
        }
        assert_eq!(offset, self.m.len(), "optimizer state size");
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        let pairs = params.tensors_mut().into_iter().zip(grads.tensors());
        self.step_slices(pairs, lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let s = CosineSchedule::from_quarter_cycle(5e-4, 1e-6, 10.0);
        assert_eq!(s.period, 40.0);
        assert_eq!(s.lr(0), 5e-4);
        assert!((s.lr(20) - (5e-4 + 1e-6) / 2.0).abs() < 1e-18);
        assert!((s.lr(40) - 1e-6).abs() < 1e-18);
        assert!(s.lr(45) > s.lr(40));
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut opt = AdamW::new(3, 0.9, 0.999, 1e-8, 0.0);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..4 {
            opt.step_slices([(&mut p[..], &[0.0; 3][..])], 1e-3);
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn hand_stepped_trace() {
        // theta0 = 1, grads 0.5, -0.2, 0.1, lr 0.1, wd 0.01, b1 0.9, b2 0.999, eps 1e-8.
        // step 1: theta = 1*(1-0.001) = 0.999; m = 0.05, v = 0.00025
        //         m_hat = 0.5, v_hat = 0.25 -> theta -= 0.1*0.5/(0.5+1e-8)
        // step 2: theta *= 0.999; m = 0.045 - 0.02 = 0.025, v = 0.00024975 + 0.00004
        //         m_hat = 0.025/0.19, v_hat = 0.00028975/0.001999
        // step 3: theta *= 0.999; m = 0.0225 + 0.01 = 0.0325,
        //         v = 0.00028946025 + 0.00001, m_hat = 0.0325/0.271,
        //         v_hat = 0.00029946025/0.002997001
        let mut expected = 1.0f64;
        expected *= 0.999;
        expected -= 0.1 * 0.5 / (0.5 + 1e-8);
        expected *= 0.999;
        expected -= 0.1 * (0.025 / 0.19) / ((0.00028975f64 / 0.001999).sqrt() + 1e-8);
        expected *= 0.999;
        expected -= 0.1 * (0.0325 / 0.271) / ((0.00029946025f64 / 0.002997001).sqrt() + 1e-8);

        let mut opt = AdamW::new(1, 0.9, 0.999, 1e-8, 0.01);
        let mut theta = [1.0];
        for g in [0.5, -0.2, 0.1] {
            opt.step_slices([(&mut theta[..], &[g][..])], 0.1);
        }
        assert!((theta[0] - expected).abs() < 1e-12, "{} vs {expected}", theta[0]);
        assert_eq!(opt.steps_taken(), 3);
    }
}
