//! Adam and learning-rate schedules.

use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected update of `weights` in place.
    pub fn step(&mut self, weights: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(weights.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((w, &g), m), v) in weights.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// Cosine decay from `peak` at the first epoch to `floor` after the last.
    Cosine {
        peak: f64,
        floor: f64,
    },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Constant(1e-3)
    }
}

impl LrSchedule {
    /// Rate for 1-based `epoch` out of `total`.
    pub fn rate(&self, epoch: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::Cosine { peak, floor } => {
                let frac = (epoch.saturating_sub(1)) as f64 / total.max(1) as f64;
                floor + 0.5 * (peak - floor) * (1.0 + (PI * frac).cos())
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            LrSchedule::Constant(lr) => lr.is_finite() && lr > 0.0,
            LrSchedule::Cosine { peak, floor } => {
                peak.is_finite() && floor.is_finite() && peak > 0.0 && floor >= 0.0 && floor <= peak
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut w = vec![1.0, 1.0, 1.0];
        adam.step(&mut w, &[2.0, -0.5, 0.0], 0.1);
        assert!((w[0] - 0.9).abs() < 1e-7);
        assert!((w[1] - 1.1).abs() < 1e-7);
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut w = vec![3.0, -2.0];
        for _ in 0..3000 {
            let g = vec![2.0 * w[0], 2.0 * w[1]];
            adam.step(&mut w, &g, 0.01);
        }
        assert!(w[0].abs() < 1e-2 && w[1].abs() < 1e-2);
    }

    #[test]
    fn cosine_endpoints() {
        let s = LrSchedule::Cosine {
            peak: 1e-3,
            floor: 1e-5,
        };
        assert!((s.rate(1, 100) - 1e-3).abs() < 1e-15);
        assert!(s.rate(100, 100) > 1e-5 && s.rate(100, 100) < 2e-5);
        assert_eq!(LrSchedule::Constant(0.5).rate(7, 10), 0.5);
    }
}
