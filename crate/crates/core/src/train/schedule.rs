/// Piecewise-constant learning rate: `base · decay^⌊epoch / period⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLrSchedule {
    pub base_lr: f64,
    pub decay: f64,
    pub period: usize,
}

impl Default for StepLrSchedule {
    fn default() -> Self {
        StepLrSchedule {
            base_lr: 0.001,
            decay: 0.1f64.sqrt(),
            period: 7,
        }
    }
}

impl StepLrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.period.max(1)) as i32;
        self.base_lr * self.decay.powi(steps)
    }
}
