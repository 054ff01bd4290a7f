use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-cycle learning-rate schedule: linear warmup from
/// `max_lr * initial_lr_fraction` to `max_lr`, then cosine annealing down to
/// `max_lr * final_lr_fraction` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycleSchedule {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub final_lr_fraction: f64,
    #[serde(default = "default_initial_fraction")]
    pub initial_lr_fraction: f64,
}

fn default_initial_fraction() -> f64 {
    0.04
}

impl OneCycleSchedule {
    pub fn new(
        max_lr: f64,
        total_steps: usize,
        warmup_fraction: f64,
        final_lr_fraction: f64,
    ) -> Result<Self> {
        let s = Self {
            max_lr,
            total_steps,
            warmup_fraction,
            final_lr_fraction,
            initial_lr_fraction: default_initial_fraction(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::invalid("one-cycle max_lr must be positive"));
        }
        if self.total_steps == 0 {
            return Err(Error::invalid("one-cycle total_steps must be positive"));
        }
        if !open_unit(self.warmup_fraction)
            || !open_unit(self.final_lr_fraction)
            || !open_unit(self.initial_lr_fraction)
        {
            return Err(Error::invalid(
                "one-cycle fractions must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }

    fn warmup_steps(&self) -> f64 {
        self.total_steps as f64 * self.warmup_fraction
    }

    /// Learning rate at `step`, for `0 <= step <= total_steps`.
    pub fn lr(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::invalid(format!(
                "step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        let t = step as f64;
        let warm = self.warmup_steps();
        let start = self.max_lr * self.initial_lr_fraction;
        let end = self.max_lr * self.final_lr_fraction;
        if t < warm {
            Ok(start + (self.max_lr - start) * t / warm)
        } else if step == self.total_steps {
            Ok(end)
        } else {
            let progress = (t - warm) / (self.total_steps as f64 - warm);
            Ok(end + (self.max_lr - end) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
        }
    }
}
