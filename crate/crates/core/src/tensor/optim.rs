use alloc::format;

use super::Parameter;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `base * 0.5 * (1 + cos(pi * t))`
    Cosine,
    /// Linear ramp from 0 over the warmup fraction, then constant.
    WarmupHold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    pub base_lr: f64,
    pub total_epochs: usize,
    pub warmup_epochs: usize,
}

impl LrSchedule {
    pub fn cosine(base_lr: f64, total_epochs: usize) -> Result<Self> {
        Self::new(ScheduleKind::Cosine, base_lr, total_epochs, 0)
    }

    pub fn warmup_hold(base_lr: f64, total_epochs: usize, warmup_epochs: usize) -> Result<Self> {
        Self::new(
            ScheduleKind::WarmupHold,
            base_lr,
            total_epochs,
            warmup_epochs,
        )
    }

    pub fn new(
        kind: ScheduleKind,
        base_lr: f64,
        total_epochs: usize,
        warmup_epochs: usize,
    ) -> Result<Self> {
        if !(base_lr > 0.0 && base_lr.is_finite()) {
            return Err(Error::arg(format!(
                "base_lr must be positive, got {base_lr}"
            )));
        }
        if warmup_epochs > total_epochs {
            return Err(Error::arg(format!(
                "warmup_epochs {warmup_epochs} exceeds total_epochs {total_epochs}"
            )));
        }
        if kind == ScheduleKind::Cosine && warmup_epochs != 0 {
            return Err(Error::arg("cosine schedule takes no warmup"));
        }
        Ok(LrSchedule {
            kind,
            base_lr,
            total_epochs,
            warmup_epochs,
        })
    }

    pub fn warmup_fraction(&self) -> f64 {
        if self.total_epochs == 0 {
            0.0
        } else {
            self.warmup_epochs as f64 / self.total_epochs as f64
        }
    }
}

/// Learning rate at training progress `t` in `[0, 1]`.
pub fn lr_at(schedule: &LrSchedule, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::arg(format!("epoch fraction {t} outside [0, 1]")));
    }
    Ok(match schedule.kind {
        ScheduleKind::Cosine => {
            schedule.base_lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
        }
        ScheduleKind::WarmupHold => {
            let wf = schedule.warmup_fraction();
            if t < wf {
                schedule.base_lr * (t / wf)
            } else {
                schedule.base_lr
            }
        }
    })
}

/// Plain SGD (no momentum) with L2 weight decay:
/// `p <- p - lr * (grad + weight_decay * p)`, then zeroes the gradients.
pub fn sgd_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Parameter<T>>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if lr.is_nan() || lr < 0.0 || weight_decay.is_nan() || weight_decay < 0.0 {
        return Err(Error::arg(format!(
            "sgd_step: lr {lr} and weight_decay {weight_decay} must be >= 0"
        )));
    }
    let (lr, wd) = (T::of(lr), T::of(weight_decay));
    for p in params {
        for (v, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * (g + wd * *v);
        }
        p.zero_grad();
    }
    Ok(())
}
