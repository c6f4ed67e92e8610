use crate::error::{Error, Result};

/// Warmup-then-inverse-sqrt learning rate schedule:
/// `lr(step) = scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)`.
/// Rises linearly for `step < warmup_steps`, peaks exactly at the warmup
/// boundary, then decays as `step^-0.5`.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub d_model: usize,
    pub warmup_steps: u64,
    pub scale: f64,
}

impl LrSchedule {
    pub fn new(d_model: usize, warmup_steps: u64, scale: f64) -> Result<Self> {
        if d_model == 0 || warmup_steps == 0 || scale <= 0.0 {
            return Err(Error::InvalidShape(format!(
                "lr schedule needs positive d_model/warmup/scale, got {d_model}/{warmup_steps}/{scale}"
            )));
        }
        Ok(LrSchedule {
            d_model,
            warmup_steps,
            scale,
        })
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            d_model: 256,
            warmup_steps: 4000,
            scale: 1.0,
        }
    }
}

/// Learning rate at `step` (1-based).
pub fn noam_lr(schedule: &LrSchedule, step: u64) -> Result<f64> {
    if step == 0 {
        return Err(Error::InvalidStep);
    }
    let s = step as f64;
    let w = schedule.warmup_steps as f64;
    let d = schedule.d_model as f64;
    Ok(schedule.scale * d.powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5)))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Evaluated from the schedule formula at d=256, warmup=4000.
    #[test]
    fn known_values() {
        let sched = LrSchedule::default();
        let lr1 = noam_lr(&sched, 1).unwrap();
        assert!((lr1 - 2.4705e-7).abs() / 2.4705e-7 < 1e-4, "lr(1) = {lr1}");
        let lr_peak = noam_lr(&sched, 4000).unwrap();
        assert!(
            (lr_peak - 9.8821e-4).abs() / 9.8821e-4 < 1e-4,
            "lr(4000) = {lr_peak}"
        );
    }

    #[test]
    fn peak_is_at_warmup() {
        let sched = LrSchedule::default();
        let peak = noam_lr(&sched, sched.warmup_steps).unwrap();
        for step in [1u64, 10, 100, 3999, 4000, 4001, 10_000, 1_000_000] {
            assert!(noam_lr(&sched, step).unwrap() <= peak);
        }
    }

    #[test]
    fn monotone_up_then_down() {
        let sched = LrSchedule::default();
        let mut prev = 0.0;
        for step in 1..=4000u64 {
            let lr = noam_lr(&sched, step).unwrap();
            assert!(lr > prev);
            prev = lr;
        }
        for step in 4001..4100u64 {
            let lr = noam_lr(&sched, step).unwrap();
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn step_zero_is_an_error() {
        assert!(matches!(
            noam_lr(&LrSchedule::default(), 0),
            Err(Error::InvalidStep)
        ));
    }
}
