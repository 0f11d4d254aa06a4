use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schedule offset `max(8S/μ − 1, E·M)`.
pub fn gamma(s: f64, mu: f64, e: usize, m: usize) -> f64 {
    (8.0 * s / mu - 1.0).max((e * m) as f64)
}

/// Diminishing step size `2 / (μ(γ + i))`.
pub fn lr_at(i: usize, mu: f64, gamma: f64) -> f64 {
    2.0 / (mu * (gamma + i as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Diminishing,
    #[default]
    Constant,
}

/// Step-size policy shared by the client and server updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub mu: f64,
    pub s: f64,
    pub mode: ScheduleMode,
    pub constant_lr: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            s: 1.0,
            mode: ScheduleMode::Constant,
            constant_lr: 0.01,
        }
    }
}

impl ScheduleParams {
    pub fn diminishing(mu: f64, s: f64) -> Self {
        Self {
            mu,
            s,
            mode: ScheduleMode::Diminishing,
            ..Self::default()
        }
    }

    pub fn constant(lr: f64) -> Self {
        Self {
            constant_lr: lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Invalid(format!("mu = {} must be positive", self.mu)));
        }
        if !(self.s >= self.mu && self.s.is_finite()) {
            return Err(Error::Invalid(format!(
                "S = {} must be at least mu = {}",
                self.s, self.mu
            )));
        }
        if !self.constant_lr.is_finite() {
            return Err(Error::Invalid("constant_lr must be finite".into()));
        }
        Ok(())
    }

    pub fn gamma(&self, e: usize, m: usize) -> f64 {
        gamma(self.s, self.mu, e, m)
    }

    /// Step size after `i` completed steps, i.e. the one used by step `i + 1`.
    pub fn rate(&self, i: usize, e: usize, m: usize) -> f64 {
        match self.mode {
            ScheduleMode::Constant => self.constant_lr,
            ScheduleMode::Diminishing => lr_at(i, self.mu, self.gamma(e, m)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(1.0, 1.0, 5, 10), 50.0);
        assert_eq!(gamma(100.0, 1.0, 1, 1), 799.0);
        assert_eq!(gamma(2.0, 2.0, 7, 1), 7.0);
        assert_eq!(gamma(3.0, 3.0, 4, 2), 8.0);
    }

    #[test]
    fn lr_examples() {
        assert_eq!(lr_at(0, 1.0, 50.0), 0.04);
        assert_eq!(lr_at(50, 1.0, 50.0), 0.02);
    }

    #[test]
    fn boundary_step_respects_quarter_smoothness_from_step_one() {
        for s in [1.0, 10.0, 100.0] {
            let g = 8.0 * s - 1.0;
            // 2/(8S − μ) sits just above 1/(4S) at i = 0.
            assert!(lr_at(0, 1.0, g) > 1.0 / (4.0 * s));
            assert!(lr_at(1, 1.0, g) <= 1.0 / (4.0 * s) + 1e-15);
        }
    }

    #[test]
    fn constant_mode_ignores_step() {
        let p = ScheduleParams::constant(0.3);
        assert_eq!(p.rate(0, 5, 5), 0.3);
        assert_eq!(p.rate(1000, 5, 5), 0.3);
    }

    #[test]
    fn invalid_moduli_are_rejected() {
        assert!(ScheduleParams::diminishing(2.0, 1.0).validate().is_err());
        assert!(ScheduleParams::diminishing(0.0, 1.0).validate().is_err());
        assert!(ScheduleParams::diminishing(1.0, 1.0).validate().is_ok());
    }
}
