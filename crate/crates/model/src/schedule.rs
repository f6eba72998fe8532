//! Variance schedule for the discrete-time diffusion objective.

use crate::error::{ModelError, Result};

/// Linear beta schedule with cached alpha products.
///
/// Index convention: step `t` runs over `1..=steps()`; `beta(t)` reads
/// `betas[t - 1]`. `alpha_bar(t)` is the cumulative product of
/// `1 - beta` up to step `t`, with `alpha_bar(0) == 1` by definition.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `alpha_bars[t]` = prod_{s<=t} (1 - beta_s); length `steps + 1`.
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly spaced betas from `beta_start` to `beta_end` over `steps` steps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(ModelError::Config("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
            return Err(ModelError::Config(format!(
                "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        if steps > 1 && beta_start == beta_end {
            return Err(ModelError::Config(
                "multi-step schedule requires strictly increasing betas".into(),
            ));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        let mut prod = 1.0;
        for &b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        // The product of terms in (0,1) is strictly decreasing; verify anyway so
        // a bad edit here cannot silently corrupt sampling.
        for t in 1..alpha_bars.len() {
            if !(alpha_bars[t] > 0.0 && alpha_bars[t] < alpha_bars[t - 1]) {
                return Err(ModelError::Config("alpha_bar must strictly decrease".into()));
            }
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Desk-scale default: 200 steps, beta 1e-4 -> 0.05.
    ///
    /// The end beta is raised from the full-scale 0.02 so that the terminal
    /// signal fraction stays below 1% at the shorter horizon; 200 steps at
    /// 0.02 would leave alpha_bar(T) ~ 0.13.
    pub fn desk_default() -> Self {
        Self::linear(200, 1.0e-4, 0.05).expect("desk schedule is valid")
    }

    /// Full-scale default: 1000 steps, beta 1e-4 -> 0.02.
    pub fn full_default() -> Self {
        Self::linear(1000, 1.0e-4, 0.02).expect("full schedule is valid")
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// Beta at step `t` (1-based).
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "step {t} out of range");
        self.betas[t - 1]
    }

    /// Cumulative signal fraction after `t` steps; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        assert!(t <= self.steps(), "step {t} out of range");
        self.alpha_bars[t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_terminal_signal_below_one_percent() {
        let s = NoiseSchedule::desk_default();
        assert_eq!(s.steps(), 200);
        assert!((s.beta(1) - 1.0e-4).abs() < 1e-15);
        assert!((s.beta(200) - 0.05).abs() < 1e-15);
        assert!(s.alpha_bar(200) < 0.01, "alpha_bar(T) = {}", s.alpha_bar(200));
    }

    #[test]
    fn full_default_terminal_signal_below_one_percent() {
        let s = NoiseSchedule::full_default();
        assert_eq!(s.steps(), 1000);
        assert!((s.beta(1000) - 0.02).abs() < 1e-15);
        assert!(s.alpha_bar(1000) < 0.01, "alpha_bar(T) = {}", s.alpha_bar(1000));
    }

    #[test]
    fn alpha_bar_starts_at_one_and_strictly_decreases() {
        let s = NoiseSchedule::linear(50, 1e-3, 0.3).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        for t in 1..=50 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(NoiseSchedule::linear(0, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 1.0).is_err());
        assert!(NoiseSchedule::linear(10, 0.02, 0.01).is_err());
        assert!(NoiseSchedule::linear(10, 0.02, 0.02).is_err());
    }

    #[test]
    fn single_step_schedule_is_allowed() {
        let s = NoiseSchedule::linear(1, 0.9, 0.9).unwrap();
        assert_eq!(s.steps(), 1);
        assert!((s.alpha_bar(1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn beta_matches_linear_ramp() {
        let s = NoiseSchedule::linear(5, 0.1, 0.5).unwrap();
        for (t, want) in [(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4), (5, 0.5)] {
            assert!((s.beta(t) - want).abs() < 1e-12);
        }
    }
}
