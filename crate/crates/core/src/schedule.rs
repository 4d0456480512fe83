//! Deterministic DDIM noise schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Step;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Denoising steps T.
    pub steps: usize,
    pub train_timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            train_timesteps: 1000,
            beta_start: 0.00085,
            beta_end: 0.012,
        }
    }
}

/// Signal levels indexed by sampler step.
///
/// `level(0)` is the (almost) pure-noise level where sampling starts and
/// `level(T) = 1` is the clean latent. Levels increase strictly. The model is
/// evaluated at steps `0..T`, each at its training timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseSchedule {
    config: ScheduleConfig,
    timesteps: Vec<usize>,
    levels: Vec<f32>,
}

impl DenoiseSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            steps,
            train_timesteps,
            beta_start,
            beta_end,
        } = config;
        if steps == 0 || train_timesteps == 0 {
            return Err(Error::config("schedule needs positive steps and train_timesteps"));
        }
        if steps > train_timesteps {
            return Err(Error::config(format!(
                "{steps} sampling steps exceed {train_timesteps} training timesteps"
            )));
        }
        if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::config(format!(
                "need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        // scaled-linear betas
        let (a, b) = (beta_start.sqrt(), beta_end.sqrt());
        let n = train_timesteps;
        let mut alphas_cumprod = Vec::with_capacity(n);
        let mut prod = 1.0f64;
        for i in 0..n {
            let s = if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
            prod *= 1.0 - s * s;
            alphas_cumprod.push(prod);
        }
        let ratio = train_timesteps / steps;
        let timesteps: Vec<usize> = (0..steps).rev().map(|s| s * ratio).collect();
        let mut levels: Vec<f32> = timesteps.iter().map(|&t| alphas_cumprod[t] as f32).collect();
        levels.push(1.0);
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("schedule levels are not strictly increasing"));
        }
        Ok(Self {
            config,
            timesteps,
            levels,
        })
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn steps(&self) -> usize {
        self.timesteps.len()
    }

    /// Signal level of the latent at step `i` (`i ≤ T`).
    pub fn level(&self, i: usize) -> f32 {
        self.levels[i]
    }

    pub fn levels(&self) -> &[f32] {
        &self.levels
    }

    /// Model evaluation point for step `i < T`.
    pub fn step(&self, i: usize) -> Step {
        Step {
            index: i,
            timestep: self.timesteps[i] as f32,
            alpha_bar: self.levels[i],
        }
    }
}

impl Default for DenoiseSchedule {
    fn default() -> Self {
        Self::new(ScheduleConfig::default()).expect("default schedule is valid")
    }
}
