//! Sampler backends: partial denoising, one-step preview and decode.
//!
//! Timesteps count *remaining* steps: a fresh candidate sits at
//! `trajectory_steps` and a clean sample at 0. Backends report how many
//! denoising steps each call consumed; that number is what strategies charge
//! to the ledger.

mod remote;
mod sim;

pub use remote::{DecodeResponse, LatentRequest, PreviewResponse, RemoteSampler, SampleRequest, SampleResponse};
pub(crate) use sim::{sim_meta, unit, Channel, TextRole};
pub use sim::{CandidateTruth, ImageKind, ImageRecord, SimParams, SimSampler, SimWorld};

#[cfg(test)]
pub(crate) use sim::tests::sim_instance;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateState, EditInstance, Image};

/// Noise scale per remaining-steps timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    /// `sigma_t = t / steps`.
    pub fn linear(steps: u32) -> Self {
        let steps = steps.max(1);
        Self {
            sigma: (0..=steps).map(|t| f64::from(t) / f64::from(steps)).collect(),
        }
    }

    /// Table indexed by remaining steps; must start at 0, end at 1 and be
    /// non-decreasing in `t`.
    pub fn from_table(sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() < 2 {
            return Err(Error::Config("noise schedule needs at least two entries".into()));
        }
        if sigma[0] != 0.0 || *sigma.last().unwrap() != 1.0 {
            return Err(Error::Config(
                "noise schedule must satisfy sigma_0 = 0 and sigma_T = 1".into(),
            ));
        }
        if sigma.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("noise schedule must be monotone".into()));
        }
        Ok(Self { sigma })
    }

    pub fn steps(&self) -> u32 {
        (self.sigma.len() - 1) as u32
    }

    pub fn sigma(&self, t: u32) -> f64 {
        self.sigma[(t as usize).min(self.sigma.len() - 1)]
    }

    /// Noise scale at remaining step `t` of a trajectory that is `steps` long,
    /// resampled onto this schedule.
    pub fn sigma_for(&self, t: u32, steps: u32) -> f64 {
        if steps == self.steps() {
            return self.sigma(t);
        }
        let pos = f64::from(t) / f64::from(steps.max(1)) * f64::from(self.steps());
        let lo = pos.floor() as u32;
        let hi = pos.ceil() as u32;
        let frac = pos - f64::from(lo);
        self.sigma(lo) * (1.0 - frac) + self.sigma(hi) * frac
    }
}

/// One-step clean estimate `x_{0|t} = x_t - sigma_t * eps`.
#[inline]
pub fn predict_clean(x_t: f64, sigma_t: f64, eps: f64) -> f64 {
    x_t - sigma_t * eps
}

/// Backend that advances candidate trajectories.
///
/// Implementations must allow concurrent calls on distinct candidates.
pub trait Sampler: Send + Sync {
    /// Full trajectory length `T`.
    fn total_steps(&self) -> u32;

    /// Fresh candidate at `t = T` with nothing charged.
    fn spawn(&self, instance: &EditInstance, candidate_id: u32, seed: u64, prompt: &str) -> Result<CandidateState>;

    /// Fresh candidate on a shortened schedule of `steps` steps, sharing the
    /// initial noise of the full-length candidate with the same seed.
    fn spawn_short(
        &self,
        instance: &EditInstance,
        candidate_id: u32,
        seed: u64,
        prompt: &str,
        steps: u32,
    ) -> Result<CandidateState>;

    /// Denoise from the state's current timestep down to `to_t`. Returns the
    /// advanced state and the number of steps the backend charged.
    fn sample_partial(
        &self,
        instance: &EditInstance,
        state: CandidateState,
        to_t: u32,
    ) -> Result<(CandidateState, u64)>;

    /// Decoded one-step preview of the current state, reusing the last model
    /// prediction. Returns the image and any extra steps charged.
    fn preview(&self, instance: &EditInstance, state: &CandidateState) -> Result<(Image, u64)>;

    /// Decode the current latent as-is, without a clean estimate.
    fn decode_raw(&self, instance: &EditInstance, state: &CandidateState) -> Result<Image>;

    /// Decode a fully denoised candidate.
    fn decode(&self, instance: &EditInstance, state: &CandidateState) -> Result<Image>;
}

pub(crate) fn check_order(state: &CandidateState, to_t: u32) -> Result<()> {
    if to_t > state.timestep {
        return Err(Error::TimestepOrder {
            candidate: state.candidate_id,
            current: state.timestep,
            from: state.timestep,
            to: to_t,
        });
    }
    Ok(())
}

pub(crate) fn check_denoised(state: &CandidateState) -> Result<()> {
    if state.timestep != 0 {
        return Err(Error::NotDenoised {
            candidate: state.candidate_id,
            timestep: state.timestep,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preview_formula_direct() {
        assert_eq!(predict_clean(0.5, 0.5, 1.0), 0.0);
    }

    #[test]
    fn preview_at_zero_noise_is_identity() {
        let sched = NoiseSchedule::linear(28);
        assert_eq!(predict_clean(0.731, sched.sigma(0), 123.0), 0.731);
    }

    #[test]
    fn linear_schedule_boundaries() {
        let sched = NoiseSchedule::linear(28);
        assert_eq!(sched.sigma(28), 1.0);
        assert_eq!(sched.sigma(0), 0.0);
        for t in 1..=28 {
            assert!(sched.sigma(t) >= sched.sigma(t - 1));
        }
        assert!((sched.sigma_for(4, 8) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn table_schedule_validation() {
        assert!(NoiseSchedule::from_table(vec![0.0, 0.7, 0.4, 1.0]).is_err());
        assert!(NoiseSchedule::from_table(vec![0.1, 1.0]).is_err());
        assert!(NoiseSchedule::from_table(vec![0.0, 0.2, 1.0]).is_ok());
    }
}
