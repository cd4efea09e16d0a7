//! Stochastic stand-in for a flow-matching editing model.
//!
//! Every candidate carries a hidden quality `q*`. Observations of that quality
//! made at remaining timestep `t` carry gaussian noise whose standard deviation
//! shrinks to zero as `t -> 0`:
//!
//! ```text
//! std(t) = gen_noise * (t / T)^noise_exponent * channel_ratio
//! ```
//!
//! The latent is a scalar on the straight path `x_t = (1 - sigma) x_0 + sigma n`
//! with `x_0 = q* / S_max`. After each sampling call the backend caches a
//! noise prediction chosen so that the one-step estimate `x_t - sigma eps`
//! lands on a noisy observation of `x_0`; previews are rendered from that
//! estimate. Images record their provenance in the world so in-process
//! providers can score them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{check_denoised, check_order, predict_clean, NoiseSchedule, Sampler};
use crate::error::{Error, Result};
use crate::model::{CandidateState, EditInstance, Image, LatentHandle, QualityDist, Rect, SimMeta};
use crate::rng;

/// Knobs of the simulated model and judges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Run-level key mixed into every draw.
    pub run_seed: u64,
    pub s_max: f64,
    /// General-score noise std at the start of a full trajectory.
    pub gen_noise: f64,
    /// Exponent shaping how fast observation noise decays along the trajectory.
    pub noise_exponent: f64,
    /// Noise of the pixel-level edit strength relative to the general channel.
    pub region_noise_ratio: f64,
    /// Noise of the caption-similarity channel relative to the general channel.
    pub caption_noise_ratio: f64,
    /// Pixel noise std at the start of a trajectory.
    pub pixel_noise: f64,
    /// Noise amplification when a latent is decoded without a clean estimate.
    pub raw_decode_factor: f64,
    /// Noise factor of a short stand-alone run relative to a full-length
    /// preview at the same number of completed steps.
    pub short_run_factor: f64,
    /// Image-caption similarity per unit of quality.
    pub caption_slope: f64,
    /// Spread of visual embeddings around their outcome mode.
    pub visual_jitter: f64,
    pub embed_dim: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            run_seed: 0,
            s_max: 10.0,
            gen_noise: 9.0,
            noise_exponent: 3.5,
            region_noise_ratio: 0.5,
            caption_noise_ratio: 0.5,
            pixel_noise: 0.08,
            raw_decode_factor: 1.5,
            short_run_factor: 0.6,
            caption_slope: 0.04,
            visual_jitter: 0.1,
            embed_dim: 32,
        }
    }
}

impl SimParams {
    /// Noise-free observations everywhere.
    pub fn noiseless() -> Self {
        Self {
            gen_noise: 0.0,
            pixel_noise: 0.0,
            ..Self::default()
        }
    }
}

/// Hidden outcome of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateTruth {
    pub seed: u64,
    pub mode: u64,
    pub q_star: f64,
    pub region_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    Source,
    Preview,
    Raw,
    Final,
}

/// Provenance of an image produced by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub instance_id: String,
    pub kind: ImageKind,
    pub truth: Option<CandidateTruth>,
    /// Multiplier on the channel noise std for observations of this image.
    pub noise_factor: f64,
    pub obs_key: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Channel {
    General,
    Region,
    Caption,
}

impl Channel {
    fn key(self) -> u64 {
        match self {
            Channel::General => 0x47,
            Channel::Region => 0x52,
            Channel::Caption => 0x43,
        }
    }
}

/// What a caption string produced by the simulated captioner describes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TextRole {
    Original(String),
    Edited(String),
}

#[derive(Debug, Clone, Copy)]
struct SimLatent {
    x_t: f64,
    eps: Option<f64>,
}

/// Shared state of a simulation: registered instances, image provenance and
/// latents held on behalf of candidates.
#[derive(Debug)]
pub struct SimWorld {
    params: SimParams,
    instances: RwLock<HashMap<String, Arc<EditInstance>>>,
    images: RwLock<HashMap<u64, ImageRecord>>,
    latents: Mutex<HashMap<LatentHandle, SimLatent>>,
    texts: RwLock<HashMap<String, TextRole>>,
}

impl SimWorld {
    pub fn new(params: SimParams) -> Arc<Self> {
        Arc::new(Self {
            params,
            instances: RwLock::new(HashMap::new()),
            images: RwLock::new(HashMap::new()),
            latents: Mutex::new(HashMap::new()),
            texts: RwLock::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn register_instance(&self, instance: &EditInstance) -> Result<()> {
        if instance.sim_meta.is_none() {
            return Err(Error::Config(format!(
                "instance {} has no simulator metadata",
                instance.id
            )));
        }
        let mut map = self.instances.write().unwrap();
        if !map.contains_key(&instance.id) {
            map.insert(instance.id.clone(), Arc::new(instance.clone()));
            self.images.write().unwrap().insert(
                instance.source.fingerprint(),
                ImageRecord {
                    instance_id: instance.id.clone(),
                    kind: ImageKind::Source,
                    truth: None,
                    noise_factor: 0.0,
                    obs_key: 0,
                },
            );
        }
        Ok(())
    }

    pub fn instance(&self, id: &str) -> Option<Arc<EditInstance>> {
        self.instances.read().unwrap().get(id).cloned()
    }

    pub fn lookup(&self, image: &Image) -> Option<ImageRecord> {
        self.images.read().unwrap().get(&image.fingerprint()).cloned()
    }

    /// Instance registered under the given source image.
    pub fn instance_for_source(&self, source: &Image) -> Option<Arc<EditInstance>> {
        let rec = self.lookup(source)?;
        if rec.kind != ImageKind::Source {
            return None;
        }
        self.instance(&rec.instance_id)
    }

    pub(crate) fn register_text(&self, text: &str, role: TextRole) {
        self.texts.write().unwrap().entry(text.to_string()).or_insert(role);
    }

    pub(crate) fn text_role(&self, text: &str) -> Option<TextRole> {
        self.texts.read().unwrap().get(text).cloned()
    }

    /// Hidden outcome of the candidate with `seed` on `instance`.
    pub fn truth(&self, instance: &EditInstance, seed: u64) -> Result<CandidateTruth> {
        let meta = sim_meta(instance)?;
        let ik = instance.key();
        let mode = match meta.modes {
            Some(k) if k > 0 => (rng::uniform(&[ik, seed, 0x6D6F6465]) * f64::from(k)).floor() as u64,
            _ => seed,
        };
        let raw = match meta.quality {
            QualityDist::Normal { mean, std } => mean + std * rng::normal(&[ik, mode, 0x7175616C]),
            QualityDist::Uniform { low, high } => low + (high - low) * rng::uniform(&[ik, mode, 0x7175616C]),
        };
        let capped = meta.ceiling.map_or(raw, |c| raw.min(c));
        let q_star = capped.clamp(0.0, self.params.s_max);
        let region_hit = rng::uniform(&[ik, mode, 0x686974]) < meta.region_hit_prob;
        Ok(CandidateTruth {
            seed,
            mode,
            q_star,
            region_hit,
        })
    }

    /// Noisy observation of the candidate's quality through one channel.
    pub(crate) fn observe(&self, record: &ImageRecord, channel: Channel) -> Option<f64> {
        let truth = record.truth?;
        let ratio = match channel {
            Channel::General => 1.0,
            Channel::Region => self.params.region_noise_ratio,
            Channel::Caption => self.params.caption_noise_ratio,
        };
        let std = self.params.gen_noise * record.noise_factor * ratio;
        let noise = if std > 0.0 {
            std * rng::normal(&[
                self.params.run_seed,
                rng::hash_str(&record.instance_id),
                truth.seed,
                record.obs_key,
                channel.key(),
            ])
        } else {
            0.0
        };
        Some(truth.q_star + noise)
    }

    fn observe_truth(
        &self,
        instance: &EditInstance,
        truth: &CandidateTruth,
        noise_factor: f64,
        obs_key: u64,
        channel: Channel,
    ) -> f64 {
        let rec = ImageRecord {
            instance_id: instance.id.clone(),
            kind: ImageKind::Preview,
            truth: Some(*truth),
            noise_factor,
            obs_key,
        };
        self.observe(&rec, channel).unwrap_or(0.0)
    }

    /// Unit visual embedding of a candidate: its outcome mode plus jitter.
    pub(crate) fn visual_embedding(&self, instance_id: &str, truth: &CandidateTruth) -> Vec<f64> {
        let ik = rng::hash_str(instance_id);
        let dim = self.params.embed_dim;
        let mode = unit(
            (0..dim)
                .map(|i| rng::normal(&[ik, truth.mode, 0x76697375, i as u64]))
                .collect(),
        );
        let own = unit(
            (0..dim)
                .map(|i| rng::normal(&[ik, truth.seed, 0x6F776E, i as u64]))
                .collect(),
        );
        unit(
            mode.iter()
                .zip(&own)
                .map(|(m, o)| m + self.params.visual_jitter * o)
                .collect(),
        )
    }

    fn store(&self, image: &Image, record: ImageRecord) {
        self.images.write().unwrap().insert(image.fingerprint(), record);
    }

    #[allow(clippy::too_many_arguments)]
    fn render(
        &self,
        instance: &EditInstance,
        truth: &CandidateTruth,
        strength: f64,
        noise_factor: f64,
        obs_key: u64,
        kind: ImageKind,
    ) -> Result<Image> {
        let meta = sim_meta(instance)?;
        let src = &instance.source;
        let (h, w) = (src.height(), src.width());
        let rect = if truth.region_hit {
            meta.edit_region
        } else {
            reflect(meta.edit_region, h, w)
        };
        let a = strength.clamp(0.0, 1.0);
        let pix_std = self.params.pixel_noise * noise_factor;
        let ik = instance.key();
        let noise_key = rng::fold(&[self.params.run_seed, ik, truth.seed, obs_key, kind as u64]);
        let texture_key = rng::fold(&[ik, truth.seed, 0x74657874]);
        let img = Image::from_fn(h, w, src.channels(), |r, c, ch| {
            let s = src.get(r, c, ch);
            let idx = ((r * w + c) * src.channels() + ch) as u64;
            let mut v = s;
            if rect.contains(r, c) {
                let target = if s < 0.5 { 0.95 } else { 0.05 };
                let tex = centered(rng::splitmix(texture_key ^ idx));
                v += a * (target - s) + 0.01 * a * tex;
            }
            if pix_std > 0.0 {
                // uniform noise with the requested std
                v += pix_std * 3f64.sqrt() * 2.0 * centered(rng::splitmix(noise_key ^ idx));
            }
            v
        })?;
        self.store(
            &img,
            ImageRecord {
                instance_id: instance.id.clone(),
                kind,
                truth: Some(*truth),
                noise_factor,
                obs_key,
            },
        );
        Ok(img)
    }
}

/// Uniform in [-0.5, 0.5) from a hashed word.
fn centered(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64) - 0.5
}

pub(crate) fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Point reflection of a rectangle through the image center.
fn reflect(r: Rect, h: usize, w: usize) -> Rect {
    Rect {
        top: h.saturating_sub(r.top + r.height),
        left: w.saturating_sub(r.left + r.width),
        height: r.height,
        width: r.width,
    }
}

pub(crate) fn sim_meta(instance: &EditInstance) -> Result<&SimMeta> {
    instance
        .sim_meta
        .as_ref()
        .ok_or_else(|| Error::Config(format!("instance {} has no simulator metadata", instance.id)))
}

/// Simulated sampler over a [`SimWorld`].
#[derive(Debug, Clone)]
pub struct SimSampler {
    world: Arc<SimWorld>,
    schedule: NoiseSchedule,
}

impl SimSampler {
    pub fn new(world: Arc<SimWorld>, steps: u32) -> Self {
        Self {
            world,
            schedule: NoiseSchedule::linear(steps),
        }
    }

    pub fn with_schedule(world: Arc<SimWorld>, schedule: NoiseSchedule) -> Self {
        Self { world, schedule }
    }

    pub fn world(&self) -> &Arc<SimWorld> {
        &self.world
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Observation-noise multiplier at remaining step `t` of a trajectory
    /// that is `steps` long.
    pub fn noise_factor(&self, t: u32, steps: u32) -> f64 {
        let p = self.world.params.noise_exponent;
        let within = (f64::from(t) / f64::from(steps.max(1))).powf(p);
        let full = self.schedule.steps();
        if steps >= full {
            return within;
        }
        let short = self.world.params.short_run_factor * (f64::from(full - steps) / f64::from(full)).powf(p);
        within.max(short)
    }

    fn handle(instance: &EditInstance, seed: u64, steps: u32, t: u32) -> LatentHandle {
        LatentHandle(format!("sim/{}/{seed:016x}/{steps}/{t}", instance.id))
    }

    fn initial_noise(&self, instance: &EditInstance, seed: u64) -> f64 {
        rng::normal(&[self.world.params.run_seed, instance.key(), seed, 0x785F54])
    }

    fn latent(&self, handle: &LatentHandle) -> Result<SimLatent> {
        self.world
            .latents
            .lock()
            .unwrap()
            .get(handle)
            .copied()
            .ok_or_else(|| Error::UnknownLatent(handle.0.clone()))
    }

    fn obs_key(steps: u32, t: u32) -> u64 {
        rng::fold(&[u64::from(steps), u64::from(t)])
    }

    fn spawn_with(
        &self,
        instance: &EditInstance,
        candidate_id: u32,
        seed: u64,
        prompt: &str,
        steps: u32,
    ) -> Result<CandidateState> {
        self.world.register_instance(instance)?;
        let handle = Self::handle(instance, seed, steps, steps);
        let x_t = self.initial_noise(instance, seed);
        self.world
            .latents
            .lock()
            .unwrap()
            .insert(handle.clone(), SimLatent { x_t, eps: None });
        Ok(CandidateState {
            candidate_id,
            seed,
            latent: handle,
            timestep: steps,
            trajectory_steps: steps,
            prompt_used: prompt.to_string(),
            nfe_spent: 0,
            score_history: Vec::new(),
        })
    }
}

impl Sampler for SimSampler {
    fn total_steps(&self) -> u32 {
        self.schedule.steps()
    }

    fn spawn(&self, instance: &EditInstance, candidate_id: u32, seed: u64, prompt: &str) -> Result<CandidateState> {
        self.spawn_with(instance, candidate_id, seed, prompt, self.schedule.steps())
    }

    fn spawn_short(
        &self,
        instance: &EditInstance,
        candidate_id: u32,
        seed: u64,
        prompt: &str,
        steps: u32,
    ) -> Result<CandidateState> {
        if steps == 0 || steps > self.schedule.steps() {
            return Err(Error::Config(format!(
                "short run length {steps} outside 1..={}",
                self.schedule.steps()
            )));
        }
        self.spawn_with(instance, candidate_id, seed, prompt, steps)
    }

    fn sample_partial(
        &self,
        instance: &EditInstance,
        mut state: CandidateState,
        to_t: u32,
    ) -> Result<(CandidateState, u64)> {
        check_order(&state, to_t)?;
        let steps = u64::from(state.timestep - to_t);
        if steps == 0 {
            return Ok((state, 0));
        }
        let truth = self.world.truth(instance, state.seed)?;
        let s_max = self.world.params.s_max;
        let sigma = self.schedule.sigma_for(to_t, state.trajectory_steps);
        let x0 = truth.q_star / s_max;
        let x_t = (1.0 - sigma) * x0 + sigma * self.initial_noise(instance, state.seed);
        let phi = self.noise_factor(to_t, state.trajectory_steps);
        let key = Self::obs_key(state.trajectory_steps, to_t);
        let estimate = (self.world.observe_truth(instance, &truth, phi, key, Channel::Region) / s_max).clamp(0.0, 1.0);
        let eps = if sigma > 0.0 { (x_t - estimate) / sigma } else { 0.0 };
        let handle = Self::handle(instance, state.seed, state.trajectory_steps, to_t);
        self.world
            .latents
            .lock()
            .unwrap()
            .insert(handle.clone(), SimLatent { x_t, eps: Some(eps) });
        state.latent = handle;
        state.timestep = to_t;
        state.nfe_spent += steps;
        Ok((state, steps))
    }

    fn preview(&self, instance: &EditInstance, state: &CandidateState) -> Result<(Image, u64)> {
        let latent = self.latent(&state.latent)?;
        let eps = latent.eps.ok_or(Error::MissingPrediction(state.candidate_id))?;
        let sigma = self.schedule.sigma_for(state.timestep, state.trajectory_steps);
        let clean = predict_clean(latent.x_t, sigma, eps);
        let truth = self.world.truth(instance, state.seed)?;
        let phi = self.noise_factor(state.timestep, state.trajectory_steps);
        let key = Self::obs_key(state.trajectory_steps, state.timestep);
        let img = self
            .world
            .render(instance, &truth, clean, phi, key, ImageKind::Preview)?;
        Ok((img, 0))
    }

    fn decode_raw(&self, instance: &EditInstance, state: &CandidateState) -> Result<Image> {
        let latent = self.latent(&state.latent)?;
        let truth = self.world.truth(instance, state.seed)?;
        let phi = self.noise_factor(state.timestep, state.trajectory_steps) * self.world.params.raw_decode_factor;
        let key = rng::fold(&[Self::obs_key(state.trajectory_steps, state.timestep), 0x726177]);
        self.world
            .render(instance, &truth, latent.x_t, phi, key, ImageKind::Raw)
    }

    fn decode(&self, instance: &EditInstance, state: &CandidateState) -> Result<Image> {
        check_denoised(state)?;
        let truth = self.world.truth(instance, state.seed)?;
        let phi = self.noise_factor(0, state.trajectory_steps);
        let key = Self::obs_key(state.trajectory_steps, 0);
        let strength = (self.world.observe_truth(instance, &truth, phi, key, Channel::Region)
            / self.world.params.s_max)
            .clamp(0.0, 1.0);
        self.world
            .render(instance, &truth, strength, phi, key, ImageKind::Final)
    }
}
