//! Shared domain types: images, edit instances, candidate trajectories,
//! score breakdowns, search hyperparameters and the NFE ledger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major image with values in `[0, 1]`, laid out as `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} values for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Build an image from a per-sample function; outputs are clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Content fingerprint. Stable within a build; used by in-process
    /// providers to recognise images they were handed.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::rng::fold(&[self.height as u64, self.width as u64, self.channels as u64]);
        for v in &self.data {
            h = crate::rng::splitmix(h ^ v.to_bits());
        }
        h
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.top && row < self.top + self.height && col >= self.left && col < self.left + self.width
    }
}

/// Per-candidate hidden quality distribution used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QualityDist {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl QualityDist {
    pub fn mean(&self) -> f64 {
        match *self {
            QualityDist::Normal { mean, .. } => mean,
            QualityDist::Uniform { low, high } => 0.5 * (low + high),
        }
    }
}

/// What the simulated region locator reports for an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionHint {
    /// The edit object is named and grounds onto the true edit region.
    EditObject,
    /// The edit object grounds onto a region displaced from the true one.
    Misaligned { dy: i64, dx: i64 },
    /// Only a keep object is named; the mask is its complement.
    KeepObject { keep: Rect },
    /// Neither object can be determined.
    Unavailable,
}

/// Ground truth carried by instances that target the simulated backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub quality: QualityDist,
    /// Saturation level of achievable quality; draws above it are capped.
    pub ceiling: Option<f64>,
    /// Number of distinct outcome modes; candidates falling in the same mode
    /// produce near-identical edits of equal quality. `None` makes every
    /// candidate its own mode.
    pub modes: Option<u32>,
    pub edit_region: Rect,
    /// Probability that an outcome mode places the edit in the right region.
    pub region_hit_prob: f64,
    pub region_hint: RegionHint,
    /// Image-text similarity of the original caption to the source image.
    pub source_alignment: f64,
    /// Whether the caption provider manages to describe a changed scene.
    pub caption_describes_edit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditInstance {
    pub id: String,
    pub source: Image,
    pub instruction: String,
    #[serde(default)]
    pub rewritten_instructions: Option<Vec<String>>,
    #[serde(default)]
    pub sim_meta: Option<SimMeta>,
}

impl EditInstance {
    pub fn new(id: impl Into<String>, source: Image, instruction: impl Into<String>) -> Result<Self> {
        let instruction = instruction.into();
        if instruction.trim().is_empty() {
            return Err(Error::Config("edit instruction must be non-empty".into()));
        }
        Ok(Self {
            id: id.into(),
            source,
            instruction,
            rewritten_instructions: None,
            sim_meta: None,
        })
    }

    pub fn with_sim_meta(mut self, meta: SimMeta) -> Self {
        self.sim_meta = Some(meta);
        self
    }

    /// Prompt used by the `index`-th candidate. Without rewrites this is the
    /// instruction itself.
    pub fn prompt_for(&self, index: u32) -> &str {
        match &self.rewritten_instructions {
            Some(list) if !list.is_empty() => &list[index as usize % list.len()],
            _ => &self.instruction,
        }
    }

    pub fn key(&self) -> u64 {
        crate::rng::hash_str(&self.id)
    }
}

/// Opaque reference to a latent held by a sampler backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentHandle(pub String);

/// Score channels of one evaluation plus their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub s_gen: f64,
    pub s_reg: Option<f64>,
    pub s_cap: Option<f64>,
    pub s_spec: Option<u32>,
    pub unified: f64,
}

impl ScoreBreakdown {
    pub fn new(
        s_gen: f64,
        s_reg: Option<f64>,
        s_cap: Option<f64>,
        s_spec: Option<u32>,
        lambda_reg: f64,
        lambda_cap: f64,
    ) -> Self {
        let mut s = Self {
            s_gen,
            s_reg,
            s_cap,
            s_spec,
            unified: 0.0,
        };
        s.unified = s.recompute(lambda_reg, lambda_cap);
        s
    }

    /// General score only, as used by the baselines.
    pub fn general(s_gen: f64) -> Self {
        Self {
            s_gen,
            s_reg: None,
            s_cap: None,
            s_spec: None,
            unified: s_gen,
        }
    }

    pub fn recompute(&self, lambda_reg: f64, lambda_cap: f64) -> f64 {
        crate::verifiers::unified_score(self.s_gen, self.s_reg, self.s_cap, lambda_reg, lambda_cap)
            + self.s_spec.map_or(0.0, f64::from)
    }

    pub fn with_spec(mut self, s_spec: Option<u32>, lambda_reg: f64, lambda_cap: f64) -> Self {
        self.s_spec = s_spec;
        self.unified = self.recompute(lambda_reg, lambda_cap);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateState {
    pub candidate_id: u32,
    pub seed: u64,
    pub latent: LatentHandle,
    /// Remaining denoising steps; `trajectory_steps` at spawn, 0 when done.
    pub timestep: u32,
    /// Length of this candidate's schedule (`T`, or `t_e` for short preview runs).
    pub trajectory_steps: u32,
    pub prompt_used: String,
    pub nfe_spent: u64,
    pub score_history: Vec<(u32, ScoreBreakdown)>,
}

fn default_n() -> u32 {
    32
}
fn default_n_min() -> u32 {
    1
}
fn default_gamma() -> f64 {
    0.15
}
fn default_s_max() -> f64 {
    10.0
}
fn default_steps() -> u32 {
    28
}
fn default_t_early() -> u32 {
    8
}
fn default_t_late() -> u32 {
    16
}
fn default_s_reject() -> f64 {
    5.0
}
fn default_tau_sim() -> f64 {
    0.98
}
fn default_delta() -> f64 {
    0.5
}
fn default_n_high() -> u32 {
    4
}
fn default_s_high() -> u32 {
    5
}
fn default_lambda_reg() -> f64 {
    1.0
}
fn default_lambda_cap() -> f64 {
    3.0
}
fn default_window() -> usize {
    8
}
fn default_pad() -> usize {
    2
}

/// Search hyperparameters. `t_early` and `t_late` count completed steps, so the
/// three ADE-CoT phases cost `t_early`, `t_late - t_early` and `steps - t_late`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default = "default_n_min")]
    pub n_min: u32,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default = "default_steps")]
    pub steps: u32,
    #[serde(default = "default_t_early")]
    pub t_early: u32,
    #[serde(default = "default_t_late")]
    pub t_late: u32,
    #[serde(default = "default_s_reject")]
    pub s_reject: f64,
    #[serde(default = "default_tau_sim")]
    pub tau_sim: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_n_high")]
    pub n_high: u32,
    #[serde(default = "default_s_high")]
    pub s_high: u32,
    #[serde(default = "default_lambda_reg")]
    pub lambda_reg: f64,
    #[serde(default = "default_lambda_cap")]
    pub lambda_cap: f64,
    /// Side of the pooling window applied to the change map.
    #[serde(default = "default_window")]
    pub region_window: usize,
    /// Pixels added per mask-refinement iteration.
    #[serde(default = "default_pad")]
    pub mask_pad: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            n_min: default_n_min(),
            gamma: default_gamma(),
            s_max: default_s_max(),
            steps: default_steps(),
            t_early: default_t_early(),
            t_late: default_t_late(),
            s_reject: default_s_reject(),
            tau_sim: default_tau_sim(),
            delta: default_delta(),
            n_high: default_n_high(),
            s_high: default_s_high(),
            lambda_reg: default_lambda_reg(),
            lambda_cap: default_lambda_cap(),
            region_window: default_window(),
            mask_pad: default_pad(),
        }
    }
}

impl SearchConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail every check
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.n_min == 0 {
            return fail("n and n_min must be positive".into());
        }
        if self.n_min > self.n {
            return fail(format!("n_min ({}) exceeds n ({})", self.n_min, self.n));
        }
        if !(self.gamma >= 0.0) {
            return fail(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        if !(self.s_max > 0.0) {
            return fail(format!("s_max must be positive, got {}", self.s_max));
        }
        if !(0 < self.t_early && self.t_early < self.t_late && self.t_late < self.steps) {
            return fail(format!(
                "need 0 < t_early < t_late < steps, got {} / {} / {}",
                self.t_early, self.t_late, self.steps
            ));
        }
        if !(0.0..=1.0).contains(&self.tau_sim) {
            return fail(format!("tau_sim must lie in [0, 1], got {}", self.tau_sim));
        }
        if !(self.delta >= 0.0) {
            return fail(format!("delta must be nonnegative, got {}", self.delta));
        }
        if self.n_high == 0 || self.s_high == 0 {
            return fail("n_high and s_high must be positive".into());
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_cap >= 0.0) {
            return fail("score weights must be nonnegative".into());
        }
        if self.region_window == 0 || self.mask_pad == 0 {
            return fail("region_window and mask_pad must be positive".into());
        }
        Ok(())
    }

    /// Remaining-steps timestep at the early checkpoint.
    pub fn early_timestep(&self) -> u32 {
        self.steps - self.t_early
    }

    /// Remaining-steps timestep at the late checkpoint.
    pub fn late_timestep(&self) -> u32 {
        self.steps - self.t_late
    }
}

/// Ledger phase tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Full T-step generation (Best-of-N).
    Full,
    /// The difficulty probe of adaptive budgeting.
    Probe,
    /// Start of trajectory to the early checkpoint.
    Early,
    /// Early checkpoint to the late checkpoint.
    Late,
    /// Late checkpoint to the clean sample.
    Final,
    /// Early checkpoint straight to the clean sample (intermediate-state pruning).
    Resume,
    /// Short stand-alone run used as a preview (additional-steps pruning).
    PreviewRun,
    /// Extra evaluation charged by backends that cannot reuse a prediction.
    PreviewExtra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub candidate_id: u32,
    pub phase: Phase,
    pub steps: u64,
}

/// Append-only record of denoising steps charged during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NfeLedger {
    entries: Vec<LedgerEntry>,
    total: u64,
}

impl NfeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, candidate_id: u32, phase: Phase, steps: u64) {
        self.entries.push(LedgerEntry {
            candidate_id,
            phase,
            steps,
        });
        self.total += steps;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn candidate_total(&self, candidate_id: u32) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.candidate_id == candidate_id)
            .map(|e| e.steps)
            .sum()
    }

    pub fn phase_total(&self, phase: Phase) -> u64 {
        self.entries.iter().filter(|e| e.phase == phase).map(|e| e.steps).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_bad_length_and_range() {
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(0, 1, 1, vec![]).is_err());
        let img = Image::new(1, 2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(img.get(0, 1, 0), 0.75);
    }

    #[test]
    fn instance_requires_instruction() {
        let img = Image::filled(2, 2, 3, 0.5).unwrap();
        assert!(EditInstance::new("a", img.clone(), "  ").is_err());
        assert!(EditInstance::new("a", img, "make it red").is_ok());
    }

    #[test]
    fn ledger_single_charge() {
        let mut ledger = NfeLedger::new();
        ledger.charge(0, Phase::Full, 28);
        assert_eq!(ledger.total(), 28);
        assert_eq!(ledger.entries().len(), 1);
    }

    #[test]
    fn ledger_zero_charge_appends() {
        let mut ledger = NfeLedger::new();
        ledger.charge(0, Phase::Full, 28);
        ledger.charge(0, Phase::PreviewExtra, 0);
        assert_eq!(ledger.total(), 28);
        assert_eq!(ledger.entries().len(), 2);
    }

    #[test]
    fn ledger_phases_sum_to_full_trajectory() {
        // Replaying a 28-step trajectory as 8 + 20 charges.
        let mut ledger = NfeLedger::new();
        let mut remaining = 28u32;
        for chunk in [8u32, 20] {
            ledger.charge(3, Phase::Early, u64::from(chunk));
            remaining -= chunk;
        }
        assert_eq!(remaining, 0);
        assert_eq!(ledger.total(), 28);
        assert_eq!(ledger.candidate_total(3), 28);
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SearchConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.early_timestep(), 20);
        assert_eq!(cfg.late_timestep(), 12);
    }

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = SearchConfig::default();
        assert_eq!((c.steps, c.t_early, c.t_late), (28, 8, 16));
        assert_eq!((c.n_min, c.n_high), (1, 4));
        assert_eq!((c.gamma, c.s_max), (0.15, 10.0));
        assert_eq!((c.lambda_reg, c.lambda_cap), (1.0, 3.0));
        assert_eq!((c.s_reject, c.tau_sim), (5.0, 0.98));
    }

    #[test]
    fn config_rejects_bad_checkpoints() {
        let cfg = SearchConfig {
            t_late: 8,
            ..SearchConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SearchConfig {
            n_min: 40,
            ..SearchConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn breakdown_recompute_is_bit_exact() {
        let s = ScoreBreakdown::new(6.3, Some(0.41), Some(0.29), Some(4), 1.0, 3.0);
        assert_eq!(s.unified.to_bits(), s.recompute(1.0, 3.0).to_bits());
        let t = ScoreBreakdown::new(6.3, Some(0.41), Some(0.29), None, 1.0, 3.0).with_spec(Some(4), 1.0, 3.0);
        assert_eq!(t.unified.to_bits(), t.recompute(1.0, 3.0).to_bits());
    }
}
