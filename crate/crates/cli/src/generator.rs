//! Seeded synthetic benchmark of simulated editing instances.

use adecot::model::{EditInstance, Image, QualityDist, Rect, RegionHint, SimMeta};
use adecot::rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Difficulty mixture and instance layout. Quality of a candidate is drawn
/// around the tier mean with `spread`, capped at `mean + ceiling_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub count: usize,
    /// Fixes the instance set independently of the run seeds.
    pub seed: u64,
    pub easy_fraction: f64,
    pub medium_fraction: f64,
    pub easy_mean: f64,
    pub medium_mean: f64,
    pub hard_mean: f64,
    pub spread: f64,
    pub ceiling_offset: f64,
    /// Distinct outcome modes per instance.
    pub modes: u32,
    pub height: usize,
    pub width: usize,
    pub region_hit_prob: f64,
    pub keep_object_fraction: f64,
    pub misaligned_fraction: f64,
    pub unavailable_fraction: f64,
    /// Instances whose captioner fails to describe the change.
    pub stale_caption_fraction: f64,
    /// Instances whose original caption matches the source poorly.
    pub low_alignment_fraction: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 2024,
            easy_fraction: 0.3,
            medium_fraction: 0.4,
            easy_mean: 8.5,
            medium_mean: 6.5,
            hard_mean: 4.5,
            spread: 1.2,
            ceiling_offset: 0.6,
            modes: 24,
            height: 32,
            width: 32,
            region_hit_prob: 0.85,
            keep_object_fraction: 0.1,
            misaligned_fraction: 0.1,
            unavailable_fraction: 0.05,
            stale_caption_fraction: 0.1,
            low_alignment_fraction: 0.1,
        }
    }
}

impl GeneratorSpec {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail every check
    pub fn validate(&self) -> CliResult<()> {
        let fractions = [
            self.easy_fraction,
            self.medium_fraction,
            self.region_hit_prob,
            self.keep_object_fraction,
            self.misaligned_fraction,
            self.unavailable_fraction,
            self.stale_caption_fraction,
            self.low_alignment_fraction,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(CliError::Invalid("generator fractions must lie in [0, 1]".into()));
        }
        if self.easy_fraction + self.medium_fraction > 1.0 {
            return Err(CliError::Invalid("easy_fraction + medium_fraction exceeds 1".into()));
        }
        if self.keep_object_fraction + self.misaligned_fraction + self.unavailable_fraction > 1.0 {
            return Err(CliError::Invalid("region hint fractions exceed 1".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(CliError::Invalid("generated images must be at least 8x8".into()));
        }
        if !(self.spread >= 0.0) {
            return Err(CliError::Invalid("spread must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Easy,
    Medium,
    Hard,
}

pub fn tier_of(spec: &GeneratorSpec, index: usize) -> Tier {
    let u = rng::uniform(&[spec.seed, index as u64, 0x74696572]);
    if u < spec.easy_fraction {
        Tier::Easy
    } else if u < spec.easy_fraction + spec.medium_fraction {
        Tier::Medium
    } else {
        Tier::Hard
    }
}

const INSTRUCTIONS: [&str; 8] = [
    "make the cup red",
    "replace the sky with a sunset",
    "add a hat to the dog",
    "remove the car on the left",
    "turn the lamp on",
    "change the sign text to OPEN",
    "make the jacket leather",
    "put snow on the roof",
];

/// Edit rectangle confined to one quadrant so that its point reflection
/// through the center lies in the opposite quadrant.
fn edit_rect(spec: &GeneratorSpec, index: usize) -> Rect {
    let key = |k: u64| rng::uniform(&[spec.seed, index as u64, 0x72656374, k]);
    let (qh, qw) = (spec.height / 2, spec.width / 2);
    let height = (qh / 2 + (key(0) * (qh / 2) as f64) as usize).clamp(2, qh - 1);
    let width = (qw / 2 + (key(1) * (qw / 2) as f64) as usize).clamp(2, qw - 1);
    let top_in = (key(2) * (qh - height) as f64) as usize;
    let left_in = (key(3) * (qw - width) as f64) as usize;
    let quadrant = (key(4) * 4.0) as usize;
    let top = if quadrant & 1 == 0 {
        top_in
    } else {
        spec.height - qh + top_in
    };
    let left = if quadrant & 2 == 0 {
        left_in
    } else {
        spec.width - qw + left_in
    };
    Rect {
        top,
        left,
        height,
        width,
    }
}

fn source_image(spec: &GeneratorSpec, index: usize) -> Image {
    let k = |j: u64| rng::uniform(&[spec.seed, index as u64, 0x737263, j]);
    let (a, b, phase) = (0.05 + 0.2 * k(0), 0.05 + 0.2 * k(1), k(2));
    Image::from_fn(spec.height, spec.width, 3, |r, c, ch| {
        let x = a * r as f64 + b * c as f64 + phase + 0.13 * ch as f64;
        0.3 + 0.4 * (x - x.floor())
    })
    .expect("generated pixels lie in [0, 1]")
}

/// The `index`-th instance of the benchmark.
pub fn instance(spec: &GeneratorSpec, index: usize) -> EditInstance {
    let tier = tier_of(spec, index);
    let mean = match tier {
        Tier::Easy => spec.easy_mean,
        Tier::Medium => spec.medium_mean,
        Tier::Hard => spec.hard_mean,
    };
    let u = |k: u64| rng::uniform(&[spec.seed, index as u64, 0x6D657461, k]);
    let region = edit_rect(spec, index);
    let hint_draw = u(0);
    let region_hint = if hint_draw < spec.unavailable_fraction {
        RegionHint::Unavailable
    } else if hint_draw < spec.unavailable_fraction + spec.keep_object_fraction {
        RegionHint::KeepObject {
            keep: Rect {
                top: 0,
                left: 0,
                height: spec.height,
                width: spec.width / 2,
            },
        }
    } else if hint_draw < spec.unavailable_fraction + spec.keep_object_fraction + spec.misaligned_fraction {
        RegionHint::Misaligned { dy: 3, dx: -3 }
    } else {
        RegionHint::EditObject
    };
    let source_alignment = if u(1) < spec.low_alignment_fraction {
        0.15 + 0.1 * u(2)
    } else {
        0.28 + 0.06 * u(2)
    };
    let instruction = INSTRUCTIONS[(u(3) * INSTRUCTIONS.len() as f64) as usize % INSTRUCTIONS.len()];
    EditInstance::new(format!("inst-{index:04}"), source_image(spec, index), instruction)
        .expect("instructions are non-empty")
        .with_sim_meta(SimMeta {
            quality: QualityDist::Normal { mean, std: spec.spread },
            ceiling: Some(mean + spec.ceiling_offset),
            modes: Some(spec.modes),
            edit_region: region,
            region_hit_prob: spec.region_hit_prob,
            region_hint,
            source_alignment,
            caption_describes_edit: u(4) >= spec.stale_caption_fraction,
        })
}

pub fn generate(spec: &GeneratorSpec) -> Vec<EditInstance> {
    (0..spec.count).map(|i| instance(spec, i)).collect()
}
