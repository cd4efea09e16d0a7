//! In-process providers backed by a [`SimWorld`].
//!
//! Every image handed to these providers must have been produced by the
//! simulator (or be a registered source); provenance is looked up by image
//! fingerprint.

use std::sync::Arc;

use super::providers::{
    AnswerJudge, Captioner, Captions, Embedder, GeneralScore, GeneralScorer, Grounder, QuestionAuthor, RegionLocator,
    RegionObjects,
};
use crate::error::{Error, Result};
use crate::model::{EditInstance, Image, Rect, RegionHint};
use crate::rng;
use crate::sampler::{sim_meta, unit, Channel, ImageKind, ImageRecord, SimWorld, TextRole};

pub const EDIT_OBJECT: &str = "edited object";
pub const KEEP_OBJECT: &str = "kept object";
/// Quality threshold of the simulated rubric when the instance has no ceiling.
pub const DEFAULT_RUBRIC_THRESHOLD: f64 = 8.0;
const RUBRIC_TOLERANCE: f64 = 1e-9;

/// Simulated multimodal judge, grounder and captioner.
#[derive(Debug, Clone)]
pub struct SimJudge {
    world: Arc<SimWorld>,
}

impl SimJudge {
    pub fn new(world: Arc<SimWorld>) -> Self {
        Self { world }
    }

    fn source_instance(&self, source: &Image) -> Result<Arc<EditInstance>> {
        self.world
            .instance_for_source(source)
            .ok_or_else(|| Error::Provider("source image is not registered with the simulator".into()))
    }

    fn record(&self, image: &Image) -> Result<ImageRecord> {
        self.world
            .lookup(image)
            .ok_or_else(|| Error::Provider("image was not produced by the simulator".into()))
    }

    /// Observed quality of `image` through the general channel, on `[0, S_max]`.
    fn quality(&self, image: &Image) -> Result<f64> {
        let rec = self.record(image)?;
        let q = self.world.observe(&rec, Channel::General).unwrap_or(0.0);
        Ok(q.clamp(0.0, self.world.params().s_max))
    }
}

impl GeneralScorer for SimJudge {
    fn general_score(&self, _source: &Image, edited: &Image, _instruction: &str) -> Result<GeneralScore> {
        let q = self.quality(edited)?;
        Ok(GeneralScore { sc: q, pq: q })
    }
}

impl RegionLocator for SimJudge {
    fn locate(&self, source: &Image, _instruction: &str) -> Result<RegionObjects> {
        let inst = self.source_instance(source)?;
        let objects = match sim_meta(&inst)?.region_hint {
            RegionHint::EditObject | RegionHint::Misaligned { .. } => RegionObjects {
                edit_object: Some(vec![EDIT_OBJECT.into()]),
                keep_object: None,
            },
            RegionHint::KeepObject { .. } => RegionObjects {
                edit_object: Some(Vec::new()),
                keep_object: Some(vec![KEEP_OBJECT.into()]),
            },
            RegionHint::Unavailable => RegionObjects::default(),
        };
        Ok(objects)
    }
}

fn shifted(r: Rect, dy: i64, dx: i64, h: usize, w: usize) -> Rect {
    let top = (r.top as i64 + dy).clamp(0, h.saturating_sub(r.height) as i64) as usize;
    let left = (r.left as i64 + dx).clamp(0, w.saturating_sub(r.width) as i64) as usize;
    Rect { top, left, ..r }
}

impl Grounder for SimJudge {
    fn ground(&self, source: &Image, objects: &[String]) -> Result<Vec<bool>> {
        let inst = self.source_instance(source)?;
        let meta = sim_meta(&inst)?;
        let (h, w) = (source.height(), source.width());
        let mut rects = Vec::new();
        for o in objects {
            match (o.as_str(), meta.region_hint) {
                (EDIT_OBJECT, RegionHint::Misaligned { dy, dx }) => rects.push(shifted(meta.edit_region, dy, dx, h, w)),
                (EDIT_OBJECT, _) => rects.push(meta.edit_region),
                (KEEP_OBJECT, RegionHint::KeepObject { keep }) => rects.push(keep),
                _ => {}
            }
        }
        Ok((0..h * w)
            .map(|i| rects.iter().any(|r| r.contains(i / w, i % w)))
            .collect())
    }
}

impl Captioner for SimJudge {
    fn captions(&self, source: &Image, instruction: &str) -> Result<Captions> {
        let inst = self.source_instance(source)?;
        let original = format!("a photo of scene {}", inst.id);
        let edited = if sim_meta(&inst)?.caption_describes_edit {
            format!("{original} after the edit: {instruction}")
        } else {
            original.clone()
        };
        self.world.register_text(&original, TextRole::Original(inst.id.clone()));
        self.world.register_text(&edited, TextRole::Edited(inst.id.clone()));
        Ok(Captions {
            original_caption: original,
            edited_caption: edited,
        })
    }
}

impl QuestionAuthor for SimJudge {
    fn questions(&self, source: &Image, instruction: &str) -> Result<Vec<String>> {
        self.source_instance(source)?;
        Ok(vec![
            format!("Is the change for \"{instruction}\" located on the intended object?"),
            format!("Is \"{instruction}\" carried out completely?"),
            "Is the edited object rendered without visible artifacts?".into(),
            "Is the content outside the edited object preserved?".into(),
            "Does the edited image look natural?".into(),
        ])
    }
}

impl AnswerJudge for SimJudge {
    fn answers(&self, source: &Image, edited: &Image, _instruction: &str, _questions: &[String]) -> Result<Vec<bool>> {
        let inst = self.source_instance(source)?;
        let rec = self.record(edited)?;
        let Some(truth) = rec.truth else {
            return Ok(vec![false; 5]);
        };
        let q = self.quality(edited)?;
        let theta = sim_meta(&inst)?.ceiling.unwrap_or(DEFAULT_RUBRIC_THRESHOLD);
        let at_least = |x: f64| q >= x - RUBRIC_TOLERANCE;
        Ok(vec![
            truth.region_hit,
            at_least(theta),
            at_least(theta - 1.0),
            at_least(theta - 3.0),
            at_least(theta - 4.0),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSpace {
    /// Joint image-text space.
    Clip,
    /// Image-only appearance space.
    Visual,
}

#[derive(Debug, Clone)]
pub struct SimEmbedder {
    world: Arc<SimWorld>,
    space: EmbeddingSpace,
}

impl SimEmbedder {
    pub fn new(world: Arc<SimWorld>, space: EmbeddingSpace) -> Self {
        Self { world, space }
    }

    fn dim(&self) -> usize {
        self.world.params().embed_dim.max(4)
    }

    fn axis(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        v[i] = 1.0;
        v
    }

    /// Random unit vector supported on dimensions `from..`.
    fn residual(&self, from: usize, key: &[u64]) -> Vec<f64> {
        let k = rng::fold(key);
        unit(
            (0..self.dim())
                .map(|i| if i < from { 0.0 } else { rng::normal(&[k, i as u64]) })
                .collect(),
        )
    }

    fn mix(&self, along: Vec<f64>, a: f64, rest: Vec<f64>) -> Vec<f64> {
        let a = a.clamp(-1.0, 1.0);
        let b = (1.0 - a * a).max(0.0).sqrt();
        along.iter().zip(&rest).map(|(x, y)| a * x + b * y).collect()
    }
}

impl Embedder for SimEmbedder {
    fn embed_image(&self, image: &Image) -> Result<Vec<f64>> {
        let rec = self
            .world
            .lookup(image)
            .ok_or_else(|| Error::Provider("image was not produced by the simulator".into()))?;
        let ik = rng::hash_str(&rec.instance_id);
        match (self.space, rec.truth) {
            (EmbeddingSpace::Visual, Some(truth)) => Ok(self.world.visual_embedding(&rec.instance_id, &truth)),
            (EmbeddingSpace::Visual, None) => Ok(self.residual(0, &[ik, 0x737263])),
            (EmbeddingSpace::Clip, Some(truth)) => {
                let obs = self.world.observe(&rec, Channel::Caption).unwrap_or(0.0);
                let a = self.world.params().caption_slope * obs;
                let rest = self.residual(3, &[ik, truth.seed, rec.obs_key, rec.kind as u64]);
                Ok(self.mix(self.axis(0), a, rest))
            }
            (EmbeddingSpace::Clip, None) => {
                debug_assert_eq!(rec.kind, ImageKind::Source);
                let inst = self
                    .world
                    .instance(&rec.instance_id)
                    .ok_or_else(|| Error::Provider("unknown instance".into()))?;
                let alpha = sim_meta(&inst)?.source_alignment;
                Ok(self.mix(self.axis(1), alpha, self.axis(2)))
            }
        }
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        if self.space == EmbeddingSpace::Visual {
            return Err(Error::Provider("visual embedder has no text encoder".into()));
        }
        Ok(match self.world.text_role(text) {
            Some(TextRole::Edited(_)) => self.axis(0),
            Some(TextRole::Original(_)) => self.axis(1),
            None => self.residual(3, &[rng::hash_str(text), 0x747874]),
        })
    }
}
