//! Scoring stack: general judge, edited-region correctness, caption
//! consistency, visual deduplication and instance-specific questions.

pub mod caption;
pub mod providers;
pub mod region;
pub mod remote;
pub mod sim;
pub mod similarity;
pub mod specific;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use caption::{caption_score, target_caption, CaptionPair};
pub use providers::{
    cosine, AnswerJudge, Captioner, Embedder, GeneralScore, GeneralScorer, Grounder, QuestionAuthor, RegionLocator,
    RegionObjects,
};
pub use region::{change_map, refine_mask, region_score, ChangeMap, MaskOrigin, RegionMask};
pub use remote::{RemoteEmbedder, RemoteJudge};
pub use sim::{EmbeddingSpace, SimEmbedder, SimJudge};
pub use similarity::similarity_filter;
pub use specific::{answer_questions, instance_questions, QuestionSet};

use crate::error::Result;
use crate::http::HttpPolicy;
use crate::model::{EditInstance, Image, ScoreBreakdown, SearchConfig};
use crate::sampler::SimWorld;

/// `s_gen + lambda_reg * s_reg + lambda_cap * s_cap`, absent channels
/// contributing zero. Never clamped.
pub fn unified_score(s_gen: f64, s_reg: Option<f64>, s_cap: Option<f64>, lambda_reg: f64, lambda_cap: f64) -> f64 {
    s_gen + lambda_reg * s_reg.unwrap_or(0.0) + lambda_cap * s_cap.unwrap_or(0.0)
}

/// Per-instance verification artifacts, computed once and shared by every
/// candidate of the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceArtifacts {
    pub mask: Option<RegionMask>,
    pub caption: CaptionPair,
    pub questions: QuestionSet,
}

/// The full set of providers.
#[derive(Clone)]
pub struct Verifiers {
    pub general: Arc<dyn GeneralScorer>,
    pub locator: Arc<dyn RegionLocator>,
    pub grounder: Arc<dyn Grounder>,
    pub captioner: Arc<dyn Captioner>,
    pub questioner: Arc<dyn QuestionAuthor>,
    pub judge: Arc<dyn AnswerJudge>,
    /// Joint image-text embedder used for caption consistency.
    pub clip: Arc<dyn Embedder>,
    /// Appearance embedder used for deduplication and tie-breaking.
    pub visual: Arc<dyn Embedder>,
}

impl std::fmt::Debug for Verifiers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Verifiers").finish_non_exhaustive()
    }
}

impl Verifiers {
    pub fn simulated(world: Arc<SimWorld>) -> Self {
        let judge = Arc::new(SimJudge::new(world.clone()));
        Self {
            general: judge.clone(),
            locator: judge.clone(),
            grounder: judge.clone(),
            captioner: judge.clone(),
            questioner: judge.clone(),
            judge,
            clip: Arc::new(SimEmbedder::new(world.clone(), EmbeddingSpace::Clip)),
            visual: Arc::new(SimEmbedder::new(world, EmbeddingSpace::Visual)),
        }
    }

    /// Judge and grounding at `endpoint`; embeddings at `clip_endpoint` and
    /// `visual_endpoint`.
    pub fn remote(endpoint: &str, clip_endpoint: &str, visual_endpoint: &str, policy: HttpPolicy) -> Result<Self> {
        let judge = Arc::new(RemoteJudge::new(endpoint, policy)?);
        Ok(Self {
            general: judge.clone(),
            locator: judge.clone(),
            grounder: judge.clone(),
            captioner: judge.clone(),
            questioner: judge.clone(),
            judge,
            clip: Arc::new(RemoteEmbedder::new(clip_endpoint, policy)?),
            visual: Arc::new(RemoteEmbedder::new(visual_endpoint, policy)?),
        })
    }

    /// General score of `image`. Returns the score and the queries made.
    pub fn general_score(&self, instance: &EditInstance, image: &Image) -> (Result<f64>, u32) {
        let (reply, queries) = providers::retry_malformed(|| {
            self.general
                .general_score(&instance.source, image, &instance.instruction)
        });
        (reply.map(|g| g.value()), queries)
    }

    /// Expected edit mask from the region query and grounding. Returns the
    /// mask (absent when neither object can be determined or grounding
    /// fails) and the queries made.
    pub fn region_mask(&self, instance: &EditInstance) -> (Option<RegionMask>, u32) {
        let (reply, queries) =
            providers::retry_malformed(|| self.locator.locate(&instance.source, &instance.instruction));
        let Ok(objects) = reply else {
            return (None, queries);
        };
        let (h, w) = (instance.source.height(), instance.source.width());
        let non_empty = |o: &Option<Vec<String>>| o.as_ref().filter(|v| !v.is_empty()).cloned();
        let (names, origin) = if let Some(edit) = non_empty(&objects.edit_object) {
            (edit, MaskOrigin::EditObject)
        } else if let Some(keep) = non_empty(&objects.keep_object) {
            (keep, MaskOrigin::InvertedKeepObject)
        } else {
            return (None, queries);
        };
        let mask = self
            .grounder
            .ground(&instance.source, &names)
            .and_then(|bits| RegionMask::new(h, w, bits, origin))
            .ok()
            .map(|m| {
                if origin == MaskOrigin::InvertedKeepObject {
                    m.inverted()
                } else {
                    m
                }
            });
        (mask, queries)
    }

    /// Mask and caption pair needed for preview scoring.
    pub fn prepare_preview(&self, instance: &EditInstance) -> (InstanceArtifacts, u32) {
        let (mask, q1) = self.region_mask(instance);
        let (caption, q2) = target_caption(instance, self.captioner.as_ref(), self.clip.as_ref());
        (
            InstanceArtifacts {
                mask,
                caption,
                questions: QuestionSet::default(),
            },
            q1 + q2,
        )
    }

    /// Ask for the instance-specific questions once.
    pub fn prepare_questions(&self, instance: &EditInstance, artifacts: &mut InstanceArtifacts) -> u32 {
        let (qs, queries) = instance_questions(instance, self.questioner.as_ref());
        artifacts.questions = qs;
        queries
    }

    /// Region score of `image` under the artifacts' mask, if any.
    pub fn region(
        &self,
        instance: &EditInstance,
        artifacts: &InstanceArtifacts,
        image: &Image,
        window: usize,
    ) -> Option<f64> {
        let mask = artifacts
            .mask
            .as_ref()
            .filter(|m| m.origin != MaskOrigin::Unavailable)?;
        let delta = change_map(image, &instance.source, window).ok()?;
        region_score(&delta, mask).ok()
    }

    /// General, region and caption channels combined into the unified score.
    pub fn unified(
        &self,
        instance: &EditInstance,
        artifacts: &InstanceArtifacts,
        image: &Image,
        config: &SearchConfig,
    ) -> (Result<ScoreBreakdown>, u32) {
        let (s_gen, queries) = self.general_score(instance, image);
        (
            s_gen.map(|g| self.with_general(instance, artifacts, image, g, config)),
            queries,
        )
    }

    /// Unified score around an already known general score.
    pub fn with_general(
        &self,
        instance: &EditInstance,
        artifacts: &InstanceArtifacts,
        image: &Image,
        s_gen: f64,
        config: &SearchConfig,
    ) -> ScoreBreakdown {
        let s_reg = self.region(instance, artifacts, image, config.region_window);
        let s_cap = caption_score(image, &artifacts.caption, self.clip.as_ref());
        ScoreBreakdown::new(s_gen, s_reg, s_cap, None, config.lambda_reg, config.lambda_cap)
    }

    /// Count of "yes" answers for `image`.
    pub fn specific(
        &self,
        instance: &EditInstance,
        artifacts: &InstanceArtifacts,
        image: &Image,
    ) -> (Option<u32>, u32) {
        answer_questions(instance, image, &artifacts.questions, self.judge.as_ref())
    }

    pub fn visual_embedding(&self, image: &Image) -> Result<Vec<f64>> {
        self.visual.embed_image(image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unified_examples() {
        assert!((unified_score(6.0, Some(0.5), Some(0.3), 1.0, 3.0) - 7.4).abs() < 1e-12);
        assert_eq!(unified_score(6.0, None, None, 1.0, 3.0), 6.0);
        let s = unified_score(10.0, Some(1.0), Some(0.33), 1.0, 3.0);
        assert!((s - 11.99).abs() < 1e-12);
        assert!(s > 10.0);
    }

    proptest! {
        #[test]
        fn doubling_lambda_cap_doubles_caption_term(
            g in 0.0f64..10.0, r in 0.0f64..1.0, c in -1.0f64..1.0, lr in 0.0f64..5.0, lc in 0.0f64..5.0,
        ) {
            let base = unified_score(g, Some(r), None, lr, lc);
            let one = unified_score(g, Some(r), Some(c), lr, lc) - base;
            let two = unified_score(g, Some(r), Some(c), lr, 2.0 * lc) - base;
            prop_assert!((two - 2.0 * one).abs() <= 1e-12 * (1.0 + g.abs() + lr));
        }
    }
}
