//! Instruction-caption consistency with reliability gating.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::providers::{cosine, retry_malformed, Captioner, Embedder};
use crate::model::{EditInstance, Image};

/// Minimum image-text similarity between the source and its caption.
pub const SOURCE_ALIGNMENT_MIN: f64 = 0.27;
/// Captions at least this similar to each other describe no visible change.
pub const DIVERGENCE_MAX: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub original_caption: String,
    pub edited_caption: String,
    pub source_alignment: Option<f64>,
    /// Textual similarity between the two captions.
    pub caption_divergence: Option<f64>,
    pub reliable: bool,
}

impl CaptionPair {
    pub fn unavailable() -> Self {
        Self {
            original_caption: String::new(),
            edited_caption: String::new(),
            source_alignment: None,
            caption_divergence: None,
            reliable: false,
        }
    }
}

pub fn is_reliable(source_alignment: f64, caption_divergence: f64) -> bool {
    source_alignment >= SOURCE_ALIGNMENT_MIN && caption_divergence < DIVERGENCE_MAX
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token-set Jaccard similarity of lowercased texts. Two empty texts are
/// identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// Ask for the original and target captions and decide whether they are
/// trustworthy. Returns the pair and the number of queries made.
pub fn target_caption(
    instance: &EditInstance,
    provider: &dyn Captioner,
    embedder: &dyn Embedder,
) -> (CaptionPair, u32) {
    let (reply, queries) = retry_malformed(|| provider.captions(&instance.source, &instance.instruction));
    let Ok(captions) = reply else {
        return (CaptionPair::unavailable(), queries);
    };
    let alignment = embedder.embed_image(&instance.source).and_then(|img| {
        embedder
            .embed_text(&captions.original_caption)
            .map(|txt| cosine(&img, &txt))
    });
    let mut pair = CaptionPair {
        original_caption: captions.original_caption,
        edited_caption: captions.edited_caption,
        source_alignment: None,
        caption_divergence: None,
        reliable: false,
    };
    if let Ok(alignment) = alignment {
        let divergence = jaccard(&pair.original_caption, &pair.edited_caption);
        pair.source_alignment = Some(alignment);
        pair.caption_divergence = Some(divergence);
        pair.reliable = is_reliable(alignment, divergence);
    }
    (pair, queries)
}

/// Image-caption similarity, or `None` when the caption is unreliable or
/// the embedder fails.
pub fn caption_score(image: &Image, caption: &CaptionPair, embedder: &dyn Embedder) -> Option<f64> {
    if !caption.reliable {
        return None;
    }
    let img = embedder.embed_image(image).ok()?;
    let txt = embedder.embed_text(&caption.edited_caption).ok()?;
    Some(cosine(&img, &txt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::{Error, Result};

    #[test]
    fn reliability_gates() {
        assert!(!is_reliable(0.20, 0.5));
        assert!(!is_reliable(0.30, 0.95));
        assert!(is_reliable(0.30, 0.50));
        assert!(is_reliable(0.27, 0.0));
        assert!(!is_reliable(0.5, 0.9));
    }

    #[test]
    fn jaccard_basics() {
        assert_eq!(jaccard("A red cup", "a RED cup"), 1.0);
        assert_eq!(jaccard("a b", "c d"), 0.0);
        assert!((jaccard("a b c", "a b d") - 0.5).abs() < 1e-15);
        assert_eq!(jaccard("", ""), 1.0);
    }

    struct Fixed(Vec<f64>);

    impl Embedder for Fixed {
        fn embed_image(&self, _: &Image) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
        fn embed_text(&self, _: &str) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    struct Broken;

    impl Embedder for Broken {
        fn embed_image(&self, _: &Image) -> Result<Vec<f64>> {
            Err(Error::Provider("down".into()))
        }
        fn embed_text(&self, _: &str) -> Result<Vec<f64>> {
            Err(Error::Provider("down".into()))
        }
    }

    fn pair(reliable: bool) -> CaptionPair {
        CaptionPair {
            original_caption: "a cup".into(),
            edited_caption: "a red cup".into(),
            source_alignment: Some(0.3),
            caption_divergence: Some(0.5),
            reliable,
        }
    }

    #[test]
    fn unreliable_caption_has_no_score() {
        let img = Image::filled(2, 2, 3, 0.5).unwrap();
        assert_eq!(caption_score(&img, &pair(false), &Fixed(vec![1.0, 0.0])), None);
    }

    #[test]
    fn identical_vectors_score_one() {
        let img = Image::filled(2, 2, 3, 0.5).unwrap();
        let s = caption_score(&img, &pair(true), &Fixed(vec![0.3, 0.4, 0.5])).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embedder_failure_omits_score() {
        let img = Image::filled(2, 2, 3, 0.5).unwrap();
        assert_eq!(caption_score(&img, &pair(true), &Broken), None);
    }

    struct FailingCaptioner;

    impl Captioner for FailingCaptioner {
        fn captions(&self, _: &Image, _: &str) -> Result<super::super::providers::Captions> {
            Err(Error::Protocol("not json".into()))
        }
    }

    #[test]
    fn provider_failure_yields_unreliable_pair() {
        let inst = EditInstance::new("x", Image::filled(2, 2, 3, 0.5).unwrap(), "do it").unwrap();
        let (p, queries) = target_caption(&inst, &FailingCaptioner, &Fixed(vec![1.0]));
        assert_eq!(p, CaptionPair::unavailable());
        assert_eq!(queries, 2);
    }
}
