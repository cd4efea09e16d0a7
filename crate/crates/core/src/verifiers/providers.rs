//! Provider interfaces. Every call is one query to an external judge,
//! grounding model or embedding model; implementations must be safe for
//! concurrent use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Image;

/// Semantic-consistency and perceptual-quality sub-scores on `[0, S_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralScore {
    pub sc: f64,
    pub pq: f64,
}

impl GeneralScore {
    /// Geometric mean of the two sub-scores.
    pub fn value(&self) -> f64 {
        (self.sc.max(0.0) * self.pq.max(0.0)).sqrt()
    }
}

/// Objects named by the region query. `edit_object` takes precedence; a
/// missing or empty list means the object could not be determined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionObjects {
    pub edit_object: Option<Vec<String>>,
    pub keep_object: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Captions {
    pub original_caption: String,
    pub edited_caption: String,
}

pub trait GeneralScorer: Send + Sync {
    fn general_score(&self, source: &Image, edited: &Image, instruction: &str) -> Result<GeneralScore>;
}

pub trait RegionLocator: Send + Sync {
    fn locate(&self, source: &Image, instruction: &str) -> Result<RegionObjects>;
}

/// Open-vocabulary segmentation of named objects into a row-major `H x W`
/// binary mask.
pub trait Grounder: Send + Sync {
    fn ground(&self, source: &Image, objects: &[String]) -> Result<Vec<bool>>;
}

pub trait Captioner: Send + Sync {
    fn captions(&self, source: &Image, instruction: &str) -> Result<Captions>;
}

pub trait QuestionAuthor: Send + Sync {
    fn questions(&self, source: &Image, instruction: &str) -> Result<Vec<String>>;
}

pub trait AnswerJudge: Send + Sync {
    fn answers(&self, source: &Image, edited: &Image, instruction: &str, questions: &[String]) -> Result<Vec<bool>>;
}

pub trait Embedder: Send + Sync {
    fn embed_image(&self, image: &Image) -> Result<Vec<f64>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Run `f`, retrying once when the provider answered with a malformed reply.
/// Returns the outcome and the number of attempts made.
pub fn retry_malformed<T>(mut f: impl FnMut() -> Result<T>) -> (Result<T>, u32) {
    match f() {
        Err(Error::Protocol(_)) => (f(), 2),
        other => (other, 1),
    }
}

/// Cosine similarity clamped to `[-1, 1]`; zero vectors have similarity 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}
