//! Final selection with centroid tie-breaking.

use crate::error::{Error, Result};
use crate::model::{Image, ScoreBreakdown};
use crate::verifiers::{cosine, Embedder};

/// A fully denoised candidate and its final score.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub candidate_id: u32,
    pub seed: u64,
    pub image: Image,
    pub score: ScoreBreakdown,
}

/// Index of the pool's best entry by unified score. Exact ties go to the
/// entry most similar on average to the other tied entries, then to the
/// lowest candidate id.
pub fn select_final(pool: &[PoolEntry], embedder: &dyn Embedder) -> Result<usize> {
    let best = pool
        .iter()
        .map(|e| e.score.unified)
        .max_by(f64::total_cmp)
        .ok_or(Error::EmptyPool)?;
    let tied: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].score.unified == best).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let embeddings: Vec<Option<Vec<f64>>> = tied
        .iter()
        .map(|&i| embedder.embed_image(&pool[i].image).ok())
        .collect();
    let centrality = |a: usize| -> f64 {
        let Some(ea) = &embeddings[a] else {
            return f64::NEG_INFINITY;
        };
        let sims: Vec<f64> = (0..tied.len())
            .filter(|&b| b != a)
            .filter_map(|b| embeddings[b].as_ref().map(|eb| cosine(ea, eb)))
            .collect();
        if sims.is_empty() {
            return f64::NEG_INFINITY;
        }
        sims.iter().sum::<f64>() / sims.len() as f64
    };
    let scored: Vec<(f64, usize)> = (0..tied.len()).map(|k| (centrality(k), tied[k])).collect();
    let top = scored
        .iter()
        .map(|(c, _)| *c)
        .max_by(f64::total_cmp)
        .unwrap_or(f64::NEG_INFINITY);
    Ok(scored
        .into_iter()
        .filter(|(c, _)| *c == top)
        .map(|(_, i)| i)
        .min_by_key(|&i| pool[i].candidate_id)
        .expect("tied set is non-empty"))
}
