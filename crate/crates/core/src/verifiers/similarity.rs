//! Greedy near-duplicate removal over embeddings.

use super::providers::cosine;

/// Indices of the retained items, in descending score order. Items are
/// visited by descending score (ties by index); one is kept iff its
/// similarity to every kept item is at most `tau`.
pub fn similarity_filter(embeddings: &[Vec<f64>], scores: &[f64], tau: f64) -> Vec<usize> {
    debug_assert_eq!(embeddings.len(), scores.len());
    similarity_filter_by(scores, tau, |a, b| cosine(&embeddings[a], &embeddings[b]))
}

/// Same greedy rule over an arbitrary pairwise similarity.
pub fn similarity_filter_by(scores: &[f64], tau: f64, sim: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| sim(i, k) <= tau) {
            kept.push(i);
        }
    }
    kept
}
