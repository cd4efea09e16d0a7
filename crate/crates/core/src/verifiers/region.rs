//! Edited-region correctness: per-pixel change map, softmax-weighted mass
//! inside the expected edit mask, and adaptive mask growth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Image;

/// Relative margin over the uniform-softmax baseline that counts as signal.
pub const SIGNAL_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrigin {
    EditObject,
    InvertedKeepObject,
    Unavailable,
}

/// Binary mask of the expected edit region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMask {
    height: usize,
    width: usize,
    mask: Vec<bool>,
    pub origin: MaskOrigin,
    pub dilation_radius: usize,
}

impl RegionMask {
    pub fn new(height: usize, width: usize, mask: Vec<bool>, origin: MaskOrigin) -> Result<Self> {
        if mask.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask has {} cells, expected {height}x{width}",
                mask.len()
            )));
        }
        Ok(Self {
            height,
            width,
            mask,
            origin,
            dilation_radius: 0,
        })
    }

    pub fn from_fn(height: usize, width: usize, origin: MaskOrigin, f: impl Fn(usize, usize) -> bool) -> Self {
        let mask = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self {
            height,
            width,
            mask,
            origin,
            dilation_radius: 0,
        }
    }

    pub fn unavailable(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, MaskOrigin::Unavailable, |_, _| false)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|m| *m)
    }

    pub fn inverted(&self) -> Self {
        Self {
            mask: self.mask.iter().map(|m| !m).collect(),
            ..self.clone()
        }
    }

    pub fn union(&self, other: &RegionMask) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension("mask union of different sizes".into()));
        }
        Ok(Self {
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect(),
            ..self.clone()
        })
    }

    /// Max-pool onto `window`-sized blocks.
    pub fn pooled(&self, window: usize) -> RegionMask {
        if window <= 1 {
            return self.clone();
        }
        let rows = self.height.div_ceil(window);
        let cols = self.width.div_ceil(window);
        let mut out = vec![false; rows * cols];
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    out[(r / window) * cols + c / window] = true;
                }
            }
        }
        Self {
            height: rows,
            width: cols,
            mask: out,
            origin: self.origin,
            dilation_radius: self.dilation_radius,
        }
    }

    /// Square dilation by `pad` pixels. An empty mask grows from the image
    /// center.
    pub fn dilated(&self, pad: usize) -> RegionMask {
        let seeds: Vec<(usize, usize)> = if self.count() == 0 {
            vec![(self.height / 2, self.width / 2)]
        } else {
            (0..self.height * self.width)
                .filter(|&i| self.mask[i])
                .map(|i| (i / self.width, i % self.width))
                .collect()
        };
        let mut out = vec![false; self.mask.len()];
        for (r, c) in seeds {
            let (r0, r1) = (r.saturating_sub(pad), (r + pad).min(self.height - 1));
            let (c0, c1) = (c.saturating_sub(pad), (c + pad).min(self.width - 1));
            for rr in r0..=r1 {
                out[rr * self.width + c0..=rr * self.width + c1].fill(true);
            }
        }
        Self {
            mask: out,
            dilation_radius: self.dilation_radius + pad,
            ..self.clone()
        }
    }
}

/// Per-pixel mean absolute difference across channels, optionally
/// average-pooled over non-overlapping `window`-sized blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeMap {
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    pub delta: Vec<f64>,
}

impl ChangeMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.delta[row * self.cols + col]
    }
}

pub fn change_map(edited: &Image, source: &Image, window: usize) -> Result<ChangeMap> {
    if !edited.same_shape(source) {
        return Err(Error::Dimension(format!(
            "edited {}x{}x{} vs source {}x{}x{}",
            edited.height(),
            edited.width(),
            edited.channels(),
            source.height(),
            source.width(),
            source.channels()
        )));
    }
    if window == 0 {
        return Err(Error::Config("change-map window must be positive".into()));
    }
    let (h, w, ch) = (edited.height(), edited.width(), edited.channels());
    let per_pixel: Vec<f64> = edited
        .data()
        .chunks_exact(ch)
        .zip(source.data().chunks_exact(ch))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / ch as f64)
        .collect();
    if window == 1 {
        return Ok(ChangeMap {
            rows: h,
            cols: w,
            window,
            delta: per_pixel,
        });
    }
    let rows = h.div_ceil(window);
    let cols = w.div_ceil(window);
    let mut sums = vec![0.0; rows * cols];
    let mut counts = vec![0usize; rows * cols];
    for r in 0..h {
        for c in 0..w {
            let cell = (r / window) * cols + c / window;
            sums[cell] += per_pixel[r * w + c];
            counts[cell] += 1;
        }
    }
    let delta = sums.iter().zip(&counts).map(|(s, n)| s / *n as f64).collect();
    Ok(ChangeMap {
        rows,
        cols,
        window,
        delta,
    })
}

/// Softmax over every entry of the change map jointly.
pub fn softmax(delta: &[f64]) -> Vec<f64> {
    let max = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = delta.iter().map(|d| (d - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn aligned_mask(delta: &ChangeMap, region: &RegionMask) -> Result<RegionMask> {
    let mask = if region.height() == delta.rows && region.width() == delta.cols {
        region.clone()
    } else {
        region.pooled(delta.window)
    };
    if mask.height() != delta.rows || mask.width() != delta.cols {
        return Err(Error::Dimension(format!(
            "mask {}x{} does not match change map {}x{}",
            region.height(),
            region.width(),
            delta.rows,
            delta.cols
        )));
    }
    Ok(mask)
}

/// Softmax mass of the change map that falls inside the mask, in `[0, 1]`.
pub fn region_score(delta: &ChangeMap, region: &RegionMask) -> Result<f64> {
    let mask = aligned_mask(delta, region)?;
    let weights = softmax(&delta.delta);
    let inside: f64 = weights
        .iter()
        .zip(&mask.mask)
        .filter(|(_, m)| **m)
        .map(|(w, _)| w)
        .sum();
    Ok(inside.clamp(0.0, 1.0))
}

/// Whether a region score beats the uniform-softmax baseline of its mask.
pub fn has_signal(score: f64, region: &RegionMask, window: usize) -> bool {
    let pooled = region.pooled(window);
    let count = pooled.count();
    if region.origin == MaskOrigin::Unavailable || count == 0 {
        return false;
    }
    let cells = (pooled.height() * pooled.width()) as f64;
    score > (1.0 + SIGNAL_MARGIN) * count as f64 / cells
}

/// One refinement step: grow the mask by `pad` pixels when no candidate
/// shows signal, otherwise return it unchanged.
pub fn refine_mask(region: &RegionMask, candidate_scores: &[f64], pad: usize, window: usize) -> RegionMask {
    if region.origin == MaskOrigin::Unavailable {
        return region.clone();
    }
    if candidate_scores.iter().any(|s| has_signal(*s, region, window)) {
        return region.clone();
    }
    region.dilated(pad)
}

/// Grow the mask until at least one of the change maps shows signal or the
/// mask covers the whole image.
pub fn refine_until_signal(
    region: &RegionMask,
    maps: &[ChangeMap],
    pad: usize,
    window: usize,
) -> Result<(RegionMask, usize)> {
    let mut mask = region.clone();
    let mut iterations = 0;
    if mask.origin == MaskOrigin::Unavailable {
        return Ok((mask, 0));
    }
    loop {
        let scores = maps
            .iter()
            .map(|m| region_score(m, &mask))
            .collect::<Result<Vec<_>>>()?;
        let next = refine_mask(&mask, &scores, pad, window);
        if next == mask || mask.is_full() {
            return Ok((mask, iterations));
        }
        mask = next;
        iterations += 1;
    }
}
