//! Reliability maps and correspondence sampling from forward/backward flow.
//!
//! The forward-backward distance gauges how well composing the two flows
//! returns to the start pixel; its reciprocal score `Ms = 1/(0.1 + Dfb)`
//! ranks correspondences. Occlusion is detected with a range map: every
//! pixel of the second image splats unit mass along the backward flow, and
//! first-image pixels that collect too little mass are occluded.

use crate::grid::{FlowField, ScoreMap};
use crate::rng::DetRng;
use nalgebra::Vector2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("flow fields have mismatched dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("only {got} correspondences survive masking, need at least {need}")]
    InsufficientCorrespondences { got: usize, need: usize },
    #[error("top_frac must lie in (0, 1], got {0}")]
    BadTopFraction(f64),
    #[error("sample count must be at least 8, got {0}")]
    BadSampleCount(usize),
}

/// Offset in the forward-backward score formula `Ms = 1/(0.1 + Dfb)`.
pub const FB_SCORE_OFFSET: f64 = 0.1;

/// A sampled pixel pair with its reliability weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p_a: Vector2<f64>,
    pub p_b: Vector2<f64>,
    pub weight: f64,
}

/// Set of sampled correspondences between one image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub width: usize,
    pub height: usize,
    pub items: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Correspondence> {
        self.items.iter()
    }

    /// Keeps the items selected by `mask` (same length as the set).
    pub fn filter_by_mask(&self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.items.len());
        Self {
            width: self.width,
            height: self.height,
            items: self
                .items
                .iter()
                .zip(mask)
                .filter_map(|(c, &keep)| keep.then_some(*c))
                .collect(),
        }
    }
}

/// Forward-backward distance map and its reciprocal score map.
///
/// `Dfb(p) = ||F_ab(p) + F_ba(p + F_ab(p))||` with bilinear lookup of the
/// backward flow. Pixels whose forward target leaves the image get
/// `Dfb = cap` so the maps stay rectangular.
pub fn fb_distance_and_score(
    flow_ab: &FlowField,
    flow_ba: &FlowField,
    cap: f64,
) -> Result<(ScoreMap, ScoreMap), FlowError> {
    if !flow_ab.same_size(flow_ba) {
        return Err(FlowError::DimensionMismatch(
            flow_ab.width(),
            flow_ab.height(),
            flow_ba.width(),
            flow_ba.height(),
        ));
    }
    let (w, h) = (flow_ab.width(), flow_ab.height());
    let mut dist = ScoreMap::zeros(w, h);
    let mut score = ScoreMap::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let fwd = flow_ab.at(x, y);
            let tx = x as f64 + fwd[0];
            let ty = y as f64 + fwd[1];
            let d = match flow_ba.sample(tx, ty) {
                Some(bwd) => (fwd[0] + bwd[0]).hypot(fwd[1] + bwd[1]),
                None => cap,
            };
            dist.set(x, y, d);
            score.set(x, y, 1.0 / (FB_SCORE_OFFSET + d));
        }
    }
    Ok((dist, score))
}

/// Binary visibility mask for the first image of a pair, by range-map
/// construction over the backward flow: each pixel `p` of image B splats
/// unit mass at `p + F_ba(p)` in image A with bilinear weights, and a pixel
/// of A is visible iff its accumulated mass reaches `mass_threshold`.
pub fn occlusion_mask(flow_ba: &FlowField, mass_threshold: f64) -> ScoreMap {
    let (w, h) = (flow_ba.width(), flow_ba.height());
    let mut mass = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let f = flow_ba.at(x, y);
            let tx = x as f64 + f[0];
            let ty = y as f64 + f[1];
            let x0 = tx.floor();
            let y0 = ty.floor();
            let fx = tx - x0;
            let fy = ty - y0;
            let corners = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            for (cx, cy, wgt) in corners {
                if wgt == 0.0 {
                    continue;
                }
                if cx >= 0.0 && cy >= 0.0 && (cx as usize) < w && (cy as usize) < h {
                    mass[cy as usize * w + cx as usize] += wgt;
                }
            }
        }
    }
    let mut out = ScoreMap::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            if mass[y * w + x] >= mass_threshold {
                out.set(x, y, 1.0);
            }
        }
    }
    out
}

/// Draws `n` correspondences from the masked top-score fraction of pixels.
///
/// Eligible pixels have `mask > 0`, `score > 0` and a forward target inside
/// the interpolable image domain. They are ranked by `(score, row-major
/// index)` so results do not depend on storage order of equal scores; the
/// top `top_frac` fraction is kept and `min(n, kept)` samples are drawn
/// without replacement from the given stream.
pub fn sample_correspondences(
    flow_ab: &FlowField,
    score: &ScoreMap,
    mask: &ScoreMap,
    top_frac: f64,
    n: usize,
    rng: &mut DetRng,
) -> Result<CorrespondenceSet, FlowError> {
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(FlowError::BadTopFraction(top_frac));
    }
    if n < 8 {
        return Err(FlowError::BadSampleCount(n));
    }
    let dims_match = |w: usize, h: usize| w == flow_ab.width() && h == flow_ab.height();
    if !dims_match(score.width(), score.height()) || !dims_match(mask.width(), mask.height()) {
        return Err(FlowError::DimensionMismatch(
            flow_ab.width(),
            flow_ab.height(),
            score.width(),
            score.height(),
        ));
    }
    let (w, h) = (flow_ab.width(), flow_ab.height());
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;

    let mut eligible: Vec<(usize, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.at(x, y) <= 0.0 {
                continue;
            }
            let s = score.at(x, y);
            if s <= 0.0 {
                continue;
            }
            let f = flow_ab.at(x, y);
            let tx = x as f64 + f[0];
            let ty = y as f64 + f[1];
            if tx < 0.0 || ty < 0.0 || tx > max_x || ty > max_y {
                continue;
            }
            eligible.push((y * w + x, s));
        }
    }
    if eligible.len() < 8 {
        return Err(FlowError::InsufficientCorrespondences {
            got: eligible.len(),
            need: 8,
        });
    }

    // descending score, ascending index on ties
    eligible.sort_unstable_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let kept = ((eligible.len() as f64 * top_frac).ceil() as usize)
        .clamp(1, eligible.len())
        .max(8.min(eligible.len()));
    eligible.truncate(kept);

    let take = n.min(eligible.len());
    let chosen = rng.sample_indices(eligible.len(), take);
    let items = chosen
        .into_iter()
        .map(|i| {
            let (idx, s) = eligible[i];
            let (x, y) = (idx % w, idx / w);
            let f = flow_ab.at(x, y);
            Correspondence {
                p_a: Vector2::new(x as f64, y as f64),
                p_b: Vector2::new(x as f64 + f[0], y as f64 + f[1]),
                weight: s,
            }
        })
        .collect();
    Ok(CorrespondenceSet {
        width: w,
        height: h,
        items,
    })
}
