//! Object correspondences between two images as a greedy sequence of box
//! homographies, each kept only when at least two box pairs support it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{dlt_homography, quad_iou, Homography, Point, QuadBox};
use crate::scalar::{cast, Real};

/// Keypoint with a unit-norm descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature<T: Real> {
    pub id: usize,
    pub pos: Point<T>,
    pub desc: Vec<T>,
}

impl<T: Real> Feature<T> {
    /// Normalizes the descriptor unless it already has unit norm within 1e-6.
    pub fn new(id: usize, pos: Point<T>, mut desc: Vec<T>) -> Result<Self> {
        let norm = desc.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidParam(format!("feature {id} has a zero or non-finite descriptor")));
        }
        if (norm - T::one()).abs() > cast(1e-6) {
            desc.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self { id, pos, desc })
    }
}

/// Dot product; cosine similarity for unit vectors.
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Checks that all descriptors share one dimension, returning it.
pub fn descriptor_dim<T: Real>(feats: &[Feature<T>]) -> Result<Option<usize>> {
    let Some(first) = feats.first() else {
        return Ok(None);
    };
    let d = first.desc.len();
    for f in feats {
        if f.desc.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: f.desc.len() });
        }
    }
    Ok(Some(d))
}

/// Pooled appearance of a box; `None` when no feature fell inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDescriptor<T: Real> {
    pub vec: Option<Vec<T>>,
}

impl<T: Real> BoxDescriptor<T> {
    pub fn empty() -> Self {
        Self { vec: None }
    }

    /// Cosine similarity, 0 against an empty descriptor.
    pub fn similarity(&self, other: &Self) -> T {
        match (&self.vec, &other.vec) {
            (Some(a), Some(b)) => cosine(a, b),
            _ => T::zero(),
        }
    }
}

/// Generalized-mean pooling, re-normalized to unit length.
///
/// Each component is `sign(mean) · (mean |x|^p)^(1/p)`, so `p = 1` on
/// non-negative descriptors is plain average pooling and large `p`
/// approaches max pooling.
pub fn gem_pool<T: Real>(descs: &[&[T]], p: T) -> Result<BoxDescriptor<T>> {
    if !(p >= T::one()) {
        return Err(Error::InvalidParam("GeM exponent must be at least 1".into()));
    }
    let Some(first) = descs.first() else {
        return Err(Error::NoDescriptor);
    };
    let dim = first.len();
    if let Some(bad) = descs.iter().find(|d| d.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
    }
    let n: T = cast(descs.len() as f64);
    let inv_p = T::one() / p;
    let mut out = vec![T::zero(); dim];
    for (c, o) in out.iter_mut().enumerate() {
        let mut sum = T::zero();
        let mut pow = T::zero();
        for d in descs {
            sum += d[c];
            pow += d[c].abs().powf(p);
        }
        let g = (pow / n).powf(inv_p);
        *o = if sum < T::zero() { -g } else { g };
    }
    let norm = out.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    if !(norm > T::zero()) {
        return Ok(BoxDescriptor::empty());
    }
    out.iter_mut().for_each(|v| *v /= norm);
    Ok(BoxDescriptor { vec: Some(out) })
}

/// GeM over the descriptors of the features inside `quad`.
pub fn box_descriptor<T: Real>(quad: &QuadBox<T>, feats: &[Feature<T>], p: T) -> BoxDescriptor<T> {
    let inside: Vec<&[T]> = feats
        .iter()
        .filter(|f| quad.contains(&f.pos))
        .map(|f| f.desc.as_slice())
        .collect();
    gem_pool(&inside, p).unwrap_or_else(|_| BoxDescriptor::empty())
}

/// Up to `k` indices from `pool` with the highest similarity to `query`,
/// best first, ties to the lower index.
pub fn candidates<T: Real>(query: &BoxDescriptor<T>, descs2: &[BoxDescriptor<T>], pool: &[usize], k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, T)> = pool.iter().map(|&j| (j, query.similarity(&descs2[j]))).collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.into_iter().take(k).map(|(j, _)| j).collect()
}

/// Homography taking `q1`'s corners onto `q2`'s.
pub fn hypothesis<T: Real>(q1: &QuadBox<T>, q2: &QuadBox<T>) -> Result<Homography<T>> {
    let pairs: Vec<_> = q1.corners().iter().copied().zip(q2.corners().iter().copied()).collect();
    dlt_homography(&pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams<T: Real> {
    /// Candidate boxes per image-1 box.
    pub k: usize,
    /// Projected-box IoU above which two boxes correspond.
    pub eps_iou: T,
    pub gem_p: T,
    /// Guided search radius in pixels.
    pub r_search: T,
    /// Similarity floor for guided matches.
    pub sim_thresh: T,
    /// Ratio test for descriptor-only matches.
    pub ratio: T,
    /// Dilation of a group's boxes defining its spatial support.
    pub margin: T,
    /// Weight of each vanishing point correspondence in refinement;
    /// `None` uses the number of supporting box pairs.
    pub vp_weight: Option<T>,
}

impl<T: Real> Default for MatchParams<T> {
    fn default() -> Self {
        Self {
            k: 5,
            eps_iou: cast(0.5),
            gem_p: cast(3.0),
            r_search: cast(20.0),
            sim_thresh: T::zero(),
            ratio: cast(0.8),
            margin: cast(0.5),
            vp_weight: None,
        }
    }
}

impl<T: Real> MatchParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParam("K must be positive".into()));
        }
        if !(self.eps_iou >= T::zero() && self.eps_iou < T::one()) {
            return Err(Error::InvalidParam("IoU threshold must lie in [0, 1)".into()));
        }
        if !(self.gem_p >= T::one()) {
            return Err(Error::InvalidParam("GeM exponent must be at least 1".into()));
        }
        if !(self.r_search > T::zero()) {
            return Err(Error::InvalidParam("search radius must be positive".into()));
        }
        if !(self.ratio > T::zero() && self.ratio <= T::one()) {
            return Err(Error::InvalidParam("ratio must lie in (0, 1]".into()));
        }
        if !(self.margin >= T::zero()) {
            return Err(Error::InvalidParam("margin must be non-negative".into()));
        }
        if self.vp_weight.is_some_and(|w| !(w >= T::zero())) {
            return Err(Error::InvalidParam("vanishing point weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Box correspondences explained by one homography.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectGroup<T: Real> {
    /// Current homography (image 1 → image 2); the refined one once
    /// refinement succeeded.
    pub h: Homography<T>,
    /// Single-pair hypothesis the group was found with.
    pub hypothesis: Homography<T>,
    /// `(box in image 1, box in image 2)`.
    pub pairs: Vec<(usize, usize)>,
    pub refined: bool,
}

/// One-to-one box pairs whose IoU after projecting through `h` exceeds
/// `eps_iou`, greedily taken by decreasing IoU. Returns `(i, j, iou)`.
pub fn support_among<T: Real>(
    h: &Homography<T>,
    boxes1: &[QuadBox<T>],
    boxes2: &[QuadBox<T>],
    pool1: &[usize],
    pool2: &[usize],
    eps_iou: T,
) -> Vec<(usize, usize, T)> {
    let mut cand: Vec<(usize, usize, T)> = Vec::new();
    for &i in pool1 {
        let Ok(projected) = boxes1[i].project(h) else {
            continue;
        };
        for &j in pool2 {
            let iou = quad_iou(&projected, &boxes2[j]);
            if iou > eps_iou {
                cand.push((i, j, iou));
            }
        }
    }
    cand.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    let mut used1 = vec![false; boxes1.len()];
    let mut used2 = vec![false; boxes2.len()];
    let mut out = Vec::new();
    for (i, j, iou) in cand {
        if !used1[i] && !used2[j] {
            used1[i] = true;
            used2[j] = true;
            out.push((i, j, iou));
        }
    }
    out
}

/// Support of `h` over all boxes of both images, sorted by pair.
pub fn support<T: Real>(h: &Homography<T>, boxes1: &[QuadBox<T>], boxes2: &[QuadBox<T>], eps_iou: T) -> Vec<(usize, usize)> {
    let all1: Vec<usize> = (0..boxes1.len()).collect();
    let all2: Vec<usize> = (0..boxes2.len()).collect();
    let mut pairs: Vec<_> = support_among(h, boxes1, boxes2, &all1, &all2, eps_iou)
        .into_iter()
        .map(|(i, j, _)| (i, j))
        .collect();
    pairs.sort();
    pairs
}

struct Scored<T: Real> {
    seed: (usize, usize),
    h: Homography<T>,
    support: Vec<(usize, usize, T)>,
    iou_sum: T,
}

impl<T: Real> Scored<T> {
    /// Larger support, then larger summed IoU, then smaller seed pair.
    fn beats(&self, other: &Self) -> bool {
        match self.support.len().cmp(&other.support.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                if self.iou_sum != other.iou_sum {
                    self.iou_sum > other.iou_sum
                } else {
                    self.seed < other.seed
                }
            }
        }
    }
}

/// Greedy object matching.
///
/// Each round tries, for every remaining image-1 box, its `k` most similar
/// remaining image-2 boxes as hypotheses, keeps the one with the largest
/// support and removes the supporting boxes. Stops when the best support has
/// fewer than two pairs. Hypotheses of a round are scored in parallel; the
/// reduction is sequential so the result does not depend on scheduling.
pub fn greedy_match<T: Real>(
    boxes1: &[QuadBox<T>],
    boxes2: &[QuadBox<T>],
    feats1: &[Feature<T>],
    feats2: &[Feature<T>],
    params: &MatchParams<T>,
) -> Result<Vec<ObjectGroup<T>>> {
    params.validate()?;
    let descs1: Vec<BoxDescriptor<T>> = boxes1.iter().map(|b| box_descriptor(b, feats1, params.gem_p)).collect();
    let descs2: Vec<BoxDescriptor<T>> = boxes2.iter().map(|b| box_descriptor(b, feats2, params.gem_p)).collect();
    greedy_match_with(boxes1, boxes2, &descs1, &descs2, params)
}

/// [`greedy_match`] with precomputed box descriptors.
pub fn greedy_match_with<T: Real>(
    boxes1: &[QuadBox<T>],
    boxes2: &[QuadBox<T>],
    descs1: &[BoxDescriptor<T>],
    descs2: &[BoxDescriptor<T>],
    params: &MatchParams<T>,
) -> Result<Vec<ObjectGroup<T>>> {
    params.validate()?;
    let mut pool1: Vec<usize> = (0..boxes1.len()).collect();
    let mut pool2: Vec<usize> = (0..boxes2.len()).collect();
    let mut groups = Vec::new();

    loop {
        if pool1.len() < 2 || pool2.len() < 2 {
            break;
        }
        let seeds: Vec<(usize, usize)> = pool1
            .iter()
            .flat_map(|&i| {
                candidates(&descs1[i], descs2, &pool2, params.k)
                    .into_iter()
                    .map(move |j| (i, j))
            })
            .collect();
        let scored: Vec<Option<Scored<T>>> = seeds
            .par_iter()
            .map(|&(i, j)| {
                let h = hypothesis(&boxes1[i], &boxes2[j]).ok()?;
                let support = support_among(&h, boxes1, boxes2, &pool1, &pool2, params.eps_iou);
                let iou_sum = support.iter().fold(T::zero(), |a, s| a + s.2);
                Some(Scored { seed: (i, j), h, support, iou_sum })
            })
            .collect();
        let mut best: Option<Scored<T>> = None;
        for s in scored.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| s.beats(b)) {
                best = Some(s);
            }
        }
        let Some(best) = best else { break };
        if best.support.len() < 2 {
            break;
        }
        let mut pairs: Vec<(usize, usize)> = best.support.iter().map(|&(i, j, _)| (i, j)).collect();
        pairs.sort();
        pool1.retain(|i| !pairs.iter().any(|p| p.0 == *i));
        pool2.retain(|j| !pairs.iter().any(|p| p.1 == *j));
        groups.push(ObjectGroup {
            h: best.h,
            hypothesis: best.h,
            pairs,
            refined: false,
        });
    }
    Ok(groups)
}
