//! Homography refinement, guided local-feature matching inside each object
//! group's support, and descriptor-only matching for the rest.

mod pipeline;

pub use pipeline::{analyze_image, match_pair, Frame, ImageAnalysis, ImageInputs, PairReport, PairResult, PipelineParams, TaggedQuad};

use std::collections::HashSet;

use rayon::prelude::*;

use crate::boxes::{select_by_votes, vote_masses};
use crate::geom::{dlt_weighted, quad_iou, Correspondence, HomPoint, Homography, LineSegment, Point, QuadBox};
use crate::objmatch::{cosine, Feature, MatchParams, ObjectGroup};
use crate::scalar::{cast, Real};
use crate::vanishing::VanishingPoint;

/// A feature correspondence. `group_id` is the index of the guiding group,
/// or −1 for descriptor-only matches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match<T: Real> {
    pub i: usize,
    pub j: usize,
    pub sim: T,
    pub group_id: i64,
}

impl<T: Real> Match<T> {
    pub fn is_guided(&self) -> bool {
        self.group_id >= 0
    }
}

/// Matches plus the groups that guided them.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet<T: Real> {
    pub matches: Vec<Match<T>>,
    pub groups: Vec<ObjectGroup<T>>,
}

impl<T: Real> Default for MatchSet<T> {
    fn default() -> Self {
        Self { matches: Vec::new(), groups: Vec::new() }
    }
}

/// Line evidence of one image, used to find the vanishing points of a group's
/// plane.
#[derive(Debug, Clone, Copy)]
pub struct ViewEvidence<'a, T: Real> {
    pub segments: &'a [LineSegment<T>],
    pub vps: &'a [VanishingPoint<T>],
    pub angle_thresh: T,
}

/// Horizontal and vertical vanishing point with the most votes from the
/// segments around all `quads`.
pub fn plane_vps<'a, T: Real>(
    quads: impl IntoIterator<Item = &'a QuadBox<T>>,
    ev: &ViewEvidence<'_, T>,
) -> Option<(HomPoint<T>, HomPoint<T>)> {
    let mut mass = vec![T::zero(); ev.vps.len()];
    for q in quads {
        for (m, v) in mass.iter_mut().zip(vote_masses(&q.hull(), ev.segments, ev.vps, ev.angle_thresh)) {
            *m += v;
        }
    }
    let (h, v) = select_by_votes(&mass, ev.vps).ok()?;
    Some((ev.vps[h].point, ev.vps[v].point))
}

/// Weighted DLT in which each box pair, four consecutive corner rows at the
/// front of `corrs`, is reweighted by its transfer error so that a poorly
/// localized box does not drag the fit. Later rows keep their weight.
fn robust_fit<T: Real>(corrs: &mut [Correspondence<T>], corner_rows: usize) -> crate::error::Result<Homography<T>> {
    let mut h = dlt_weighted(corrs)?;
    for _ in 0..4 {
        let r: Vec<T> = corrs[..corner_rows]
            .chunks(4)
            .map(|pair| {
                let sq = pair.iter().fold(T::zero(), |acc, c| {
                    let e = match (c.src.to_point().and_then(|p| h.map_point(&p)), c.dst.to_point()) {
                        (Some(a), Some(b)) => (a - b).norm_squared(),
                        _ => cast(f64::INFINITY),
                    };
                    acc + e
                });
                (sq / cast(pair.len() as f64)).sqrt()
            })
            .collect();
        let mut sorted = r.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let scale = sorted[sorted.len() / 2].max(cast(0.5));
        for (pair, r) in corrs[..corner_rows].chunks_mut(4).zip(&r) {
            let w = T::one() / (T::one() + (*r / scale).powi(2));
            pair.iter_mut().for_each(|c| c.weight = w);
        }
        h = dlt_weighted(corrs)?;
    }
    Ok(h)
}

/// Re-estimates a group's homography from the corners of all its box pairs,
/// plus the plane's two vanishing point correspondences when both views
/// provide them.
///
/// Each vanishing point correspondence carries weight `params.vp_weight`, by
/// default the number of box pairs. Box pairs are down-weighted by their
/// transfer error over a few reweighting rounds. A solution that drops any of the group's
/// pairs to or below `params.eps_iou` is rejected in favour of the corner-only
/// fit, and that one in favour of the hypothesis. Returns the homography and
/// whether it was refined.
pub fn refine_homography<T: Real>(
    g: &ObjectGroup<T>,
    boxes1: &[QuadBox<T>],
    boxes2: &[QuadBox<T>],
    ev1: Option<&ViewEvidence<'_, T>>,
    ev2: Option<&ViewEvidence<'_, T>>,
    params: &MatchParams<T>,
) -> (Homography<T>, bool) {
    if g.pairs.len() < 2 {
        return (g.hypothesis, false);
    }
    let mut corrs = Vec::with_capacity(4 * g.pairs.len() + 2);
    for &(i, j) in &g.pairs {
        for (a, b) in boxes1[i].corners().iter().zip(boxes2[j].corners()) {
            corrs.push(Correspondence::points(*a, *b));
        }
    }
    let keeps_support = |h: &Homography<T>| {
        g.pairs.iter().all(|&(i, j)| {
            boxes1[i]
                .project(h)
                .is_ok_and(|p| quad_iou(&p, &boxes2[j]) > params.eps_iou)
        })
    };
    let corner_rows = corrs.len();
    if let (Some(e1), Some(e2)) = (ev1, ev2) {
        let v1 = plane_vps(g.pairs.iter().map(|p| &boxes1[p.0]), e1);
        let v2 = plane_vps(g.pairs.iter().map(|p| &boxes2[p.1]), e2);
        if let (Some((h1, v1)), Some((h2, v2))) = (v1, v2) {
            let w = params.vp_weight.unwrap_or_else(|| cast(g.pairs.len() as f64));
            if w > T::zero() {
                corrs.push(Correspondence { src: h1, dst: h2, weight: w });
                corrs.push(Correspondence { src: v1, dst: v2, weight: w });
            }
        }
    }
    if let Ok(h) = robust_fit(&mut corrs, corner_rows) {
        if keeps_support(&h) {
            return (h, true);
        }
    }
    if corrs.len() > corner_rows {
        if let Ok(h) = robust_fit(&mut corrs[..corner_rows], corner_rows) {
            if keeps_support(&h) {
                return (h, true);
            }
        }
    }
    (g.hypothesis, false)
}

/// Points covered by a group's image-1 boxes, each dilated about its
/// centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportRegion<T: Real> {
    quads: Vec<QuadBox<T>>,
}

impl<T: Real> SupportRegion<T> {
    pub fn contains(&self, p: &Point<T>) -> bool {
        self.quads.iter().any(|q| q.contains(p))
    }

    pub fn quads(&self) -> &[QuadBox<T>] {
        &self.quads
    }
}

/// Support of `g` in image 1; `margin` is the relative growth of each box.
pub fn support_region<T: Real>(g: &ObjectGroup<T>, boxes1: &[QuadBox<T>], margin: T) -> SupportRegion<T> {
    SupportRegion {
        quads: g.pairs.iter().map(|&(i, _)| boxes1[i].dilated(T::one() + margin)).collect(),
    }
}

/// Guided matching by feature index, skipping features already claimed.
///
/// Every unclaimed image-1 feature inside `region` ranks the unclaimed
/// image-2 features within `r_search` of its projection by similarity.
/// Conflicts are settled by deferred acceptance: a target keeps the more
/// similar proposer (the lower index on ties) and the rejected one moves on
/// to its next candidate. Returns `(i, j, sim)` sorted by `i`.
pub fn guided_match_indices<T: Real>(
    feats1: &[Feature<T>],
    feats2: &[Feature<T>],
    h: &Homography<T>,
    region: &SupportRegion<T>,
    params: &MatchParams<T>,
    claimed1: &[bool],
    claimed2: &[bool],
) -> Vec<(usize, usize, T)> {
    let r2 = params.r_search * params.r_search;
    let prefs: Vec<Vec<(usize, T)>> = feats1
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            if claimed1[i] || !region.contains(&f.pos) {
                return Vec::new();
            }
            let Some(p) = h.map_point(&f.pos) else {
                return Vec::new();
            };
            let mut c: Vec<(usize, T)> = feats2
                .iter()
                .enumerate()
                .filter(|(j, g)| !claimed2[*j] && (g.pos - p).norm_squared() <= r2)
                .map(|(j, g)| (j, cosine(&f.desc, &g.desc)))
                .filter(|&(_, s)| s >= params.sim_thresh)
                .collect();
            c.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            c
        })
        .collect();

    let mut next = vec![0usize; feats1.len()];
    let mut holder: Vec<Option<(usize, T)>> = vec![None; feats2.len()];
    let mut free: Vec<usize> = (0..feats1.len()).rev().filter(|&i| !prefs[i].is_empty()).collect();
    while let Some(i) = free.pop() {
        let Some(&(j, s)) = prefs[i].get(next[i]) else {
            continue;
        };
        next[i] += 1;
        match holder[j] {
            None => holder[j] = Some((i, s)),
            Some((k, sk)) => {
                if s > sk || (s == sk && i < k) {
                    holder[j] = Some((i, s));
                    free.push(k);
                } else {
                    free.push(i);
                }
            }
        }
    }
    let mut out: Vec<(usize, usize, T)> = holder
        .iter()
        .enumerate()
        .filter_map(|(j, h)| h.map(|(i, s)| (i, j, s)))
        .collect();
    out.sort_by_key(|m| m.0);
    out
}

/// Guided matches of one group with nothing claimed beforehand.
pub fn guided_match<T: Real>(
    feats1: &[Feature<T>],
    feats2: &[Feature<T>],
    g: &ObjectGroup<T>,
    group_id: usize,
    boxes1: &[QuadBox<T>],
    params: &MatchParams<T>,
) -> Vec<Match<T>> {
    let region = support_region(g, boxes1, params.margin);
    let c1 = vec![false; feats1.len()];
    let c2 = vec![false; feats2.len()];
    guided_match_indices(feats1, feats2, &g.h, &region, params, &c1, &c2)
        .into_iter()
        .map(|(i, j, sim)| Match { i: feats1[i].id, j: feats2[j].id, sim, group_id: group_id as i64 })
        .collect()
}

fn descriptor_distance<T: Real>(sim: T) -> T {
    let d2 = cast::<T>(2.0) - cast::<T>(2.0) * sim;
    if d2 > T::zero() {
        d2.sqrt()
    } else {
        T::zero()
    }
}

/// Mutual nearest neighbours with a ratio test among unclaimed features.
/// Returns `(i, j, sim)` sorted by `i`.
pub fn additional_match_indices<T: Real>(
    feats1: &[Feature<T>],
    feats2: &[Feature<T>],
    ratio: T,
    claimed1: &[bool],
    claimed2: &[bool],
) -> Vec<(usize, usize, T)> {
    let free1: Vec<usize> = (0..feats1.len()).filter(|&i| !claimed1[i]).collect();
    let free2: Vec<usize> = (0..feats2.len()).filter(|&j| !claimed2[j]).collect();
    if free1.is_empty() || free2.is_empty() {
        return Vec::new();
    }
    // Best and second-best similarity per image-1 feature.
    let forward: Vec<(usize, T, Option<T>)> = free1
        .par_iter()
        .map(|&i| {
            let mut best: Option<(usize, T)> = None;
            let mut second: Option<T> = None;
            for &j in &free2 {
                let s = cosine(&feats1[i].desc, &feats2[j].desc);
                match best {
                    Some((_, b)) if s > b => {
                        second = Some(b);
                        best = Some((j, s));
                    }
                    Some(_) => {
                        if second.is_none_or(|t| s > t) {
                            second = Some(s);
                        }
                    }
                    None => best = Some((j, s)),
                }
            }
            let (j, s) = best.expect("free2 is not empty");
            (j, s, second)
        })
        .collect();
    let backward: Vec<usize> = free2
        .par_iter()
        .map(|&j| {
            let mut best: Option<(usize, T)> = None;
            for &i in &free1 {
                let s = cosine(&feats1[i].desc, &feats2[j].desc);
                if best.is_none_or(|b| s > b.1) {
                    best = Some((i, s));
                }
            }
            best.expect("free1 is not empty").0
        })
        .collect();
    let pos2 = |j: usize| free2.binary_search(&j).unwrap();

    let mut out = Vec::new();
    for (k, &i) in free1.iter().enumerate() {
        let (j, s, second) = forward[k];
        if backward[pos2(j)] != i {
            continue;
        }
        if let Some(s2) = second {
            if !(descriptor_distance(s) < ratio * descriptor_distance(s2)) {
                continue;
            }
        }
        out.push((i, j, s));
    }
    out
}

/// Descriptor-only matches over features not used by `already`.
pub fn additional_matches<T: Real>(
    feats1: &[Feature<T>],
    feats2: &[Feature<T>],
    already: &[Match<T>],
    ratio: T,
) -> Vec<Match<T>> {
    let used1: HashSet<usize> = already.iter().map(|m| m.i).collect();
    let used2: HashSet<usize> = already.iter().map(|m| m.j).collect();
    let c1: Vec<bool> = feats1.iter().map(|f| used1.contains(&f.id)).collect();
    let c2: Vec<bool> = feats2.iter().map(|f| used2.contains(&f.id)).collect();
    additional_match_indices(feats1, feats2, ratio, &c1, &c2)
        .into_iter()
        .map(|(i, j, sim)| Match { i: feats1[i].id, j: feats2[j].id, sim, group_id: -1 })
        .collect()
}
