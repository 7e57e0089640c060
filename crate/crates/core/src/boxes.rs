//! Perspective boxes: snaps axis-aligned detections onto the vanishing
//! directions of the facade they lie on.

use crate::error::{Error, Result};
use crate::geom::{intersect, line_through, DetBox, HomPoint, LineSegment, Point, QuadBox};
use crate::scalar::{cast, Real};
use crate::vanishing::{residual_angle, Orientation, VanishingPoint};

/// Segments whose midpoint lies in the detection scaled by this factor vote
/// for the detection's vanishing directions.
pub const VOTE_REGION_SCALE: f64 = 1.5;

/// Length-weighted votes per vanishing point from the segments around `det`.
///
/// Each segment votes for the point with the smallest residual angle, if that
/// residual is within `angle_thresh` degrees.
pub fn vote_masses<T: Real>(
    det: &DetBox<T>,
    segments: &[LineSegment<T>],
    vps: &[VanishingPoint<T>],
    angle_thresh: T,
) -> Vec<T> {
    let mut mass = vec![T::zero(); vps.len()];
    if vps.is_empty() {
        return mass;
    }
    let region = det.scaled(cast(VOTE_REGION_SCALE));
    for s in segments.iter().filter(|s| region.contains(&s.midpoint())) {
        let (best, res) = vps
            .iter()
            .enumerate()
            .map(|(k, v)| (k, residual_angle(s, &v.point)))
            .fold((0, T::max_value().unwrap()), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        if res <= angle_thresh {
            mass[best] += s.length();
        }
    }
    mass
}

/// Picks the best-voted horizontal and vertical point from accumulated vote
/// masses, falling back to the best-supported point of each orientation when
/// no vote reached it. Returns indices into `vps`.
pub fn select_by_votes<T: Real>(mass: &[T], vps: &[VanishingPoint<T>]) -> Result<(usize, usize)> {
    let pick = |orientation: Orientation, missing: Error| -> Result<usize> {
        let mut voted: Option<usize> = None;
        let mut fallback: Option<usize> = None;
        for (k, vp) in vps.iter().enumerate() {
            if vp.orientation != orientation {
                continue;
            }
            if fallback.is_none_or(|f| vp.support() > vps[f].support()) {
                fallback = Some(k);
            }
            if mass[k] > T::zero() && voted.is_none_or(|v| mass[k] > mass[v]) {
                voted = Some(k);
            }
        }
        voted.or(fallback).ok_or(missing)
    };
    let h = pick(Orientation::Horizontal, Error::MissingHorizontal)?;
    let v = pick(Orientation::Vertical, Error::MissingVertical)?;
    Ok((h, v))
}

/// Horizontal and vertical vanishing point supported by the segments around
/// the detection.
pub fn vote_box_vps<'a, T: Real>(
    det: &DetBox<T>,
    segments: &[LineSegment<T>],
    vps: &'a [VanishingPoint<T>],
    angle_thresh: T,
) -> Result<(&'a VanishingPoint<T>, &'a VanishingPoint<T>)> {
    let mass = vote_masses(det, segments, vps, angle_thresh);
    let (h, v) = select_by_votes(&mass, vps)?;
    Ok((&vps[h], &vps[v]))
}

/// Replaces the box edges by lines joining each edge midpoint to the vanishing
/// point of the same orientation; the new corners are their four
/// intersections.
pub fn adjust_box<T: Real>(det: &DetBox<T>, vp_h: &HomPoint<T>, vp_v: &HomPoint<T>) -> Result<QuadBox<T>> {
    if vp_h.same_as(vp_v) {
        return Err(Error::Degenerate("horizontal and vertical vanishing points coincide"));
    }
    for vp in [vp_h, vp_v] {
        if vp.to_point().is_some_and(|p| det.contains(&p)) {
            return Err(Error::Adjustment("vanishing point inside the box"));
        }
    }
    let c = det.center();
    let mids = [
        Point::new(c.x, det.ymin),
        Point::new(det.xmax, c.y),
        Point::new(c.x, det.ymax),
        Point::new(det.xmin, c.y),
    ];
    corners_from_midpoints(&mids, vp_h, vp_v, det.score)
}

/// [`adjust_box`] for a quad: each edge is replaced by the line joining its
/// midpoint to the vanishing point of its orientation. Edges that already
/// pass through their vanishing points are kept.
pub fn adjust_quad<T: Real>(q: &QuadBox<T>, vp_h: &HomPoint<T>, vp_v: &HomPoint<T>) -> Result<QuadBox<T>> {
    if vp_h.same_as(vp_v) {
        return Err(Error::Degenerate("horizontal and vertical vanishing points coincide"));
    }
    for vp in [vp_h, vp_v] {
        if vp.to_point().is_some_and(|p| q.contains(&p)) {
            return Err(Error::Adjustment("vanishing point inside the box"));
        }
    }
    let c = q.corners();
    let half: T = cast(0.5);
    let mid = |a: &Point<T>, b: &Point<T>| Point::new((a.x + b.x) * half, (a.y + b.y) * half);
    let mids = [mid(&c[0], &c[1]), mid(&c[1], &c[2]), mid(&c[2], &c[3]), mid(&c[3], &c[0])];
    corners_from_midpoints(&mids, vp_h, vp_v, q.score())
}

/// Corners from the top, right, bottom and left edge midpoints.
fn corners_from_midpoints<T: Real>(
    mids: &[Point<T>; 4],
    vp_h: &HomPoint<T>,
    vp_v: &HomPoint<T>,
    score: T,
) -> Result<QuadBox<T>> {
    let [top_mid, right_mid, bottom_mid, left_mid] = mids.map(|m| HomPoint::from_point(&m));
    // Scaling by the largest component makes axis points exactly (±1, 0, 0)
    // or (0, ±1, 0), so fronto-parallel boxes come back unchanged.
    let unit = |v: &HomPoint<T>| HomPoint::from_vector(v.coords() / v.coords().amax());
    let (vp_h, vp_v) = (&unit(vp_h)?, &unit(vp_v)?);
    let top = line_through(&top_mid, vp_h)?;
    let bottom = line_through(&bottom_mid, vp_h)?;
    let left = line_through(&left_mid, vp_v)?;
    let right = line_through(&right_mid, vp_v)?;

    let corner = |a, b| -> Result<Point<T>> {
        intersect(a, b)
            .map_err(|_| Error::Adjustment("edge lines do not intersect"))?
            .to_point()
            .ok_or(Error::Adjustment("corner at infinity"))
    };
    let corners = [
        corner(&top, &left)?,
        corner(&top, &right)?,
        corner(&bottom, &right)?,
        corner(&bottom, &left)?,
    ];
    QuadBox::new(corners, score).map_err(|_| Error::Adjustment("adjusted quad is not convex"))
}
