//! Per-plane rectification and column-wise facade segmentation.
//!
//! A rectifier is `S · B · P`: `P` sends the plane's vanishing line to
//! infinity, `B` turns the two vanishing directions into the image axes and
//! `S` is the anisotropic scale plus translation that keeps segment
//! endpoints as close as possible to where they were.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{quad_iou, DetBox, HomPoint, Homography, LineSegment, Point, QuadBox};
use crate::scalar::{cast, Real};
use crate::vanishing::{residual_angle, VanishingPoint};

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn center<T: Real>(&self) -> Point<T> {
        Point::new(cast(self.width as f64 / 2.0), cast(self.height as f64 / 2.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rectifier<T: Real> {
    pub h: Homography<T>,
    pub vp_h: HomPoint<T>,
    pub vp_v: HomPoint<T>,
    pub plane_id: usize,
    /// Fitted `(sx, sy)`, both positive.
    pub scale: (T, T),
    /// Fitted `(tx, ty)`.
    pub translation: (T, T),
    /// `B · P` before the fitted scale and translation.
    pub projective: Matrix3<T>,
}

impl<T: Real> Rectifier<T> {
    /// Rebuilds a rectifier from a bare matrix (as stored on disk). The
    /// vanishing points are recovered as preimages of the axis directions.
    pub fn from_homography(h: Homography<T>, plane_id: usize) -> Self {
        let inv = h.inverse();
        let vp_h = inv.apply(&HomPoint::new(T::one(), T::zero(), T::zero()).expect("nonzero"));
        let vp_v = inv.apply(&HomPoint::new(T::zero(), T::one(), T::zero()).expect("nonzero"));
        Self {
            h,
            vp_h,
            vp_v,
            plane_id,
            scale: (T::one(), T::one()),
            translation: (T::zero(), T::zero()),
            projective: *h.matrix(),
        }
    }

    /// Sum of squared endpoint displacements for a given scale and translation.
    pub fn endpoint_ssd(&self, segments: &[LineSegment<T>], scale: (T, T), translation: (T, T)) -> T {
        let mut acc = T::zero();
        for s in segments {
            for e in [s.p, s.q] {
                let r = self.projective * Vector3::new(e.x, e.y, T::one());
                let (u, v) = (r[0] / r[2], r[1] / r[2]);
                let dx = scale.0 * u + translation.0 - e.x;
                let dy = scale.1 * v + translation.1 - e.y;
                acc += dx * dx + dy * dy;
            }
        }
        acc
    }
}

/// Least-squares `target ≈ s · source + t`.
fn fit_axis<T: Real>(source: &[T], target: &[T]) -> Option<(T, T)> {
    let n: T = cast(source.len() as f64);
    let mu = source.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mt = target.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut cov = T::zero();
    let mut var = T::zero();
    for (&u, &x) in source.iter().zip(target) {
        cov += (u - mu) * (x - mt);
        var += (u - mu) * (u - mu);
    }
    let scale = mu.abs().max(T::one());
    if var <= T::default_epsilon() * n * scale * scale {
        return None;
    }
    let s = cov / var;
    Some((s, mt - s * mu))
}

/// Builds the rectifier for the plane spanned by `vp_h` and `vp_v`.
pub fn build_rectifier<T: Real>(
    vp_h: &HomPoint<T>,
    vp_v: &HomPoint<T>,
    segments: &[LineSegment<T>],
    image: ImageSize,
    plane_id: usize,
) -> Result<Rectifier<T>> {
    if vp_h.same_as(vp_v) {
        return Err(Error::RectifierDegenerate("vanishing points coincide"));
    }
    if segments.is_empty() {
        return Err(Error::RectifierDegenerate("no segments to fit the affine part"));
    }
    let c = image.center::<T>();
    let center = Vector3::new(c.x, c.y, T::one());
    let mut l = vp_h.coords().cross(vp_v.coords());
    let lc = l.dot(&center);
    if lc.abs() <= cast::<T>(1e-9) * l.norm() * center.norm() {
        return Err(Error::RectifierDegenerate("vanishing line passes through the image center"));
    }
    l /= lc;
    let p = Matrix3::new(
        T::one(),
        T::zero(),
        T::zero(),
        T::zero(),
        T::one(),
        T::zero(),
        l[0],
        l[1],
        l[2],
    );

    let unit = |x: T, y: T| -> Result<(T, T)> {
        let n = (x * x + y * y).sqrt();
        if n <= T::zero() {
            return Err(Error::RectifierDegenerate("vanishing point projects to the origin"));
        }
        Ok((x / n, y / n))
    };
    let (mut hx, mut hy) = unit(vp_h.x(), vp_h.y())?;
    if hx < T::zero() {
        hx = -hx;
        hy = -hy;
    }
    let (mut vx, mut vy) = unit(vp_v.x(), vp_v.y())?;
    if vy < T::zero() {
        vx = -vx;
        vy = -vy;
    }
    let dirs = Matrix2::new(hx, vx, hy, vy);
    if dirs.determinant().abs() <= cast(1e-9) {
        return Err(Error::RectifierDegenerate("vanishing directions are parallel"));
    }
    let b2 = dirs.try_inverse().ok_or(Error::RectifierDegenerate("vanishing directions are parallel"))?;
    let mut b = Matrix3::identity();
    b.fixed_view_mut::<2, 2>(0, 0).copy_from(&b2);
    let mut projective = b * p;

    let mut us = Vec::with_capacity(2 * segments.len());
    let mut vs = Vec::with_capacity(2 * segments.len());
    let mut xs = Vec::with_capacity(2 * segments.len());
    let mut ys = Vec::with_capacity(2 * segments.len());
    for s in segments {
        for e in [s.p, s.q] {
            let r = projective * Vector3::new(e.x, e.y, T::one());
            let Some(q) = HomPoint::from_vector(r).ok().and_then(|h| h.to_point()) else {
                continue;
            };
            us.push(q.x);
            vs.push(q.y);
            xs.push(e.x);
            ys.push(e.y);
        }
    }
    if us.len() < 2 {
        return Err(Error::RectifierDegenerate("too few finite segment endpoints"));
    }
    let (mut sx, tx) = fit_axis(&us, &xs).ok_or(Error::RectifierDegenerate("endpoints have no horizontal spread"))?;
    let (mut sy, ty) = fit_axis(&vs, &ys).ok_or(Error::RectifierDegenerate("endpoints have no vertical spread"))?;
    // A negative slope is an axis flip: fold it into B so the scale stays
    // positive. `s · u = (−s) · (−u)` leaves the intercept unchanged.
    if sx < T::zero() {
        sx = -sx;
        for c in 0..3 {
            projective[(0, c)] = -projective[(0, c)];
        }
    }
    if sy < T::zero() {
        sy = -sy;
        for c in 0..3 {
            projective[(1, c)] = -projective[(1, c)];
        }
    }
    if sx <= T::zero() || sy <= T::zero() {
        return Err(Error::RectifierDegenerate("zero fitted scale"));
    }
    let s = Matrix3::new(sx, T::zero(), tx, T::zero(), sy, ty, T::zero(), T::zero(), T::one());
    let h = Homography::new(s * projective).map_err(|_| Error::RectifierDegenerate("singular rectifier"))?;
    Ok(Rectifier {
        h,
        vp_h: *vp_h,
        vp_v: *vp_v,
        plane_id,
        scale: (sx, sy),
        translation: (tx, ty),
        projective,
    })
}

/// Half-open column range `[lo, hi)` assigned to one horizontal vanishing
/// point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColumnInterval {
    pub lo: usize,
    pub hi: usize,
    pub plane_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegParams<T: Real> {
    /// Winning share of the column's total vote.
    pub majority_thresh: T,
    /// Winner over runner-up ratio.
    pub ratio_thresh: T,
    /// Softmax temperature over residual angles, degrees.
    pub softmax_temp: T,
}

impl<T: Real> Default for SegParams<T> {
    fn default() -> Self {
        Self {
            majority_thresh: cast(0.5),
            ratio_thresh: cast(1.5),
            softmax_temp: cast(2.0),
        }
    }
}

/// Segments within 45° of the image x-axis.
fn near_horizontal<T: Real>(s: &LineSegment<T>) -> bool {
    let d = s.direction();
    d.y.abs() <= d.x.abs()
}

/// Per-column vote histogram: `votes[c][k]` is the summed softmax confidence
/// of the near-horizontal segments spanning column `c` for point `k`.
pub fn column_votes<T: Real>(
    segments: &[LineSegment<T>],
    horizontal_vps: &[&VanishingPoint<T>],
    width: usize,
    softmax_temp: T,
) -> Vec<Vec<T>> {
    let k = horizontal_vps.len();
    let mut votes = vec![vec![T::zero(); k]; width];
    if k == 0 || width == 0 {
        return votes;
    }
    let mut conf = vec![T::zero(); k];
    for s in segments.iter().filter(|s| near_horizontal(s)) {
        let logits: Vec<T> = horizontal_vps
            .iter()
            .map(|v| -residual_angle(s, &v.point) / softmax_temp)
            .collect();
        let top = logits.iter().copied().fold(logits[0], |a, b| if b > a { b } else { a });
        let mut total = T::zero();
        for (c, &lg) in conf.iter_mut().zip(&logits) {
            *c = (lg - top).exp();
            total += *c;
        }
        let x0 = s.p.x.min(s.q.x);
        let x1 = s.p.x.max(s.q.x);
        let wmax: T = cast(width as f64);
        if x1 < T::zero() || x0 >= wmax {
            continue;
        }
        let lo = crate::scalar::to_f64(x0.max(T::zero())).floor() as usize;
        let hi = (crate::scalar::to_f64(x1.min(wmax)).ceil() as usize).clamp(lo + 1, width);
        for col in votes[lo.min(width - 1)..hi].iter_mut() {
            for (v, c) in col.iter_mut().zip(&conf) {
                *v += *c / total;
            }
        }
    }
    votes
}

/// Splits `[0, width)` into column intervals, one plane per horizontal
/// vanishing point.
///
/// Columns with a confident majority vote are labeled; gaps between two
/// different labels are cut where the summed vote mass of the two sides is
/// largest (the gap midpoint when the gap has no votes); border gaps join
/// their only neighbour.
pub fn segment_columns<T: Real>(
    segments: &[LineSegment<T>],
    horizontal_vps: &[&VanishingPoint<T>],
    width: usize,
    params: &SegParams<T>,
) -> Result<Vec<ColumnInterval>> {
    if horizontal_vps.is_empty() {
        return Err(Error::MissingHorizontal);
    }
    if width == 0 {
        return Err(Error::InvalidParam("image width must be positive".into()));
    }
    if horizontal_vps.len() == 1 {
        return Ok(vec![ColumnInterval { lo: 0, hi: width, plane_id: 0 }]);
    }
    let votes = column_votes(segments, horizontal_vps, width, params.softmax_temp);

    let labels: Vec<Option<usize>> = votes
        .iter()
        .map(|col| {
            let total = col.iter().fold(T::zero(), |a, &b| a + b);
            if total <= T::zero() {
                return None;
            }
            let mut best = 0;
            for k in 1..col.len() {
                if col[k] > col[best] {
                    best = k;
                }
            }
            let second = col
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != best)
                .fold(T::zero(), |a, (_, &b)| if b > a { b } else { a });
            let confident = col[best] >= params.majority_thresh * total && col[best] >= params.ratio_thresh * second;
            confident.then_some(best)
        })
        .collect();

    let mut runs: Vec<ColumnInterval> = Vec::new();
    for (c, label) in labels.iter().enumerate() {
        let Some(k) = *label else { continue };
        match runs.last_mut() {
            Some(r) if r.plane_id == k && r.hi == c => r.hi = c + 1,
            _ => runs.push(ColumnInterval { lo: c, hi: c + 1, plane_id: k }),
        }
    }
    if runs.is_empty() {
        let best = (0..horizontal_vps.len())
            .max_by(|&a, &b| {
                horizontal_vps[a]
                    .support()
                    .cmp(&horizontal_vps[b].support())
                    .then(b.cmp(&a))
            })
            .expect("nonempty");
        return Ok(vec![ColumnInterval { lo: 0, hi: width, plane_id: best }]);
    }

    runs[0].lo = 0;
    let last = runs.len() - 1;
    runs[last].hi = width;
    for i in 0..last {
        let (g0, g1) = (runs[i].hi, runs[i + 1].lo);
        if g0 >= g1 {
            continue;
        }
        let (a, b) = (runs[i].plane_id, runs[i + 1].plane_id);
        let cut = if a == b {
            g1
        } else {
            best_cut(&votes, g0, g1, a, b)
        };
        runs[i].hi = cut;
        runs[i + 1].lo = cut;
    }

    let mut merged: Vec<ColumnInterval> = Vec::with_capacity(runs.len());
    for r in runs.into_iter().filter(|r| r.lo < r.hi) {
        match merged.last_mut() {
            Some(m) if m.plane_id == r.plane_id && m.hi == r.lo => m.hi = r.hi,
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

/// Cut `t ∈ [g0, g1]` maximizing the vote for `a` left of `t` plus the vote
/// for `b` from `t` on; ties go to the cut nearest the gap midpoint.
fn best_cut<T: Real>(votes: &[Vec<T>], g0: usize, g1: usize, a: usize, b: usize) -> usize {
    let mut right: T = (g0..g1).fold(T::zero(), |acc, c| acc + votes[c][b]);
    let mut left = T::zero();
    let mid2 = g0 + g1;
    let mut best = (g0, left + right);
    for t in g0..=g1 {
        let score = left + right;
        let closer = (2 * t).abs_diff(mid2) < (2 * best.0).abs_diff(mid2);
        if score > best.1 || (score == best.1 && closer) {
            best = (t, score);
        }
        if t < g1 {
            left += votes[t][a];
            right -= votes[t][b];
        }
    }
    best.0
}

/// Maps a box found in the rectified frame of `r` back to the image.
pub fn backproject_quad<T: Real>(det: &DetBox<T>, r: &Rectifier<T>) -> Result<QuadBox<T>> {
    let inv = r.h.inverse();
    let mut out = det.corners();
    for c in out.iter_mut() {
        *c = inv
            .map_point(c)
            .ok_or(Error::Backprojection("corner maps to infinity"))?;
    }
    QuadBox::from_unordered(out, det.score).map_err(|_| Error::Backprojection("backprojected quad is not convex"))
}

/// Which detection streams feed object matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoxMode {
    /// Axis-aligned detections.
    O,
    /// Axis-aligned detections adjusted to the vanishing points.
    OA,
    /// Detections on rectified planes, backprojected.
    R,
    /// Backprojected rectified detections, adjusted.
    RA,
    /// `O ∪ R`.
    OPlusR,
    /// `OA ∪ RA`.
    OPlusRA,
}

impl BoxMode {
    pub const ALL: [BoxMode; 6] = [
        BoxMode::O,
        BoxMode::OA,
        BoxMode::R,
        BoxMode::RA,
        BoxMode::OPlusR,
        BoxMode::OPlusRA,
    ];

    pub fn uses_orthogonal(self) -> bool {
        matches!(self, BoxMode::O | BoxMode::OA | BoxMode::OPlusR | BoxMode::OPlusRA)
    }

    pub fn uses_rectified(self) -> bool {
        matches!(self, BoxMode::R | BoxMode::RA | BoxMode::OPlusR | BoxMode::OPlusRA)
    }

    pub fn adjusted(self) -> bool {
        matches!(self, BoxMode::OA | BoxMode::RA | BoxMode::OPlusRA)
    }
}

impl fmt::Display for BoxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoxMode::O => "O",
            BoxMode::OA => "OA",
            BoxMode::R => "R",
            BoxMode::RA => "RA",
            BoxMode::OPlusR => "O+R",
            BoxMode::OPlusRA => "(O+R)A",
        };
        f.write_str(s)
    }
}

impl FromStr for BoxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "O" => Ok(BoxMode::O),
            "OA" => Ok(BoxMode::OA),
            "R" => Ok(BoxMode::R),
            "RA" => Ok(BoxMode::RA),
            "O+R" => Ok(BoxMode::OPlusR),
            "(O+R)A" | "O+RA" => Ok(BoxMode::OPlusRA),
            other => Err(Error::InvalidParam(format!("unknown box mode {other:?}"))),
        }
    }
}

/// The four detection streams of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionStreams<T: Real> {
    pub orthogonal: Vec<QuadBox<T>>,
    pub adjusted: Vec<QuadBox<T>>,
    pub rectified: Vec<QuadBox<T>>,
    pub rectified_adjusted: Vec<QuadBox<T>>,
}

impl<T: Real> Default for DetectionStreams<T> {
    fn default() -> Self {
        Self {
            orthogonal: Vec::new(),
            adjusted: Vec::new(),
            rectified: Vec::new(),
            rectified_adjusted: Vec::new(),
        }
    }
}

/// Quads overlapping at least this much are the same detection.
pub const DUPLICATE_IOU: f64 = 0.8;

/// Appends `boxes` to `kept`, replacing an existing duplicate when the
/// newcomer scores higher. Kept boxes stay in first-seen order.
pub fn dedup_into<T: Real>(kept: &mut Vec<QuadBox<T>>, boxes: &[QuadBox<T>]) {
    let thresh: T = cast(DUPLICATE_IOU);
    for b in boxes {
        match kept.iter().position(|k| quad_iou(k, b) >= thresh) {
            Some(i) => {
                if b.score() > kept[i].score() {
                    kept[i] = *b;
                }
            }
            None => kept.push(*b),
        }
    }
}

/// Union of the streams selected by `mode`, without duplicates.
pub fn merge_detections<T: Real>(streams: &DetectionStreams<T>, mode: BoxMode) -> Vec<QuadBox<T>> {
    let mut out = Vec::new();
    let parts: Vec<&[QuadBox<T>]> = match mode {
        BoxMode::O => vec![&streams.orthogonal],
        BoxMode::OA => vec![&streams.adjusted],
        BoxMode::R => vec![&streams.rectified],
        BoxMode::RA => vec![&streams.rectified_adjusted],
        BoxMode::OPlusR => vec![&streams.orthogonal, &streams.rectified],
        BoxMode::OPlusRA => vec![&streams.adjusted, &streams.rectified_adjusted],
    };
    for p in parts {
        dedup_into(&mut out, p);
    }
    out
}

/// Angle in degrees between a vector and the closest image axis.
pub fn axis_deviation<T: Real>(dx: T, dy: T) -> T {
    let a = dx.abs().atan2(dy.abs());
    let b = dy.abs().atan2(dx.abs());
    crate::scalar::rad_to_deg(if a < b { a } else { b })
}
