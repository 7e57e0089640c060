//! Vanishing points from line segments by sequential RANSAC, and their
//! split into one vertical direction and any number of horizontal ones.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{intersect, HomPoint, LineSegment, Point};
use crate::scalar::{cast, rad_to_deg, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Not yet passed through [`classify`].
    Unclassified,
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingPoint<T: Real> {
    pub point: HomPoint<T>,
    /// Indices into the segment list the point was estimated from.
    pub inliers: Vec<usize>,
    pub orientation: Orientation,
}

impl<T: Real> VanishingPoint<T> {
    pub fn support(&self) -> usize {
        self.inliers.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpParams<T: Real> {
    /// Inlier threshold on [`residual_angle`], degrees.
    pub angle_thresh: T,
    pub min_inliers: usize,
    /// RANSAC samples per extraction round.
    pub max_iterations: usize,
    pub max_vps: usize,
    /// Half-angle of the cone around the image y-axis counted as vertical, degrees.
    pub vertical_cone: T,
    pub rng_seed: u64,
}

impl<T: Real> Default for VpParams<T> {
    fn default() -> Self {
        Self {
            angle_thresh: cast(2.0),
            min_inliers: 5,
            max_iterations: 2000,
            max_vps: 5,
            vertical_cone: cast(20.0),
            rng_seed: 0,
        }
    }
}

impl<T: Real> VpParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_thresh > T::zero()) {
            return Err(Error::InvalidParam("angle threshold must be positive".into()));
        }
        if self.min_inliers < 2 {
            return Err(Error::InvalidParam("min_inliers must be at least 2".into()));
        }
        Ok(())
    }
}

/// Intersection of the supporting lines of two segments.
pub fn vp_from_pair<T: Real>(s1: &LineSegment<T>, s2: &LineSegment<T>) -> Result<HomPoint<T>> {
    intersect(&s1.line(), &s2.line())
        .map_err(|_| Error::Degenerate("segments share a supporting line"))
}

/// Angle in degrees, within `[0, 90]`, between the segment and the direction
/// from its midpoint toward `v` (or `v`'s direction when at infinity).
pub fn residual_angle<T: Real>(s: &LineSegment<T>, v: &HomPoint<T>) -> T {
    let m = s.midpoint();
    let (vx, vy, vw) = (v.x(), v.y(), v.w());
    let dx = vx - m.x * vw;
    let dy = vy - m.y * vw;
    if dx == T::zero() && dy == T::zero() {
        return T::zero();
    }
    let e = s.direction();
    let cr = (e.x * dy - e.y * dx).abs();
    let dt = (e.x * dx + e.y * dy).abs();
    rad_to_deg(cr.atan2(dt))
}

fn count_inliers<T: Real>(segments: &[LineSegment<T>], pool: &[usize], v: &HomPoint<T>, thresh: T) -> usize {
    pool.iter()
        .filter(|&&i| residual_angle(&segments[i], v) <= thresh)
        .count()
}

fn collect_inliers<T: Real>(segments: &[LineSegment<T>], pool: &[usize], v: &HomPoint<T>, thresh: T) -> Vec<usize> {
    pool.iter()
        .copied()
        .filter(|&i| residual_angle(&segments[i], v) <= thresh)
        .collect()
}

/// Length-weighted least-squares vanishing point of a segment set: the
/// smallest right singular vector of the stacked supporting lines, computed
/// in isotropically conditioned coordinates.
pub fn refine_vp<T: Real>(segments: &[LineSegment<T>], ids: &[usize]) -> Option<HomPoint<T>> {
    weighted_vp(segments, ids, &vec![T::one(); ids.len()])
}

/// [`refine_vp`] with an extra weight per segment of `ids`.
fn weighted_vp<T: Real>(segments: &[LineSegment<T>], ids: &[usize], weights: &[T]) -> Option<HomPoint<T>> {
    if ids.len() < 2 {
        return None;
    }
    let n: T = cast((2 * ids.len()) as f64);
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for &i in ids {
        let s = &segments[i];
        cx += s.p.x + s.q.x;
        cy += s.p.y + s.q.y;
    }
    cx /= n;
    cy /= n;
    let mut spread = T::zero();
    for &i in ids {
        let s = &segments[i];
        spread += (s.p - Point::new(cx, cy)).norm() + (s.q - Point::new(cx, cy)).norm();
    }
    spread /= n;
    let k = if spread > T::zero() { cast::<T>(2.0).sqrt() / spread } else { T::one() };
    let cond = Matrix3::new(
        k,
        T::zero(),
        -k * cx,
        T::zero(),
        k,
        -k * cy,
        T::zero(),
        T::zero(),
        T::one(),
    );

    let rows = ids.len().max(3);
    let mut a = DMatrix::<T>::zeros(rows, 3);
    for (r, &i) in ids.iter().enumerate() {
        let s = &segments[i];
        let p = cond * Vector3::new(s.p.x, s.p.y, T::one());
        let q = cond * Vector3::new(s.q.x, s.q.y, T::one());
        let l = p.cross(&q);
        let nrm = (l[0] * l[0] + l[1] * l[1]).sqrt();
        if nrm <= T::zero() {
            continue;
        }
        let w = weights[r] * s.length().sqrt() / nrm;
        for c in 0..3 {
            a[(r, c)] = l[c] * w;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    let mut smallest = 0;
    for i in 1..sv.len() {
        if sv[i] < sv[smallest] {
            smallest = i;
        }
    }
    let v = Vector3::new(v_t[(smallest, 0)], v_t[(smallest, 1)], v_t[(smallest, 2)]);
    let v = cond.try_inverse()? * v;
    HomPoint::from_vector(v / v.norm()).ok()
}

/// Sequential RANSAC over 2-segment samples drawn with probability
/// proportional to segment length.
///
/// Each round keeps the hypothesis with the most inliers, refines it by
/// least squares, removes its inliers and repeats until support drops below
/// `min_inliers` or `max_vps` points were found. A final pass moves each
/// inlier to the point it fits best. Output is ordered by decreasing support
/// and is fully determined by `params.rng_seed`.
pub fn estimate_vps<T: Real>(segments: &[LineSegment<T>], params: &VpParams<T>) -> Result<Vec<VanishingPoint<T>>> {
    params.validate()?;
    let mut out: Vec<VanishingPoint<T>> = Vec::new();
    let mut remaining: Vec<usize> = (0..segments.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let thresh = params.angle_thresh;

    while out.len() < params.max_vps && remaining.len() >= params.min_inliers.max(2) {
        let weights: Vec<f64> = remaining.iter().map(|&i| to_f64(segments[i].length())).collect();
        let Ok(dist) = WeightedIndex::new(&weights) else {
            break;
        };
        let mut best: Option<(HomPoint<T>, usize)> = None;
        for _ in 0..params.max_iterations {
            let a = dist.sample(&mut rng);
            let mut b = dist.sample(&mut rng);
            let mut tries = 0;
            while b == a && tries < 8 {
                b = dist.sample(&mut rng);
                tries += 1;
            }
            if a == b {
                continue;
            }
            let Ok(v) = vp_from_pair(&segments[remaining[a]], &segments[remaining[b]]) else {
                continue;
            };
            let count = count_inliers(segments, &remaining, &v, thresh);
            if best.as_ref().is_none_or(|(_, c)| count > *c) {
                best = Some((v, count));
            }
        }
        let Some((sampled, count)) = best else {
            break;
        };
        if count < params.min_inliers {
            break;
        }

        let mut point = sampled;
        let mut inliers = collect_inliers(segments, &remaining, &point, thresh);
        for _ in 0..3 {
            let Some(refined) = refine_vp(segments, &inliers) else {
                break;
            };
            let refined_inliers = collect_inliers(segments, &remaining, &refined, thresh);
            if refined_inliers.len() < inliers.len() {
                break;
            }
            let unchanged = refined_inliers == inliers;
            point = refined;
            inliers = refined_inliers;
            if unchanged {
                break;
            }
        }

        let robust = robust_vp(segments, &inliers, point, thresh);
        let robust_inliers = collect_inliers(segments, &remaining, &robust, thresh);
        if robust_inliers.len() >= params.min_inliers {
            point = robust;
            inliers = robust_inliers;
        }

        remaining.retain(|i| inliers.binary_search(i).is_err());
        out.push(VanishingPoint {
            point,
            inliers,
            orientation: Orientation::Unclassified,
        });
    }
    reassign(segments, &mut out, params);
    out.sort_by_key(|v| std::cmp::Reverse(v.support()));
    Ok(out)
}

/// Outliers and segments of a neighbouring pencil can fall within the
/// threshold and drag the least-squares point. Reweights `ids` by residual
/// to the current estimate, with a scale shrinking from `thresh` to a
/// quarter of it, so they lose their pull.
fn robust_vp<T: Real>(segments: &[LineSegment<T>], ids: &[usize], start: HomPoint<T>, thresh: T) -> HomPoint<T> {
    let mut point = start;
    for div in [1.0, 2.0, 4.0, 4.0, 4.0] {
        let scale = thresh / cast(div);
        let w: Vec<T> = ids
            .iter()
            .map(|&i| {
                let r = residual_angle(&segments[i], &point) / scale;
                T::one() / (T::one() + r * r)
            })
            .collect();
        match weighted_vp(segments, ids, &w) {
            Some(v) => point = v,
            None => break,
        }
    }
    point
}

/// A segment can lie within the threshold of several points, and the
/// sequential rounds hand it to whichever came first. Gives every inlier to
/// the point it fits best and refits, twice; points left with fewer than
/// `min_inliers` segments are dropped.
fn reassign<T: Real>(segments: &[LineSegment<T>], vps: &mut Vec<VanishingPoint<T>>, params: &VpParams<T>) {
    for _ in 0..2 {
        let mut all: Vec<usize> = vps.iter().flat_map(|v| v.inliers.iter().copied()).collect();
        all.sort_unstable();
        let mut owned: Vec<Vec<usize>> = vec![Vec::new(); vps.len()];
        for i in all {
            let r: Vec<T> = vps.iter().map(|v| residual_angle(&segments[i], &v.point)).collect();
            let best = (0..vps.len())
                .min_by(|&a, &b| r[a].partial_cmp(&r[b]).unwrap_or(std::cmp::Ordering::Equal))
                .expect("inliers imply a point");
            owned[best].push(i);
        }
        for (v, ids) in vps.iter_mut().zip(owned) {
            let start = refine_vp(segments, &ids).unwrap_or(v.point);
            let refit = (ids.len() >= 2).then(|| robust_vp(segments, &ids, start, params.angle_thresh)).map(|p| {
                let kept: Vec<usize> = ids.iter().copied().filter(|&i| residual_angle(&segments[i], &p) <= params.angle_thresh).collect();
                (p, kept)
            });
            match refit {
                Some((p, kept)) if kept.len() >= params.min_inliers => {
                    v.point = p;
                    v.inliers = kept;
                }
                _ => v.inliers = ids,
            }
        }
        vps.retain(|v| v.inliers.len() >= params.min_inliers);
    }
}

/// Angle in degrees between the image y-axis and the direction of `v` as seen
/// from `center`; `None` when `v` coincides with `center`.
pub fn angle_from_vertical<T: Real>(v: &HomPoint<T>, center: &Point<T>) -> Option<T> {
    let dx = v.x() - center.x * v.w();
    let dy = v.y() - center.y * v.w();
    if dx == T::zero() && dy == T::zero() {
        return None;
    }
    Some(rad_to_deg(dx.abs().atan2(dy.abs())))
}

/// Marks the best-supported point within `vertical_cone` of the image y-axis
/// as vertical and every other point as horizontal.
pub fn classify<T: Real>(vps: &mut [VanishingPoint<T>], params: &VpParams<T>, center: &Point<T>) {
    let mut vertical: Option<usize> = None;
    for (i, vp) in vps.iter().enumerate() {
        let is_vertical = angle_from_vertical(&vp.point, center).is_some_and(|a| a <= params.vertical_cone);
        if is_vertical && vertical.is_none_or(|j| vp.support() > vps[j].support()) {
            vertical = Some(i);
        }
    }
    for (i, vp) in vps.iter_mut().enumerate() {
        vp.orientation = if Some(i) == vertical {
            Orientation::Vertical
        } else {
            Orientation::Horizontal
        };
    }
}

/// The vertical point, if classification found one.
pub fn vertical<T: Real>(vps: &[VanishingPoint<T>]) -> Result<&VanishingPoint<T>> {
    vps.iter()
        .find(|v| v.orientation == Orientation::Vertical)
        .ok_or(Error::MissingVertical)
}

/// Horizontal points in support order.
pub fn horizontals<T: Real>(vps: &[VanishingPoint<T>]) -> Vec<&VanishingPoint<T>> {
    vps.iter()
        .filter(|v| v.orientation == Orientation::Horizontal)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seg(x1: f64, y1: f64, x2: f64, y2: f64) -> LineSegment<f64> {
        LineSegment::from_coords(x1, y1, x2, y2).unwrap()
    }

    fn toward(vp: (f64, f64), mid: (f64, f64), len: f64) -> LineSegment<f64> {
        let d = (vp.0 - mid.0, vp.1 - mid.1);
        let n = (d.0 * d.0 + d.1 * d.1).sqrt();
        let (ux, uy) = (d.0 / n * len / 2.0, d.1 / n * len / 2.0);
        seg(mid.0 - ux, mid.1 - uy, mid.0 + ux, mid.1 + uy)
    }

    #[test]
    fn pair_of_verticals_meets_at_infinity() {
        let v = vp_from_pair(&seg(10.0, 0.0, 10.0, 50.0), &seg(80.0, 5.0, 80.0, 90.0)).unwrap();
        assert!(v.is_at_infinity());
        assert!(v.same_as(&HomPoint::new(0.0, 1.0, 0.0).unwrap()));
    }

    #[test]
    fn pair_on_diagonals_meets_at_origin() {
        let v = vp_from_pair(&seg(1.0, 1.0, 3.0, 3.0), &seg(1.0, -1.0, 4.0, -4.0)).unwrap();
        assert!(v.same_as(&HomPoint::finite(0.0, 0.0)));
    }

    #[test]
    fn converging_pair_recovers_point() {
        let a = toward((500.0, 300.0), (100.0, 200.0), 60.0);
        let b = toward((500.0, 300.0), (120.0, 420.0), 80.0);
        let p = vp_from_pair(&a, &b).unwrap().to_point().unwrap();
        assert!((p - Point::new(500.0, 300.0)).norm() < 1e-6);
    }

    #[test]
    fn collinear_pair_is_degenerate() {
        assert!(vp_from_pair(&seg(0.0, 0.0, 10.0, 0.0), &seg(20.0, 0.0, 40.0, 0.0)).is_err());
    }

    #[test]
    fn residual_angle_cases() {
        let h = seg(0.0, 0.0, 10.0, 0.0);
        let inf_x = HomPoint::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(residual_angle(&h, &inf_x), 0.0);
        assert!((residual_angle(&seg(0.0, 0.0, 0.0, 10.0), &inf_x) - 90.0).abs() < 1e-12);
        assert!((residual_angle(&seg(0.0, 0.0, 5.0, 5.0), &inf_x) - 45.0).abs() < 1e-12);
        let at_mid = HomPoint::finite(5.0, 0.0);
        assert_eq!(residual_angle(&h, &at_mid), 0.0);
    }

    #[test]
    fn axis_aligned_families() {
        let mut segs = Vec::new();
        for k in 0..50 {
            let x = 10.0 + 15.0 * k as f64;
            segs.push(seg(x, 100.0, x, 160.0 + k as f64));
        }
        for k in 0..50 {
            let y = 12.0 + 13.0 * k as f64;
            segs.push(seg(200.0, y, 260.0 + 2.0 * k as f64, y));
        }
        let vps = estimate_vps(&segs, &VpParams::default()).unwrap();
        assert_eq!(vps.len(), 2);
        assert_eq!(vps[0].support(), 50);
        assert_eq!(vps[1].support(), 50);
        assert!(vps.iter().all(|v| v.point.is_at_infinity()));
    }

    #[test]
    fn empty_input_yields_nothing() {
        let vps = estimate_vps::<f64>(&[], &VpParams::default()).unwrap();
        assert!(vps.is_empty());
    }

    #[test]
    fn pencil_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let vp = (2000.0, 400.0);
        let mut segs = Vec::new();
        for _ in 0..40 {
            let mid = (rng.random_range(0.0..1000.0), rng.random_range(0.0..800.0));
            segs.push(toward(vp, mid, rng.random_range(30.0..150.0)));
        }
        for _ in 0..20 {
            let mid = (rng.random_range(0.0..1000.0), rng.random_range(0.0..800.0));
            let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let l = rng.random_range(30.0..150.0) / 2.0;
            segs.push(seg(mid.0 - l * t.cos(), mid.1 - l * t.sin(), mid.0 + l * t.cos(), mid.1 + l * t.sin()));
        }
        let vps = estimate_vps(&segs, &VpParams::default()).unwrap();
        let first = &vps[0];
        assert!(first.support() >= 40);
        for s in &segs[..40] {
            assert!(residual_angle(s, &first.point) < 0.5);
        }
    }

    #[test]
    fn noiseless_pencil_refines_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vp = (-700.0, 350.0);
        let segs: Vec<_> = (0..30)
            .map(|_| {
                let mid = (rng.random_range(0.0..1000.0), rng.random_range(0.0..800.0));
                toward(vp, mid, rng.random_range(30.0..150.0))
            })
            .collect();
        let vps = estimate_vps(&segs, &VpParams::default()).unwrap();
        assert_eq!(vps[0].support(), 30);
        for s in &segs {
            assert!(residual_angle(s, &vps[0].point) < 1e-6);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let segs: Vec<_> = (0..80)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..900.0), rng.random_range(0.0..900.0));
                let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
                seg(x, y, x + 40.0 * t.cos(), y + 40.0 * t.sin())
            })
            .collect();
        let params = VpParams { min_inliers: 3, ..VpParams::default() };
        assert_eq!(estimate_vps(&segs, &params).unwrap(), estimate_vps(&segs, &params).unwrap());
    }

    #[test]
    fn classification() {
        let center = Point::new(960.0, 540.0);
        let mk = |p: HomPoint<f64>, n: usize| VanishingPoint {
            point: p,
            inliers: (0..n).collect(),
            orientation: Orientation::Unclassified,
        };
        let mut vps = vec![
            mk(HomPoint::new(1.0, 0.0, 0.0).unwrap(), 30),
            mk(HomPoint::new(0.0, 1.0, 0.0).unwrap(), 20),
            mk(HomPoint::finite(10000.0, 350.0), 10),
        ];
        classify(&mut vps, &VpParams::default(), &center);
        assert_eq!(vps[0].orientation, Orientation::Horizontal);
        assert_eq!(vps[1].orientation, Orientation::Vertical);
        assert_eq!(vps[2].orientation, Orientation::Horizontal);
        assert_eq!(horizontals(&vps).len(), 2);
        assert!(vertical(&vps).is_ok());
    }

    #[test]
    fn no_vertical_is_flagged() {
        let mut vps = vec![VanishingPoint {
            point: HomPoint::new(1.0, 0.0, 0.0).unwrap(),
            inliers: vec![0, 1],
            orientation: Orientation::Unclassified,
        }];
        classify(&mut vps, &VpParams::default(), &Point::new(0.0, 0.0));
        assert_eq!(vertical(&vps).unwrap_err(), Error::MissingVertical);
    }
}
