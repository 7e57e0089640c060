use super::{Homography, Point};
use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

/// Axis-aligned detection as produced by an object detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetBox<T: Real> {
    pub xmin: T,
    pub ymin: T,
    pub xmax: T,
    pub ymax: T,
    pub score: T,
}

impl<T: Real> DetBox<T> {
    pub fn new(xmin: T, ymin: T, xmax: T, ymax: T, score: T) -> Result<Self> {
        let finite = [xmin, ymin, xmax, ymax, score].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidBox("non-finite coordinate"));
        }
        if !(xmin < xmax && ymin < ymax) {
            return Err(Error::InvalidBox("empty extent"));
        }
        if score < T::zero() || score > T::one() {
            return Err(Error::InvalidBox("score outside [0, 1]"));
        }
        Ok(Self { xmin, ymin, xmax, ymax, score })
    }

    pub fn width(&self) -> T {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> T {
        self.ymax - self.ymin
    }

    pub fn center(&self) -> Point<T> {
        let two: T = cast(2.0);
        Point::new((self.xmin + self.xmax) / two, (self.ymin + self.ymax) / two)
    }

    /// Corners in TL, TR, BR, BL order.
    pub fn corners(&self) -> [Point<T>; 4] {
        [
            Point::new(self.xmin, self.ymin),
            Point::new(self.xmax, self.ymin),
            Point::new(self.xmax, self.ymax),
            Point::new(self.xmin, self.ymax),
        ]
    }

    pub fn to_quad(&self) -> QuadBox<T> {
        QuadBox {
            corners: self.corners(),
            score: self.score,
        }
    }

    /// Box scaled by `factor` about its center.
    pub fn scaled(&self, factor: T) -> Self {
        let c = self.center();
        let two: T = cast(2.0);
        let hw = self.width() * factor / two;
        let hh = self.height() * factor / two;
        Self {
            xmin: c.x - hw,
            ymin: c.y - hh,
            xmax: c.x + hw,
            ymax: c.y + hh,
            score: self.score,
        }
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }
}

/// Perspective bounding box: a strictly convex quad with corners ordered
/// TL, TR, BR, BL (positive shoelace area in y-down image coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadBox<T: Real> {
    corners: [Point<T>; 4],
    score: T,
}

fn cross<T: Real>(o: &Point<T>, a: &Point<T>, b: &Point<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Signed shoelace area (positive for TL→TR→BR→BL order in image coordinates).
fn signed_area<T: Real>(poly: &[Point<T>]) -> T {
    let n = poly.len();
    let mut acc = T::zero();
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    acc / cast(2.0)
}

/// Absolute area of a simple polygon.
pub fn convex_polygon_area<T: Real>(poly: &[Point<T>]) -> T {
    if poly.len() < 3 {
        return T::zero();
    }
    signed_area(poly).abs()
}

impl<T: Real> QuadBox<T> {
    pub fn new(corners: [Point<T>; 4], score: T) -> Result<Self> {
        if corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidQuad("non-finite corner"));
        }
        let scale = corners
            .iter()
            .flat_map(|p| [p.x.abs(), p.y.abs()])
            .fold(T::one(), |a, b| if b > a { b } else { a });
        let tol = T::default_epsilon() * scale * scale * cast(16.0);
        for i in 0..4 {
            let turn = cross(&corners[i], &corners[(i + 1) % 4], &corners[(i + 2) % 4]);
            if turn <= tol {
                return Err(Error::InvalidQuad("corners not strictly convex in TL, TR, BR, BL order"));
            }
        }
        Ok(Self { corners, score })
    }

    /// Builds a quad from four corners in any order: sorts them by angle about
    /// the centroid into positive orientation, then starts at the corner with
    /// the smallest `x + y`.
    pub fn from_unordered(points: [Point<T>; 4], score: T) -> Result<Self> {
        let quarter: T = cast(0.25);
        let cx = points.iter().fold(T::zero(), |a, p| a + p.x) * quarter;
        let cy = points.iter().fold(T::zero(), |a, p| a + p.y) * quarter;
        let mut pts = points.to_vec();
        // y points down, so increasing atan2 runs clockwise on screen, which
        // is the TL→TR→BR→BL direction.
        pts.sort_by(|a, b| {
            let ta = (a.y - cy).atan2(a.x - cx);
            let tb = (b.y - cy).atan2(b.x - cx);
            ta.partial_cmp(&tb).unwrap_or(std::cmp::Ordering::Equal)
        });
        let start = (0..4)
            .min_by(|&i, &j| {
                (pts[i].x + pts[i].y)
                    .partial_cmp(&(pts[j].x + pts[j].y))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("four points");
        let corners = [
            pts[start],
            pts[(start + 1) % 4],
            pts[(start + 2) % 4],
            pts[(start + 3) % 4],
        ];
        Self::new(corners, score)
    }

    pub fn corners(&self) -> &[Point<T>; 4] {
        &self.corners
    }

    pub fn score(&self) -> T {
        self.score
    }

    pub fn with_score(mut self, score: T) -> Self {
        self.score = score;
        self
    }

    pub fn area(&self) -> T {
        signed_area(&self.corners)
    }

    /// Vertex centroid.
    pub fn centroid(&self) -> Point<T> {
        let quarter: T = cast(0.25);
        let (sx, sy) = self
            .corners
            .iter()
            .fold((T::zero(), T::zero()), |(x, y), p| (x + p.x, y + p.y));
        Point::new(sx * quarter, sy * quarter)
    }

    /// Inclusive point-in-convex-quad test.
    pub fn contains(&self, p: &Point<T>) -> bool {
        contains_convex(&self.corners, p)
    }

    /// Corners scaled by `factor` about the vertex centroid.
    pub fn dilated(&self, factor: T) -> Self {
        let c = self.centroid();
        let corners = self.corners.map(|p| c + (p - c) * factor);
        Self { corners, score: self.score }
    }

    pub fn bounds(&self) -> (T, T, T, T) {
        let mut b = (self.corners[0].x, self.corners[0].y, self.corners[0].x, self.corners[0].y);
        for p in &self.corners[1..] {
            if p.x < b.0 {
                b.0 = p.x;
            }
            if p.y < b.1 {
                b.1 = p.y;
            }
            if p.x > b.2 {
                b.2 = p.x;
            }
            if p.y > b.3 {
                b.3 = p.y;
            }
        }
        b
    }

    /// Axis-aligned hull as a detection box.
    pub fn hull(&self) -> DetBox<T> {
        let (xmin, ymin, xmax, ymax) = self.bounds();
        DetBox { xmin, ymin, xmax, ymax, score: self.score }
    }

    /// Image of the quad under `h`; fails when a corner maps to infinity or
    /// the mapped corners are no longer a positively oriented convex quad.
    pub fn project(&self, h: &Homography<T>) -> Result<Self> {
        let mut out = self.corners;
        for (o, p) in out.iter_mut().zip(self.corners.iter()) {
            *o = h
                .map_point(p)
                .ok_or(Error::InvalidQuad("corner projected to infinity"))?;
        }
        Self::new(out, self.score)
    }
}

fn contains_convex<T: Real>(poly: &[Point<T>], p: &Point<T>) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(&poly[i], &poly[(i + 1) % n], p) >= T::zero())
}

/// Sutherland–Hodgman: clip `subject` against the convex, positively
/// oriented `clip` polygon.
fn clip_convex<T: Real>(subject: &[Point<T>], clip: &[Point<T>]) -> Vec<Point<T>> {
    let mut output: Vec<Point<T>> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for k in 0..m {
            let cur = input[k];
            let prev = input[(k + m - 1) % m];
            let cur_in = cross(&a, &b, &cur) >= T::zero();
            let prev_in = cross(&a, &b, &prev) >= T::zero();
            if cur_in {
                if !prev_in {
                    output.push(edge_intersection(&prev, &cur, &a, &b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(edge_intersection(&prev, &cur, &a, &b));
            }
        }
    }
    output
}

fn edge_intersection<T: Real>(p: &Point<T>, q: &Point<T>, a: &Point<T>, b: &Point<T>) -> Point<T> {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom == T::zero() {
        return *q;
    }
    let t = dp / denom;
    p + (q - p) * t
}

/// Area intersection-over-union of two convex quads.
pub fn quad_iou<T: Real>(a: &QuadBox<T>, b: &QuadBox<T>) -> T {
    let area_a = a.area();
    let area_b = b.area();
    let tiny = T::default_epsilon();
    if area_a <= tiny || area_b <= tiny {
        return T::zero();
    }
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    if ax1 < bx0 || bx1 < ax0 || ay1 < by0 || by1 < ay0 {
        return T::zero();
    }
    // Fixed operand order keeps the result exactly symmetric.
    let a_first = a
        .corners
        .iter()
        .zip(b.corners.iter())
        .find_map(|(p, q)| {
            if p.x != q.x {
                Some(p.x < q.x)
            } else if p.y != q.y {
                Some(p.y < q.y)
            } else {
                None
            }
        })
        .unwrap_or(true);
    let inter_poly = if a_first {
        clip_convex(&a.corners, &b.corners)
    } else {
        clip_convex(&b.corners, &a.corners)
    };
    let inter = convex_polygon_area(&inter_poly);
    let inter = if inter < area_a.min(area_b) { inter } else { area_a.min(area_b) };
    let union = area_a + area_b - inter;
    if union <= tiny {
        return T::zero();
    }
    let iou = inter / union;
    if iou > T::one() {
        T::one()
    } else {
        iou
    }
}
