//! Homogeneous 2D primitives, homography estimation and convex quad overlap.
//!
//! Every other module works in these types. Points and lines are stored as
//! raw homogeneous 3-vectors and are only dehomogenized on demand, so points
//! at infinity (vanishing directions) need no special casing.

mod homography;
mod quad;

pub use homography::{dlt_homography, dlt_weighted, Correspondence, Homography};
pub use quad::{convex_polygon_area, quad_iou, DetBox, QuadBox};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::{cast, parallel_tol, Real};

/// Finite image position in pixels (origin top-left, y down).
pub type Point<T> = nalgebra::Point2<T>;

/// Homogeneous image point. Never the zero vector; equality is up to scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint<T: Real>(Vector3<T>);

/// Homogeneous image line `l` with `l · x = 0`. Never the zero vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomLine<T: Real>(Vector3<T>);

fn nonzero<T: Real>(v: &Vector3<T>) -> bool {
    v.iter().all(|c| c.is_finite()) && v.iter().any(|c| *c != T::zero())
}

/// Relative test for two homogeneous vectors being equal up to scale.
fn proportional<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> bool {
    a.cross(b).norm() <= parallel_tol::<T>() * a.norm() * b.norm()
}

impl<T: Real> HomPoint<T> {
    pub fn new(x: T, y: T, w: T) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, w))
    }

    pub fn from_vector(v: Vector3<T>) -> Result<Self> {
        if nonzero(&v) {
            Ok(Self(v))
        } else {
            Err(Error::Degenerate("homogeneous point is zero or non-finite"))
        }
    }

    /// Finite point `(x, y, 1)`.
    pub fn finite(x: T, y: T) -> Self {
        Self(Vector3::new(x, y, T::one()))
    }

    pub fn from_point(p: &Point<T>) -> Self {
        Self::finite(p.x, p.y)
    }

    pub fn coords(&self) -> &Vector3<T> {
        &self.0
    }

    pub fn x(&self) -> T {
        self.0[0]
    }

    pub fn y(&self) -> T {
        self.0[1]
    }

    pub fn w(&self) -> T {
        self.0[2]
    }

    /// Shared finiteness predicate: `|w| < 1e-9 · ‖(x, y)‖`.
    pub fn is_at_infinity(&self) -> bool {
        let xy = (self.0[0] * self.0[0] + self.0[1] * self.0[1]).sqrt();
        self.0[2].abs() < cast::<T>(1e-9) * xy
    }

    /// Dehomogenized position, `None` for points at infinity.
    pub fn to_point(&self) -> Option<Point<T>> {
        if self.is_at_infinity() {
            None
        } else {
            Some(Point::new(self.0[0] / self.0[2], self.0[1] / self.0[2]))
        }
    }

    /// Same point scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Self {
        Self(self.0 / self.0.norm())
    }

    /// True when both vectors describe the same projective point.
    pub fn same_as(&self, other: &Self) -> bool {
        proportional(&self.0, &other.0)
    }
}

impl<T: Real> HomLine<T> {
    pub fn new(a: T, b: T, c: T) -> Result<Self> {
        Self::from_vector(Vector3::new(a, b, c))
    }

    pub fn from_vector(v: Vector3<T>) -> Result<Self> {
        if nonzero(&v) {
            Ok(Self(v))
        } else {
            Err(Error::Degenerate("homogeneous line is zero or non-finite"))
        }
    }

    pub fn coords(&self) -> &Vector3<T> {
        &self.0
    }

    /// Incidence value `l · p`.
    pub fn incidence(&self, p: &HomPoint<T>) -> T {
        self.0.dot(&p.0)
    }

    /// Line scaled so that `(a, b)` is a unit normal; `incidence` of a finite
    /// point with `w = 1` is then its signed distance in pixels.
    pub fn normalized(&self) -> Self {
        let n = (self.0[0] * self.0[0] + self.0[1] * self.0[1]).sqrt();
        if n > T::zero() {
            Self(self.0 / n)
        } else {
            Self(self.0 / self.0.norm())
        }
    }

    pub fn same_as(&self, other: &Self) -> bool {
        proportional(&self.0, &other.0)
    }
}

/// Line through two distinct projective points.
pub fn line_through<T: Real>(p: &HomPoint<T>, q: &HomPoint<T>) -> Result<HomLine<T>> {
    if proportional(&p.0, &q.0) {
        return Err(Error::Degenerate("coincident points do not define a line"));
    }
    Ok(HomLine(p.0.cross(&q.0)))
}

/// Intersection of two distinct lines; parallel lines meet at infinity.
pub fn intersect<T: Real>(a: &HomLine<T>, b: &HomLine<T>) -> Result<HomPoint<T>> {
    if proportional(&a.0, &b.0) {
        return Err(Error::Degenerate("identical lines do not define a point"));
    }
    Ok(HomPoint(a.0.cross(&b.0)))
}

/// `H · p`.
pub fn apply<T: Real>(h: &Homography<T>, p: &HomPoint<T>) -> HomPoint<T> {
    h.apply(p)
}

/// Image line segment between two endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment<T: Real> {
    pub p: Point<T>,
    pub q: Point<T>,
}

impl<T: Real> LineSegment<T> {
    pub fn new(p: Point<T>, q: Point<T>) -> Result<Self> {
        let ok = [p.x, p.y, q.x, q.y].iter().all(|c| c.is_finite());
        if !ok {
            return Err(Error::InvalidSegment("non-finite endpoint"));
        }
        if (p - q).norm() <= T::zero() {
            return Err(Error::InvalidSegment("zero length"));
        }
        Ok(Self { p, q })
    }

    pub fn from_coords(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        Self::new(Point::new(x1, y1), Point::new(x2, y2))
    }

    pub fn length(&self) -> T {
        (self.q - self.p).norm()
    }

    pub fn midpoint(&self) -> Point<T> {
        nalgebra::center(&self.p, &self.q)
    }

    pub fn direction(&self) -> nalgebra::Vector2<T> {
        self.q - self.p
    }

    /// Supporting line.
    pub fn line(&self) -> HomLine<T> {
        HomLine(HomPoint::from_point(&self.p).0.cross(&HomPoint::from_point(&self.q).0))
    }
}

/// Drops segments shorter than `min_len` pixels.
pub fn filter_short<T: Real>(segments: &[LineSegment<T>], min_len: T) -> Vec<LineSegment<T>> {
    segments
        .iter()
        .filter(|s| s.length() >= min_len)
        .copied()
        .collect()
}
