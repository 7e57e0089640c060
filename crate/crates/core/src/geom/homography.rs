use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{HomPoint, Point};
use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

/// Scales `m` to unit norm and flips it so its largest-magnitude entry is
/// positive.
fn normalize<T: Real>(m: Matrix3<T>, norm: T) -> Matrix3<T> {
    // Leave already-normalized matrices untouched so normalization is
    // idempotent bit for bit.
    let mut m = if (norm - T::one()).abs() <= T::default_epsilon() * cast(8.0) {
        m
    } else {
        m / norm
    };
    let mut pivot = m[(0, 0)];
    for r in 0..3 {
        for c in 0..3 {
            if m[(r, c)].abs() > pivot.abs() {
                pivot = m[(r, c)];
            }
        }
    }
    if pivot < T::zero() {
        m = -m;
    }
    m
}

/// Invertible 3×3 projective map, stored with unit Frobenius norm and its
/// largest-magnitude entry positive so that equal maps compare equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography<T: Real> {
    m: Matrix3<T>,
}

impl<T: Real> Homography<T> {
    pub fn new(m: Matrix3<T>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Estimation("non-finite homography entries"));
        }
        let norm = m.norm();
        if norm <= T::zero() {
            return Err(Error::Estimation("zero homography"));
        }
        let m = normalize(m, norm);
        // Conditioning rather than the determinant, which a large
        // translation alone drives towards zero.
        let sv = m.singular_values();
        if sv.min() <= sv.max() * cast::<T>(1e-12).max(T::default_epsilon() * cast(16.0)) {
            return Err(Error::Estimation("singular homography"));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is invertible")
    }

    pub fn from_row_slice(v: &[T]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::Estimation("homography needs 9 entries"));
        }
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.m
    }

    pub fn to_row_major(&self) -> [T; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn apply(&self, p: &HomPoint<T>) -> HomPoint<T> {
        // An invertible map never sends a nonzero vector to zero.
        HomPoint(self.m * p.coords())
    }

    /// Maps a finite point; `None` if the image lies at infinity.
    pub fn map_point(&self, p: &Point<T>) -> Option<Point<T>> {
        self.apply(&HomPoint::from_point(p)).to_point()
    }

    pub fn inverse(&self) -> Self {
        let inv = self
            .m
            .try_inverse()
            .expect("stored homographies are invertible");
        // A valid but ill-conditioned map can have an inverse whose
        // normalized determinant falls below the threshold in `new`.
        Self { m: normalize(inv, inv.norm()) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let m = self.m * other.m;
        Self { m: normalize(m, m.norm()) }
    }

    /// Frobenius distance between the normalized representatives.
    pub fn distance(&self, other: &Self) -> T {
        (self.m - other.m).norm()
    }
}

/// One (possibly weighted) homogeneous correspondence `src ↦ dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T: Real> {
    pub src: HomPoint<T>,
    pub dst: HomPoint<T>,
    pub weight: T,
}

impl<T: Real> Correspondence<T> {
    pub fn points(src: Point<T>, dst: Point<T>) -> Self {
        Self {
            src: HomPoint::from_point(&src),
            dst: HomPoint::from_point(&dst),
            weight: T::one(),
        }
    }
}

/// Isotropic conditioning transform: finite points centered on the origin
/// with mean distance √2. Points at infinity only get scaled.
fn conditioning<'a, T: Real>(pts: impl Iterator<Item = &'a HomPoint<T>> + Clone) -> Matrix3<T> {
    let finite: Vec<Point<T>> = pts.filter_map(|p| p.to_point()).collect();
    if finite.is_empty() {
        return Matrix3::identity();
    }
    let n: T = cast(finite.len() as f64);
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for p in &finite {
        cx += p.x;
        cy += p.y;
    }
    cx /= n;
    cy /= n;
    let mut mean = T::zero();
    for p in &finite {
        mean += ((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)).sqrt();
    }
    mean /= n;
    let s = if mean > T::default_epsilon() {
        cast::<T>(2.0).sqrt() / mean
    } else {
        T::one()
    };
    Matrix3::new(
        s,
        T::zero(),
        -s * cx,
        T::zero(),
        s,
        -s * cy,
        T::zero(),
        T::zero(),
        T::one(),
    )
}

/// Direct linear transform over weighted homogeneous correspondences with
/// isotropic conditioning on both sides.
///
/// Each correspondence contributes the two rows of `dst × (H src) = 0`,
/// computed on unit-normalized conditioned vectors and scaled by
/// `sqrt(weight)`. The solution is the right singular vector of the smallest
/// singular value.
pub fn dlt_weighted<T: Real>(corrs: &[Correspondence<T>]) -> Result<Homography<T>> {
    if corrs.len() < 4 {
        return Err(Error::Estimation("at least four correspondences required"));
    }
    if corrs.iter().any(|c| !(c.weight >= T::zero()) || !c.weight.is_finite()) {
        return Err(Error::Estimation("correspondence weights must be finite and non-negative"));
    }
    let t_src = conditioning(corrs.iter().map(|c| &c.src));
    let t_dst = conditioning(corrs.iter().map(|c| &c.dst));

    let rows = (2 * corrs.len()).max(9);
    let mut a = DMatrix::<T>::zeros(rows, 9);
    for (k, c) in corrs.iter().enumerate() {
        let x: Vector3<T> = t_src * c.src.coords();
        let y: Vector3<T> = t_dst * c.dst.coords();
        let x = x / x.norm();
        let y = y / y.norm();
        let sw = c.weight.sqrt();
        let (u, v, w) = (y[0], y[1], y[2]);
        for j in 0..3 {
            // [0ᵀ, −w xᵀ, v xᵀ]
            a[(2 * k, 3 + j)] = -w * x[j] * sw;
            a[(2 * k, 6 + j)] = v * x[j] * sw;
            // [w xᵀ, 0ᵀ, −u xᵀ]
            a[(2 * k + 1, j)] = w * x[j] * sw;
            a[(2 * k + 1, 6 + j)] = -u * x[j] * sw;
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or(Error::Estimation("singular value decomposition failed"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap_or(std::cmp::Ordering::Equal));
    let smallest = order[0];
    let second = sv[order[1]];
    let largest = sv[order[order.len() - 1]];
    if largest <= T::zero() || second <= T::default_epsilon().sqrt() * largest {
        return Err(Error::Estimation("rank-deficient correspondence system"));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(Error::Estimation("conditioning not invertible"))?;
    Homography::new(t_dst_inv * hn * t_src)
}

/// DLT from finite point pairs `(src, dst)`.
pub fn dlt_homography<T: Real>(pairs: &[(Point<T>, Point<T>)]) -> Result<Homography<T>> {
    let corrs: Vec<_> = pairs
        .iter()
        .map(|(s, d)| Correspondence::points(*s, *d))
        .collect();
    dlt_weighted(&corrs)
}
