//! Synthetic facade scenes with known geometry, and the brute-force oracles
//! the pipeline is checked against.
//!
//! Both views are upright pinhole cameras looking at vertical rectangular
//! facades, so every facade has a horizontal vanishing point of its own and
//! all share the vertical one. Plane coordinates `(u, v)` map to image `k`
//! through `K·R_k·[e_u | e_v | A − C_k]`.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::{DetBox, HomPoint, Homography, LineSegment, Point, QuadBox};
use crate::guided::{Frame, ImageInputs, Match, MatchSet, TaggedQuad};
use crate::geom::quad_iou;
use crate::objmatch::{cosine, hypothesis, Feature};
use crate::rectify::{build_rectifier, ColumnInterval, ImageSize, Rectifier};

/// How the simulated detector turns a window into an axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorModel {
    /// Tight axis-aligned hull of the corners.
    Hull,
    /// Box whose edges pass through the midpoints of the window edges.
    Midline,
}

/// A vertical facade carrying a grid of windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facade {
    /// Image-1 columns spanned by the facade.
    pub columns: (f64, f64),
    /// Image-1 rows of the facade's top and bottom at its left edge.
    pub rows: (f64, f64),
    /// Rotation about the vertical axis; 0 faces the camera.
    pub yaw_deg: f64,
    /// Depth of the left edge in view 1.
    pub depth: f64,
    /// Window rows and columns.
    pub grid: (usize, usize),
    /// Window size as a fraction of its grid cell.
    pub fill: (f64, f64),
}

/// Pose of the second camera relative to the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub center: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    /// Per-coordinate σ of detected window corners, in pixels.
    pub corner_sigma: f64,
    /// σ of the rotation applied to each segment about its midpoint.
    pub segment_sigma_deg: f64,
    /// Share of all segments that are random outliers.
    pub outlier_fraction: f64,
    /// Off-plane boxes per image.
    pub distractors: usize,
    /// Per-component σ added to view-2 descriptors before renormalizing.
    pub descriptor_sigma: f64,
    /// Share of view-2 descriptors replaced by unrelated ones.
    pub replaced_fraction: f64,
}

impl Noise {
    pub fn none() -> Self {
        Self {
            corner_sigma: 0.0,
            segment_sigma_deg: 0.0,
            outlier_fraction: 0.0,
            distractors: 0,
            descriptor_sigma: 0.0,
            replaced_fraction: 0.0,
        }
    }

    /// Default geometry noise with descriptors degraded as between a day
    /// and a night exposure.
    pub fn day_night() -> Self {
        Self { descriptor_sigma: 0.4, ..Self::default() }
    }
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            corner_sigma: 1.0,
            segment_sigma_deg: 0.2,
            outlier_fraction: 0.2,
            distractors: 2,
            descriptor_sigma: 0.05,
            replaced_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub size: ImageSize,
    pub focal: f64,
    pub motion: Motion,
    pub facades: Vec<Facade>,
    pub noise: Noise,
    pub detector: DetectorModel,
    /// Windows whose projected quad covers less than this fraction of its
    /// axis-aligned hull go undetected in the original image.
    pub min_fill: f64,
    pub descriptor_dim: usize,
    /// Random keypoints per facade.
    pub plane_features: usize,
    /// Unmatched clutter keypoints per image.
    pub background_features: usize,
    /// One keypoint near each window corner.
    pub corner_features: bool,
    /// One keypoint at each window center.
    pub center_features: bool,
    /// All planted keypoints share a single descriptor.
    pub repeated_texture: bool,
    /// Also emit detections made on rectified facades.
    pub rectified: bool,
}

impl SceneSpec {
    /// Two facades meeting near the image middle, each turned away from the
    /// camera; parameters jittered from `seed`.
    pub fn two_facades(seed: u64) -> Self {
        Self::corner_scene(seed, 20.0..35.0)
    }

    /// Like [`two_facades`](Self::two_facades), with the right facade turned
    /// 58 to 62 degrees away and an original-image detector that misses
    /// windows foreshortened below 90% hull fill.
    pub fn slanted_pair(seed: u64) -> Self {
        let mut s = Self::corner_scene(seed, 58.0..62.0);
        s.min_fill = 0.9;
        s
    }

    fn corner_scene(seed: u64, right_yaw: std::ops::Range<f64>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_face);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let left = Facade {
                columns: (60.0 + rng.random_range(0.0..40.0), 550.0 + rng.random_range(-20.0..20.0)),
                rows: (220.0 + rng.random_range(-20.0..20.0), 580.0 + rng.random_range(-20.0..20.0)),
                yaw_deg: -rng.random_range(20.0..35.0),
                depth: 1500.0 + rng.random_range(-200.0..200.0),
                grid: (3, 4),
                fill: (0.55, 0.6),
            };
            let right = Facade {
                columns: (650.0 + rng.random_range(-20.0..20.0), 1120.0 + rng.random_range(-30.0..0.0)),
                rows: (230.0 + rng.random_range(-20.0..20.0), 570.0 + rng.random_range(-20.0..20.0)),
                yaw_deg: rng.random_range(right_yaw.clone()),
                depth: 1300.0 + rng.random_range(-200.0..200.0),
                grid: (3, 3),
                fill: (0.55, 0.6),
            };
            let spec = Self {
                seed,
                size: ImageSize::new(1200, 800),
                focal: 1000.0,
                motion: {
                    // Step sideways and turn back toward the facades.
                    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let tx: f64 = rng.random_range(70.0..120.0);
                    Motion {
                        yaw_deg: side * (tx / 40.0 + rng.random_range(-0.6..0.6)),
                        pitch_deg: 0.0,
                        center: [side * tx, 0.0, rng.random_range(-50.0..30.0)],
                    }
                },
                facades: vec![left, right],
                noise: Noise::default(),
                detector: DetectorModel::Hull,
                min_fill: 0.0,
                descriptor_dim: 128,
                plane_features: 80,
                background_features: 60,
                corner_features: true,
                center_features: false,
                repeated_texture: false,
                rectified: true,
            };
            // Give up after a while; `generate` then reports the misfit.
            if facade_geometry(&spec).is_ok() || attempts >= 1000 {
                return spec;
            }
        }
    }

    /// One facade with a single window grid.
    pub fn single_facade(seed: u64, grid: (usize, usize), yaw_deg: f64) -> Self {
        let mut s = Self::two_facades(seed);
        s.facades = vec![Facade {
            columns: (250.0, 900.0),
            rows: (150.0, 650.0),
            yaw_deg,
            depth: 1400.0,
            grid,
            fill: (0.5, 0.5),
        }];
        s
    }
}

/// What a scene was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// View 1 → view 2, per facade.
    pub plane_h: Vec<Homography<f64>>,
    /// Facade plane → view `k`.
    pub plane_to_image: [Vec<Homography<f64>>; 2],
    /// `(horizontal, vertical)` vanishing point per facade and view.
    pub vps: [Vec<(HomPoint<f64>, HomPoint<f64>)>; 2],
    /// Exact window quads per facade and view.
    pub windows: [Vec<Vec<QuadBox<f64>>>; 2],
    /// `(box in view 1, box in view 2, facade)`.
    pub box_pairs: Vec<(usize, usize, usize)>,
    /// Distractor box indices per view.
    pub distractors: [Vec<usize>; 2],
    /// `(feature id in view 1, feature id in view 2, facade)`.
    pub feature_pairs: Vec<(usize, usize, usize)>,
    /// Column range `[lo, hi)` covered by each facade, per view.
    pub extents: [Vec<(f64, f64)>; 2],
}

impl GroundTruth {
    /// Facades as a partition of `[0, width)`: gaps split at their midpoint,
    /// border gaps joined to their neighbour.
    pub fn columns(&self, view: usize, width: usize) -> Vec<ColumnInterval> {
        let mut ext: Vec<(f64, f64, usize)> = self.extents[view].iter().enumerate().map(|(k, e)| (e.0, e.1, k)).collect();
        ext.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = Vec::new();
        let mut lo = 0usize;
        for (n, e) in ext.iter().enumerate() {
            let hi = match ext.get(n + 1) {
                Some(next) => (((e.1 + next.0) / 2.0).round().max(0.0) as usize).clamp(lo + 1, width),
                None => width,
            };
            if hi > lo {
                out.push(ColumnInterval { lo, hi, plane_id: e.2 });
            }
            lo = hi;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub views: [ImageInputs<f64>; 2],
    pub truth: GroundTruth,
}

struct Camera {
    k: Matrix3<f64>,
    r: Matrix3<f64>,
    c: Vector3<f64>,
}

impl Camera {
    fn plane_matrix(&self, a: &Vector3<f64>, e_u: &Vector3<f64>, e_v: &Vector3<f64>) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        m.set_column(0, e_u);
        m.set_column(1, e_v);
        m.set_column(2, &(a - self.c));
        self.k * self.r * m
    }

    fn depth(&self, p: &Vector3<f64>) -> f64 {
        (self.r * (p - self.c))[2]
    }
}

fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Unit vector with i.i.d. Gaussian components.
pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn perturb(rng: &mut impl Rng, d: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return d.to_vec();
    }
    let n = Normal::new(0.0, sigma).unwrap();
    loop {
        let v: Vec<f64> = d.iter().map(|x| x + n.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn rotate_segment(rng: &mut impl Rng, s: &LineSegment<f64>, sigma_deg: f64) -> LineSegment<f64> {
    if sigma_deg <= 0.0 {
        return *s;
    }
    let a = Normal::new(0.0, sigma_deg).unwrap().sample(rng).to_radians();
    let (sn, cs) = a.sin_cos();
    let m = s.midpoint();
    let rot = |p: &Point<f64>| {
        let (dx, dy) = (p.x - m.x, p.y - m.y);
        Point::new(m.x + cs * dx - sn * dy, m.y + sn * dx + cs * dy)
    };
    LineSegment::new(rot(&s.p), rot(&s.q)).unwrap_or(*s)
}

fn map(h: &Matrix3<f64>, u: f64, v: f64) -> Point<f64> {
    let p = h * Vector3::new(u, v, 1.0);
    Point::new(p[0] / p[2], p[1] / p[2])
}

fn inside(size: ImageSize, p: &Point<f64>) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x < size.width as f64 && p.y < size.height as f64
}

fn detect(model: DetectorModel, c: &[Point<f64>; 4], score: f64) -> Option<DetBox<f64>> {
    let (x0, y0, x1, y1) = match model {
        DetectorModel::Hull => (
            c.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            c.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
            c.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            c.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        ),
        DetectorModel::Midline => (
            (c[0].x + c[3].x) / 2.0,
            (c[0].y + c[1].y) / 2.0,
            (c[1].x + c[2].x) / 2.0,
            (c[3].y + c[2].y) / 2.0,
        ),
    };
    DetBox::new(x0, y0, x1, y1, score).ok()
}

fn overlaps(a: &DetBox<f64>, b: &DetBox<f64>) -> bool {
    a.xmin < b.xmax && b.xmin < a.xmax && a.ymin < b.ymax && b.ymin < a.ymax
}

fn grown(b: &DetBox<f64>) -> DetBox<f64> {
    let (w, h) = (b.xmax - b.xmin, b.ymax - b.ymin);
    DetBox { xmin: b.xmin - w / 2.0, ymin: b.ymin - h / 2.0, xmax: b.xmax + w / 2.0, ymax: b.ymax + h / 2.0, ..*b }
}

/// Whether a homography through some box pair of `a` (view 1) and `c`
/// (view 2) is supported by a second pair involving a distractor. Boxes are
/// flagged `true` for distractors.
fn chance_support(a: &[(QuadBox<f64>, bool)], c: &[(QuadBox<f64>, bool)]) -> bool {
    for (i, (qa, da)) in a.iter().enumerate() {
        for (j, (qc, dc)) in c.iter().enumerate() {
            let Ok(h) = hypothesis(qa, qc) else { continue };
            for (i2, (qa2, da2)) in a.iter().enumerate() {
                if i2 == i {
                    continue;
                }
                let any = *da || *dc || *da2;
                if !any && !c.iter().any(|t| t.1) {
                    continue;
                }
                let Ok(p) = qa2.project(&h) else { continue };
                let ph = p.hull();
                for (j2, (qc2, dc2)) in c.iter().enumerate() {
                    if j2 != j && (any || *dc2) && overlaps(&ph, &qc2.hull()) && quad_iou(&p, qc2) > 0.35 {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Hull of `b` mapped through `h`; `None` when the box straddles the line
/// `h` sends to infinity.
fn mapped_hull(h: &Homography<f64>, b: &DetBox<f64>) -> Option<DetBox<f64>> {
    let img: Vec<HomPoint<f64>> = b.corners().iter().map(|c| h.apply(&HomPoint::from_point(c))).collect();
    let first = img[0].w().signum();
    if img.iter().any(|p| p.w().abs() < 1e-12 || p.w().signum() != first) {
        return None;
    }
    let pts: Vec<Point<f64>> = img.iter().filter_map(|p| p.to_point()).collect();
    DetBox::new(
        pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
        pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        1.0,
    )
    .ok()
}

struct PlaneGeom {
    to_image: [Matrix3<f64>; 2],
    width: f64,
    height: f64,
    /// Window rectangles in plane coordinates: `(u0, v0, u1, v1)`.
    windows: Vec<(f64, f64, f64, f64)>,
}

/// Plane-to-image maps and window layout of every facade, checked to fit
/// in front of both cameras and inside both images.
fn facade_geometry(spec: &SceneSpec) -> Result<Vec<PlaneGeom>> {
    let gen_err = |m: &str| Error::Generation(m.to_string());
    let size = spec.size;
    let (cx, cy) = (size.width as f64 / 2.0, size.height as f64 / 2.0);
    let f = spec.focal;
    let k = Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0);
    let cams = [
        Camera { k, r: Matrix3::identity(), c: Vector3::zeros() },
        Camera {
            k,
            r: rot_x(spec.motion.pitch_deg) * rot_y(spec.motion.yaw_deg),
            c: Vector3::from(spec.motion.center),
        },
    ];

    let mut planes = Vec::new();
    for fa in &spec.facades {
        let (rows, cols) = fa.grid;
        if rows == 0 || cols == 0 || !(fa.fill.0 > 0.0 && fa.fill.0 < 1.0 && fa.fill.1 > 0.0 && fa.fill.1 < 1.0) {
            return Err(gen_err("window grid cannot fit"));
        }
        if !(fa.depth > 0.0) || fa.rows.1 <= fa.rows.0 || fa.columns.1 <= fa.columns.0 {
            return Err(gen_err("invalid facade placement"));
        }
        let (s, c) = fa.yaw_deg.to_radians().sin_cos();
        let e_u = Vector3::new(c, 0.0, s);
        let e_v = Vector3::new(0.0, 1.0, 0.0);
        let az = fa.depth;
        let a = Vector3::new((fa.columns.0 - cx) * az / f, (fa.rows.0 - cy) * az / f, az);
        let height = (fa.rows.1 - fa.rows.0) * az / f;
        let kx = (fa.columns.1 - cx) / f;
        let width = (kx * az - a[0]) / (c - kx * s);
        if !(width > 0.0) || !width.is_finite() {
            return Err(gen_err("facade columns unreachable at this yaw"));
        }
        let to_image = [cams[0].plane_matrix(&a, &e_u, &e_v), cams[1].plane_matrix(&a, &e_u, &e_v)];
        for cam in &cams {
            for (u, v) in [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)] {
                if cam.depth(&(a + e_u * u + e_v * v)) <= 1.0 {
                    return Err(gen_err("facade behind a camera"));
                }
            }
        }
        for m in &to_image {
            for (u, v) in [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)] {
                if !inside(size, &map(m, u, v)) {
                    return Err(gen_err("facade leaves the image"));
                }
            }
        }
        let (cw, ch) = (width / cols as f64, height / rows as f64);
        let (ww, wh) = (cw * fa.fill.0, ch * fa.fill.1);
        let mut windows = Vec::new();
        for r in 0..rows {
            for col in 0..cols {
                let u0 = col as f64 * cw + (cw - ww) / 2.0;
                let v0 = r as f64 * ch + (ch - wh) / 2.0;
                windows.push((u0, v0, u0 + ww, v0 + wh));
            }
        }
        planes.push(PlaneGeom { to_image, width, height, windows });
    }
    Ok(planes)
}

/// Builds both views of `spec`. Fails when the layout does not fit in both
/// images or a facade passes behind a camera.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    let gen_err = |m: &str| Error::Generation(m.to_string());
    if spec.facades.is_empty() {
        return Err(gen_err("no facades"));
    }
    if spec.descriptor_dim == 0 {
        return Err(gen_err("descriptor dimension must be positive"));
    }
    if !(0.0..1.0).contains(&spec.noise.outlier_fraction) || !(0.0..=1.0).contains(&spec.noise.replaced_fraction) {
        return Err(gen_err("fractions out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.size;
    let planes = facade_geometry(spec)?;

    let mut plane_h = Vec::new();
    let mut plane_to_image: [Vec<Homography<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut vps: [Vec<(HomPoint<f64>, HomPoint<f64>)>; 2] = [Vec::new(), Vec::new()];
    let mut windows: [Vec<Vec<QuadBox<f64>>>; 2] = [Vec::new(), Vec::new()];
    let mut extents: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for p in &planes {
        let h0 = Homography::new(p.to_image[0])?;
        let h1 = Homography::new(p.to_image[1])?;
        plane_h.push(h1.compose(&h0.inverse()));
        for view in 0..2 {
            let m = &p.to_image[view];
            plane_to_image[view].push(if view == 0 { h0 } else { h1 });
            let hv = HomPoint::from_vector(m * Vector3::new(1.0, 0.0, 0.0))?;
            let vv = HomPoint::from_vector(m * Vector3::new(0.0, 1.0, 0.0))?;
            vps[view].push((hv, vv));
            let mut qs = Vec::new();
            for &(u0, v0, u1, v1) in &p.windows {
                let c = [map(m, u0, v0), map(m, u1, v0), map(m, u1, v1), map(m, u0, v1)];
                qs.push(QuadBox::new(c, 1.0).map_err(|_| gen_err("window projects to a non-convex quad"))?);
            }
            windows[view].push(qs);
            let xs = [map(m, 0.0, 0.0).x, map(m, p.width, 0.0).x, map(m, p.width, p.height).x, map(m, 0.0, p.height).x];
            extents[view].push((
                xs.iter().copied().fold(f64::INFINITY, f64::min),
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ));
        }
    }

    // Segments: window edges, facade outline and one line per floor.
    let mut segments: [Vec<LineSegment<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut plane_segments: [Vec<Vec<LineSegment<f64>>>; 2] = [Vec::new(), Vec::new()];
    for view in 0..2 {
        for (pi, p) in planes.iter().enumerate() {
            let m = &p.to_image[view];
            let mut lines: Vec<(f64, f64, f64, f64)> = Vec::new();
            for &(u0, v0, u1, v1) in &p.windows {
                lines.extend([(u0, v0, u1, v0), (u1, v0, u1, v1), (u1, v1, u0, v1), (u0, v1, u0, v0)]);
            }
            lines.extend([(0.0, 0.0, p.width, 0.0), (0.0, p.height, p.width, p.height)]);
            lines.extend([(0.0, 0.0, 0.0, p.height), (p.width, 0.0, p.width, p.height)]);
            let rows = spec.facades[pi].grid.0;
            for r in 1..rows {
                let v = p.height * r as f64 / rows as f64;
                lines.push((0.0, v, p.width, v));
            }
            let mut segs = Vec::new();
            for (u0, v0, u1, v1) in lines {
                if let Ok(s) = LineSegment::new(map(m, u0, v0), map(m, u1, v1)) {
                    segs.push(rotate_segment(&mut rng, &s, spec.noise.segment_sigma_deg));
                }
            }
            segments[view].extend(segs.iter().copied());
            plane_segments[view].push(segs);
        }
        let fr = spec.noise.outlier_fraction;
        let n_out = (segments[view].len() as f64 * fr / (1.0 - fr)).round() as usize;
        for _ in 0..n_out {
            let p = Point::new(rng.random_range(0.0..size.width as f64), rng.random_range(0.0..size.height as f64));
            let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let len = rng.random_range(20.0..90.0);
            let q = Point::new(p.x + len * a.cos(), p.y + len * a.sin());
            if let Ok(s) = LineSegment::new(p, q) {
                segments[view].push(s);
            }
        }
    }

    // Detections.
    let corner_noise = Normal::new(0.0, spec.noise.corner_sigma.max(0.0)).unwrap();
    let mut boxes: [Vec<DetBox<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut box_plane: [Vec<Option<(usize, usize)>>; 2] = [Vec::new(), Vec::new()];
    let mut quads: [Vec<TaggedQuad<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut rectifiers: [Vec<Rectifier<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut distractor_boxes: [Vec<DetBox<f64>>; 2] = [Vec::new(), Vec::new()];
    for view in 0..2 {
        if spec.rectified {
            for (pi, segs) in plane_segments[view].iter().enumerate() {
                let (hv, vv) = vps[view][pi];
                if let Ok(r) = build_rectifier(&hv, &vv, segs, size, pi) {
                    rectifiers[view].push(r);
                }
            }
        }
        for (pi, qs) in windows[view].iter().enumerate() {
            for (wi, q) in qs.iter().enumerate() {
                let noisy = q.corners().map(|c| {
                    if spec.noise.corner_sigma > 0.0 {
                        Point::new(c.x + corner_noise.sample(&mut rng), c.y + corner_noise.sample(&mut rng))
                    } else {
                        c
                    }
                });
                let score = rng.random_range(0.5..1.0);
                let hull = q.hull();
                let seen = q.area() >= spec.min_fill * (hull.xmax - hull.xmin) * (hull.ymax - hull.ymin);
                if let Some(b) = detect(spec.detector, &noisy, score).filter(|_| seen) {
                    boxes[view].push(b);
                    box_plane[view].push(Some((pi, wi)));
                }
                if let Some(r) = rectifiers[view].iter().find(|r| r.plane_id == pi) {
                    let mapped: Option<Vec<Point<f64>>> = noisy.iter().map(|c| r.h.map_point(c)).collect();
                    if let Some(m) = mapped {
                        let m = [m[0], m[1], m[2], m[3]];
                        if let Some(b) = detect(DetectorModel::Hull, &m, rng.random_range(0.5..1.0)) {
                            quads[view].push(TaggedQuad { quad: b.to_quad(), frame: Frame::Rectified(pi) });
                        }
                    }
                }
            }
        }
        // Facades with a margin, so that no shifted window grid reaches a
        // distractor either.
        let taken: Vec<DetBox<f64>> = planes
            .iter()
            .filter_map(|p| {
                let c = [(0.0, 0.0), (p.width, 0.0), (p.width, p.height), (0.0, p.height)].map(|(u, v)| map(&p.to_image[view], u, v));
                detect(DetectorModel::Hull, &c, 1.0)
            })
            .map(|b| DetBox { xmin: b.xmin - 60.0, ymin: b.ymin - 60.0, xmax: b.xmax + 60.0, ymax: b.ymax + 60.0, ..b })
            .collect();
        // Off-plane: no facade homography may carry a distractor near a box
        // of the other view, or a box of the other view near it. The mapped
        // hulls are doubled in size so estimated homographies, which drift
        // away from the planted ones, stay clear too.
        let other: Vec<DetBox<f64>> = if view == 0 {
            windows[1].iter().flatten().map(|q| q.hull()).collect()
        } else {
            windows[0].iter().flatten().map(|q| q.hull()).chain(distractor_boxes[0].iter().copied()).collect()
        };
        let maps: Vec<Homography<f64>> = plane_h.iter().map(|h| if view == 0 { *h } else { h.inverse() }).collect();
        let back: Vec<Homography<f64>> = maps.iter().map(|h| h.inverse()).collect();
        let mut placed: Vec<DetBox<f64>> = Vec::new();
        for _ in 0..spec.noise.distractors {
            for _attempt in 0..1000 {
                let (w, h) = (rng.random_range(40.0..120.0), rng.random_range(40.0..120.0));
                let x = rng.random_range(0.0..(size.width as f64 - w));
                let y = rng.random_range(0.0..(size.height as f64 - h));
                let Ok(b) = DetBox::new(x, y, x + w, y + h, rng.random_range(0.5..1.0)) else {
                    continue;
                };
                if taken.iter().any(|o| overlaps(&b, o)) || placed.iter().any(|o| overlaps(&b, o)) {
                    continue;
                }
                let carried = maps
                    .iter()
                    .filter_map(|h| mapped_hull(h, &b))
                    .any(|m| other.iter().any(|o| overlaps(&grown(&m), o)));
                let brought = back
                    .iter()
                    .any(|h| other.iter().filter_map(|o| mapped_hull(h, o)).any(|m| overlaps(&grown(&m), &b)));
                if carried || brought {
                    continue;
                }
                // Nor may a homography through any pair of boxes, the
                // distractors included, gather one by chance.
                let own = windows[view].iter().flatten().map(|q| (*q, false));
                let own: Vec<(QuadBox<f64>, bool)> = own.chain(placed.iter().chain([&b]).map(|d| (d.to_quad(), true))).collect();
                let far: Vec<(QuadBox<f64>, bool)> = if view == 0 {
                    windows[1].iter().flatten().map(|q| (*q, false)).collect()
                } else {
                    let w = windows[0].iter().flatten().map(|q| (*q, false));
                    w.chain(distractor_boxes[0].iter().map(|d| (d.to_quad(), true))).collect()
                };
                let clash = if view == 0 { chance_support(&own, &far) } else { chance_support(&far, &own) };
                if clash {
                    continue;
                }
                placed.push(b);
                break;
            }
        }
        distractor_boxes[view] = placed.clone();
        for b in placed {
            boxes[view].push(b);
            box_plane[view].push(None);
        }
    }

    // Features.
    let dim = spec.descriptor_dim;
    let shared = random_unit(&mut rng, dim);
    let mut planted: Vec<(Point<f64>, Point<f64>, usize)> = Vec::new();
    for (pi, p) in planes.iter().enumerate() {
        let mut uv: Vec<(f64, f64)> = Vec::new();
        for &(u0, v0, u1, v1) in &p.windows {
            if spec.corner_features {
                let (iu, iv) = (0.15 * (u1 - u0), 0.15 * (v1 - v0));
                uv.extend([(u0 + iu, v0 + iv), (u1 - iu, v0 + iv), (u1 - iu, v1 - iv), (u0 + iu, v1 - iv)]);
            }
            if spec.center_features {
                uv.push(((u0 + u1) / 2.0, (v0 + v1) / 2.0));
            }
        }
        for _ in 0..spec.plane_features {
            uv.push((rng.random_range(0.0..p.width), rng.random_range(0.0..p.height)));
        }
        for (u, v) in uv {
            planted.push((map(&p.to_image[0], u, v), map(&p.to_image[1], u, v), pi));
        }
    }
    let mut feats1 = Vec::new();
    let mut feats2_raw: Vec<(Point<f64>, Vec<f64>, Option<(usize, usize)>)> = Vec::new();
    for (k, (p1, p2, pi)) in planted.iter().enumerate() {
        let d = if spec.repeated_texture { shared.clone() } else { random_unit(&mut rng, dim) };
        let d2 = if rng.random_bool(spec.noise.replaced_fraction) {
            random_unit(&mut rng, dim)
        } else {
            perturb(&mut rng, &d, spec.noise.descriptor_sigma)
        };
        feats1.push(Feature::new(k, *p1, d)?);
        feats2_raw.push((*p2, d2, Some((k, *pi))));
    }
    for _ in 0..spec.background_features {
        let p = Point::new(rng.random_range(0.0..size.width as f64), rng.random_range(0.0..size.height as f64));
        let id = feats1.len();
        feats1.push(Feature::new(id, p, random_unit(&mut rng, dim))?);
    }
    for _ in 0..spec.background_features {
        let p = Point::new(rng.random_range(0.0..size.width as f64), rng.random_range(0.0..size.height as f64));
        feats2_raw.push((p, random_unit(&mut rng, dim), None));
    }

    // View 2 lists everything in random order.
    feats2_raw.shuffle(&mut rng);
    let mut feats2 = Vec::new();
    let mut feature_pairs = Vec::new();
    for (j, (p, d, src)) in feats2_raw.into_iter().enumerate() {
        feats2.push(Feature::new(j, p, d)?);
        if let Some((i, pi)) = src {
            feature_pairs.push((i, j, pi));
        }
    }
    feature_pairs.sort();

    let mut order: Vec<usize> = (0..boxes[1].len()).collect();
    order.shuffle(&mut rng);
    let boxes2: Vec<DetBox<f64>> = order.iter().map(|&k| boxes[1][k]).collect();
    let plane2: Vec<Option<(usize, usize)>> = order.iter().map(|&k| box_plane[1][k]).collect();
    quads[1].shuffle(&mut rng);

    let mut box_pairs = Vec::new();
    for (i, bp) in box_plane[0].iter().enumerate() {
        if let Some(key) = bp {
            if let Some(j) = plane2.iter().position(|o| o.as_ref() == Some(key)) {
                box_pairs.push((i, j, key.0));
            }
        }
    }
    let distractors = [
        (0..boxes[0].len()).filter(|&i| box_plane[0][i].is_none()).collect(),
        (0..boxes2.len()).filter(|&j| plane2[j].is_none()).collect(),
    ];

    let [s1, s2] = segments;
    let [q1, q2] = quads;
    let [r1, r2] = rectifiers;
    let [b1, _] = boxes;
    let views = [
        ImageInputs { size, segments: s1, boxes: b1, quads: q1, rectifiers: spec.rectified.then_some(r1), features: feats1 },
        ImageInputs { size, segments: s2, boxes: boxes2, quads: q2, rectifiers: spec.rectified.then_some(r2), features: feats2 },
    ];
    Ok(Scene {
        views,
        truth: GroundTruth { plane_h, plane_to_image, vps, windows, box_pairs, distractors, feature_pairs, extents },
    })
}

/// Segments converging on known vanishing points, plus random outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilScene {
    pub segments: Vec<LineSegment<f64>>,
    /// Index of the generating point per segment; `None` for outliers.
    pub labels: Vec<Option<usize>>,
    pub vps: Vec<HomPoint<f64>>,
}

/// `per_vp` segments aimed at each point (direction perturbed by
/// `noise_deg`), then enough uniform outliers to make up `outlier_fraction`
/// of the total.
pub fn pencil_scene(
    seed: u64,
    vps: &[HomPoint<f64>],
    per_vp: usize,
    outlier_fraction: f64,
    noise_deg: f64,
    size: ImageSize,
) -> PencilScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (size.width as f64, size.height as f64);
    let mut segments = Vec::new();
    let mut labels = Vec::new();
    for (k, v) in vps.iter().enumerate() {
        let mut made = 0;
        while made < per_vp {
            let m = Point::new(rng.random_range(0.1 * w..0.9 * w), rng.random_range(0.1 * h..0.9 * h));
            let dir = match v.to_point() {
                Some(p) => (p.x - m.x, p.y - m.y),
                None => (v.x(), v.y()),
            };
            let n = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
            if n < 1.0 && v.to_point().is_some() {
                continue;
            }
            let len = rng.random_range(30.0..120.0);
            let (ux, uy) = (dir.0 / n * len / 2.0, dir.1 / n * len / 2.0);
            let s = LineSegment::from_coords(m.x - ux, m.y - uy, m.x + ux, m.y + uy).unwrap();
            segments.push(rotate_segment(&mut rng, &s, noise_deg));
            labels.push(Some(k));
            made += 1;
        }
    }
    let n_in = segments.len() as f64;
    let n_out = (n_in * outlier_fraction / (1.0 - outlier_fraction)).round() as usize;
    for _ in 0..n_out {
        let p = Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
        let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let len = rng.random_range(30.0..120.0);
        segments.push(LineSegment::from_coords(p.x, p.y, p.x + len * a.cos(), p.y + len * a.sin()).unwrap());
        labels.push(None);
    }
    PencilScene { segments, labels, vps: vps.to_vec() }
}

/// Random strictly convex quad: four sorted angles on a circle, then a random
/// shear and anisotropic scale, all inside `[0, canvas)²`.
pub fn random_convex_quad(rng: &mut impl Rng, canvas: f64) -> QuadBox<f64> {
    loop {
        let mut ang: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        ang.sort_by(f64::total_cmp);
        let gaps_ok = (0..4).all(|k| {
            let next = if k == 3 { ang[0] + std::f64::consts::TAU } else { ang[k + 1] };
            next - ang[k] > 0.2
        });
        if !gaps_ok {
            continue;
        }
        let r = rng.random_range(0.05 * canvas..0.3 * canvas);
        let (sx, sy, sh) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
        let c = (rng.random_range(0.3 * canvas..0.7 * canvas), rng.random_range(0.3 * canvas..0.7 * canvas));
        let pts = ang.iter().map(|a| {
            let (x, y) = (r * a.cos(), r * a.sin());
            Point::new(c.0 + sx * x + sh * y, c.1 + sy * y)
        });
        let pts: Vec<Point<f64>> = pts.collect();
        if pts.iter().any(|p| p.x < 0.0 || p.y < 0.0 || p.x >= canvas || p.y >= canvas) {
            continue;
        }
        if let Ok(q) = QuadBox::from_unordered([pts[0], pts[1], pts[2], pts[3]], 1.0) {
            return q;
        }
    }
}

/// Inside-or-on test by edge signs, independent of `QuadBox::contains`.
fn in_convex(c: &[Point<f64>; 4], x: f64, y: f64) -> bool {
    let mut pos = false;
    let mut neg = false;
    for k in 0..4 {
        let (a, b) = (c[k], c[(k + 1) % 4]);
        let cr = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        pos |= cr > 0.0;
        neg |= cr < 0.0;
    }
    !(pos && neg)
}

/// IoU by sampling pixel centers of a `resolution × resolution` grid laid
/// over the joint bounding box of both quads.
pub fn raster_iou(a: &QuadBox<f64>, b: &QuadBox<f64>, resolution: usize) -> f64 {
    let all = a.corners().iter().chain(b.corners());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (dx, dy) = ((x1 - x0) / resolution as f64, (y1 - y0) / resolution as f64);
    let (mut inter, mut union) = (0u64, 0u64);
    for r in 0..resolution {
        let y = y0 + (r as f64 + 0.5) * dy;
        for c in 0..resolution {
            let x = x0 + (c as f64 + 0.5) * dx;
            let (ia, ib) = (in_convex(a.corners(), x, y), in_convex(b.corners(), x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Exhaustive mutual nearest neighbours by cosine similarity; ties go to the
/// lower index. Returns `(i, j, sim)` by feature id.
pub fn brute_force_nn(feats1: &[Feature<f64>], feats2: &[Feature<f64>]) -> Vec<(usize, usize, f64)> {
    if feats1.is_empty() || feats2.is_empty() {
        return Vec::new();
    }
    let sim: Vec<Vec<f64>> = feats1
        .iter()
        .map(|a| feats2.iter().map(|b| cosine(&a.desc, &b.desc)).collect())
        .collect();
    let argmax = |it: &mut dyn Iterator<Item = f64>| {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (k, s) in it.enumerate() {
            if s > best.1 {
                best = (k, s);
            }
        }
        best.0
    };
    let row: Vec<usize> = sim.iter().map(|r| argmax(&mut r.iter().copied())).collect();
    let col: Vec<usize> = (0..feats2.len()).map(|j| argmax(&mut sim.iter().map(|r| r[j]))).collect();
    (0..feats1.len())
        .filter(|&i| col[row[i]] == i)
        .map(|i| (feats1[i].id, feats2[row[i]].id, sim[i][row[i]]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub correct: usize,
    pub matches: usize,
    /// Planted correspondences.
    pub truth: usize,
    /// Per group: largest corner displacement against the closest planted
    /// homography, over that facade's view-1 window corners.
    pub homography_errors: Vec<f64>,
}

/// Whether match `(i, j)` is consistent with the planted geometry within
/// `tol` pixels.
pub fn is_correct(
    i: usize,
    j: usize,
    pos1: &HashMap<usize, Point<f64>>,
    pos2: &HashMap<usize, Point<f64>>,
    plane_of: &HashMap<usize, usize>,
    gt: &GroundTruth,
    tol: f64,
) -> bool {
    let (Some(&pi), Some(p), Some(q)) = (plane_of.get(&i), pos1.get(&i), pos2.get(&j)) else {
        return false;
    };
    gt.plane_h[pi].map_point(p).is_some_and(|m| (m - q).norm() <= tol)
}

/// Largest corner displacement between `h` and the planted homography of
/// facade `plane` over its view-1 windows.
pub fn homography_error(h: &Homography<f64>, gt: &GroundTruth, plane: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for q in &gt.windows[0][plane] {
        for c in q.corners() {
            let a = h.map_point(c);
            let b = gt.plane_h[plane].map_point(c);
            worst = match (a, b) {
                (Some(a), Some(b)) => worst.max((a - b).norm()),
                _ => f64::INFINITY,
            };
        }
    }
    worst
}

/// Root-mean-square corner displacement between `h` and the planted
/// homography of facade `plane` over its view-1 windows.
pub fn homography_rms(h: &Homography<f64>, gt: &GroundTruth, plane: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for q in &gt.windows[0][plane] {
        for c in q.corners() {
            match (h.map_point(c), gt.plane_h[plane].map_point(c)) {
                (Some(a), Some(b)) => sum += (a - b).norm_squared(),
                _ => return f64::INFINITY,
            }
            n += 1;
        }
    }
    if n == 0 { 0.0 } else { (sum / n as f64).sqrt() }
}

/// Precision and recall of `set` against the planted correspondences.
/// An empty match set has precision 1.
pub fn score(set: &MatchSet<f64>, feats1: &[Feature<f64>], feats2: &[Feature<f64>], gt: &GroundTruth, tol: f64) -> Score {
    score_matches(&set.matches, &set.groups.iter().map(|g| g.h).collect::<Vec<_>>(), feats1, feats2, gt, tol)
}

/// [`score`] over bare matches and group homographies.
pub fn score_matches(
    matches: &[Match<f64>],
    hs: &[Homography<f64>],
    feats1: &[Feature<f64>],
    feats2: &[Feature<f64>],
    gt: &GroundTruth,
    tol: f64,
) -> Score {
    let pos1: HashMap<usize, Point<f64>> = feats1.iter().map(|f| (f.id, f.pos)).collect();
    let pos2: HashMap<usize, Point<f64>> = feats2.iter().map(|f| (f.id, f.pos)).collect();
    let plane_of: HashMap<usize, usize> = gt.feature_pairs.iter().map(|&(i, _, p)| (i, p)).collect();
    let correct = matches
        .iter()
        .filter(|m| is_correct(m.i, m.j, &pos1, &pos2, &plane_of, gt, tol))
        .count();
    let truth = gt.feature_pairs.len();
    let homography_errors = hs
        .iter()
        .map(|h| (0..gt.plane_h.len()).map(|p| homography_error(h, gt, p)).fold(f64::INFINITY, f64::min))
        .collect();
    Score {
        precision: if matches.is_empty() { 1.0 } else { correct as f64 / matches.len() as f64 },
        recall: if truth == 0 { 0.0 } else { correct as f64 / truth as f64 },
        correct,
        matches: matches.len(),
        truth,
        homography_errors,
    }
}
