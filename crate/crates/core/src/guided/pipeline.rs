//! End-to-end matching of one image pair.

use crate::boxes::{adjust_box, adjust_quad, vote_box_vps};
use crate::error::{Error, Result};
use crate::geom::{filter_short, DetBox, LineSegment, QuadBox};
use crate::objmatch::{box_descriptor, descriptor_dim, greedy_match_with, Feature, MatchParams};
use crate::rectify::{
    backproject_quad, build_rectifier, merge_detections, segment_columns, BoxMode, ColumnInterval, DetectionStreams,
    ImageSize, Rectifier, SegParams,
};
use crate::scalar::{cast, Real};
use crate::vanishing::{classify, estimate_vps, horizontals, vertical, VanishingPoint, VpParams};

use super::{additional_match_indices, guided_match_indices, refine_homography, support_region, Match, MatchSet, ViewEvidence};

/// Coordinate frame a detection was made in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Original,
    /// Rectified frame of the rectifier with this plane id.
    Rectified(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedQuad<T: Real> {
    pub quad: QuadBox<T>,
    pub frame: Frame,
}

/// Everything known about one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInputs<T: Real> {
    pub size: ImageSize,
    pub segments: Vec<LineSegment<T>>,
    /// Axis-aligned detections in the original frame.
    pub boxes: Vec<DetBox<T>>,
    pub quads: Vec<TaggedQuad<T>>,
    /// Rectifiers the rectified detections refer to; built from the
    /// vanishing points when absent.
    pub rectifiers: Option<Vec<Rectifier<T>>>,
    pub features: Vec<Feature<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams<T: Real> {
    pub matching: MatchParams<T>,
    pub vp: VpParams<T>,
    pub seg: SegParams<T>,
    pub min_seg_len: T,
    pub mode: BoxMode,
}

impl<T: Real> Default for PipelineParams<T> {
    fn default() -> Self {
        Self {
            matching: MatchParams::default(),
            vp: VpParams::default(),
            seg: SegParams::default(),
            min_seg_len: cast(20.0),
            mode: BoxMode::OPlusRA,
        }
    }
}

/// Per-image intermediate results.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAnalysis<T: Real> {
    /// Segments that survived the length filter.
    pub segments: Vec<LineSegment<T>>,
    pub vps: Vec<VanishingPoint<T>>,
    pub rectifiers: Vec<Rectifier<T>>,
    /// Plane segmentation; empty unless the rectifiers were built here.
    pub columns: Vec<ColumnInterval>,
    pub streams: DetectionStreams<T>,
    /// Boxes selected by the mode; the ones object matching sees.
    pub boxes: Vec<QuadBox<T>>,
}

fn adjust_or_keep<T: Real>(q: &QuadBox<T>, segments: &[LineSegment<T>], vps: &[VanishingPoint<T>], thresh: T) -> QuadBox<T> {
    match vote_box_vps(&q.hull(), segments, vps, thresh) {
        Ok((h, v)) => adjust_quad(q, &h.point, &v.point).unwrap_or(*q),
        Err(_) => *q,
    }
}

/// Vanishing points, rectifiers and the four detection streams of one image.
pub fn analyze_image<T: Real>(inputs: &ImageInputs<T>, params: &PipelineParams<T>) -> Result<ImageAnalysis<T>> {
    let segments = filter_short(&inputs.segments, params.min_seg_len);
    let mut vps = estimate_vps(&segments, &params.vp)?;
    classify(&mut vps, &params.vp, &inputs.size.center());
    let thresh = params.vp.angle_thresh;

    let mut streams = DetectionStreams::default();
    for b in &inputs.boxes {
        let q = b.to_quad();
        streams.orthogonal.push(q);
        let adjusted = vote_box_vps(b, &segments, &vps, thresh)
            .and_then(|(h, v)| adjust_box(b, &h.point, &v.point))
            .unwrap_or(q);
        streams.adjusted.push(adjusted);
    }
    for t in inputs.quads.iter().filter(|t| t.frame == Frame::Original) {
        streams.orthogonal.push(t.quad);
        streams.adjusted.push(adjust_or_keep(&t.quad, &segments, &vps, thresh));
    }

    let built = inputs.rectifiers.is_none();
    let mut columns = Vec::new();
    let rectifiers = match &inputs.rectifiers {
        Some(r) => r.clone(),
        None => {
            let mut out = Vec::new();
            if let Ok(v) = vertical(&vps) {
                let hs = horizontals(&vps);
                for (k, h) in hs.iter().enumerate() {
                    let plane: Vec<LineSegment<T>> = h
                        .inliers
                        .iter()
                        .chain(&v.inliers)
                        .map(|&i| segments[i])
                        .collect();
                    if let Ok(r) = build_rectifier(&h.point, &v.point, &plane, inputs.size, k) {
                        out.push(r);
                    }
                }
                if !hs.is_empty() && inputs.size.width > 0 {
                    columns = segment_columns(&segments, &hs, inputs.size.width as usize, &params.seg)?;
                }
            }
            out
        }
    };

    for t in &inputs.quads {
        let Frame::Rectified(pid) = t.frame else {
            continue;
        };
        let Some(r) = rectifiers.iter().find(|r| r.plane_id == pid) else {
            continue;
        };
        let Ok(q) = backproject_quad(&t.quad.hull(), r) else {
            continue;
        };
        if built {
            let x = q.centroid().x;
            let on_plane = columns.iter().any(|c| {
                c.plane_id == pid && x >= cast(c.lo as f64) && x < cast(c.hi as f64)
            });
            if !on_plane {
                continue;
            }
        }
        streams.rectified.push(q);
        streams.rectified_adjusted.push(adjust_or_keep(&q, &segments, &vps, thresh));
    }

    let boxes = merge_detections(&streams, params.mode);
    Ok(ImageAnalysis { segments, vps, rectifiers, columns, streams, boxes })
}

/// Counts per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairReport {
    pub vps: [usize; 2],
    pub orthogonal: [usize; 2],
    pub adjusted: [usize; 2],
    pub rectified: [usize; 2],
    pub rectified_adjusted: [usize; 2],
    /// Boxes entering object matching.
    pub boxes: [usize; 2],
    pub groups: usize,
    pub refined: usize,
    pub guided: usize,
    pub additional: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult<T: Real> {
    pub matches: MatchSet<T>,
    pub report: PairReport,
    pub analysis: [ImageAnalysis<T>; 2],
}

/// Runs the full pipeline on one image pair.
///
/// Groups guide matching in emission order, so a feature claimed by an
/// earlier group is not offered to later ones; all remaining features go
/// through descriptor-only matching.
pub fn match_pair<T: Real>(img1: &ImageInputs<T>, img2: &ImageInputs<T>, params: &PipelineParams<T>) -> Result<PairResult<T>> {
    params.matching.validate()?;
    params.vp.validate()?;
    if let (Some(d1), Some(d2)) = (descriptor_dim(&img1.features)?, descriptor_dim(&img2.features)?) {
        if d1 != d2 {
            return Err(Error::DimensionMismatch { expected: d1, found: d2 });
        }
    }
    let (a1, a2) = rayon::join(|| analyze_image(img1, params), || analyze_image(img2, params));
    let (a1, a2) = (a1?, a2?);
    let mp = &params.matching;
    let (f1, f2) = (&img1.features, &img2.features);

    let descs1: Vec<_> = a1.boxes.iter().map(|b| box_descriptor(b, f1, mp.gem_p)).collect();
    let descs2: Vec<_> = a2.boxes.iter().map(|b| box_descriptor(b, f2, mp.gem_p)).collect();
    let mut groups = greedy_match_with(&a1.boxes, &a2.boxes, &descs1, &descs2, mp)?;

    let ev1 = ViewEvidence { segments: &a1.segments, vps: &a1.vps, angle_thresh: params.vp.angle_thresh };
    let ev2 = ViewEvidence { segments: &a2.segments, vps: &a2.vps, angle_thresh: params.vp.angle_thresh };
    for g in groups.iter_mut() {
        let (h, refined) = refine_homography(g, &a1.boxes, &a2.boxes, Some(&ev1), Some(&ev2), mp);
        g.h = h;
        g.refined = refined;
    }

    let mut claimed1 = vec![false; f1.len()];
    let mut claimed2 = vec![false; f2.len()];
    let mut matches = Vec::new();
    for (gid, g) in groups.iter().enumerate() {
        let region = support_region(g, &a1.boxes, mp.margin);
        for (i, j, sim) in guided_match_indices(f1, f2, &g.h, &region, mp, &claimed1, &claimed2) {
            claimed1[i] = true;
            claimed2[j] = true;
            matches.push(Match { i: f1[i].id, j: f2[j].id, sim, group_id: gid as i64 });
        }
    }
    let guided = matches.len();
    for (i, j, sim) in additional_match_indices(f1, f2, mp.ratio, &claimed1, &claimed2) {
        matches.push(Match { i: f1[i].id, j: f2[j].id, sim, group_id: -1 });
    }

    let report = PairReport {
        vps: [a1.vps.len(), a2.vps.len()],
        orthogonal: [a1.streams.orthogonal.len(), a2.streams.orthogonal.len()],
        adjusted: [a1.streams.adjusted.len(), a2.streams.adjusted.len()],
        rectified: [a1.streams.rectified.len(), a2.streams.rectified.len()],
        rectified_adjusted: [a1.streams.rectified_adjusted.len(), a2.streams.rectified_adjusted.len()],
        boxes: [a1.boxes.len(), a2.boxes.len()],
        groups: groups.len(),
        refined: groups.iter().filter(|g| g.refined).count(),
        guided,
        additional: matches.len() - guided,
    };
    Ok(PairResult { matches: MatchSet { matches, groups }, report, analysis: [a1, a2] })
}
