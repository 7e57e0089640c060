//! Line-oriented text formats. One record per line, whitespace-separated
//! fields, `.` as decimal separator. Reals are written in Rust's shortest
//! round-trip form, so every writer/parser pair is exact.

use std::fmt::Write as _;
use std::path::Path;

use objguide::guided::{Frame, TaggedQuad};
use objguide::rectify::{ColumnInterval, ImageSize};
use objguide::synth::GroundTruth;
use objguide::vanishing::Orientation;
use objguide::{DetBox, Feature, HomPoint, Homography, LineSegment, Match, ObjectGroup, Point, QuadBox, Rectifier, VanishingPoint};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { file: path.to_path_buf(), source })?;
    if let Some(n) = text.lines().position(|l| !l.is_ascii()) {
        return Err(CliError::parse(path, n + 1, "non-ASCII content"));
    }
    Ok(text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Write { file: path.to_path_buf(), source })
}

/// Tokens of one non-blank line.
struct Fields<'a> {
    file: &'a Path,
    line: usize,
    toks: Vec<&'a str>,
    pos: usize,
}

impl<'a> Fields<'a> {
    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::parse(self.file, self.line, msg)
    }

    fn len(&self) -> usize {
        self.toks.len()
    }

    fn word(&mut self) -> CliResult<&'a str> {
        let t = self.toks.get(self.pos).copied().ok_or_else(|| self.err("missing field"))?;
        self.pos += 1;
        Ok(t)
    }

    fn real(&mut self) -> CliResult<f64> {
        let t = self.word()?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(format!("expected a finite real, found {t:?}"))),
        }
    }

    fn reals<const N: usize>(&mut self) -> CliResult<[f64; N]> {
        let mut out = [0.0; N];
        for v in out.iter_mut() {
            *v = self.real()?;
        }
        Ok(out)
    }

    fn index(&mut self) -> CliResult<usize> {
        let t = self.word()?;
        t.parse::<usize>().map_err(|_| self.err(format!("expected a non-negative integer, found {t:?}")))
    }

    fn int(&mut self) -> CliResult<i64> {
        let t = self.word()?;
        t.parse::<i64>().map_err(|_| self.err(format!("expected an integer, found {t:?}")))
    }

    fn homography(&mut self) -> CliResult<Homography> {
        let v: [f64; 9] = self.reals()?;
        Homography::from_row_slice(&v).map_err(|e| self.err(e.to_string()))
    }

    fn hom_point(&mut self) -> CliResult<HomPoint> {
        let [x, y, w] = self.reals()?;
        HomPoint::new(x, y, w).map_err(|e| self.err(e.to_string()))
    }

    fn quad(&mut self) -> CliResult<QuadBox> {
        let c: [f64; 8] = self.reals()?;
        let score = self.real()?;
        let corners = [0, 2, 4, 6].map(|k| Point::new(c[k], c[k + 1]));
        QuadBox::new(corners, score).map_err(|e| self.err(e.to_string()))
    }

    fn end(&self) -> CliResult<()> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(self.err(format!("expected {} fields, found {}", self.pos, self.toks.len())))
        }
    }
}

fn records<'a>(text: &'a str, file: &'a Path) -> impl Iterator<Item = Fields<'a>> + 'a {
    text.lines().enumerate().filter_map(move |(n, l)| {
        let toks: Vec<&str> = l.split_whitespace().collect();
        (!toks.is_empty()).then_some(Fields { file, line: n + 1, toks, pos: 0 })
    })
}

fn push_reals(out: &mut String, vals: impl IntoIterator<Item = f64>) {
    for (k, v) in vals.into_iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        write!(out, "{v}").unwrap();
    }
}

fn push_homography(out: &mut String, h: &Homography) {
    push_reals(out, h.to_row_major());
}

fn push_hom_point(out: &mut String, p: &HomPoint) {
    let c = p.coords();
    push_reals(out, [c[0], c[1], c[2]]);
}

fn push_quad(out: &mut String, q: &QuadBox) {
    push_reals(out, q.corners().iter().flat_map(|c| [c.x, c.y]).chain([q.score()]));
}

pub fn write_image_size(size: ImageSize) -> String {
    format!("{} {}\n", size.width, size.height)
}

pub fn parse_image_size(text: &str, file: &Path) -> CliResult<ImageSize> {
    let mut recs = records(text, file);
    let mut f = recs.next().ok_or_else(|| CliError::parse(file, 1, "missing image size"))?;
    let (w, h) = (f.index()?, f.index()?);
    f.end()?;
    let (Ok(w), Ok(h)) = (u32::try_from(w), u32::try_from(h)) else {
        return Err(f.err("image size out of range"));
    };
    if w == 0 || h == 0 {
        return Err(f.err("image size must be positive"));
    }
    if let Some(extra) = recs.next() {
        return Err(extra.err("unexpected second record"));
    }
    Ok(ImageSize::new(w, h))
}

pub fn write_segments(segs: &[LineSegment]) -> String {
    let mut out = String::new();
    for s in segs {
        push_reals(&mut out, [s.p.x, s.p.y, s.q.x, s.q.y]);
        out.push('\n');
    }
    out
}

pub fn parse_segments(text: &str, file: &Path) -> CliResult<Vec<LineSegment>> {
    records(text, file)
        .map(|mut f| {
            let [x1, y1, x2, y2] = f.reals()?;
            f.end()?;
            LineSegment::from_coords(x1, y1, x2, y2).map_err(|e| f.err(e.to_string()))
        })
        .collect()
}

pub fn write_boxes(boxes: &[DetBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        push_reals(&mut out, [b.xmin, b.ymin, b.xmax, b.ymax, b.score]);
        out.push('\n');
    }
    out
}

pub fn parse_boxes(text: &str, file: &Path) -> CliResult<Vec<DetBox>> {
    records(text, file)
        .map(|mut f| {
            let [x0, y0, x1, y1, s] = f.reals()?;
            f.end()?;
            DetBox::new(x0, y0, x1, y1, s).map_err(|e| f.err(e.to_string()))
        })
        .collect()
}

pub fn write_quads(quads: &[TaggedQuad<f64>]) -> String {
    let mut out = String::new();
    for t in quads {
        push_quad(&mut out, &t.quad);
        match t.frame {
            Frame::Original => out.push_str(" original\n"),
            Frame::Rectified(id) => writeln!(out, " rect:{id}").unwrap(),
        }
    }
    out
}

pub fn parse_quads(text: &str, file: &Path) -> CliResult<Vec<TaggedQuad<f64>>> {
    records(text, file)
        .map(|mut f| {
            let quad = f.quad()?;
            let tag = f.word()?;
            let frame = match tag {
                "original" => Frame::Original,
                _ => match tag.strip_prefix("rect:").map(str::parse::<usize>) {
                    Some(Ok(id)) => Frame::Rectified(id),
                    _ => return Err(f.err(format!("unknown frame tag {tag:?}"))),
                },
            };
            f.end()?;
            Ok(TaggedQuad { quad, frame })
        })
        .collect()
}

/// Writes `D <dim>` then one line per feature. Ids are implicit: a feature's
/// id is its position in the file.
pub fn write_features(feats: &[Feature]) -> String {
    let dim = feats.first().map_or(0, |f| f.desc.len());
    let mut out = format!("D {dim}\n");
    for f in feats {
        push_reals(&mut out, [f.pos.x, f.pos.y].into_iter().chain(f.desc.iter().copied()));
        out.push('\n');
    }
    out
}

pub fn parse_features(text: &str, file: &Path) -> CliResult<Vec<Feature>> {
    let mut recs = records(text, file);
    let mut head = recs.next().ok_or_else(|| CliError::parse(file, 1, "missing `D <dim>` header"))?;
    if head.word()? != "D" {
        return Err(head.err("expected `D <dim>` header"));
    }
    let dim = head.index()?;
    head.end()?;
    let mut out = Vec::new();
    for mut f in recs {
        if dim == 0 {
            return Err(f.err("features present but the header declares dimension 0"));
        }
        if f.len() != dim + 2 {
            return Err(CliError::Dimension {
                file: file.to_path_buf(),
                line: f.line,
                expected: dim,
                found: f.len().saturating_sub(2),
            });
        }
        let [x, y] = f.reals()?;
        let desc = (0..dim).map(|_| f.real()).collect::<CliResult<Vec<f64>>>()?;
        let id = out.len();
        out.push(Feature::new(id, Point::new(x, y), desc).map_err(|e| f.err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_matches(matches: &[Match]) -> String {
    let mut out = String::new();
    for m in matches {
        writeln!(out, "{} {} {} {}", m.i, m.j, m.sim, m.group_id).unwrap();
    }
    out
}

pub fn parse_matches(text: &str, file: &Path) -> CliResult<Vec<Match>> {
    records(text, file)
        .map(|mut f| {
            let (i, j, sim, group_id) = (f.index()?, f.index()?, f.real()?, f.int()?);
            f.end()?;
            if group_id < -1 {
                return Err(f.err("group id must be -1 or a group index"));
            }
            Ok(Match { i, j, sim, group_id })
        })
        .collect()
}

/// What `groups.txt` stores of an object group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRecord {
    pub id: usize,
    pub h: Homography,
    pub pairs: Vec<(usize, usize)>,
}

impl GroupRecord {
    pub fn from_groups(groups: &[ObjectGroup]) -> Vec<Self> {
        groups
            .iter()
            .enumerate()
            .map(|(id, g)| GroupRecord { id, h: g.h, pairs: g.pairs.clone() })
            .collect()
    }
}

pub fn write_groups(groups: &[GroupRecord]) -> String {
    let mut out = String::new();
    for g in groups {
        write!(out, "{} ", g.id).unwrap();
        push_homography(&mut out, &g.h);
        writeln!(out, " {}", g.pairs.len()).unwrap();
        for (i, j) in &g.pairs {
            writeln!(out, "{i} {j}").unwrap();
        }
    }
    out
}

pub fn parse_groups(text: &str, file: &Path) -> CliResult<Vec<GroupRecord>> {
    let mut recs = records(text, file);
    let mut out = Vec::new();
    while let Some(mut f) = recs.next() {
        let id = f.index()?;
        let h = f.homography()?;
        let n = f.index()?;
        f.end()?;
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut p = recs.next().ok_or_else(|| f.err(format!("group {id} declares {n} pairs; file ends early")))?;
            pairs.push((p.index()?, p.index()?));
            p.end()?;
        }
        out.push(GroupRecord { id, h, pairs });
    }
    Ok(out)
}

pub fn write_rectifiers(rects: &[Rectifier]) -> String {
    let mut out = String::new();
    for r in rects {
        write!(out, "{} ", r.plane_id).unwrap();
        push_homography(&mut out, &r.h);
        out.push('\n');
    }
    out
}

pub fn parse_rectifiers(text: &str, file: &Path) -> CliResult<Vec<Rectifier>> {
    records(text, file)
        .map(|mut f| {
            let id = f.index()?;
            let h = f.homography()?;
            f.end()?;
            Ok(Rectifier::from_homography(h, id))
        })
        .collect()
}

fn orientation_name(o: Orientation) -> &'static str {
    match o {
        Orientation::Unclassified => "unclassified",
        Orientation::Vertical => "vertical",
        Orientation::Horizontal => "horizontal",
    }
}

/// `orientation x y w n i_1 … i_n`, the inliers as segment indices.
pub fn write_vps(vps: &[VanishingPoint]) -> String {
    let mut out = String::new();
    for v in vps {
        write!(out, "{} ", orientation_name(v.orientation)).unwrap();
        push_hom_point(&mut out, &v.point);
        write!(out, " {}", v.inliers.len()).unwrap();
        for i in &v.inliers {
            write!(out, " {i}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_vps(text: &str, file: &Path) -> CliResult<Vec<VanishingPoint>> {
    records(text, file)
        .map(|mut f| {
            let orientation = match f.word()? {
                "unclassified" => Orientation::Unclassified,
                "vertical" => Orientation::Vertical,
                "horizontal" => Orientation::Horizontal,
                other => return Err(f.err(format!("unknown orientation {other:?}"))),
            };
            let point = f.hom_point()?;
            let n = f.index()?;
            let inliers = (0..n).map(|_| f.index()).collect::<CliResult<Vec<_>>>()?;
            f.end()?;
            Ok(VanishingPoint { point, inliers, orientation })
        })
        .collect()
}

pub fn write_columns(cols: &[ColumnInterval]) -> String {
    let mut out = String::new();
    for c in cols {
        writeln!(out, "{} {} {}", c.lo, c.hi, c.plane_id).unwrap();
    }
    out
}

pub fn parse_columns(text: &str, file: &Path) -> CliResult<Vec<ColumnInterval>> {
    records(text, file)
        .map(|mut f| {
            let (lo, hi, plane_id) = (f.index()?, f.index()?, f.index()?);
            f.end()?;
            if lo >= hi {
                return Err(f.err("empty column interval"));
            }
            Ok(ColumnInterval { lo, hi, plane_id })
        })
        .collect()
}

/// Ground truth as tagged records:
///
/// ```text
/// plane <p> h11 … h33
/// to_image <view> <p> h11 … h33
/// vp <view> <p> hx hy hw vx vy vw
/// window <view> <p> x_tl y_tl x_tr y_tr x_br y_br x_bl y_bl score
/// extent <view> <p> lo hi
/// box <i1> <i2> <p>
/// distractor <view> <i>
/// feature <id1> <id2> <p>
/// ```
pub fn write_truth(gt: &GroundTruth) -> String {
    let mut out = String::new();
    for (p, h) in gt.plane_h.iter().enumerate() {
        write!(out, "plane {p} ").unwrap();
        push_homography(&mut out, h);
        out.push('\n');
    }
    for view in 0..2 {
        for (p, h) in gt.plane_to_image[view].iter().enumerate() {
            write!(out, "to_image {view} {p} ").unwrap();
            push_homography(&mut out, h);
            out.push('\n');
        }
        for (p, (h, v)) in gt.vps[view].iter().enumerate() {
            write!(out, "vp {view} {p} ").unwrap();
            push_hom_point(&mut out, h);
            out.push(' ');
            push_hom_point(&mut out, v);
            out.push('\n');
        }
        for (p, ws) in gt.windows[view].iter().enumerate() {
            for q in ws {
                write!(out, "window {view} {p} ").unwrap();
                push_quad(&mut out, q);
                out.push('\n');
            }
        }
        for (p, (lo, hi)) in gt.extents[view].iter().enumerate() {
            writeln!(out, "extent {view} {p} {lo} {hi}").unwrap();
        }
    }
    for (i, j, p) in &gt.box_pairs {
        writeln!(out, "box {i} {j} {p}").unwrap();
    }
    for view in 0..2 {
        for i in &gt.distractors[view] {
            writeln!(out, "distractor {view} {i}").unwrap();
        }
    }
    for (i, j, p) in &gt.feature_pairs {
        writeln!(out, "feature {i} {j} {p}").unwrap();
    }
    out
}

pub fn parse_truth(text: &str, file: &Path) -> CliResult<GroundTruth> {
    let mut gt = GroundTruth {
        plane_h: Vec::new(),
        plane_to_image: [Vec::new(), Vec::new()],
        vps: [Vec::new(), Vec::new()],
        windows: [Vec::new(), Vec::new()],
        box_pairs: Vec::new(),
        distractors: [Vec::new(), Vec::new()],
        feature_pairs: Vec::new(),
        extents: [Vec::new(), Vec::new()],
    };
    // Indexed records must arrive in order so the vectors rebuild exactly.
    fn next_slot(f: &Fields, p: usize, len: usize) -> CliResult<()> {
        if p == len {
            Ok(())
        } else {
            Err(f.err(format!("expected index {len}, found {p}")))
        }
    }
    fn view(f: &mut Fields) -> CliResult<usize> {
        let v = f.index()?;
        if v < 2 {
            Ok(v)
        } else {
            Err(f.err("view must be 0 or 1"))
        }
    }
    for mut f in records(text, file) {
        match f.word()? {
            "plane" => {
                let p = f.index()?;
                next_slot(&f, p, gt.plane_h.len())?;
                gt.plane_h.push(f.homography()?);
            }
            "to_image" => {
                let (v, p) = (view(&mut f)?, f.index()?);
                next_slot(&f, p, gt.plane_to_image[v].len())?;
                gt.plane_to_image[v].push(f.homography()?);
            }
            "vp" => {
                let (v, p) = (view(&mut f)?, f.index()?);
                next_slot(&f, p, gt.vps[v].len())?;
                let pair = (f.hom_point()?, f.hom_point()?);
                gt.vps[v].push(pair);
            }
            "window" => {
                let (v, p) = (view(&mut f)?, f.index()?);
                let ws = &mut gt.windows[v];
                if p >= ws.len() {
                    if p >= gt.plane_h.len() {
                        return Err(f.err(format!("window on undeclared plane {p}")));
                    }
                    ws.resize(p + 1, Vec::new());
                }
                let q = f.quad()?;
                gt.windows[v][p].push(q);
            }
            "extent" => {
                let (v, p) = (view(&mut f)?, f.index()?);
                next_slot(&f, p, gt.extents[v].len())?;
                let [lo, hi] = f.reals()?;
                gt.extents[v].push((lo, hi));
            }
            "box" => gt.box_pairs.push((f.index()?, f.index()?, f.index()?)),
            "distractor" => {
                let v = view(&mut f)?;
                gt.distractors[v].push(f.index()?);
            }
            "feature" => gt.feature_pairs.push((f.index()?, f.index()?, f.index()?)),
            other => return Err(f.err(format!("unknown record {other:?}"))),
        }
        f.end()?;
    }
    for ws in gt.windows.iter_mut() {
        ws.resize(gt.plane_h.len(), Vec::new());
    }
    Ok(gt)
}
