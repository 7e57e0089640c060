use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use objguide::geom::filter_short;
use objguide::guided::{analyze_image, match_pair, PairReport, PairResult};
use objguide::rectify::{BoxMode, ColumnInterval};
use objguide::synth::{self, DetectorModel, Noise, SceneSpec, Score};
use objguide::vanishing::{classify, estimate_vps};
use objguide::{ImageInputs, PipelineParams, Rectifier, VanishingPoint};

use crate::error::{CliError, CliResult};
use crate::formats::*;

/// Matching and detection parameters shared by every pipeline command.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Candidate boxes proposed per image-1 box.
    #[arg(long, default_value_t = 5)]
    pub k_candidates: usize,
    /// Projected-box IoU above which two boxes correspond.
    #[arg(long, default_value_t = 0.5)]
    pub iou_thresh: f64,
    /// Guided search radius, pixels.
    #[arg(long, default_value_t = 20.0)]
    pub r_search: f64,
    /// Vanishing point inlier threshold, degrees.
    #[arg(long, default_value_t = 2.0)]
    pub angle_thresh: f64,
    /// Shorter segments are dropped, pixels.
    #[arg(long, default_value_t = 20.0)]
    pub min_seg_len: f64,
    #[arg(long, default_value_t = 3.0)]
    pub gem_p: f64,
    /// Ratio test for descriptor-only matches.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    /// Box streams: O, OA, R, RA, O+R or (O+R)A.
    #[arg(long, default_value = "(O+R)A", value_parser = parse_mode)]
    pub mode: BoxMode,
    /// Seed of the vanishing point sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight of each vanishing point correspondence in refinement
    /// [default: number of supporting box pairs].
    #[arg(long)]
    pub vp_weight: Option<f64>,
}

fn parse_mode(s: &str) -> Result<BoxMode, String> {
    s.parse().map_err(|e: objguide::Error| e.to_string())
}

impl Default for PipelineArgs {
    fn default() -> Self {
        let p = PipelineParams::default();
        Self {
            k_candidates: p.matching.k,
            iou_thresh: p.matching.eps_iou,
            r_search: p.matching.r_search,
            angle_thresh: p.vp.angle_thresh,
            min_seg_len: p.min_seg_len,
            gem_p: p.matching.gem_p,
            ratio: p.matching.ratio,
            mode: p.mode,
            seed: p.vp.rng_seed,
            vp_weight: p.matching.vp_weight,
        }
    }
}

impl PipelineArgs {
    pub fn params(&self) -> CliResult<PipelineParams> {
        let mut p = PipelineParams::default();
        p.matching.k = self.k_candidates;
        p.matching.eps_iou = self.iou_thresh;
        p.matching.r_search = self.r_search;
        p.matching.gem_p = self.gem_p;
        p.matching.ratio = self.ratio;
        p.matching.vp_weight = self.vp_weight;
        p.vp.angle_thresh = self.angle_thresh;
        p.vp.rng_seed = self.seed;
        p.min_seg_len = self.min_seg_len;
        p.mode = self.mode;
        p.matching.validate()?;
        p.vp.validate()?;
        Ok(p)
    }

    fn describe(&self, out: &mut String) {
        writeln!(out, "mode {}", self.mode).unwrap();
        writeln!(out, "k_candidates {}", self.k_candidates).unwrap();
        writeln!(out, "iou_thresh {}", self.iou_thresh).unwrap();
        writeln!(out, "r_search {}", self.r_search).unwrap();
        writeln!(out, "angle_thresh {}", self.angle_thresh).unwrap();
        writeln!(out, "min_seg_len {}", self.min_seg_len).unwrap();
        writeln!(out, "gem_p {}", self.gem_p).unwrap();
        writeln!(out, "ratio {}", self.ratio).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        match self.vp_weight {
            Some(w) => writeln!(out, "vp_weight {w}").unwrap(),
            None => writeln!(out, "vp_weight pairs").unwrap(),
        }
    }
}

fn read_required<T>(dir: &Path, name: &str, parse: impl Fn(&str, &Path) -> CliResult<T>) -> CliResult<T> {
    let path = dir.join(name);
    parse(&read_text(&path)?, &path)
}

fn read_optional<T>(dir: &Path, name: &str, parse: impl Fn(&str, &Path) -> CliResult<T>) -> CliResult<Option<T>> {
    let path = dir.join(name);
    if path.exists() {
        Ok(Some(parse(&read_text(&path)?, &path)?))
    } else {
        Ok(None)
    }
}

/// Reads one image directory. `image.txt`, `segments.txt` and
/// `features.txt` are required; `boxes.txt`, `quads.txt` and
/// `rectifiers.txt` may be absent.
pub fn load_image(dir: &Path) -> CliResult<ImageInputs> {
    Ok(ImageInputs {
        size: read_required(dir, "image.txt", parse_image_size)?,
        segments: read_required(dir, "segments.txt", parse_segments)?,
        boxes: read_optional(dir, "boxes.txt", parse_boxes)?.unwrap_or_default(),
        quads: read_optional(dir, "quads.txt", parse_quads)?.unwrap_or_default(),
        rectifiers: read_optional(dir, "rectifiers.txt", parse_rectifiers)?,
        features: read_required(dir, "features.txt", parse_features)?,
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { file: dir.to_path_buf(), source })
}

pub fn save_image(dir: &Path, img: &ImageInputs) -> CliResult<()> {
    create_dir(dir)?;
    write_text(&dir.join("image.txt"), &write_image_size(img.size))?;
    write_text(&dir.join("segments.txt"), &write_segments(&img.segments))?;
    write_text(&dir.join("boxes.txt"), &write_boxes(&img.boxes))?;
    write_text(&dir.join("quads.txt"), &write_quads(&img.quads))?;
    if let Some(r) = &img.rectifiers {
        write_text(&dir.join("rectifiers.txt"), &write_rectifiers(r))?;
    }
    write_text(&dir.join("features.txt"), &write_features(&img.features))
}

/// Stage counts followed by the parameters that produced them.
pub fn format_report(args: &PipelineArgs, r: &PairReport, matches: usize) -> String {
    let mut out = String::new();
    let pair = |out: &mut String, key: &str, v: [usize; 2]| writeln!(out, "{key} {} {}", v[0], v[1]).unwrap();
    pair(&mut out, "vps", r.vps);
    pair(&mut out, "boxes_O", r.orthogonal);
    pair(&mut out, "boxes_OA", r.adjusted);
    pair(&mut out, "boxes_R", r.rectified);
    pair(&mut out, "boxes_RA", r.rectified_adjusted);
    pair(&mut out, "boxes_matched", r.boxes);
    writeln!(out, "groups {}", r.groups).unwrap();
    writeln!(out, "refined {}", r.refined).unwrap();
    writeln!(out, "guided {}", r.guided).unwrap();
    writeln!(out, "additional {}", r.additional).unwrap();
    writeln!(out, "matches {matches}").unwrap();
    args.describe(&mut out);
    out
}

/// Runs the pipeline on `img1`/`img2` and writes `matches.txt`,
/// `groups.txt` and `report.txt` into `out`. Returns the report text.
pub fn cmd_match(img1: &Path, img2: &Path, out: &Path, args: &PipelineArgs) -> CliResult<String> {
    let params = args.params()?;
    let (a, b) = (load_image(img1)?, load_image(img2)?);
    let res: PairResult<f64> = match_pair(&a, &b, &params)?;
    let report = format_report(args, &res.report, res.matches.matches.len());
    create_dir(out)?;
    write_text(&out.join("matches.txt"), &write_matches(&res.matches.matches))?;
    write_text(&out.join("groups.txt"), &write_groups(&GroupRecord::from_groups(&res.matches.groups)))?;
    write_text(&out.join("report.txt"), &report)?;
    Ok(report)
}

/// Vanishing points of one image, classified about the image center.
pub fn cmd_vps(img: &Path, args: &PipelineArgs) -> CliResult<Vec<VanishingPoint>> {
    let params = args.params()?;
    let inputs = load_image(img)?;
    let segments = filter_short(&inputs.segments, params.min_seg_len);
    let mut vps = estimate_vps(&segments, &params.vp)?;
    classify(&mut vps, &params.vp, &inputs.size.center());
    Ok(vps)
}

/// Rectifiers and plane columns built from the image's own vanishing
/// points; any `rectifiers.txt` in the directory is ignored.
pub fn cmd_rectify(img: &Path, args: &PipelineArgs) -> CliResult<(Vec<Rectifier>, Vec<ColumnInterval>)> {
    let params = args.params()?;
    let mut inputs = load_image(img)?;
    inputs.rectifiers = None;
    let a = analyze_image(&inputs, &params)?;
    Ok((a.rectifiers, a.columns))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    /// Two facades meeting at a corner.
    TwoFacades,
    /// Two facades, one heavily slanted.
    Slanted,
    /// One facade with a 3 × 4 window grid.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseKind {
    None,
    Default,
    DayNight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorKind {
    Hull,
    Midline,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SceneKind::TwoFacades)]
    pub scene: SceneKind,
    #[arg(long, value_enum, default_value_t = NoiseKind::Default)]
    pub noise: NoiseKind,
    #[arg(long, value_enum, default_value_t = DetectorKind::Hull)]
    pub detector: DetectorKind,
    #[arg(long, default_value_t = 128)]
    pub descriptor_dim: usize,
}

impl SynthArgs {
    pub fn spec(&self) -> SceneSpec {
        let mut s = match self.scene {
            SceneKind::TwoFacades => SceneSpec::two_facades(self.seed),
            SceneKind::Slanted => SceneSpec::slanted_pair(self.seed),
            SceneKind::Single => SceneSpec::single_facade(self.seed, (3, 4), 25.0),
        };
        s.noise = match self.noise {
            NoiseKind::None => Noise::none(),
            NoiseKind::Default => Noise::default(),
            NoiseKind::DayNight => Noise::day_night(),
        };
        s.detector = match self.detector {
            DetectorKind::Hull => DetectorModel::Hull,
            DetectorKind::Midline => DetectorModel::Midline,
        };
        s.descriptor_dim = self.descriptor_dim;
        s
    }
}

/// Writes `view1/`, `view2/` and `truth.txt` under `out`.
pub fn cmd_synth(out: &Path, args: &SynthArgs) -> CliResult<()> {
    let scene = synth::generate(&args.spec())?;
    create_dir(out)?;
    save_image(&out.join("view1"), &scene.views[0])?;
    save_image(&out.join("view2"), &scene.views[1])?;
    write_text(&out.join("truth.txt"), &write_truth(&scene.truth))
}

/// Scores `matches.txt` and `groups.txt` in `result` against `truth`.
pub fn cmd_eval(truth: &Path, img1: &Path, img2: &Path, result: &Path, tol: f64) -> CliResult<Score> {
    let gt = parse_truth(&read_text(truth)?, truth)?;
    let f1 = read_required(img1, "features.txt", parse_features)?;
    let f2 = read_required(img2, "features.txt", parse_features)?;
    let matches = read_required(result, "matches.txt", parse_matches)?;
    let groups = read_optional(result, "groups.txt", parse_groups)?.unwrap_or_default();
    let hs: Vec<_> = groups.iter().map(|g| g.h).collect();
    Ok(synth::score_matches(&matches, &hs, &f1, &f2, &gt, tol))
}

pub fn format_score(s: &Score) -> String {
    let mut out = format!(
        "precision {}\nrecall {}\ncorrect {}\nmatches {}\ntruth {}\n",
        s.precision, s.recall, s.correct, s.matches, s.truth
    );
    for (g, e) in s.homography_errors.iter().enumerate() {
        writeln!(out, "homography_error {g} {e}").unwrap();
    }
    out
}

/// One line of a batch list: `<image1 dir> <image2 dir> <output dir>`,
/// relative paths taken from the list's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchJob {
    pub img1: PathBuf,
    pub img2: PathBuf,
    pub out: PathBuf,
}

pub fn parse_batch(text: &str, file: &Path) -> CliResult<Vec<BatchJob>> {
    let base = file.parent().unwrap_or(Path::new(""));
    let mut jobs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            [a, b, o] => jobs.push(BatchJob { img1: base.join(a), img2: base.join(b), out: base.join(o) }),
            _ => return Err(CliError::parse(file, n + 1, "expected `<image1> <image2> <output>`")),
        }
    }
    Ok(jobs)
}

/// Runs every job, in parallel unless `serial`. Results come back in list
/// order whichever way they ran.
pub fn cmd_batch(jobs: &[BatchJob], args: &PipelineArgs, serial: bool) -> Vec<CliResult<String>> {
    let run = |j: &BatchJob| cmd_match(&j.img1, &j.img2, &j.out, args);
    if serial {
        jobs.iter().map(run).collect()
    } else {
        jobs.par_iter().map(run).collect()
    }
}
