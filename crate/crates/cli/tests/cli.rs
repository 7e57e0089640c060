use std::path::Path;
use std::process::{Command, Output};

use objguide::geom::Point;
use objguide::rectify::backproject_quad;
use objguide_cli::formats::{parse_matches, parse_rectifiers, parse_truth, read_text, write_matches};
use objguide::Match;
use tempfile::TempDir;

fn objguide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objguide")).args(args).output().expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(objguide(&args));
}

fn report_value<'a>(report: &'a str, key: &str) -> Vec<&'a str> {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no {key} in report"))
        .split_whitespace()
        .collect()
}

#[test]
fn self_pair_matches_every_feature_to_itself() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--seed", "3"]);
    let v1 = tmp.path().join("view1");
    let out = tmp.path().join("out");
    let report = ok(objguide(&["match", s(&v1), s(&v1), "--out", s(&out)]));
    let groups: usize = report_value(&report, "groups")[0].parse().unwrap();
    assert!(groups >= 1);
    let m = parse_matches(&read_text(&out.join("matches.txt")).unwrap(), Path::new("m")).unwrap();
    let n_feats = read_text(&v1.join("features.txt")).unwrap().lines().count() - 1;
    assert_eq!(m.len(), n_feats);
    assert!(m.iter().all(|m| m.i == m.j));
}

#[test]
fn union_mode_sees_at_least_as_many_boxes() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--seed", "1"]);
    let (v1, v2) = (tmp.path().join("view1"), tmp.path().join("view2"));
    let counts = |mode: &str| -> Vec<usize> {
        let out = tmp.path().join(format!("out-{}", mode.len()));
        let r = ok(objguide(&["match", s(&v1), s(&v2), "--out", s(&out), "--mode", mode]));
        report_value(&r, "boxes_matched").iter().map(|v| v.parse().unwrap()).collect()
    };
    let (o, ora) = (counts("O"), counts("(O+R)A"));
    assert!(ora[0] >= o[0] && ora[1] >= o[1], "{o:?} vs {ora:?}");
}

#[test]
fn missing_features_file_exits_2() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let v1 = tmp.path().join("view1");
    std::fs::remove_file(v1.join("features.txt")).unwrap();
    let out = objguide(&["match", s(&v1), s(&tmp.path().join("view2")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features.txt"));
}

#[test]
fn parse_error_reports_file_and_line() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let v1 = tmp.path().join("view1");
    let mut text = read_text(&v1.join("segments.txt")).unwrap();
    text.push_str("1 2 three 4\n");
    let line = text.lines().count();
    std::fs::write(v1.join("segments.txt"), text).unwrap();
    let out = objguide(&["vps", s(&v1)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("segments.txt:{line}:")), "{err}");
}

#[test]
fn descriptor_dimension_mismatch_exits_3() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let (v1, v2) = (tmp.path().join("view1"), tmp.path().join("view2"));
    std::fs::write(v2.join("features.txt"), "D 2\n10 10 1 0\n20 20 0 1\n").unwrap();
    let out = objguide(&["match", s(&v1), s(&v2), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(v2.join("features.txt"), "D 2\n10 10 1 0\n20 20 0 1 1\n").unwrap();
    let out = objguide(&["match", s(&v1), s(&v2), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features.txt:3:"));
}

#[test]
fn invalid_flags_are_rejected() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let v1 = tmp.path().join("view1");
    let out = objguide(&["match", s(&v1), s(&v1), "--out", s(&tmp.path().join("o")), "--mode", "Q"]);
    assert!(!out.status.success());
    let out = objguide(&["match", s(&v1), s(&v1), "--out", s(&tmp.path().join("o")), "--gem-p", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn vps_on_axis_aligned_segments() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("image.txt"), "640 480\n").unwrap();
    std::fs::write(dir.join("features.txt"), "D 0\n").unwrap();
    let mut segs = String::new();
    for k in 0..12 {
        let y = 30.0 + 35.0 * k as f64;
        segs.push_str(&format!("{} {y} {} {y}\n", 40 + 7 * k, 300 + 11 * k));
        let x = 25.0 + 48.0 * k as f64;
        segs.push_str(&format!("{x} {} {x} {}\n", 20 + 5 * k, 200 + 13 * k));
    }
    std::fs::write(dir.join("segments.txt"), segs).unwrap();
    let out = ok(objguide(&["vps", s(dir)]));
    let kinds: Vec<&str> = out.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(kinds.len(), 2, "{out}");
    assert!(kinds.contains(&"vertical") && kinds.contains(&"horizontal"), "{out}");
}

#[test]
fn rectify_round_trips_the_planted_warp() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--scene", "single", "--noise", "none", "--seed", "4"]);
    let v1 = tmp.path().join("view1");
    let out = tmp.path().join("rect");
    ok(objguide(&["rectify", s(&v1), "--out", s(&out)]));
    let rects = parse_rectifiers(&read_text(&out.join("rectifiers.txt")).unwrap(), Path::new("r")).unwrap();
    assert_eq!(rects.len(), 1);
    let truth = parse_truth(&read_text(&tmp.path().join("truth.txt")).unwrap(), Path::new("t")).unwrap();
    let r = &rects[0];
    for q in &truth.windows[0][0] {
        let mapped: Vec<Point<f64>> = q.corners().iter().map(|c| r.h.map_point(c).unwrap()).collect();
        let det = objguide::DetBox::new(
            mapped.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            mapped.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
            mapped.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            mapped.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
            1.0,
        )
        .unwrap();
        let back = backproject_quad(&det, r).unwrap();
        for (a, b) in back.corners().iter().zip(q.corners()) {
            assert!((a - b).norm() < 1.0, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn eval_of_perfect_matches_prints_precision_one() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--seed", "2"]);
    let truth_path = tmp.path().join("truth.txt");
    let truth = parse_truth(&read_text(&truth_path).unwrap(), Path::new("t")).unwrap();
    let res = tmp.path().join("res");
    std::fs::create_dir(&res).unwrap();
    let m: Vec<Match> = truth.feature_pairs.iter().map(|&(i, j, _)| Match { i, j, sim: 1.0, group_id: -1 }).collect();
    std::fs::write(res.join("matches.txt"), write_matches(&m)).unwrap();
    let out = ok(objguide(&[
        "eval",
        s(&truth_path),
        s(&tmp.path().join("view1")),
        s(&tmp.path().join("view2")),
        s(&res),
    ]));
    assert!(out.lines().any(|l| l == "precision 1"), "{out}");
    assert!(out.lines().any(|l| l == "recall 1"), "{out}");
}

#[test]
fn batch_serial_and_parallel_write_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let mut list = String::new();
    for seed in 0..3 {
        let scene = tmp.path().join(format!("s{seed}"));
        synth(&scene, &["--seed", &seed.to_string()]);
        list.push_str(&format!("s{seed}/view1 s{seed}/view2 par/{seed}\n"));
    }
    std::fs::write(tmp.path().join("pairs.txt"), &list).unwrap();
    std::fs::write(tmp.path().join("serial.txt"), list.replace("par/", "ser/")).unwrap();
    let a = ok(objguide(&["batch", s(&tmp.path().join("pairs.txt"))]));
    let b = ok(objguide(&["batch", s(&tmp.path().join("serial.txt")), "--serial"]));
    assert_eq!(a.lines().count(), 3);
    assert_eq!(a.replace("par/", ""), b.replace("ser/", ""));
    for seed in 0..3 {
        for f in ["matches.txt", "groups.txt", "report.txt"] {
            let x = std::fs::read(tmp.path().join(format!("par/{seed}/{f}"))).unwrap();
            let y = std::fs::read(tmp.path().join(format!("ser/{seed}/{f}"))).unwrap();
            assert_eq!(x, y, "seed {seed} {f}");
        }
    }
}

#[test]
fn batch_reports_the_failing_pair() {
    let tmp = TempDir::new().unwrap();
    synth(&tmp.path().join("a"), &[]);
    std::fs::write(tmp.path().join("pairs.txt"), "a/view1 a/view2 o1\nmissing a/view2 o2\n").unwrap();
    let out = objguide(&["batch", s(&tmp.path().join("pairs.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().next().unwrap().contains("groups"));
    assert!(stdout.lines().nth(1).unwrap().contains("error"));
}
