use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn smod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smod")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_detect_eval_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let dets = dir.path().join("dets.jsonl");
    let report = dir.path().join("report.json");

    let o = smod(&["synth", "--preset", "easy", "--seed", "7", "--frames", "24", "--out", p(&scene)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(scene.join("000024.ppm").exists());
    assert!(scene.join("truth.jsonl").exists());

    let o = smod(&["detect", "--frames", p(&scene), "--out", p(&dets)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = fs::read_to_string(&dets).unwrap();
    assert!(lines.lines().count() > 10, "too few detections:\n{lines}");

    let o = smod(&[
        "eval",
        "--dets",
        p(&dets),
        "--truth",
        p(&scene.join("truth.jsonl")),
        "--json",
        p(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("Prec50") && table.contains("AP75"), "{table}");
    assert_eq!(table.lines().count(), 2);
    let json = fs::read_to_string(&report).unwrap();
    assert!(json.contains("\"ap50\""), "{json}");

    let over = dir.path().join("overlay");
    let o = smod(&["overlay", "--frames", p(&scene), "--dets", p(&dets), "--truth", p(&scene.join("truth.jsonl")), "--out", p(&over)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(over.join("000012.png").exists());

    let cubes = dir.path().join("cubes");
    let o = smod(&["cubes", "--frames", p(&scene), "--frame", "12", "--out", p(&cubes)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dumped: Vec<_> = fs::read_dir(&cubes).unwrap().collect();
    assert!(!dumped.is_empty());
    for d in dumped {
        let d = d.unwrap().path();
        assert!(d.file_name().unwrap().to_str().unwrap().starts_with("f000012_"));
        assert!(d.join("meta.json").exists() && d.join("channel_6.png").exists());
    }
}

#[test]
fn detect_rejects_short_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let o = smod(&["synth", "--frames", "3", "--width", "160", "--height", "120", "--out", p(&scene)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = smod(&["detect", "--frames", p(&scene), "--n", "5", "--out", p(&dir.path().join("d.jsonl"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sequence shorter than window"), "{}", stderr(&o));
}

#[test]
fn detect_rejects_even_window() {
    let dir = tempfile::tempdir().unwrap();
    let o = smod(&["detect", "--frames", p(dir.path()), "--n", "4", "--out", p(&dir.path().join("d.jsonl"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("window length must be odd"), "{}", stderr(&o));
}

#[test]
fn external_adapters_drive_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let o = smod(&["synth", "--seed", "3", "--frames", "12", "--width", "320", "--height", "240", "--out", p(&scene)]);
    assert!(o.status.success(), "{}", stderr(&o));

    // the truth file doubles as perfect coarse detections; pass-through
    // fine detection then reports tracks on their coarse boxes
    let dets = dir.path().join("d.jsonl");
    let truth = scene.join("truth.jsonl");
    let o = smod(&["detect", "--frames", p(&scene), "--external-coarse", p(&truth), "--passthrough-fine", "--out", p(&dets)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = smod(&["eval", "--dets", p(&dets), "--truth", p(&truth)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&dets).unwrap().lines().count() > 0);

    // an empty fine file suppresses everything
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = smod(&["detect", "--frames", p(&scene), "--external-coarse", p(&truth), "--external-fine", p(&empty), "--out", p(&dets)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&dets).unwrap(), "");
}

#[test]
fn usage_errors() {
    let o = smod(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = smod(&["eval", "--dets", "a", "--truth", "b", "--bogus"]);
    assert!(!o.status.success());
    let o = smod(&["eval", "--dets", "missing.jsonl", "--truth", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}
