mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gapart::io::{self, ply};
use gapart::pipeline::{PartsDoc, PlanDoc, PoseEvalDoc, ProposalsDoc, SegEvalDoc};

const SUBCOMMANDS: [&str; 8] = ["ingest", "fps", "segment", "fit-pose", "eval-seg", "eval-pose", "plan", "adv-demo"];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gapart"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    common::fixture_dir().join(name).display().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_and_version_everywhere() {
    for sub in SUBCOMMANDS {
        let out = run(&[sub, "--help"]);
        ok(&out);
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
        let out = run(&[sub, "--version"]);
        ok(&out);
        assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")), "{sub}");
    }
    ok(&run(&["--help"]));
    ok(&run(&["--version"]));
}

#[test]
fn segment_matches_golden_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("proposals.json");
    ok(&run(&["segment", "--cloud", &fixture("cloud.ply"), "--pred", &fixture("pred.bin"), "--out", path_str(&out)]));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("segment_golden.json")).unwrap());
}

#[test]
fn config_paths_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let cfg = dir.path().join("run.toml");
    let text = format!(
        "[filter]\nscore_thresh = 0.95\n\n[paths]\ncloud = {:?}\npred = {:?}\nout = {:?}\n",
        fixture("cloud.ply"),
        fixture("pred.bin"),
        path_str(&out)
    );
    std::fs::write(&cfg, text).unwrap();
    ok(&run(&["--config", path_str(&cfg), "segment"]));
    let doc: ProposalsDoc = io::read_json(&out).unwrap();
    assert!(doc.proposals.is_empty());
    ok(&run(&["--config", path_str(&cfg), "segment", "--score-thresh", "0.09"]));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("segment_golden.json")).unwrap());
}

#[test]
fn unknown_config_key_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[grouping]\nradius = 0.03\nradios = 0.1\n").unwrap();
    let res = run(&[
        "--config",
        path_str(&cfg),
        "segment",
        "--cloud",
        &fixture("cloud.ply"),
        "--pred",
        &fixture("pred.bin"),
        "--out",
        path_str(&out),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let res = run(&["segment", "--cloud", "/nonexistent.ply", "--pred", &fixture("pred.bin"), "--out", path_str(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

fn fit(dir: &Path) -> PathBuf {
    let parts = dir.join("parts.json");
    ok(&run(&[
        "fit-pose",
        "--cloud",
        &fixture("cloud.ply"),
        "--npcs",
        &fixture("npcs.bin"),
        "--proposals",
        &fixture("segment_golden.json"),
        "--out",
        path_str(&parts),
    ]));
    parts
}

#[test]
fn fit_then_eval_pose() {
    let dir = tempfile::tempdir().unwrap();
    let parts = fit(dir.path());
    let doc: PartsDoc = io::read_json(&parts).unwrap();
    assert_eq!(doc.parts.len(), 4);
    let eval = dir.path().join("eval.json");
    ok(&run(&["eval-pose", "--parts", path_str(&parts), "--gt", &fixture("gt_parts.json"), "--out", path_str(&eval)]));
    let rep: PoseEvalDoc = io::read_json(&eval).unwrap();
    assert_eq!(rep.per_part.len(), 4);
    for p in &rep.per_part {
        // float32 NPCS input bounds the achievable accuracy
        assert!(p.errors.rotation_deg < 1e-3, "{p:?}");
        assert!(p.errors.translation_cm < 1e-3, "{p:?}");
    }
}

#[test]
fn eval_pose_identity_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let eval = dir.path().join("eval.json");
    ok(&run(&["eval-pose", "--parts", &fixture("gt_parts.json"), "--gt", &fixture("gt_parts.json"), "--out", path_str(&eval)]));
    let rep: PoseEvalDoc = io::read_json(&eval).unwrap();
    assert_eq!(rep.per_part.len(), 4);
    for p in &rep.per_part {
        assert!(p.errors.rotation_deg.abs() < 1e-6, "{p:?}");
        assert_eq!(p.errors.translation_cm, 0.0);
    }
}

#[test]
fn eval_seg_on_golden_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let eval = dir.path().join("seg.json");
    ok(&run(&["eval-seg", "--proposals", &fixture("segment_golden.json"), "--gt", &fixture("cloud.ply"), "--out", path_str(&eval)]));
    let rep: SegEvalDoc = io::read_json(&eval).unwrap();
    // the door loses its low-foreground points but still clears IoU 0.5
    assert_eq!(rep.mean_ap50, Some(1.0));
}

#[test]
fn plan_door_and_refuse_fixed_handle() {
    let dir = tempfile::tempdir().unwrap();
    let gt: PartsDoc = io::read_json(&common::fixture_dir().join("gt_parts.json")).unwrap();
    let id_of = |name: &str| gt.parts.iter().find(|p| p.label.name() == name).unwrap().id.to_string();
    let out = dir.path().join("plan.json");
    let door = id_of("hinge_door");
    ok(&run(&["plan", "--parts", &fixture("gt_parts.json"), "--part-id", &door, "--range", "60", "--out", path_str(&out)]));
    let plan: PlanDoc = io::read_json(&out).unwrap();
    assert!(plan.success);
    assert!((plan.motion_range - 60f64.to_radians()).abs() < 1e-12);
    assert!((plan.replayed_motion - plan.motion_range).abs() < 1e-9);

    let drawer = id_of("slider_drawer");
    ok(&run(&["plan", "--parts", &fixture("gt_parts.json"), "--part-id", &drawer, "--range", "0.2", "--out", path_str(&out)]));
    let plan: PlanDoc = io::read_json(&out).unwrap();
    assert!((plan.replayed_motion - 0.2).abs() < 1e-9);

    let handle = id_of("line_fixed_handle");
    let bad = dir.path().join("bad.json");
    let res = run(&["plan", "--parts", &fixture("gt_parts.json"), "--part-id", &handle, "--range", "0.1", "--out", path_str(&bad)]);
    assert!(!res.status.success());
    assert!(!bad.exists());
}

#[test]
fn fps_writes_cloud_and_indices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.ply");
    let idx = dir.path().join("i.json");
    ok(&run(&["fps", "--cloud", &fixture("cloud.ply"), "--num-points", "16", "--out", path_str(&out), "--indices-out", path_str(&idx)]));
    assert_eq!(ply::read_ply(&out).unwrap().len(), 16);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&idx).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["indices"].as_array().unwrap().len(), 16);
    assert_eq!(v["indices"][0], 0);
}

#[test]
fn ingest_back_projects_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("d.png");
    let color = dir.path().join("c.png");
    let mut d = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(4, 3);
    for (x, _, p) in d.enumerate_pixels_mut() {
        *p = image::Luma([if x == 0 { 0 } else { 1000 + x as u16 }]);
    }
    d.save(&depth).unwrap();
    image::RgbImage::from_pixel(4, 3, image::Rgb([255, 0, 0])).save(&color).unwrap();
    let intr = dir.path().join("k.json");
    std::fs::write(&intr, r#"{"fx": 2.0, "fy": 2.0, "cx": 1.5, "cy": 1.0, "width": 4, "height": 3}"#).unwrap();
    let out = dir.path().join("cloud.ply");
    ok(&run(&[
        "ingest",
        "--depth",
        path_str(&depth),
        "--color",
        path_str(&color),
        "--intrinsics",
        path_str(&intr),
        "--out",
        path_str(&out),
    ]));
    let cloud = ply::read_ply(&out).unwrap();
    assert_eq!(cloud.len(), 9);
    assert!(cloud.positions.iter().all(|p| p.z > 1.0 && p.z < 1.01));
    assert!(cloud.colors.unwrap().iter().all(|c| *c == [1.0, 0.0, 0.0]));
}

#[test]
fn adv_demo_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo.json");
    ok(&run(&["adv-demo", "--epochs", "3", "--seed", "1", "--out", path_str(&out)]));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["epochs"].as_array().unwrap().len(), 4);
    let res = run(&["adv-demo", "--domains", "1", "--out", path_str(&dir.path().join("x.json"))]);
    assert!(!res.status.success());
}

#[test]
fn documented_config_parses() {
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/formats.md")).unwrap();
    let block: String = doc
        .split("```toml\n")
        .nth(1)
        .and_then(|rest| rest.split("```").next())
        .unwrap()
        .to_string();
    let cfg = gapart::config::parse_config(Path::new("formats.md"), &block).unwrap();
    assert_eq!(cfg.ransac.iterations, 100);
    assert!(cfg.paths.cloud.is_some());
}
