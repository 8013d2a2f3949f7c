use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn repest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repest"))
        .args(args)
        .env("REPEST_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_flow(dir: &Path, case: &str, extra: &[&str]) {
    let mut args = vec![
        "synth",
        "--case",
        case,
        "--out",
        p(dir),
        "--duration",
        "10",
        "--width",
        "32",
        "--height",
        "32",
    ];
    args.extend_from_slice(extra);
    let o = repest(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn help_succeeds() {
    let o = repest(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["count", "eval", "synth", "spectrum", "segment"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn conflicting_sources_are_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let d = p(tmp.path());
    let o = repest(&["count", "--frames", d, "--flow", d, "--fps", "30"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_source_is_a_usage_error() {
    let o = repest(&["count", "--fps", "30"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_case_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = repest(&["synth", "--case", "juggling", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn short_clip_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("clip");
    let o = repest(&[
        "synth",
        "--case",
        "bouncing_square",
        "--out",
        p(&out),
        "--duration",
        "0.5",
        "--fps",
        "30",
        "--freq",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let frames = out.join("frames");
    let names: Vec<_> = fs::read_dir(&frames)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    for path in names.iter().filter(|p| {
        let n = p.file_name().unwrap().to_str().unwrap();
        n >= "frame_00004.pgm"
    }) {
        fs::remove_file(path).unwrap();
    }
    let o = repest(&["count", "--frames", p(&frames), "--fps", "30"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("clip too short"), "{err}");
}

#[test]
fn count_from_flow_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let clip = tmp.path().join("clip");
    synth_flow(&clip, "osc_translation_side", &["--freq", "1"]);
    let flow = clip.join("flow");
    let (r1, r2) = (tmp.path().join("r1.json"), tmp.path().join("r2.json"));
    let masks = tmp.path().join("masks");
    let o1 = repest(&[
        "count",
        "--flow",
        p(&flow),
        "--fps",
        "30",
        "--report",
        p(&r1),
        "--masks",
        p(&masks),
    ]);
    assert_eq!(code(&o1), 0, "{}", stderr(&o1));
    let o2 = repest(&[
        "count",
        "--flow",
        p(&flow),
        "--fps",
        "30",
        "--report",
        p(&r2),
    ]);
    assert_eq!(code(&o2), 0);
    assert_eq!(o1.stdout, o2.stdout);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());

    let stdout = String::from_utf8(o1.stdout).unwrap();
    let count: f64 = stdout
        .trim()
        .strip_prefix("count: ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((count - 10.0).abs() <= 1.0, "count {count}");

    let report: serde_json::Value = serde_json::from_slice(&fs::read(&r1).unwrap()).unwrap();
    let trace = report["freq_trace"].as_array().unwrap();
    assert_eq!(trace.len(), 300);
    assert_eq!(report["increments"].as_array().unwrap().len(), 300);
    assert!(report["count"].as_f64().is_some());
    assert_eq!(fs::read_dir(&masks).unwrap().count(), 300);
    assert!(masks.join("mask_00000.pgm").exists());
}

#[test]
fn eval_formats_agree() {
    let tmp = TempDir::new().unwrap();
    let clip = tmp.path().join("clip");
    synth_flow(&clip, "osc_expansion_front", &["--freq", "0.8"]);
    let manifest = clip.join("manifest.json");
    let (json, csv) = (tmp.path().join("r.json"), tmp.path().join("r.csv"));
    let o = repest(&["eval", "--manifest", p(&manifest), "--report", p(&json)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = repest(&[
        "eval",
        "--manifest",
        p(&manifest),
        "--report",
        p(&csv),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let j: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    let pred_json = j["videos"][0]["predicted_count"].as_f64().unwrap();
    let csv_text = fs::read_to_string(&csv).unwrap();
    let mut lines = csv_text.lines();
    assert_eq!(lines.next(), Some("id,true,pred,rel_err,off_by_one"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "synth");
    assert_eq!(row[1], "8");
    let pred_csv: f64 = row[2].parse().unwrap();
    assert!(
        (pred_csv - pred_json).abs() < 1e-6,
        "{pred_csv} vs {pred_json}"
    );
}

#[test]
fn eval_with_missing_manifest_fails() {
    let tmp = TempDir::new().unwrap();
    let o = repest(&[
        "eval",
        "--manifest",
        p(&tmp.path().join("none.json")),
        "--report",
        p(&tmp.path().join("r.json")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn eval_keeps_going_past_a_bad_entry() {
    let tmp = TempDir::new().unwrap();
    let clip = tmp.path().join("clip");
    synth_flow(&clip, "osc_translation_side", &[]);
    let manifest = r#"{"videos": [
        {"id": "good", "flow_dir": "clip/flow", "fps": 30, "count": 5},
        {"id": "gone", "flow_dir": "nowhere", "fps": 30, "count": 5}
    ]}"#;
    let mpath = tmp.path().join("m.json");
    fs::write(&mpath, manifest).unwrap();
    let report = tmp.path().join("r.json");
    let o = repest(&["eval", "--manifest", p(&mpath), "--report", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(j["videos"].as_array().unwrap().len(), 2);
    assert!(j["videos"][1]["error"].is_string());
    assert_eq!(j["aggregate"]["scored"].as_u64(), Some(1));
}

#[test]
fn synth_signal_and_spectrum() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sig");
    let o = repest(&[
        "synth",
        "--case",
        "exp_chirp",
        "--out",
        p(&out),
        "--duration",
        "12",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let signal = out.join("signal.txt");
    assert!(fs::read_to_string(&signal).unwrap().starts_with("# fps="));
    let ann: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("annotation.json")).unwrap()).unwrap();
    assert!(ann["true_count"].as_f64().unwrap() > 6.0);

    let (rscl, csv) = (tmp.path().join("s.rscl"), tmp.path().join("s.csv"));
    let o = repest(&[
        "spectrum",
        "--signal",
        p(&signal),
        "--out",
        p(&rscl),
        "--csv",
        p(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(&fs::read(&rscl).unwrap()[..4], b"RSCL");
    let first = fs::read_to_string(&csv).unwrap();
    assert!(first.lines().count() > 1);
}

#[test]
fn spectrum_of_missing_signal_fails() {
    let tmp = TempDir::new().unwrap();
    let o = repest(&[
        "spectrum",
        "--signal",
        p(&tmp.path().join("nope.txt")),
        "--out",
        p(&tmp.path().join("o.rscl")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn segment_writes_one_mask_per_step() {
    let tmp = TempDir::new().unwrap();
    let clip = tmp.path().join("clip");
    synth_flow(&clip, "osc_rotation_front", &["--freq", "1"]);
    let out = tmp.path().join("masks");
    let o = repest(&[
        "segment",
        "--flow",
        p(&clip.join("flow")),
        "--fps",
        "30",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 300);
    let pgm = fs::read(out.join("mask_00100.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
}
