use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proctorline::netpbm;
use proctorline::sessionlog::{read_session_log, write_session_log};
use proctorline_core::events::{EventPayload, FrameImageRef, MaskRef};
use proctorline_core::segmentation::{box_blur, FaceKeypoints, Frame, PersonMask};

fn rules() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/rules")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proctorline")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_records(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect()
}

#[test]
fn analyze_reproduces_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["clean", "phone_high", "long_absence"] {
        let out = dir.path().join(format!("{name}.json"));
        let o = run(&["analyze", "--log", s(&rules().join(format!("{name}.jsonl"))), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let want = std::fs::read(rules().join(format!("{name}.report.json"))).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), want, "{name}");
        let records = stderr_records(&o);
        assert_eq!(records[0]["command"], "analyze");
        assert_eq!(records[0]["effective_config"]["face_threshold"], 0.6);
    }
}

#[test]
fn missing_log_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let o = run(&["analyze", "--log", s(&missing), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let rec = stderr_records(&o).pop().unwrap();
    assert_eq!(rec["error"], "input");
    assert_eq!(rec["path"], s(&missing));
}

#[test]
fn audio_without_model_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--log", s(&rules().join("voice.jsonl")), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"face_treshold":0.5}"#).unwrap();
    let o = run(&["analyze", "--log", s(&rules().join("clean.jsonl")), "--config", s(&cfg), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_records(&o).pop().unwrap()["error"], "config");
}

#[test]
fn config_file_overrides_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"device_thresholds":{"low":0.95,"high":0.99}}"#).unwrap();
    let out = dir.path().join("r.json");
    let o = run(&["analyze", "--log", s(&rules().join("phone_high.jsonl")), "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["final_label"], "Clean");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["analyze", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn voice_training_and_cv_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = run(&["synth-corpus", "--out-dir", s(&corpus), "--count", "40", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = corpus.join("manifest.jsonl");
    assert_eq!(std::fs::read_to_string(&manifest).unwrap().lines().count(), 40);

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_epochs":2}"#).unwrap();
    let cv = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "cv-voice", "--corpus", s(&corpus), "--manifest", s(&manifest), "--k", "2", "--repeats", "1",
            "--seed", "9", "--config", s(&cfg), "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = cv("a.json");
    assert_eq!(a, cv("b.json"));
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);

    let train = |name: &str| {
        let model = dir.path().join(name);
        let o = run(&[
            "train-voice", "--corpus", s(&corpus), "--manifest", s(&manifest), "--out-model", s(&model),
            "--seed", "4", "--config", s(&cfg),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(summary.is_object());
        std::fs::read(model).unwrap()
    };
    assert_eq!(train("m1.bin"), train("m2.bin"));
}

#[test]
fn simulate_is_deterministic_and_analyzable() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(run(&["synth-corpus", "--out-dir", s(&corpus), "--count", "60", "--seed", "1"]).status.success());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_epochs":2}"#).unwrap();
    let model = dir.path().join("voice.bin");
    let o = run(&[
        "train-voice", "--corpus", s(&corpus), "--manifest", s(&corpus.join("manifest.jsonl")), "--out-model",
        s(&model), "--config", s(&cfg),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"duration_ms":30000,"seed":5,"episodes":[
            {"kind":"phone_use","start_ms":4000,"length_ms":3000},
            {"kind":"absence","start_ms":12000,"length_ms":12000}]}"#,
    )
    .unwrap();
    let sim = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&["simulate", "--spec", s(&spec), "--out-dir", s(&out), "--model", s(&model)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (sim("a"), sim("b"));
    for f in ["session.jsonl", "ground_truth.json", "report.json", "metrics.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("audio").read_dir().unwrap().count() >= 30);

    // the log on disk, with audio in PCM files, gives the same report
    let again = dir.path().join("again.json");
    let o = run(&["analyze", "--log", s(&a.join("session.jsonl")), "--model", s(&model), "--out", s(&again)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(a.join("report.json")).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&again).unwrap()).unwrap();
    let kinds: Vec<&str> = report["flags"].as_array().unwrap().iter().map(|f| f["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"PhoneDetection") && kinds.contains(&"CandidateAbsence"), "{kinds:?}");

    // a corrupted audio file is caught by its digest
    let first = a.join("audio").read_dir().unwrap().next().unwrap().unwrap().path();
    let mut bytes = std::fs::read(&first).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&first, bytes).unwrap();
    let o = run(&["analyze", "--log", s(&a.join("session.jsonl")), "--model", s(&model), "--out", s(&again)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sha256"));
}

#[test]
fn eval_objects_reports_per_class_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("eval.jsonl");
    std::fs::write(
        &data,
        concat!(
            r#"{"frame_id":"a","gt":[{"class":"person","box":{"x":0,"y":0,"w":10,"h":10}},{"class":"cell phone","box":{"x":50,"y":50,"w":10,"h":10}}],"#,
            r#""pred":[{"class":"person","box":{"x":1,"y":0,"w":10,"h":10},"score":0.9},{"class":"cell phone","box":{"x":55,"y":50,"w":10,"h":10},"score":0.8}]}"#,
            "\n",
            r#"{"frame_id":"b","gt":[{"class":"person","box":{"x":0,"y":0,"w":10,"h":10}}],"pred":[{"class":"person","box":{"x":5,"y":0,"w":10,"h":10},"score":0.9}]}"#,
            "\n"
        ),
    )
    .unwrap();
    let o = run(&["eval-objects", "--dataset", s(&data)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // person: IoU 9/11 matches, 1/3 does not; phone: 1/3 clears 0.3
    assert_eq!(table["classes"]["person"]["matched"], 1);
    assert_eq!(table["classes"]["person"]["total"], 2);
    assert_eq!(table["classes"]["person"]["accuracy"], 0.5);
    assert_eq!(table["classes"]["phone"]["matched"], 1);
}

#[test]
fn evidence_clips_blur_everyone_but_the_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = read_session_log(&rules().join("phone_high.jsonl")).unwrap();
    let (w, h) = (24, 16);
    let frame = Frame::new(w, h, (0..w * h * 3).map(|i| (i * 37 % 251) as u8).collect()).unwrap();
    let candidate = PersonMask::from_fn(1, w, h, |x, y| (2..10).contains(&x) && (2..14).contains(&y));
    let other = PersonMask::from_fn(2, w, h, |x, y| (14..22).contains(&x) && (2..14).contains(&y));
    netpbm::save_ppm(&dir.path().join("f.ppm"), &frame).unwrap();
    netpbm::save_pbm(&dir.path().join("m1.pbm"), &candidate).unwrap();
    netpbm::save_pbm(&dir.path().join("m2.pbm"), &other).unwrap();
    let image = FrameImageRef {
        image: "f.ppm".into(),
        masks: vec![MaskRef { id: 1, path: "m1.pbm".into() }, MaskRef { id: 2, path: "m2.pbm".into() }],
        keypoints: Some(FaceKeypoints([[4.5, 4.5], [7.5, 4.5], [6.0, 6.0], [4.5, 8.0], [7.5, 8.0]])),
    };
    for t in [2_250, 3_250] {
        let at = log.events.partition_point(|e| e.t_ms <= t);
        log.events.insert(at, proctorline_core::SensorEvent::new(t, EventPayload::FrameImage(image.clone())));
    }
    let log_path = dir.path().join("session.jsonl");
    write_session_log(&log, std::fs::File::create(&log_path).unwrap()).unwrap();

    let ev = dir.path().join("evidence");
    let o = run(&["analyze", "--log", s(&log_path), "--out", s(&dir.path().join("r.json")), "--evidence-dir", s(&ev)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let index: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("clips.json")).unwrap()).unwrap();
    let clip = &index["clips"][0];
    assert_eq!(clip["kind"], "PhoneDetection");
    let frames = clip["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 2);

    let blurred = box_blur(&frame, 9).unwrap();
    for name in frames {
        let got = netpbm::load_ppm(&ev.join(name.as_str().unwrap())).unwrap();
        for y in 0..h {
            for x in 0..w {
                let want = if candidate.get(x, y) { frame.pixel(x, y) } else { blurred.pixel(x, y) };
                assert_eq!(got.pixel(x, y), want, "({x},{y})");
            }
        }
    }
}
