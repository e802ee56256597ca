use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lyrictrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyrictrack"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lyrictrack(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn rf_reports_table1() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["rf", "--spec", "builtin:table1"]);
    assert!(out.contains("rf_frames=59"));
    assert!(out.contains("stride=4"));
    assert!(out.contains("latency_frames=28"));
}

#[test]
fn synth_track_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-ref", "--frames", "800", "--seed", "5", "--out", "ref.pgm"]);
    fs::write(
        d.join("warp.json"),
        r#"{"breakpoints": [[0, 0], [16000, 24000], [32000, 40000]]}"#,
    )
    .unwrap();
    fs::write(
        d.join("ref.csv"),
        "time_ms,label\n2000,one\n9000,two\n20000,three\n30000,four\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "synth",
            "--ref",
            "ref.pgm",
            "--warp",
            "warp.json",
            "--seed",
            "1",
            "--out",
            "tgt.pgm",
            "--truth",
            "truth.json",
            "--ref-annot",
            "ref.csv",
            "--target-annot",
            "tgt.csv",
        ],
    );
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["reference_frames"], 800);
    assert_eq!(truth["target_frames"], 1000);

    let banner = lyrictrack(
        d,
        &["track", "--ref", "ref.pgm", "--target", "tgt.pgm", "--out", "ev.tsv"],
    );
    assert!(banner.status.success());
    assert!(String::from_utf8_lossy(&banner.stderr).contains("320 s"));
    let report = ok(
        d,
        &[
            "eval",
            "--events",
            "ev.tsv",
            "--ref-annot",
            "ref.csv",
            "--target-annot",
            "tgt.csv",
        ],
    );
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["n"], 4);
    assert_eq!(report["pct_le_1s"], 100.0);
    assert!(report["mean_ms"].as_f64().unwrap() <= 80.0);

    // Same inputs, same bytes.
    ok(
        d,
        &["track", "--ref", "ref.pgm", "--target", "tgt.pgm", "--out", "ev2.tsv"],
    );
    assert_eq!(
        fs::read(d.join("ev.tsv")).unwrap(),
        fs::read(d.join("ev2.tsv")).unwrap()
    );

    let jsonl = ok(
        d,
        &["track", "--ref", "ref.pgm", "--target", "tgt.pgm", "--format", "jsonl"],
    );
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert!(first["reference_time_ms"].is_number());
}

#[test]
fn pipelined_tracking_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut wav = Vec::new();
    // 16-bit mono 16 kHz, one second of a chirp.
    let samples: Vec<i16> = (0..16_000)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            (8000.0 * (2.0 * std::f64::consts::PI * (200.0 + 300.0 * t) * t).sin()) as i16
        })
        .collect();
    let data_len = (samples.len() * 2) as u32;
    wav.extend_from_slice(b"RIFF");
    wav.extend_from_slice(&(36 + data_len).to_le_bytes());
    wav.extend_from_slice(b"WAVEfmt ");
    wav.extend_from_slice(&16u32.to_le_bytes());
    wav.extend_from_slice(&1u16.to_le_bytes());
    wav.extend_from_slice(&1u16.to_le_bytes());
    wav.extend_from_slice(&16_000u32.to_le_bytes());
    wav.extend_from_slice(&32_000u32.to_le_bytes());
    wav.extend_from_slice(&2u16.to_le_bytes());
    wav.extend_from_slice(&16u16.to_le_bytes());
    wav.extend_from_slice(b"data");
    wav.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        wav.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(d.join("a.wav"), wav).unwrap();

    ok(
        d,
        &["features", "--in", "a.wav", "--out", "a.feat", "--variant", "model80"],
    );
    ok(d, &["init-weights", "--seed", "2", "--out", "w.cprw"]);
    ok(
        d,
        &["infer", "--feat", "a.feat", "--weights", "w.cprw", "--out", "a.pgm"],
    );
    ok(d, &["synth-ref", "--frames", "400", "--seed", "9", "--out", "ref.pgm"]);
    let base = [
        "track",
        "--ref",
        "ref.pgm",
        "--target-feat",
        "a.feat",
        "--weights",
        "w.cprw",
        "--window",
        "50",
    ];
    let seq = ok(d, &base);
    let mut piped = base.to_vec();
    piped.push("--pipelined");
    assert_eq!(seq, ok(d, &piped));
}

#[test]
fn missing_file_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = lyrictrack(dir.path(), &["track", "--ref", "nope.pgm", "--target", "also_nope.pgm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.pgm"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        lyrictrack(dir.path(), &["track", "--ref", "r.pgm"]).status.code(),
        Some(2)
    );
    assert_eq!(lyrictrack(dir.path(), &["bogus"]).status.code(), Some(2));
    assert_eq!(
        lyrictrack(
            dir.path(),
            &["track", "--ref", "r", "--target", "t", "--monotonic", "maybe"]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn wrong_magic_is_a_file_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-ref", "--frames", "50", "--out", "ref.pgm"]);
    let out = lyrictrack(
        d,
        &["infer", "--feat", "ref.pgm", "--weights", "ref.pgm", "--out", "x.pgm"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-ref", "--frames", "50", "--out", "ref.pgm"]);
    let out = lyrictrack(
        d,
        &["track", "--ref", "ref.pgm", "--target", "ref.pgm", "--window", "2"],
    );
    assert_eq!(out.status.code(), Some(1));
    fs::write(d.join("warp.json"), r#"{"breakpoints": [[0, 0], [100, 50]]}"#).unwrap();
    let out = lyrictrack(
        d,
        &[
            "synth",
            "--ref",
            "ref.pgm",
            "--warp",
            "warp.json",
            "--out",
            "t.pgm",
            "--truth",
            "t.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp"));
}
