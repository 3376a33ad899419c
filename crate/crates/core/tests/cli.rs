use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use battn::attention::{Landmark, LandmarkSet};
use battn::cli::synth_landmarks;
use battn::ingest::{write_landmarks, write_scores, ScoreRow};
use battn::metrics::{topk_accuracy, GroundTruth, ScoreRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn battn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_battn"))
        .args(args)
        .env_remove("BATTN_THREADS")
        .output()
        .expect("run battn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn map_full_cover_square_is_all_white() {
    let dir = tempfile::tempdir().unwrap();
    let lm = write(
        dir.path(),
        "lm.txt",
        "LANDMARKS v1\n4\nsq 4 0 0 0 0 7 0 0 7 7 0 0 7\n",
    );
    let out = dir.path().join("maps");
    let o = battn(&[
        "map",
        "--landmarks",
        &lm,
        "--width",
        "8",
        "--height",
        "8",
        "--sigma",
        "0",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o), "OK sq\n");
    let bytes = fs::read(out.join("sq.pgm")).unwrap();
    let mut expect = b"P5\n8 8\n255\n".to_vec();
    expect.extend([255u8; 64]);
    assert_eq!(bytes, expect);
}

#[test]
fn map_single_landmark_reports_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let lm = write(dir.path(), "lm.txt", "LANDMARKS v1\n8\none 1 0 3 3\n");
    let o = battn(&[
        "map",
        "--landmarks",
        &lm,
        "--width",
        "8",
        "--height",
        "8",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "FALLBACK one degenerate\n");
    let bytes = fs::read(dir.path().join("one.pgm")).unwrap();
    assert_eq!(bytes.len(), 11 + 64);
    assert_eq!(bytes[11 + 3 * 8 + 3], 255);
}

#[test]
fn map_output_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let sets = synth_landmarks(3, 42, 64, 64);
    let lm = write(dir.path(), "lm.txt", &write_landmarks(8, &sets));
    let run = |threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = battn(&[
            "map",
            "--landmarks",
            &lm,
            "--width",
            "64",
            "--height",
            "64",
            "--threads",
            threads,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        (
            stdout(&o),
            sets.iter()
                .map(|s| fs::read(out.join(format!("{}.pgm", s.image_id))).unwrap())
                .collect::<Vec<_>>(),
        )
    };
    assert_eq!(run("1", "a"), run("8", "b"));
}

#[test]
fn threads_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let lm = write(dir.path(), "lm.txt", "LANDMARKS v1\n8\na 1 0 1 1\n");
    let o = Command::new(env!("CARGO_BIN_EXE_battn"))
        .args([
            "map",
            "--landmarks",
            &lm,
            "--width",
            "4",
            "--height",
            "4",
            "--out-dir",
        ])
        .arg(dir.path())
        .env("BATTN_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_battn"))
        .args([
            "map",
            "--landmarks",
            &lm,
            "--width",
            "4",
            "--height",
            "4",
            "--out-dir",
        ])
        .arg(dir.path())
        .env("BATTN_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // parse error names the line
    let bad = write(
        dir.path(),
        "bad.txt",
        "LANDMARKS v1\n8\nok 0\nbad 1 0 x 1\n",
    );
    let o = battn(&[
        "map",
        "--landmarks",
        &bad,
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));

    // missing input file
    let o = battn(&[
        "hull",
        "--landmarks",
        dir.path().join("nope").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // output dir is a regular file
    let good = write(dir.path(), "good.txt", "LANDMARKS v1\n8\nok 1 0 1 1\n");
    let blocker = write(dir.path(), "blocker", "");
    let o = battn(&["map", "--landmarks", &good, "--out-dir", &blocker]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hull_dump() {
    let dir = tempfile::tempdir().unwrap();
    let lm = write(
        dir.path(),
        "lm.txt",
        "LANDMARKS v1\n8\ntri 3 0 0 0 0 4 0 0 0 4\nsq 5 0 0 0 0 4 0 0 4 4 0 0 4 0 2 2\n",
    );
    let o = battn(&["hull", "--landmarks", &lm]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "tri 3 0 0 4 0 0 4 dropped=0\nsq 4 0 0 4 0 4 4 0 4 dropped=1\n"
    );
}

#[test]
fn hull_dump_matches_library_on_random_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sets = synth_landmarks(50, 9, 64, 64);
    let lm = write(dir.path(), "lm.txt", &write_landmarks(8, &sets));
    let o = battn(&["hull", "--landmarks", &lm]);
    let expect: String = sets
        .iter()
        .map(|s| battn::cli::hull_line(s, true) + "\n")
        .collect();
    assert_eq!(stdout(&o), expect);
}

#[test]
fn eval_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let pred = write(
        dir.path(),
        "p.txt",
        "SCORES v1\n5\na 0 0 9 0 0\nb 9 0 0 0 0\n",
    );
    let gt = write(dir.path(), "g.txt", "CATEGORIES v1\n5\na 2\nb 0\n");
    let o = battn(&["eval", "--task", "category", "--pred", &pred, "--gt", &gt]);
    assert_eq!(stdout(&o), "top-3 100.00\ntop-5 100.00\n");

    let lp = write(dir.path(), "lp.txt", "SCORES v1\n4\na 10 20 30 40\n");
    let lg = write(
        dir.path(),
        "lg.txt",
        "LANDMARKS v1\n2\na 2 0 10 20 1 30 40\n",
    );
    let o = battn(&["eval", "--task", "landmark", "--pred", &lp, "--gt", &lg]);
    assert_eq!(stdout(&o), "NE 0.0000\n");

    let ap = write(dir.path(), "ap.txt", "SCORES v1\n6\na 0 5 0 4 0 0\n");
    let ag = write(dir.path(), "ag.txt", "ATTRIBUTES v1\n6\na 2 1 3\n");
    let o = battn(&[
        "eval",
        "--task",
        "attribute",
        "--pred",
        &ap,
        "--gt",
        &ag,
        "--topk",
        "1,2",
    ]);
    assert_eq!(stdout(&o), "top-1 50.00\ntop-2 100.00\n");
}

#[test]
fn eval_landmarks_in_original_space() {
    let dir = tempfile::tempdir().unwrap();
    // box 100x200 at (10, 20); gt (60, 120) maps to (128, 128) in 256 space
    let lp = write(dir.path(), "lp.txt", "SCORES v1\n2\na 128 128\n");
    let lg = write(dir.path(), "lg.txt", "LANDMARKS v1\n1\na 1 0 60 120\n");
    let bb = write(dir.path(), "bb.txt", "BBOXES v1\n4\na 10 20 110 220\n");
    let o = battn(&[
        "eval",
        "--task",
        "landmark",
        "--pred",
        &lp,
        "--gt",
        &lg,
        "--gt-space",
        "original",
        "--bbox",
        &bb,
    ]);
    assert_eq!(stdout(&o), "NE 0.0000\n");
    let o = battn(&[
        "eval",
        "--task",
        "landmark",
        "--pred",
        &lp,
        "--gt",
        &lg,
        "--gt-space",
        "original",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_id_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..15).map(|i| format!("p{i} 1 0\n")).collect();
    let pred = write(dir.path(), "p.txt", &format!("SCORES v1\n2\n{rows}"));
    let gt = write(dir.path(), "g.txt", "CATEGORIES v1\n2\nx 0\n");
    let o = battn(&[
        "eval", "--task", "category", "--pred", &pred, "--gt", &gt, "--topk", "1",
    ]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("16 mismatched"), "{err}");
    assert!(err.contains("x p0 p1"));
    assert!(!err.contains("p9 "), "only ten offenders listed: {err}");
}

#[test]
fn eval_report_equals_library_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut rows = Vec::new();
    let mut gt = String::from("CATEGORIES v1\n10\n");
    let mut records = Vec::new();
    let mut truths = Vec::new();
    for i in 0..60 {
        let id = format!("s{i}");
        let values: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let label = rng.gen_range(0..10);
        gt.push_str(&format!("{id} {label}\n"));
        records.push(ScoreRecord::category(id.clone(), values.clone()));
        truths.push(GroundTruth::new(id.clone()).with_category(label));
        rows.push(ScoreRow {
            image_id: id,
            values,
        });
    }
    let pred = write(dir.path(), "p.txt", &write_scores(10, &rows));
    let gt = write(dir.path(), "g.txt", &gt);
    let o = battn(&[
        "eval", "--task", "category", "--pred", &pred, "--gt", &gt, "--loss",
    ]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    for (line, k) in lines.iter().zip([3, 5]) {
        let v = topk_accuracy(&records, &truths, k).unwrap();
        assert_eq!(*line, format!("top-{k} {:.2}", 100.0 * v));
    }
    assert!(lines[2].starts_with("CE "));
}

#[test]
fn transform_writes_crop_space_file() {
    let dir = tempfile::tempdir().unwrap();
    let lm = write(
        dir.path(),
        "lm.txt",
        "LANDMARKS v1\n2\na 2 0 60 120 2 0 0\n",
    );
    let bb = write(dir.path(), "bb.txt", "BBOXES v1\n4\na 10 20 110 220\n");
    let o = battn(&[
        "transform",
        "--landmarks",
        &lm,
        "--bbox",
        &bb,
        "--width",
        "224",
        "--height",
        "224",
    ]);
    assert!(o.status.success());
    let sets = battn::ingest::parse_landmarks(&stdout(&o)).unwrap();
    assert_eq!(sets[0].points[0], Landmark::visible(112.0, 112.0));
}

#[test]
fn synth_round_trips() {
    let o = battn(&[
        "synth", "--rows", "5", "--seed", "3", "--width", "64", "--height", "64",
    ]);
    let sets: Vec<LandmarkSet> = battn::ingest::parse_landmarks(&stdout(&o)).unwrap();
    assert_eq!(sets, synth_landmarks(5, 3, 64, 64));
}
