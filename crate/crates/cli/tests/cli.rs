use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privgaze_core::data::load_manifest;

fn privgaze(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privgaze"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let o = privgaze(&["synth", "--count", &count.to_string(), "--seed", &seed.to_string(), "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("manifest.jsonl")
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic_and_loadable() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let m = synth(&a, 64, 7);
    synth(&b, 64, 7);
    assert_eq!(tree(&a), tree(&b));
    assert_eq!(load_manifest(&m).unwrap().len(), 64);

    let o = privgaze(&["synth", "--count", "0", "--seed", "7", "--out", t.path().join("empty").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("records=0"));
    assert!(load_manifest(&t.path().join("empty/manifest.jsonl")).unwrap().is_empty());
}

#[test]
fn synth_into_an_unwritable_location_fails() {
    let t = tempfile::tempdir().unwrap();
    let file = t.path().join("file");
    std::fs::write(&file, b"x").unwrap();
    let o = privgaze(&["synth", "--count", "2", "--out", file.join("sub").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error"));
}

const SMOKE: &[&str] = &[
    "--set",
    "model=tiny",
    "--set",
    "gaze_stage.epochs=1",
    "--set",
    "full_stage.epochs=1",
    "--set",
    "gaze_stage.batch_size=4",
    "--set",
    "full_stage.batch_size=4",
];

#[test]
fn train_then_evaluate_with_figures() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(&t.path().join("data"), 10, 1);
    let run = t.path().join("run");
    let mut args = vec!["train", "--manifest", m.to_str().unwrap(), "--out", run.to_str().unwrap(), "--regime", "multi-stage"];
    args.extend(SMOKE);
    let o = privgaze(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("gaze_checkpoint="), "{out}");
    assert!(run.join("gaze.ckpt").exists() && run.join("full.ckpt").exists());
    let report_line = out.lines().find(|l| l.starts_with("dist_3d=")).unwrap();
    let keys: Vec<&str> = report_line.split(' ').map(|kv| kv.split('=').next().unwrap()).collect();
    assert_eq!(keys, ["dist_3d", "angle_error", "auc", "dist_2d"]);

    let ev = t.path().join("eval");
    let ckpt = run.join("full.ckpt");
    let args = ["eval", "--manifest", m.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(), "--split", "all", "--out", ev.to_str().unwrap(), "--viz"];
    let o1 = privgaze(&args);
    assert!(o1.status.success(), "{}", stderr(&o1));
    assert!(stdout(&o1).contains("figures=10"));
    assert_eq!(std::fs::read_dir(ev.join("figures")).unwrap().count(), 10);
    let first = load_manifest(&m).unwrap().load_sample(0).unwrap();
    let img = image::open(ev.join("figures").join(format!("{}.png", first.id))).unwrap();
    assert_eq!(img.height() as usize, first.height());
    assert!(img.width() as usize > 3 * first.width());
    let o2 = privgaze(&args);
    assert_eq!(stdout(&o1), stdout(&o2));
    assert!(ev.join("report.txt").exists() && ev.join("records.jsonl").exists());
}

#[test]
fn end_to_end_regime_skips_the_gaze_stage() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(&t.path().join("data"), 6, 2);
    let run = t.path().join("run");
    let mut args = vec!["train", "--manifest", m.to_str().unwrap(), "--out", run.to_str().unwrap(), "--regime", "end-to-end"];
    args.extend(SMOKE);
    let o = privgaze(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!run.join("gaze.ckpt").exists());
    assert!(run.join("full.ckpt").exists());
    let log = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert!(log.lines().all(|l| l.contains("\"stage\":\"full\"")));
}

#[test]
fn invalid_configs_name_the_field() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(&t.path().join("data"), 2, 3);
    let run = t.path().join("run");
    for (set, field) in [("full_stage.epoch=1", "full_stage.epoch"), ("full_stage.lr=-1", "full_stage.lr"), ("gaze_stage.batch_size=x", "batch_size")] {
        let o = privgaze(&["train", "--manifest", m.to_str().unwrap(), "--out", run.to_str().unwrap(), "--set", set]);
        assert!(!o.status.success());
        assert!(stderr(&o).contains(field), "{set}: {}", stderr(&o));
    }
    assert!(!run.join("full.ckpt").exists());
}

#[test]
fn baselines_need_no_checkpoint_and_missing_checkpoints_fail() {
    let t = tempfile::tempdir().unwrap();
    let m = synth(&t.path().join("data"), 8, 4);
    for b in ["random", "center", "oracle"] {
        let o = privgaze(&["eval", "--manifest", m.to_str().unwrap(), "--baseline", b, "--split", "all"]);
        assert!(o.status.success(), "{b}: {}", stderr(&o));
        let line = stdout(&o).lines().next().unwrap().to_string();
        line.parse::<privgaze_core::supervision::MetricReport>().unwrap();
    }
    let o = privgaze(&["eval", "--manifest", m.to_str().unwrap(), "--checkpoint", t.path().join("nope.ckpt").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = privgaze(&["eval", "--manifest", m.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn gfie_conversion_is_a_documented_stub() {
    let t = tempfile::tempdir().unwrap();
    let o = privgaze(&["convert", "--format", "gfie", "--input", t.path().to_str().unwrap(), "--out", t.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("GFIE"));
    assert!(!t.path().join("o").exists());
}
