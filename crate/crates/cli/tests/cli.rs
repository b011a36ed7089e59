use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn emcomm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emcomm"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EMCOMM_OUT")
        .env("EMCOMM_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

/// Data rows of a CSV written by the tool (comment line and header skipped).
fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(2).map(String::from).collect()
}

const SMALL: [&str; 6] = ["--n-train", "40", "--n-eval-in-domain", "30", "--n-eval-out-of-domain", "30"];

#[test]
fn gen_data_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["gen-data", "--seed", "4", "--out", out, "--images", "2"];
        args.extend(SMALL);
        ok(&emcomm(&args, d.path()));
    }
    let a = fs::read(d.path().join("a/manifest.jsonl")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/manifest.jsonl")).unwrap());
    assert_eq!(fs::read_dir(d.path().join("a/images")).unwrap().count(), 2);
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(d.path().join("a/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["train"]["n"], 40);
}

#[test]
fn presets_are_listed() {
    let d = tempfile::tempdir().unwrap();
    let o = emcomm(&["presets"], d.path());
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("contact-10-10") && text.contains("symmetry-n2"));
}

#[test]
fn smoke_preset_runs_and_evaluates() {
    let d = tempfile::tempdir().unwrap();
    let o = emcomm(
        &["run", "--preset", "contact-10-2", "--scale", "smoke", "--out", "runs", "--plot"],
        d.path(),
    );
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("final"));
    let run = d.path().join("runs/contact-10-2-smoke");
    assert!(run.join("summary.json").exists());
    assert!(run.join("resolved_config.toml").exists());
    for entry in fs::read_dir(run.join("seed-0")).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|x| x == "svg") {
            roxmltree::Document::parse(&fs::read_to_string(&p).unwrap()).unwrap();
        }
    }

    // the resolved config runs as a file too
    ok(&emcomm(
        &["run", "runs/contact-10-2-smoke/resolved_config.toml", "--out", "again"],
        d.path(),
    ));
    assert_eq!(
        fs::read(run.join("seed-0/stage10_matrix_final.csv")).unwrap(),
        fs::read(d.path().join("again/contact-10-2-smoke/seed-0/stage10_matrix_final.csv")).unwrap()
    );

    let ckpts = run.join("seed-0/checkpoints/M");
    let a = ckpts.join("C1.0.ckpt");
    let b = ckpts.join("C2.1.ckpt");
    let eval_args = ["--seed", "1", "--examples", "20"];
    let mut one = vec!["eval", a.to_str().unwrap(), "--out", "one.csv"];
    one.extend(eval_args);
    ok(&emcomm(&one, d.path()));
    assert_eq!(rows(&d.path().join("one.csv")).len(), 1);
    let mut two = vec!["eval", a.to_str().unwrap(), b.to_str().unwrap(), "--out", "two.csv", "--plot"];
    two.extend(eval_args);
    ok(&emcomm(&two, d.path()));
    let r = rows(&d.path().join("two.csv"));
    assert_eq!(r.len(), 4);
    assert!(r[1].starts_with("C1.0,C2.1,"));
    roxmltree::Document::parse(&fs::read_to_string(d.path().join("two.svg")).unwrap()).unwrap();
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "name = \"x\"\nseeds = []\n").unwrap();
    let o = emcomm(&["run", "bad.toml"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeds"));
    assert_eq!(emcomm(&["run", "--preset", "nope", "--scale", "smoke"], d.path()).status.code(), Some(2));
    assert_eq!(emcomm(&["run", "--preset", "symmetry-n2", "--scale", "huge"], d.path()).status.code(), Some(2));
    assert_eq!(emcomm(&["frobnicate"], d.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let d = tempfile::tempdir().unwrap();
    let o = emcomm(&["eval", "missing.ckpt"], d.path());
    assert_eq!(o.status.code(), Some(1));
}
