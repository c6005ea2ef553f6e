use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sepkit(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sepkit"));
    cmd.args(args).arg("--log-level").arg("warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn toy(dir: &Path, count: usize) -> PathBuf {
    let out = sepkit(
        &["toy", "--out-dir", dir.to_str().unwrap(), "--count", &count.to_string(), "--seconds", "2"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.toml")
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.insert(p.clone(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, &mut out);
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_run_then_idempotent_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 3);
    let cfg = cfg.to_str().unwrap();
    let first = sepkit(&["run", "--config", cfg], &[]);
    assert!(first.status.success(), "{}", stderr(&first));
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("No processing") && stdout.contains("mvdr_souden"), "{stdout}");

    let exp = dir.path().join("exp");
    let metrics = std::fs::read_to_string(exp.join("scores/mvdr_souden/metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    let outputs = |s: &BTreeMap<PathBuf, Vec<u8>>| {
        s.iter().filter(|(p, _)| !p.starts_with(exp.join("logs"))).map(|(p, b)| (p.clone(), b.clone())).collect::<Vec<_>>()
    };
    let before = snapshot(&exp);
    let second = sepkit(&["run", "--config", cfg], &[]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(String::from_utf8_lossy(&second.stdout).matches("up to date").count(), 4);
    assert_eq!(outputs(&before), outputs(&snapshot(&exp)));
    assert_eq!(std::fs::read_dir(exp.join("logs")).unwrap().count(), 2);

    // only scoring reruns once its outputs are gone
    std::fs::remove_dir_all(exp.join("scores")).unwrap();
    let third = sepkit(&["run", "--config", cfg, "--stage", "3..3"], &[]);
    assert!(third.status.success(), "{}", stderr(&third));
    let out = String::from_utf8_lossy(&third.stdout);
    assert!(out.contains("stage 3 (score): done") && !out.contains("stage 2"), "{out}");
    assert_eq!(std::fs::read_to_string(exp.join("scores/mvdr_souden/metrics.tsv")).unwrap(), metrics);

    // a different method writes beside the first; env overrides pick it
    let fourth = sepkit(&["run", "--config", cfg, "--stage", "2..3"], &[("SEPKIT__ENHANCEMENT__METHOD", "passthrough")]);
    assert!(fourth.status.success(), "{}", stderr(&fourth));
    let pass = std::fs::read_to_string(exp.join("scores/passthrough/metrics.tsv")).unwrap();
    let si_snri: Vec<&str> = pass.lines().skip(1).map(|l| l.split('\t').nth(3).unwrap()).collect();
    assert!(si_snri.iter().all(|v| v.parse::<f64>().unwrap() == 0.0), "{pass}");
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[io]\nwork_dir = \"exp\"\n[enhancement]\nmethod = \"mvdr_souden\"\nmask_sorce = \"oracle_irm\"\n").unwrap();
    let out = sepkit(&["run", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mask_sorce"), "{}", stderr(&out));
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1);
    std::fs::remove_file(dir.path().join("clean.tsv")).unwrap();
    let out = sepkit(&["simulate", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let out = sepkit(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn partial_output_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1);
    let data = dir.path().join("exp/data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(data.join("manifest.tsv"), "u\tx.wav\n").unwrap();
    let out = sepkit(&["simulate", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--force"), "{}", stderr(&out));
    let forced = sepkit(&["simulate", "--config", cfg.to_str().unwrap(), "--force", "--jobs", "1"], &[]);
    assert!(forced.status.success(), "{}", stderr(&forced));
    assert!(data.join(".complete").is_file());
}

#[test]
fn simulate_flags_and_alt_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 2);
    let out_dir = dir.path().join("other");
    let alt = dir.path().join("noise_diffuse_alt");
    let out = sepkit(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--count",
            "1",
            "--seed",
            "9",
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--alt-test",
            alt.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let main = std::fs::read_to_string(out_dir.join("data/manifest.tsv")).unwrap();
    let alt_manifest = std::fs::read_to_string(out_dir.join("data/alt/manifest.tsv")).unwrap();
    assert_eq!(main.lines().filter(|l| !l.starts_with('#')).count(), 1);
    assert_eq!(alt_manifest.lines().count(), main.lines().count());
}

#[test]
fn bad_method_and_stage_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1);
    let out = sepkit(&["enhance", "--config", cfg.to_str().unwrap(), "--method", "gev"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = sepkit(&["run", "--config", cfg.to_str().unwrap(), "--stage", "4..1"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
