use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
artifact_root = "art"
[mesh]
nx = 42
ny = 10
[parameters]
n_a = 4
n_lambda = 4
chains = 2
[rom]
sizes = [{ n_omega = 4, n_gamma = 2 }]
[training]
epochs = 5
batch_size = 8
[hr]
n_samples = 40
[bench]
runs = 1
parameter_layouts = [[1, 1], [2, 1], [2, 2]]
"#;

fn ddrom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddrom"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn artifact_dir(dir: &Path) -> PathBuf {
    let mut entries: Vec<_> = fs::read_dir(dir.join("art")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1);
    entries.pop().unwrap()
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

#[test]
fn print_defaults_is_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&ddrom(dir.path(), &["print-defaults"]));
    assert!(text.contains("nx = 482"));
    assert!(text.contains("epochs = 2000"));
    fs::write(dir.path().join("d.toml"), &text).unwrap();
    let plan = ok(&ddrom(dir.path(), &["--config", "d.toml", "--dry-run", "snapshots"]));
    assert!(plan.contains("6400 FOM solves"), "{plan}");
}

#[test]
fn usage_and_schema_errors_exit_one_without_side_effects() {
    let dir = workspace("artifact_root = \"art\"\n[parameters]\na_range = [100.0, 1.0]\n");
    let out = ddrom(dir.path(), &["--config", "run.toml", "snapshots"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("art").exists());
    assert_eq!(ddrom(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(ddrom(dir.path(), &["solve", "--rom", "cubic"]).status.code(), Some(1));
}

#[test]
fn dry_run_has_no_side_effects() {
    let dir = workspace(TINY);
    for cmd in ["snapshots", "train", "solve", "bench"] {
        ok(&ddrom(dir.path(), &["--config", "run.toml", "--dry-run", cmd]));
    }
    assert!(!dir.path().join("art").exists());
}

#[test]
fn missing_artifacts_exit_three() {
    let dir = workspace(TINY);
    for cmd in [&["train"][..], &["solve"], &["bench"]] {
        let args: Vec<&str> = ["--config", "run.toml"].iter().chain(cmd).copied().collect();
        let out = ddrom(dir.path(), &args);
        assert_eq!(out.status.code(), Some(3), "{cmd:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    }
}

#[test]
fn full_pipeline() {
    let dir = workspace(TINY);
    let p = dir.path();
    let cfg = ["--config", "run.toml"];
    let with = |extra: &[&str]| -> Vec<String> { cfg.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |extra: &[&str]| {
        let a = with(extra);
        ddrom(p, &a.iter().map(String::as_str).collect::<Vec<_>>())
    };

    ok(&run(&["snapshots"]));
    let art = artifact_dir(p);
    let snaps = art.join("snapshots");
    // X plus interior, interface and residual matrices of four subdomains.
    assert_eq!(files_with_ext(&snaps, "mat").len(), 1 + 3 * 4);
    let stamp = fs::metadata(snaps.join("X.mat")).unwrap().modified().unwrap();
    let again = ok(&run(&["snapshots"]));
    assert!(again.contains("up to date"));
    assert_eq!(fs::metadata(snaps.join("X.mat")).unwrap().modified().unwrap(), stamp);

    // Identity decoders reproduce the FOM.
    let out = ok(&run(&["solve", "--rom", "identity"]));
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let err: f64 = row[header.iter().position(|h| *h == "error").unwrap()].parse().unwrap();
    assert!(err <= 1e-6, "identity ROM error {err}");

    assert_eq!(run(&["solve", "--rom", "nm"]).status.code(), Some(3));

    ok(&run(&["train", "--subdomain", "1"]));
    let models = fs::read_dir(art.join("models")).unwrap().next().unwrap().unwrap().path();
    let ckpts: Vec<String> = files_with_ext(&models, "ckpt")
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(ckpts, ["1_gamma.ckpt", "1_omega.ckpt"]);
    ok(&run(&["train"]));
    assert_eq!(files_with_ext(&models, "ckpt").len(), 8);
    let before = fs::read(models.join("2_omega.ckpt")).unwrap();
    ok(&run(&["--force", "train", "--subdomain", "2"]));
    assert_eq!(fs::read(models.join("2_omega.ckpt")).unwrap(), before, "retrain is not deterministic");

    let other_seed = ok(&run(&["--seed", "9", "--dry-run", "train"]));
    assert!(!other_seed.contains(models.file_name().unwrap().to_str().unwrap()));

    ok(&run(&["solve", "--rom", "nm", "--hr"]));

    let bench = ok(&run(&["bench"]));
    assert!(bench.contains("rom_type,n_omega"));
    let csv = fs::read_to_string(art.join("bench_results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (r, (kind, hr)) in rows.iter().zip([("LS", false), ("LS", true), ("NM", false), ("NM", true)]) {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!((f[0], f[4]), (kind, if hr { "true" } else { "false" }));
        assert!(f[6].parse::<f64>().unwrap().is_finite());
    }
    let table = fs::read_to_string(art.join("parameter_table.csv")).unwrap();
    let t: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(t.iter().map(|r| r[0]).collect::<Vec<_>>(), ["1x1", "2x1", "2x2"]);
    let base: f64 = t[0][1].parse().unwrap();
    for r in &t {
        let max: f64 = r[1].parse().unwrap();
        let pct: f64 = r[3].parse().unwrap();
        assert!((pct - 100.0 * (1.0 - max / base)).abs() < 0.01);
    }
}

#[test]
fn lock_file_blocks_concurrent_runs() {
    let dir = workspace(TINY);
    ok(&ddrom(dir.path(), &["--config", "run.toml", "snapshots"]));
    let art = artifact_dir(dir.path());
    fs::write(art.join(".lock"), "1").unwrap();
    let out = ddrom(dir.path(), &["--config", "run.toml", "--force", "snapshots"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
    fs::remove_file(art.join(".lock")).unwrap();
    ok(&ddrom(dir.path(), &["--config", "run.toml", "--force", "snapshots"]));
    assert!(!art.join(".lock").exists());
}
