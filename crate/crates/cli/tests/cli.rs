use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn flowfault(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowfault")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(flowfault(&[]).status.code(), Some(2));
    assert_eq!(flowfault(&["run", "--config"]).status.code(), Some(2));
    assert_eq!(flowfault(&["plotdata", "--rows", "x", "--kind", "pie", "--out", "y"]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"base_seed": 1, "dataset": "d.csv", "bogus": 3}"#).unwrap();
    let out = flowfault(&["run", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = flowfault(&["run", "--config", "/nonexistent.json", "--out", path(dir.path())]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let model = root().join("fixtures/c4d3u32.rnvp");
    let out = flowfault(&["census", "--model", path(&model), "--out", "/proc/flowfault/census.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_results_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = root().join("configs/fixture_smoke.json");
    let out = flowfault(&["run", "--config", path(&cfg), "--out", path(dir.path()), "--audit"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("config_id,model_id,seed_index,exp_index,injection_domain,type,"));
    assert!(!csv.contains('\r'));
    assert!(std::fs::metadata(dir.path().join("audit.jsonl")).unwrap().len() > 0);

    let radial = dir.path().join("radial.csv");
    let rows = dir.path().join("results.csv");
    assert!(flowfault(&["plotdata", "--rows", path(&rows), "--kind", "radial", "--out", path(&radial)])
        .status
        .success());
    let text = std::fs::read_to_string(&radial).unwrap();
    assert!(text.starts_with("type,variable,model_id,coupling,label,sdc_rate\n"));
    assert!(text.contains(",C4D3U32,4,D3 U32,"));

    let parallel = dir.path().join("parallel.csv");
    assert!(flowfault(&["plotdata", "--rows", path(&rows), "--kind", "parallel", "--out", path(&parallel)])
        .status
        .success());
    let lines = std::fs::read_to_string(&parallel).unwrap().lines().count();
    let per_exp = csv.lines().skip(1).filter(|l| !l.contains(",-1,-1,")).count();
    assert_eq!(lines, per_exp + 1);
}

#[test]
fn census_of_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("census.csv");
    let model = root().join("fixtures/c4d3u32.rnvp");
    assert!(flowfault(&["census", "--model", path(&model), "--out", path(&out)]).status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 33);
    assert!(text.contains("\n30,0,0\n"));
}

#[test]
fn histogram_to_stdout() {
    let model = root().join("fixtures/c4d3u32.rnvp");
    let data = root().join("fixtures/data/val.csv");
    let plan = r#"{"mode": "all", "variable": "scale", "activation": "all", "method": "partial",
                   "fault": {"kind": "zeros"}, "amount": 100}"#;
    let out = flowfault(&["histogram", "--model", path(&model), "--plan", plan, "--data", path(&data), "--bins", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    // 450 samples x 8 transformed values, all zeroed, land in the bin [0, 0.5).
    assert!(text.contains("\nscale,2,0,0.5,3600\n"), "{text}");
    assert_eq!(
        flowfault(&["histogram", "--model", path(&model), "--plan", plan, "--data", path(&data), "--bins", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(flowfault(&[
            "gen-data",
            "--out",
            path(d),
            "--nominal",
            "30",
            "--anomalous",
            "6",
            "--anomaly",
            "stuck-at"
        ])
        .status
        .success());
    }
    for split in ["train.csv", "val.csv", "test.csv", "spec.json"] {
        assert_eq!(std::fs::read(a.join(split)).unwrap(), std::fs::read(b.join(split)).unwrap());
    }
}

#[test]
fn gen_model_grid_and_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid");
    let val = root().join("fixtures/data/val.csv");
    let out = flowfault(&["gen-model", "--input-dim", "16", "--grid", path(&grid), "--calibrate", path(&val)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(&grid).unwrap().count(), 18);
    assert!(grid.join("C6D5U64.rnvp").exists());

    let single = dir.path().join("m.rnvp");
    assert!(flowfault(&["gen-model", "--input-dim", "16", "--out", path(&single)]).status.success());
    let out = flowfault(&["calibrate", "--model", path(&single), "--data", path(&val)]);
    assert!(out.status.success());
    let tau: f32 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(tau.is_finite());
}
