use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vasctree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vasctree")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = vasctree(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a phantom under `dir` and returns its root voxel as `i,j,k`.
fn make_phantom(dir: &Path, generations: u32) -> String {
    let base = dir.join("ph");
    ok(&["phantom", "--generations", &generations.to_string(), "--out", s(&base)]);
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("ph_truth.json")).unwrap()).unwrap();
    let r = truth["root_voxel"].as_array().unwrap();
    format!("{},{},{}", r[0], r[1], r[2])
}

fn data_rows(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count() - 1
}

#[test]
fn run_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let seed = make_phantom(dir.path(), 3);
    let out = dir.path().join("out");
    let input = dir.path().join("ph.json");
    let stdout = ok(&["run", "--input", s(&input), "--seed", &seed, "--out-dir", s(&out), "--name", "a"]);
    assert!(stdout.contains("7 segments over 3 generations"), "{stdout}");
    assert_eq!(data_rows(&out.join("a_segments.csv")), 7);
    assert_eq!(data_rows(&out.join("a_generations.csv")), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("a_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "vasctree");
    assert_eq!(manifest["summary"]["segments"], 7);
    assert_eq!(manifest["input_sha256"].as_str().unwrap().len(), 64);
    let pl: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("a_powerlaw.json")).unwrap()).unwrap();
    assert!(pl.get("gamma").is_some());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let seed = make_phantom(dir.path(), 3);
    let input = dir.path().join("ph.json");
    let (one, many) = (dir.path().join("one"), dir.path().join("many"));
    ok(&["--threads", "1", "run", "--input", s(&input), "--seed", &seed, "--out-dir", s(&one)]);
    ok(&["--threads", "8", "run", "--input", s(&input), "--seed", &seed, "--out-dir", s(&many)]);
    let mut names: Vec<String> = fs::read_dir(&one)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with("_manifest.json"))
        .collect();
    names.sort();
    assert!(names.len() >= 15, "{names:?}");
    for n in &names {
        assert_eq!(fs::read(one.join(n)).unwrap(), fs::read(many.join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn stages_compose_like_run() {
    let dir = tempfile::tempdir().unwrap();
    let seed = make_phantom(dir.path(), 2);
    let out = dir.path().join("st");
    let o = s(&out);
    let input = dir.path().join("ph.json");
    ok(&["segment", "--input", s(&input), "--seed", &seed, "--out-dir", o, "--name", "k"]);
    let (vessel, tissue) = (out.join("k_vessel.json"), out.join("k_tissue.json"));
    assert!(vessel.exists() && tissue.exists());
    ok(&["skeletonize", "--vessel", s(&vessel), "--out-dir", o, "--name", "k"]);
    let skel = out.join("k_skeleton.json");
    ok(&["tree", "--vessel", s(&vessel), "--skeleton", s(&skel), "--root-hint", &seed, "--out-dir", o, "--name", "k"]);
    assert_eq!(data_rows(&out.join("k_segments.csv")), 3);
    ok(&["stats", "--segments", s(&out.join("k_segments.csv")), "--out-dir", o, "--name", "k"]);
    for f in ["k_generations.csv", "k_cumulative.csv", "k_murray.csv", "k_powerlaw.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    ok(&[
        "maps",
        "--vessel",
        s(&vessel),
        "--skeleton",
        s(&skel),
        "--tissue",
        s(&tissue),
        "--out-dir",
        o,
        "--name",
        "k",
    ]);
    let hist = out.join("k_perf_hist.csv");
    assert!(out.join("k_diam.json").exists() && hist.exists());

    let full = dir.path().join("full");
    ok(&["run", "--input", s(&input), "--seed", &seed, "--out-dir", s(&full), "--name", "k"]);
    for f in ["k_segments.csv", "k_generations.csv", "k_perf_hist.csv", "k_skeleton.raw", "k_diam.raw"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(full.join(f)).unwrap(), "{f} differs");
    }

    let agg = dir.path().join("agg.csv");
    ok(&["aggregate", s(&hist), s(&full.join("k_perf_hist.csv")), "-o", s(&agg)]);
    let text = fs::read_to_string(&agg).unwrap();
    assert!(text.starts_with("bin_lo_um,bin_hi_um,mean_freq,std_freq,n_specimens"));
    assert_eq!(data_rows(&agg), data_rows(&hist));
}

#[test]
fn empty_volume_reports_segment_stage() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("z");
    ok(&["phantom", "--generations", "1", "--out", s(&base)]);
    let header = dir.path().join("z.json");
    let raw = dir.path().join("z.raw");
    let n = fs::metadata(&raw).unwrap().len() as usize;
    fs::write(&raw, vec![0u8; n]).unwrap();
    let out = vasctree(&["run", "--input", s(&header), "--seed", "0,0,0", "--out-dir", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("segment"), "{err}");
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vasctree(&["run", "--input", s(&dir.path().join("nope.json")), "--seed", "0,0,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("read"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let seed = make_phantom(dir.path(), 2);
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("cfgout");
    let body = serde_json::json!({
        "input": dir.path().join("ph.json"),
        "out_dir": out,
        "name": "fromfile",
        "vessel": {"lo": 1500.0, "seed": seed.split(',').map(|v| v.parse::<usize>().unwrap()).collect::<Vec<_>>()},
    });
    fs::write(&cfg, body.to_string()).unwrap();
    ok(&["--config", s(&cfg), "run"]);
    assert!(out.join("fromfile_segments.csv").exists());
    ok(&["--config", s(&cfg), "run", "--name", "fromflag"]);
    assert!(out.join("fromflag_segments.csv").exists());

    fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let bad = vasctree(&["--config", s(&cfg), "run"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("config"));
}

#[test]
fn phantom_honours_explicit_dims() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("p");
    let args = ["phantom", "--generations", "2", "--l0-um", "600", "--d0-um", "120", "--spacing-um", "25"];
    let stdout = ok(&[&args[..], &["--dims", "64,64,128", "--out", s(&base)]].concat());
    assert!(stdout.contains("[64, 64, 128]"), "{stdout}");
    assert_eq!(fs::metadata(dir.path().join("p.raw")).unwrap().len(), 64 * 64 * 128 * 2);
    let header: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    assert_eq!(header["spacing_um"], serde_json::json!([25.0, 25.0, 25.0]));

    let small = vasctree(&[&args[..], &["--dims", "8,8,8", "--out", s(&base)]].concat());
    assert!(!small.status.success());
    assert!(String::from_utf8_lossy(&small.stderr).contains("does not fit"));
}
