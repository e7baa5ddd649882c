use std::path::Path;
use std::process::Command;

use phcharts::cli::{read_manifest, report, run_pipeline, RunManifest, RunOptions, Stage};
use phcharts::compat::CompatReport;
use phcharts::models::{ModelKind, Scenario};

fn run_all(kind: ModelKind, dir: &Path) -> RunManifest {
    let opts = RunOptions { out: dir.to_path_buf(), seed: None, workers: 1 };
    run_pipeline(&Scenario::defaults_for(kind), &Stage::ALL, &opts).unwrap()
}

fn data(dir: &Path, name: &str) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap();
    v["data"].clone()
}

fn without_timings(mut m: RunManifest) -> RunManifest {
    for s in &mut m.stages {
        s.seconds = 0.0;
    }
    m.scenario.out_dir.clear();
    m
}

#[test]
fn outputs_carry_the_scenario_hash() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_all(ModelKind::A, dir.path());
    assert_eq!(m.outputs().len(), 12);
    for name in m.outputs() {
        let text = std::fs::read_to_string(dir.path().join(&name)).unwrap();
        let head = text.lines().next().unwrap();
        let stamped = if name.ends_with(".csv") {
            head == format!("# scenario_hash={}", m.scenario_hash)
        } else if name.ends_with(".jsonl") {
            head.contains(&format!("\"scenario_hash\":\"{}\"", m.scenario_hash))
        } else {
            text.contains(&format!("\"scenario_hash\": \"{}\"", m.scenario_hash))
        };
        assert!(stamped, "{name}");
    }
}

#[test]
fn product_model_takes_the_integrable_branch() {
    let dir = tempfile::tempdir().unwrap();
    run_all(ModelKind::A, dir.path());
    let templates = data(dir.path(), "templates.json");
    assert!(templates[0]["verdict"]["verdict"]["Polynomial"].is_object());
    let qni = data(dir.path(), "qni.json");
    assert_eq!(qni["forward"]["verdict"], "Negative");
    assert_eq!(qni["inverse"]["verdict"], "Negative");
    let compat: CompatReport = serde_json::from_value(data(dir.path(), "compat.json")).unwrap();
    assert!(compat.index_set.is_empty());
    assert!(compat.jointly_integrable());
}

#[test]
fn sine_model_verdicts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_all(ModelKind::C, dir.path());
    let templates = data(dir.path(), "templates.json");
    assert_eq!(templates[0]["verdict"]["verdict"], "NonPolynomial");
    let qni = data(dir.path(), "qni.json");
    assert_eq!(qni["forward"]["verdict"], "Positive");
    assert_eq!(qni["symmetry"]["holds"], true);
    let compat: CompatReport = serde_json::from_value(data(dir.path(), "compat.json")).unwrap();
    assert!(!compat.index_set.is_empty());
    assert!(!compat.jointly_integrable());
    let approx = data(dir.path(), "approx.json");
    let threshold = approx["threshold"].as_f64().unwrap();
    for fit in approx["polynomial"].as_array().unwrap() {
        assert!(fit["distance"].as_f64().unwrap() > threshold);
    }

    report(dir.path()).unwrap();
    let scatter = std::fs::read_to_string(dir.path().join("report-qni-scatter.csv")).unwrap();
    let n = m.scenario.grids.samples_per_scale;
    for k1 in m.scenario.grids.k_min..=m.scenario.grids.k_max {
        let rows = scatter.lines().skip(2).filter(|l| l.starts_with(&format!("{k1},"))).count();
        assert!(rows >= n, "k1 = {k1}: {rows} rows");
    }
}

#[test]
fn shear_model_summary() {
    let dir = tempfile::tempdir().unwrap();
    run_all(ModelKind::B, dir.path());
    let summary = report(dir.path()).unwrap();
    assert!(summary.text.contains("template degree 1, coefficient -0.16667"), "{}", summary.text);
    assert!(summary.text.contains("jointly integrable to order 4: yes"));
    for f in ["report-template-curves.csv", "report-divided-differences.csv", "summary.txt"] {
        assert!(dir.path().join(f).exists());
    }
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_all(ModelKind::C, a.path());
    let mb = run_all(ModelKind::C, b.path());
    let ra = report(a.path()).unwrap();
    let rb = report(b.path()).unwrap();
    assert_eq!(ra.files, rb.files);
    for name in ma.outputs().iter().chain(&ra.files) {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    assert_eq!(without_timings(ma), without_timings(mb));
}

#[test]
fn warm_cache_matches_cold() {
    let (cold, warm) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m = run_all(ModelKind::B, cold.path());
    let opts = RunOptions { out: warm.path().to_path_buf(), seed: None, workers: 1 };
    let s = Scenario::defaults_for(ModelKind::B);
    run_pipeline(&s, &[Stage::Splitting, Stage::Charts, Stage::Templates], &opts).unwrap();
    for stage in [Stage::Nform, Stage::Approx, Stage::Qni, Stage::Compat, Stage::Compat] {
        run_pipeline(&s, &[stage], &opts).unwrap();
    }
    let merged = read_manifest(warm.path()).unwrap();
    assert_eq!(merged.outputs(), m.outputs());
    for name in m.outputs() {
        let x = std::fs::read(cold.path().join(&name)).unwrap();
        let y = std::fs::read(warm.path().join(&name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn seeded_jitter_is_reproducible() {
    let s = Scenario::defaults_for(ModelKind::C);
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, seed) in dirs.iter().zip([Some(5), Some(5), Some(6)]) {
        let opts = RunOptions { out: dir.path().to_path_buf(), seed, workers: 1 };
        run_pipeline(&s, &[Stage::Splitting, Stage::Charts, Stage::Qni], &opts).unwrap();
    }
    let read = |i: usize| std::fs::read(dirs[i].path().join("qni-forward.csv")).unwrap();
    assert_eq!(read(0), read(1));
    assert_ne!(read(0), read(2));
    assert_eq!(data(dirs[0].path(), "qni.json")["forward"]["verdict"], "Positive");
}

fn phcharts(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_phcharts")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    };
    let good = write("good.toml", "model = \"B\"\n");
    let unknown = write("unknown.toml", "model = \"B\"\nfoo = 1\n");
    let strict = write("strict.toml", "model = \"C\"\n[tolerances]\nconjugacy = 1e-300\n");
    let out = dir.path().join("out").display().to_string();

    assert_eq!(phcharts(&["splitting", "--scenario", &good, "--out", &out]).0, 0);
    assert_eq!(phcharts(&["qni", "--scenario", &good, "--out", &out, "--kmax", "5"]).0, 2);
    assert_eq!(phcharts(&["chart", "--scenario", &good, "--out", &out]).0, 0);
    let (code, _) = phcharts(&["qni", "--scenario", &good, "--out", &out, "--kmax", "5", "--samples-per-scale", "16"]);
    assert_eq!(code, 0);
    let (code, text) = phcharts(&["report", "--out", &out]);
    assert_eq!(code, 0);
    assert!(text.contains("qni: forward Negative"), "{text}");

    assert_eq!(phcharts(&["splitting", "--scenario", &unknown, "--out", &out]).0, 2);
    assert_eq!(phcharts(&["qni", "--scenario", &good, "--out", &out, "--nu", "2"]).0, 2);
    let strict_out = dir.path().join("strict").display().to_string();
    assert_eq!(phcharts(&["run", "--scenario", &strict, "--out", &strict_out, "--stages", "splitting,nform"]).0, 3);
    let m = read_manifest(Path::new(&strict_out)).unwrap();
    assert!(m.record(Stage::Nform).unwrap().error.as_deref().unwrap().contains("radius"));
}
