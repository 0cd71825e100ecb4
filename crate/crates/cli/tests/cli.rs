use std::path::PathBuf;
use std::process::Command;

fn homog() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homog"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn cell_prints_homogenized_matrix() {
    let out = homog()
        .args(["cell", "--json", "--coeff"])
        .arg(configs().join("laminate.toml"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let a0: Vec<f64> = serde_json::from_value(v["a0"].clone()).unwrap();
    assert!((a0[0] - 3f64.sqrt()).abs() < 1e-8 && (a0[3] - 2.0).abs() < 1e-8);
    assert_eq!(v["lambda"][0].as_f64().unwrap(), 1.0);

    let text = homog()
        .args(["cell", "--coeff"])
        .arg(configs().join("nonsymmetric.toml"))
        .output()
        .unwrap();
    let text = String::from_utf8(text.stdout).unwrap();
    assert!(text.contains("corrector constants"));
    assert!(text.contains("div defect"));
}

#[test]
fn lemmas_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lemmas.csv");
    let status = homog()
        .args(["lemmas", "--inverse-eps", "4,8", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("kind,eps,lhs,rhs_part,ratio"));
    assert_eq!(lines.count(), 16);
}

#[test]
fn solve_writes_field_files() {
    let dir = tempfile::tempdir().unwrap();
    let (approx, reference) = (dir.path().join("u2.txt"), dir.path().join("ue.txt"));
    let out = homog()
        .args(["solve", "--eps", "1/8", "--grid", "64", "--order", "2", "--coeff"])
        .arg(configs().join("nonsymmetric.toml"))
        .arg("--out")
        .arg(&approx)
        .arg("--reference")
        .arg(&reference)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for p in [&approx, &reference] {
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# homog-field v1\ndim 2\ngrid 64\n"));
    }
}

#[test]
fn solve_rejects_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = homog()
        .args(["solve", "--eps", "0.125", "--grid", "16", "--coeff"])
        .arg(configs().join("laminate.toml"))
        .arg("--out")
        .arg(dir.path().join("u.txt"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
}

#[test]
fn sweep_exit_code_follows_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let ok = homog()
        .args(["sweep", "--jobs", "2", "--config"])
        .arg(configs().join("sweep-nonsymmetric.toml"))
        .arg("--out")
        .arg(dir.path().join("auto"))
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let csv = std::fs::read_to_string(dir.path().join("auto/report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("eps,E0,E1,E2,residual_osc,runtime_ms"));
    assert_eq!(csv.lines().count(), 4);

    let bad = homog()
        .args(["sweep", "--sign", "paper-2121", "--config"])
        .arg(configs().join("sweep-nonsymmetric.toml"))
        .arg("--out")
        .arg(dir.path().join("flipped"))
        .env("HOMOG_JOBS", "1")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(summary["passed"], false);
    assert_eq!(summary["sign"], "paper-2121");
    assert!(summary["failures"][0].as_str().unwrap().starts_with("s2"));
}

#[test]
fn sweep_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "coefficient = \"nowhere.toml\"\ninverse_eps = [8]\n").unwrap();
    let out = homog()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3"));
}
