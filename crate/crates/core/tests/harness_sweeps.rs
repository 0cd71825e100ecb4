mod common;

use homog_core::coefficient::CoefficientField;
use homog_core::harness::{
    emit_report, fit_rate, refinement_check, run_sweep, ReportFormat, SignChoice, SweepConfig, CSV_HEADER,
};
use homog_core::resolvent::LSign;
use homog_core::HomogError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn laminate_config() -> SweepConfig {
    let mut cfg = SweepConfig::new(common::laminate(), vec![8, 16, 32]);
    cfg.datum = common::datum();
    cfg
}

#[test]
fn noisy_quadratic_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<(f64, f64)> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
        .iter()
        .map(|&e| (e, e * e + 1e-12 * rng.gen_range(-1.0..1.0)))
        .collect();
    let s = fit_rate(&pts).unwrap();
    assert!((1.9..=2.1).contains(&s), "{s}");
}

#[test]
fn empty_eps_list_fails_validation() {
    let mut cfg = laminate_config();
    cfg.inverse_eps.clear();
    assert!(matches!(run_sweep(&cfg), Err(HomogError::InvalidConfig(_))));
    cfg.inverse_eps = vec![16, 8, 32];
    assert!(matches!(run_sweep(&cfg), Err(HomogError::InvalidConfig(_))));
}

#[test]
fn constant_coefficient_is_exact() {
    let a = CoefficientField::constant(2, &[1.3, 0.2, 0.2, 0.7]).unwrap();
    let mut cfg = SweepConfig::new(a, vec![4, 8, 16]);
    cfg.smoothing = false;
    let report = run_sweep(&cfg).unwrap();
    for r in &report.rows {
        assert!(r.e0 < 1e-9 && r.e1 < 1e-9 && r.e2 < 1e-9, "{r:?}");
    }
    let slopes = report.slopes.as_ref().unwrap();
    for name in ["s0", "s1", "s2"] {
        assert!(slopes.exact.iter().any(|e| e == name), "{:?}", slopes.exact);
    }
    assert!(slopes.s0.is_none());
    assert!(report.passed());
}

#[test]
fn constant_coefficient_with_smoothing_keeps_the_smoothing_error() {
    // the smoothed first approximation is S^ε u; for smooth data it sits O(ε²) from u in H¹
    let a = CoefficientField::constant(2, &[1.3, 0.2, 0.2, 0.7]).unwrap();
    let report = run_sweep(&SweepConfig::new(a, vec![4, 8, 16])).unwrap();
    let slopes = report.slopes.as_ref().unwrap();
    assert!(slopes.exact.iter().any(|e| e == "s0") && slopes.exact.iter().any(|e| e == "s2"));
    assert!(!slopes.exact.iter().any(|e| e == "s1"));
    assert!((1.7..2.1).contains(&slopes.s1.unwrap()), "{slopes:?}");
}

#[test]
fn laminate_sweep_reports_rates_and_files() {
    let report = run_sweep(&laminate_config()).unwrap();
    let s = report.slopes.as_ref().unwrap();
    assert!(s.s0.unwrap() >= 0.9 && s.s1.unwrap() >= 0.9 && s.s2.unwrap() >= 1.8, "{s:?}");
    let last = report.rows.last().unwrap();
    assert!(last.e2 <= last.e0);
    assert!(report.passed());

    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path(), &[ReportFormat::Csv, ReportFormat::Structured]).unwrap();
    assert_eq!(files.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], CSV_HEADER.join(","));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(json["metadata"]["config_hash"].as_str().unwrap().len() == 64);
    assert!(json["slopes"]["s2"].as_f64().unwrap() >= 1.8);
}

#[test]
fn repeated_sweeps_are_identical() {
    let mut cfg = SweepConfig::new(common::nonsymmetric(), vec![4, 8, 16]);
    cfg.seed = 42;
    cfg.jobs = Some(2);
    let a = run_sweep(&cfg).unwrap().without_runtimes();
    cfg.jobs = Some(1);
    let b = run_sweep(&cfg).unwrap().without_runtimes();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn constant_skew_part_gives_the_symmetric_report() {
    let sym = common::nonsymmetric_sym_part();
    let full = sym.add(&CoefficientField::constant(2, &[0.0, -0.4, 0.4, 0.0]).unwrap()).unwrap();
    let run = |a: CoefficientField| {
        let mut cfg = SweepConfig::new(a, vec![4, 8, 16]);
        cfg.tol = 1e-12;
        run_sweep(&cfg).unwrap()
    };
    let (r1, r2) = (run(sym), run(full));
    for (x, y) in r1.rows.iter().zip(&r2.rows) {
        for (p, q) in [(x.e0, y.e0), (x.e1, y.e1), (x.e2, y.e2)] {
            assert!((p - q).abs() <= 1e-8 * p.max(1e-12), "{p} vs {q}");
        }
    }
    let (s1, s2) = (r1.slopes.unwrap(), r2.slopes.unwrap());
    assert!((s1.s2.unwrap() - s2.s2.unwrap()).abs() < 1e-6);
}

#[test]
fn reference_refinement_is_stable() {
    let changes = refinement_check(&laminate_config()).unwrap();
    for c in changes {
        assert!(c < 0.1, "{changes:?}");
    }
}

#[test]
fn fixed_sign_is_respected() {
    let mut cfg = SweepConfig::new(common::nonsymmetric(), vec![8, 16, 32]);
    cfg.datum = common::datum();
    cfg.sign = SignChoice::Paper2121;
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.metadata.sign, LSign::Paper2121);
    assert!(!report.passed(), "the opposite orientation should lose the second-order rate");
    let r = &report.rows[0];
    assert_eq!(r.e2, r.diagnostics.e2_paper2121);
}

#[test]
fn config_file_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), common::laminate().to_spec().to_toml_string().unwrap()).unwrap();
    std::fs::write(
        dir.path().join("sweep.toml"),
        "coefficient = \"a.toml\"\ninverse_eps = [4, 8, 16]\nsign = \"paper-3250\"\n",
    )
    .unwrap();
    let cfg = SweepConfig::load(&dir.path().join("sweep.toml")).unwrap();
    assert_eq!(cfg.coefficient_field().unwrap(), common::laminate());
    assert_eq!(cfg.sign, SignChoice::Paper3250);
    assert_eq!(cfg.grid_multiplier, None);
    assert_eq!(cfg.multiplier_for(&common::laminate()).unwrap(), 8);
    assert_eq!(cfg.multiplier_for(&common::bmo_like()).unwrap(), 16);
}
