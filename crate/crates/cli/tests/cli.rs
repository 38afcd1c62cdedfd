use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mvhmm::ecm::read_fit_report;
use mvhmm::select::ModelGrid;
use mvhmm::sim::{align_states, builtin_scenario, generate, Scenario};
use mvhmm::{load_panel, run_grid, save_panel, FitConfig, HmmParams, LongFormat, MatNormParams, MatrixPanel};
use nalgebra::DMatrix;
use tempfile::TempDir;

fn mvhmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvhmm")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_panel(dir: &Path, panel: &MatrixPanel) -> String {
    let path = dir.join("panel.csv");
    save_panel(panel, &path, LongFormat::default()).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_panel(dir: &Path) -> String {
    let scenario = builtin_scenario("EII-II/K2/T5/overlap2").unwrap().with_units(30);
    write_panel(dir, &generate(&scenario, 0).unwrap().0)
}

fn strip_seconds(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
}

#[test]
fn fit_writes_a_report_with_finite_bic() {
    let dir = TempDir::new().unwrap();
    let data = small_panel(dir.path());
    let out_dir = dir.path().to_str().unwrap();
    let out = mvhmm(&["fit", "--data", &data, "--structure", "EII-II", "--K", "1", "--short-runs", "3", "--out-dir", out_dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_fit_report(dir.path().join("fit_report.json")).unwrap();
    assert!(report.bic.is_finite());
    assert_eq!(report.k, 1);
}

#[test]
fn unknown_structure_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = small_panel(dir.path());
    let out = mvhmm(&["fit", "--data", &data, "--structure", "XYZ", "--K", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("XYZ") && msg.contains("VVE-VE") && msg.contains("EII-II"), "{msg}");
}

#[test]
fn logit_outside_the_unit_interval_fails_cleanly() {
    let dir = TempDir::new().unwrap();
    let panel = MatrixPanel::from_fn(mvhmm::PanelDims::new(2, 2, 3, 2), |p, r, i, t| {
        if (p, r, i, t) == (1, 0, 2, 1) { 1.0 } else { 0.25 + 0.1 * (p + r) as f64 }
    })
    .unwrap();
    let data = write_panel(dir.path(), &panel);
    let out_dir = dir.path().join("out");
    let out = mvhmm(&[
        "select", "--data", &data, "--logit", "--Ks", "1", "--structures", "EII-II",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("1"), "{}", stderr(&out));
    assert!(!out_dir.join("selection.csv").exists());
}

#[test]
fn select_one_cell_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let data = small_panel(dir.path());
    let out_dir = dir.path().to_str().unwrap();
    let out = mvhmm(&[
        "select", "--data", &data, "--Ks", "2", "--structures", "EII-II", "--short-runs", "3", "--out-dir", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("selection.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("EII-II,2,"));
}

#[test]
fn select_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let data = small_panel(dir.path());
    let out_dir = dir.path().to_str().unwrap();
    let out = mvhmm(&[
        "select", "--data", &data, "--Ks", "1-2", "--structures", "EII-II,VVV-VV,EEE-EI", "--short-runs", "4",
        "--seed", "7", "--workers", "2", "--out-dir", out_dir,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let panel = load_panel(&data, LongFormat::default()).unwrap();
    let pairs = ["EII-II", "VVV-VV", "EEE-EI"].iter().map(|s| s.parse().unwrap()).collect();
    let config = FitConfig { short_runs: 4, seed: 7, ..FitConfig::default() };
    let report = run_grid(&panel, &ModelGrid::new(pairs, vec![1, 2], config).unwrap(), 1).unwrap();
    let mut expected = Vec::new();
    report.write_csv(&mut expected).unwrap();

    let table = fs::read_to_string(dir.path().join("selection.csv")).unwrap();
    assert_eq!(strip_seconds(&table), strip_seconds(&String::from_utf8(expected).unwrap()));
    let best = read_fit_report(dir.path().join("best_fit.json")).unwrap();
    assert!(best.same_results(&report.best));
    let cell = report.best_cell();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("best: {} with K = {}", cell.structure, cell.k)), "{stdout}");
}

#[test]
fn refit_recovers_the_transition_matrix() {
    let rot = |a: f64| DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
    let shape = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5]));
    let sigma = |vol: f64, angle: f64| rot(angle) * &shape * rot(angle).transpose() * vol;
    let psi: DMatrix<f64> = DMatrix::from_row_slice(3, 3, &[1.2, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.9]);
    let psi = &psi / psi.determinant().cbrt();
    let mean0 = DMatrix::zeros(2, 3);
    let mean1 = DMatrix::from_element(2, 3, 3.0);
    let generator = HmmParams {
        initial: vec![0.6, 0.4],
        transition: DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7]),
        states: vec![
            MatNormParams::new(mean0, sigma(1.0, 0.3), psi.clone()).unwrap(),
            MatNormParams::new(mean1, sigma(2.0, 1.2), psi).unwrap(),
        ],
    };
    let scenario = Scenario {
        label: "VEV-EE/custom".into(),
        generator: generator.clone(),
        structure: "VEV-EE".parse().unwrap(),
        units: 100,
        times: 16,
        replicates: 1,
        overlap_shift: 3.0,
        seed: 11,
    };
    let dir = TempDir::new().unwrap();
    let data = write_panel(dir.path(), &generate(&scenario, 0).unwrap().0);
    let out = mvhmm(&[
        "fit", "--data", &data, "--structure", "VEV-EE", "--K", "2", "--short-runs", "10",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_fit_report(dir.path().join("fit_report.json")).unwrap();
    let order = align_states(&report.params, &generator).unwrap();
    let fitted = report.params.permuted(&order);
    let err = (&fitted.transition - &generator.transition).abs().max();
    assert!(err < 0.1, "{err}");
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = mvhmm(&[
            "simulate", "--scenario", "EII-II/K2/T5/overlap2", "--replicates", "2", "--short-runs", "5",
            "--seed", "3", "--workers", "2", "--out-dir", out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read_to_string(out_dir.join("recovery.csv")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    let rows: Vec<&str> = first.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let v: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.is_finite() && v >= 0.0, "{row}");
    }
}

#[test]
fn unknown_scenario_lists_builtins() {
    let out = mvhmm(&["simulate", "--scenario", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("VVE-VE/K4/T15/overlap1"), "{}", stderr(&out));
}

#[test]
fn decode_exports_labels_and_switches() {
    let dir = TempDir::new().unwrap();
    let data = small_panel(dir.path());
    for k in ["1", "2"] {
        let sub = dir.path().join(format!("k{k}"));
        let out = mvhmm(&[
            "fit", "--data", &data, "--structure", "EII-II", "--K", k, "--short-runs", "5",
            "--out-dir", sub.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let report_path = sub.join("fit_report.json");
        let out = mvhmm(&["decode", "--report", report_path.to_str().unwrap(), "--out-dir", sub.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));

        let report = read_fit_report(&report_path).unwrap();
        let states = fs::read_to_string(sub.join("states.csv")).unwrap();
        let mut labels = vec![vec![0usize; report.dims.t]; report.dims.i];
        for line in states.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let i = report.unit_labels.iter().position(|u| u == f[0]).unwrap();
            let t = report.time_labels.iter().position(|u| u == f[1]).unwrap();
            labels[i][t] = f[2].parse::<usize>().unwrap() - 1;
        }
        assert_eq!(labels, report.decoded);

        let switches = fs::read_to_string(sub.join("switches.csv")).unwrap();
        let counts: Vec<usize> =
            switches.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(counts.len(), report.dims.t - 1);
        for (t, &c) in counts.iter().enumerate() {
            let recount = labels.iter().filter(|row| row[t + 1] != row[t]).count();
            assert_eq!(c, recount);
        }
        if k == "1" {
            assert!(labels.iter().flatten().all(|&s| s == 0));
            assert!(counts.iter().all(|&c| c == 0));
        }
    }
}

#[test]
fn bench_writes_one_row_per_mode() {
    let dir = TempDir::new().unwrap();
    let out = mvhmm(&[
        "bench", "--scenarios", "EII-II/K2/T5/overlap2", "--modes", "sequential,parallel", "--workers", "2",
        "--short-runs", "2", "--max-iter", "20", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "scenario,mode,workers,cells,seconds");
    assert_eq!(table.lines().count(), 3);
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
}
