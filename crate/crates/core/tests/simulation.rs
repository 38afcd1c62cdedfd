use mvhmm::ecm::FitReport;
use mvhmm::rng::derive_seed;
use mvhmm::sim::{builtin_scenario, generate, identifiable, recovery_mse, timing_run, Scenario, TimingMode};
use mvhmm::{fit, FitConfig};

fn fits(scenario: &Scenario, short_runs: usize) -> Vec<FitReport> {
    (0..scenario.replicates)
        .map(|rep| {
            let (panel, _) = generate(scenario, rep).unwrap();
            let config = FitConfig { short_runs, seed: derive_seed(1, &[rep as u64]), ..FitConfig::default() };
            fit(&panel, scenario.structure, scenario.k(), &config).unwrap()
        })
        .collect()
}

#[test]
fn truth_scores_zero_and_permutations_do_not_matter() {
    let scenario = builtin_scenario("VVE-VE/K4/T5/overlap2").unwrap().with_replicates(2);
    let mut reports = fits(&scenario, 5);
    let scored = recovery_mse(&reports, &scenario).unwrap();
    let permuted: Vec<FitReport> = reports
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.params = r.params.permuted(&[2, 0, 3, 1]);
            r
        })
        .collect();
    let rescored = recovery_mse(&permuted, &scenario).unwrap();
    assert_eq!(scored.mse, rescored.mse);

    for r in &mut reports {
        r.params = identifiable(&scenario.generator);
    }
    let exact = recovery_mse(&reports, &scenario).unwrap().mse;
    for (name, v) in exact.blocks() {
        assert!(v.abs() < 1e-24, "{name} {v}");
    }
}

#[test]
fn k_mismatch_is_rejected() {
    let two = builtin_scenario("EII-II/K2/T5/overlap2").unwrap().with_replicates(1).with_units(30);
    let four = builtin_scenario("EII-II/K4/T5/overlap2").unwrap();
    let reports = fits(&two, 3);
    assert!(recovery_mse(&reports, &four).is_err());
}

#[test]
fn mean_error_shrinks_with_longer_series() {
    let short = builtin_scenario("EII-II/K2/T5/overlap2").unwrap().with_replicates(10);
    let long = builtin_scenario("EII-II/K2/T15/overlap2").unwrap().with_replicates(10);
    let a = recovery_mse(&fits(&short, 10), &short).unwrap().mse;
    let b = recovery_mse(&fits(&long, 10), &long).unwrap().mse;
    assert!(b.mean < a.mean, "T=5 {} vs T=15 {}", a.mean, b.mean);
    // Reference level at T=5 is 0.0063; allow one order of magnitude either way.
    assert!(a.mean < 0.063 && a.mean > 0.00063, "{}", a.mean);
}

#[test]
fn timing_table_shape_and_single_worker_overhead() {
    let scenarios = vec![builtin_scenario("EII-II/K2/T5/overlap2").unwrap().with_units(30)];
    let config = FitConfig { short_runs: 5, max_iter: 100, ..FitConfig::default() };
    let rows = timing_run(&scenarios, &[TimingMode::Sequential, TimingMode::Parallel], 1, &config).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].cells, 98);
    assert!(rows[1].seconds >= 0.9 * rows[0].seconds, "{rows:?}");
}
