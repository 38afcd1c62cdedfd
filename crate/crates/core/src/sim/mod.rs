//! Synthetic panels from known models, parameter-recovery scoring and a
//! timing harness for the model grid.

mod recovery;
mod scenarios;
mod timing;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ecm::HmmParams;
use crate::error::{Error, Result};
use crate::matnorm::sample_with_factors;
use crate::panel::{MatrixPanel, PanelDims};
use crate::rng::{label_hash, stream};
use crate::structures::StructurePair;

pub use recovery::{align_states, identifiable, recovery_mse, ParamMse, RecoveryReport};
pub use scenarios::{builtin_scenario, builtin_scenarios, DEFAULT_REPLICATES};
pub use timing::{timing_run, write_timing_csv, TimingMode, TimingRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub generator: HmmParams,
    /// Structure the generator belongs to and that recovery fits use.
    pub structure: StructurePair,
    pub units: usize,
    pub times: usize,
    pub replicates: usize,
    /// Constant added to every entry of the first mean to build the second.
    pub overlap_shift: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.units == 0 || self.times == 0 {
            return Err(Error::InvalidArgument(format!("scenario {}: counts must be >= 1", self.label)));
        }
        self.generator.validate(None)?;
        for s in &self.generator.states {
            crate::matnorm::MatNormEvaluator::new(s)?;
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.generator.k()
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn with_times(mut self, times: usize) -> Self {
        self.times = times;
        self
    }

    pub fn with_units(mut self, units: usize) -> Self {
        self.units = units;
        self
    }
}

/// Draws an index from a discrete distribution.
fn draw_state<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (s, p) in probs.enumerate() {
        if p > 0.0 {
            last = s;
        }
        acc += p;
        if u < acc {
            return s;
        }
    }
    last
}

/// One replicate: a panel and its zero-based state path per unit.
/// Deterministic in the scenario seed, label and replicate index.
pub fn generate(scenario: &Scenario, replicate: usize) -> Result<(MatrixPanel, Vec<Vec<usize>>)> {
    scenario.validate()?;
    let g = &scenario.generator;
    let (p, r) = g.states[0].mean.shape();
    let factors = g
        .states
        .iter()
        .map(|s| {
            let row = s.sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite { which: "Sigma" })?.l();
            let col = s.psi.clone().cholesky().ok_or(Error::NotPositiveDefinite { which: "Psi" })?.l();
            Ok((row, col))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = stream(scenario.seed, &[label_hash(&scenario.label), replicate as u64]);
    let mut paths = Vec::with_capacity(scenario.units);
    let mut slices = Vec::with_capacity(scenario.units);
    for _ in 0..scenario.units {
        let mut path = Vec::with_capacity(scenario.times);
        let mut unit = Vec::with_capacity(scenario.times);
        for t in 0..scenario.times {
            let s = if t == 0 {
                draw_state(g.initial.iter().copied(), &mut rng)
            } else {
                draw_state(g.transition.row(path[t - 1]).iter().copied(), &mut rng)
            };
            path.push(s);
            let (row, col) = &factors[s];
            unit.push(sample_with_factors(&g.states[s].mean, row, col, &mut rng));
        }
        paths.push(path);
        slices.push(unit);
    }
    let panel = MatrixPanel::from_slices(&slices)?;
    debug_assert_eq!(panel.dims(), PanelDims::new(p, r, scenario.units, scenario.times));
    Ok((panel, paths))
}

pub fn save_scenarios(scenarios: &[Scenario], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), scenarios)?;
    Ok(())
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let scenarios: Vec<Scenario> = serde_json::from_reader(BufReader::new(file))?;
    for s in &scenarios {
        s.validate()?;
    }
    Ok(scenarios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn two_state(units: usize, times: usize) -> Scenario {
        builtin_scenario("EII-II/K2/T5/overlap2").unwrap().with_units(units).with_times(times)
    }

    #[test]
    fn identity_transition_keeps_initial_state() {
        let mut s = two_state(50, 8);
        s.generator.transition = DMatrix::identity(2, 2);
        let (_, paths) = generate(&s, 0).unwrap();
        for path in paths {
            assert!(path.iter().all(|&x| x == path[0]));
        }
    }

    #[test]
    fn occupancy_approaches_stationary_distribution() {
        let s = two_state(1000, 200);
        let (_, paths) = generate(&s, 0).unwrap();
        let ones = paths.iter().flatten().filter(|&&x| x == 0).count() as f64;
        let share = ones / 200_000.0;
        // Stationary law of [[.6,.4],[.2,.8]] is (1/3, 2/3).
        assert!((share - 1.0 / 3.0).abs() < 0.02, "{share}");
    }

    #[test]
    fn state_means_are_recovered_empirically() {
        let s = two_state(1000, 10);
        let (panel, paths) = generate(&s, 1).unwrap();
        let mut sum = DMatrix::zeros(2, 2);
        let mut n = 0.0;
        for (i, path) in paths.iter().enumerate() {
            for (t, &st) in path.iter().enumerate() {
                if st == 0 {
                    sum += panel.slice_unit_time(i, t).unwrap();
                    n += 1.0;
                }
            }
        }
        let diff = sum / n - &s.generator.states[0].mean;
        assert!(diff.abs().max() < 0.05, "{diff}");
    }

    #[test]
    fn transition_frequencies_pass_chi_square() {
        let s = builtin_scenario("VVE-VE/K4/T15/overlap1").unwrap().with_units(1000);
        let (_, paths) = generate(&s, 2).unwrap();
        let mut counts = [[0.0f64; 4]; 4];
        for path in &paths {
            for w in path.windows(2) {
                counts[w[0]][w[1]] += 1.0;
            }
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for j in 0..4 {
            let total: f64 = counts[j].iter().sum();
            for k in 0..4 {
                let expected = total * s.generator.transition[(j, k)];
                if expected > 0.0 {
                    chi2 += (counts[j][k] - expected).powi(2) / expected;
                    dof += 1;
                } else {
                    assert_eq!(counts[j][k], 0.0);
                }
            }
            dof -= 1;
        }
        // 99.9% quantile of chi-square with 11 degrees of freedom is 31.3.
        assert_eq!(dof, 11);
        assert!(chi2 < 31.3, "{chi2}");
    }

    #[test]
    fn generation_is_reproducible() {
        let s = two_state(20, 5);
        assert_eq!(generate(&s, 3).unwrap(), generate(&s, 3).unwrap());
        assert_ne!(generate(&s, 3).unwrap().0, generate(&s, 4).unwrap().0);
    }

    #[test]
    fn scenario_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let all = builtin_scenarios();
        save_scenarios(&all, &path).unwrap();
        assert_eq!(load_scenarios(&path).unwrap(), all);
    }
}
