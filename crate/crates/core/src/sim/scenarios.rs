use nalgebra::DMatrix;

use super::Scenario;
use crate::ecm::HmmParams;
use crate::matnorm::MatNormParams;
use crate::rng::DEFAULT_SEED;
use crate::structures::StructurePair;

fn m2(v: [f64; 4]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &v)
}

const BASE_MEAN: [f64; 4] = [1.00, 1.50, 0.50, 1.00];
const TRANSITION_2: [f64; 4] = [0.60, 0.40, 0.20, 0.80];
#[rustfmt::skip]
const TRANSITION_4: [f64; 16] = [
    0.55, 0.00, 0.21, 0.24,
    0.03, 0.52, 0.18, 0.27,
    0.06, 0.15, 0.49, 0.30,
    0.09, 0.12, 0.33, 0.46,
];

/// Row covariances of the VVE-VE generator, states 1..4.
const VVE_SIGMA: [[f64; 4]; 4] = [
    [0.85, 0.29, 0.29, 0.85],
    [0.50, 0.30, 0.30, 0.50],
    [1.45, 1.05, 1.05, 1.45],
    [1.33, 0.29, 0.29, 1.33],
];

/// Column covariances of the VVE-VE generator, states 1..4.
const VE_PSI: [[f64; 4]; 4] = [
    [1.06, 0.36, 0.36, 1.06],
    [1.25, 0.75, 0.75, 1.25],
    [1.45, 1.00, 1.00, 1.45],
    [1.03, 0.23, 0.23, 1.03],
];

/// Shifts added to every entry of the first mean for states 3 and 4.
const EXTRA_SHIFTS: [f64; 2] = [4.0, -2.0];

pub const OVERLAP_SHIFTS: [(u8, f64); 2] = [(1, 2.0), (2, 5.0)];
pub const TIMES: [usize; 3] = [5, 10, 15];
pub const UNITS: usize = 100;
pub const DEFAULT_REPLICATES: usize = 50;

fn generator(pair: &str, k: usize, shift: f64) -> HmmParams {
    let eii = pair == "EII-II";
    let shifts: Vec<f64> = [0.0, shift].into_iter().chain(EXTRA_SHIFTS).take(k).collect();
    let states = shifts
        .iter()
        .enumerate()
        .map(|(s, c)| {
            let (sigma, psi) = if eii {
                (DMatrix::identity(2, 2) * 1.5, DMatrix::identity(2, 2))
            } else {
                (m2(VVE_SIGMA[s]), m2(VE_PSI[s]))
            };
            MatNormParams::new(m2(BASE_MEAN).add_scalar(*c), sigma, psi).expect("2x2 shapes")
        })
        .collect();
    let (initial, transition) = match k {
        2 => (vec![0.5; 2], m2(TRANSITION_2)),
        _ => (vec![0.25; 4], DMatrix::from_row_slice(4, 4, &TRANSITION_4)),
    };
    HmmParams { initial, transition, states }
}

/// The 24 reference scenarios: two generating models, `K ∈ {2, 4}`, two
/// overlap levels and `T ∈ {5, 10, 15}`, each with `I = 100` units.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let mut out = Vec::with_capacity(24);
    for pair in ["EII-II", "VVE-VE"] {
        for k in [2, 4] {
            for (level, shift) in OVERLAP_SHIFTS {
                for t in TIMES {
                    out.push(Scenario {
                        label: format!("{pair}/K{k}/T{t}/overlap{level}"),
                        generator: generator(pair, k, shift),
                        structure: pair.parse::<StructurePair>().expect("valid name"),
                        units: UNITS,
                        times: t,
                        replicates: DEFAULT_REPLICATES,
                        overlap_shift: shift,
                        seed: DEFAULT_SEED,
                    });
                }
            }
        }
    }
    out
}

/// Looks up a built-in scenario by label.
pub fn builtin_scenario(label: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.label == label)
}
