use std::io::Write;

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::ecm::{FitReport, HmmParams};
use crate::error::{Error, Result};

/// Averaged squared errors per parameter block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamMse {
    pub mean: f64,
    pub sigma: f64,
    pub psi: f64,
    pub initial: f64,
    pub transition: f64,
}

impl ParamMse {
    pub const HEADER: &'static str =
        "# mse = squared error per entry, averaged over entries and states, then over replicates";

    fn add(&mut self, other: &ParamMse) {
        self.mean += other.mean;
        self.sigma += other.sigma;
        self.psi += other.psi;
        self.initial += other.initial;
        self.transition += other.transition;
    }

    fn scaled(mut self, f: f64) -> ParamMse {
        self.mean *= f;
        self.sigma *= f;
        self.psi *= f;
        self.initial *= f;
        self.transition *= f;
        self
    }

    pub fn blocks(&self) -> [(&'static str, f64); 5] {
        [
            ("M", self.mean),
            ("Sigma", self.sigma),
            ("Psi", self.psi),
            ("pi", self.initial),
            ("Pi", self.transition),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub scenario: String,
    pub mse: ParamMse,
    /// Per replicate: `alignment[k]` is the fitted state matched to true state `k`.
    pub alignments: Vec<Vec<usize>>,
    pub seconds: Vec<f64>,
}

impl RecoveryReport {
    /// Delimited table `scenario,parameter,mse` preceded by a comment line
    /// stating the reduction.
    pub fn write_csv<W: Write>(reports: &[RecoveryReport], mut out: W) -> Result<()> {
        let io = |e| Error::io("<recovery table>", e);
        writeln!(out, "{}", ParamMse::HEADER).map_err(io)?;
        writeln!(out, "scenario,parameter,mse").map_err(io)?;
        for r in reports {
            for (name, v) in r.mse.blocks() {
                writeln!(out, "{},{name},{v}", r.scenario).map_err(io)?;
            }
        }
        Ok(())
    }
}

/// Moves the column scale into the row covariance so that `|Ψ_k| = 1`;
/// `Ψ_k ⊗ Σ_k` is unchanged.
pub fn identifiable(params: &HmmParams) -> HmmParams {
    let mut out = params.clone();
    for s in &mut out.states {
        let r = s.psi.nrows() as f64;
        let scale = s.psi.determinant().powf(1.0 / r);
        s.psi /= scale;
        s.sigma *= scale;
    }
    out
}

fn sq_dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm_squared()
}

/// Matches fitted states to true states by minimizing the summed squared
/// Frobenius distance between mean matrices. Exhaustive for `K <= 8`,
/// greedy nearest-pair matching beyond.
pub fn align_states(estimated: &HmmParams, truth: &HmmParams) -> Result<Vec<usize>> {
    let k = truth.k();
    if estimated.k() != k {
        return Err(Error::InvalidArgument(format!("{} fitted states against {k} true states", estimated.k())));
    }
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|t| (0..k).map(|e| sq_dist(&estimated.states[e].mean, &truth.states[t].mean)).collect())
        .collect();
    if k <= 8 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for perm in (0..k).permutations(k) {
            let total: f64 = perm.iter().enumerate().map(|(t, &e)| cost[t][e]).sum();
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, perm));
            }
        }
        return Ok(best.expect("k >= 1").1);
    }
    let mut out = vec![usize::MAX; k];
    let mut used = vec![false; k];
    let mut pairs: Vec<(f64, usize, usize)> =
        (0..k).flat_map(|t| (0..k).map(move |e| (t, e))).map(|(t, e)| (cost[t][e], t, e)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, t, e) in pairs {
        if out[t] == usize::MAX && !used[e] {
            out[t] = e;
            used[e] = true;
        }
    }
    Ok(out)
}

fn replicate_mse(fitted: &HmmParams, truth: &HmmParams, order: &[usize]) -> ParamMse {
    let k = truth.k() as f64;
    let aligned = fitted.permuted(order);
    let per_state = |f: &dyn Fn(usize) -> f64| (0..truth.k()).map(f).sum::<f64>() / k;
    let mean_sq = |a: &DMatrix<f64>, b: &DMatrix<f64>| sq_dist(a, b) / a.len() as f64;
    ParamMse {
        mean: per_state(&|s| mean_sq(&aligned.states[s].mean, &truth.states[s].mean)),
        sigma: per_state(&|s| mean_sq(&aligned.states[s].sigma, &truth.states[s].sigma)),
        psi: per_state(&|s| mean_sq(&aligned.states[s].psi, &truth.states[s].psi)),
        initial: per_state(&|s| (aligned.initial[s] - truth.initial[s]).powi(2)),
        transition: mean_sq(&aligned.transition, &truth.transition),
    }
}

/// Scores fits of a scenario's replicates against its generator, compared
/// in the unit-determinant column parameterization.
pub fn recovery_mse(fits: &[FitReport], scenario: &Scenario) -> Result<RecoveryReport> {
    if fits.is_empty() {
        return Err(Error::InvalidArgument("no fits to score".into()));
    }
    let truth = identifiable(&scenario.generator);
    let mut total = ParamMse::default();
    let mut alignments = Vec::with_capacity(fits.len());
    for f in fits {
        if f.k != truth.k() {
            return Err(Error::InvalidArgument(format!("fit has K = {}, scenario has K = {}", f.k, truth.k())));
        }
        let order = align_states(&f.params, &truth)?;
        total.add(&replicate_mse(&f.params, &truth, &order));
        alignments.push(order);
    }
    Ok(RecoveryReport {
        scenario: scenario.label.clone(),
        mse: total.scaled(1.0 / fits.len() as f64),
        alignments,
        seconds: fits.iter().map(|f| f.wall_time_secs).collect(),
    })
}
