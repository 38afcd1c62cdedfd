//! ECM estimation for matrix-normal hidden Markov models.
//!
//! One iteration is an E-step (log-space forward–backward), CM-step 1
//! (initial and transition probabilities, means, row covariances with the
//! column covariances held fixed) and CM-step 2 (column covariances with
//! everything else held at the fresh CM-step 1 values).

mod cmstep;
mod estep;
mod fit;
mod init;
mod report;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matnorm::MatNormParams;
use crate::structures::{SpectralParts, UpdateOptions};

pub use cmstep::{cm_step1, cm_step2, expected_complete_loglik};
pub use estep::{e_step, log_emissions};
pub use fit::{canonical_order, fit, fit_with_observer, IterationView};
pub use init::random_init;
pub use report::{read_fit_report, write_fit_report, FitReport};

/// Initial distribution, transition matrix and state-conditional laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    /// `π_k = Pr(S_i1 = k)`.
    pub initial: Vec<f64>,
    /// Row `j`, column `k`: `Pr(S_it = k | S_i,t-1 = j)`.
    #[serde(with = "crate::serde_matrix")]
    pub transition: DMatrix<f64>,
    pub states: Vec<MatNormParams>,
}

impl HmmParams {
    pub fn k(&self) -> usize {
        self.initial.len()
    }

    /// Checks the probability and shape invariants. `det_tol` bounds `||Ψ_k| - 1|`
    /// when given.
    pub fn validate(&self, det_tol: Option<f64>) -> Result<()> {
        let k = self.k();
        if k == 0 || self.states.len() != k || self.transition.shape() != (k, k) {
            return Err(Error::Shape(format!(
                "{} initial probabilities, {:?} transition matrix, {} states",
                k,
                self.transition.shape(),
                self.states.len()
            )));
        }
        let stochastic = |row: &mut dyn Iterator<Item = f64>| {
            let (sum, ok) = row.fold((0.0, true), |(s, ok), v| (s + v, ok && v >= 0.0 && v.is_finite()));
            ok && (sum - 1.0).abs() <= 1e-12
        };
        if !stochastic(&mut self.initial.iter().copied()) {
            return Err(Error::InvalidArgument("initial probabilities must be a distribution".into()));
        }
        for j in 0..k {
            if !stochastic(&mut self.transition.row(j).iter().copied()) {
                return Err(Error::InvalidArgument(format!("transition row {j} is not a distribution")));
            }
        }
        let (p, r) = self.states[0].mean.shape();
        for s in &self.states {
            if s.mean.shape() != (p, r) || s.sigma.shape() != (p, p) || s.psi.shape() != (r, r) {
                return Err(Error::Shape("state parameters have inconsistent shapes".into()));
            }
            if let Some(tol) = det_tol {
                let det = s.psi.determinant();
                if (det - 1.0).abs() > tol {
                    return Err(Error::InvalidArgument(format!("|Ψ| = {det} is not 1")));
                }
            }
        }
        Ok(())
    }

    /// Relabels states so that new state `s` is old state `order[s]`.
    pub fn permuted(&self, order: &[usize]) -> HmmParams {
        let k = self.k();
        HmmParams {
            initial: order.iter().map(|&o| self.initial[o]).collect(),
            transition: DMatrix::from_fn(k, k, |a, b| self.transition[(order[a], order[b])]),
            states: order.iter().map(|&o| self.states[o].clone()).collect(),
        }
    }
}

/// Parameters plus the spectral decompositions that warm-start the
/// conditional covariance updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: HmmParams,
    pub sigma_parts: Vec<SpectralParts>,
    pub psi_parts: Vec<SpectralParts>,
}

impl ModelState {
    /// Decomposes the covariances of `params`.
    pub fn from_params(params: HmmParams) -> Result<Self> {
        let sigma_parts = params
            .states
            .iter()
            .map(|s| SpectralParts::from_covariance(&s.sigma))
            .collect::<Result<_>>()?;
        let psi_parts = params
            .states
            .iter()
            .map(|s| SpectralParts::from_covariance(&s.psi))
            .collect::<Result<_>>()?;
        Ok(Self { params, sigma_parts, psi_parts })
    }

    pub(crate) fn permuted(&self, order: &[usize]) -> ModelState {
        ModelState {
            params: self.params.permuted(order),
            sigma_parts: order.iter().map(|&o| self.sigma_parts[o].clone()).collect(),
            psi_parts: order.iter().map(|&o| self.psi_parts[o].clone()).collect(),
        }
    }
}

/// Smoothed state probabilities for every unit and time.
///
/// Arrays are flat: `z` and the log forward/backward terms are indexed
/// `(i, t, k)`, `zz` is indexed `(i, t, j, k)` and is zero at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    pub n_units: usize,
    pub n_times: usize,
    pub k: usize,
    pub z: Vec<f64>,
    pub zz: Vec<f64>,
    #[serde(with = "report::log_values")]
    pub log_gamma: Vec<f64>,
    #[serde(with = "report::log_values")]
    pub log_beta: Vec<f64>,
    pub unit_log_lik: Vec<f64>,
    pub log_lik: f64,
}

impl Posteriors {
    #[inline]
    pub fn idx(&self, i: usize, t: usize, k: usize) -> usize {
        (i * self.n_times + t) * self.k + k
    }

    #[inline]
    pub fn z(&self, i: usize, t: usize, k: usize) -> f64 {
        self.z[self.idx(i, t, k)]
    }

    #[inline]
    pub fn zz(&self, i: usize, t: usize, j: usize, k: usize) -> f64 {
        self.zz[((i * self.n_times + t) * self.k + j) * self.k + k]
    }

    /// `Σ_it z_itk` for every state.
    pub fn state_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.k];
        for chunk in self.z.chunks_exact(self.k) {
            for (acc, v) in w.iter_mut().zip(chunk) {
                *acc += v;
            }
        }
        w
    }

    pub(crate) fn permuted(&self, order: &[usize]) -> Posteriors {
        let k = self.k;
        let mut out = self.clone();
        for block in 0..self.n_units * self.n_times {
            for (new, &old) in order.iter().enumerate() {
                out.z[block * k + new] = self.z[block * k + old];
                out.log_gamma[block * k + new] = self.log_gamma[block * k + old];
                out.log_beta[block * k + new] = self.log_beta[block * k + old];
                for (new2, &old2) in order.iter().enumerate() {
                    out.zz[(block * k + new) * k + new2] = self.zz[(block * k + old) * k + old2];
                }
            }
        }
        out
    }
}

/// Local decoding: `argmax_k z_itk` per unit and time, zero-based, ties to the lower index.
pub fn decode(post: &Posteriors) -> Vec<Vec<usize>> {
    (0..post.n_units)
        .map(|i| {
            (0..post.n_times)
                .map(|t| {
                    let mut best = 0;
                    for k in 1..post.k {
                        if post.z(i, t, k) > post.z(i, t, best) {
                            best = k;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect()
}

/// Estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change that stops the main run.
    pub tol: f64,
    /// Number of short random starts.
    pub short_runs: usize,
    /// ECM iterations per short start.
    pub short_iters: usize,
    pub seed: u64,
    pub jitter: bool,
    pub mm_max_iter: usize,
    pub mm_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            short_runs: 100,
            short_iters: 1,
            seed: crate::rng::DEFAULT_SEED,
            jitter: true,
            mm_max_iter: 100,
            mm_tol: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn update_options(&self) -> UpdateOptions {
        UpdateOptions { jitter: self.jitter, mm_max_iter: self.mm_max_iter, mm_tol: self.mm_tol }
    }

    pub fn validate(&self) -> Result<()> {
        if self.short_runs == 0 || self.short_iters == 0 {
            return Err(Error::InvalidArgument("short runs and short iterations must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }
}

impl Error {
    /// Attaches the outer iteration number to iteration-aware errors.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::StateCollapse { state, weight, .. } => Error::StateCollapse { iteration, state, weight },
            Error::Numerical { message, .. } => Error::Numerical { iteration, message },
            other => other,
        }
    }
}
