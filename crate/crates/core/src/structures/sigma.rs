//! Conditional maximizers of the expected complete-data log-likelihood over
//! the row covariances, one per structure.
//!
//! With `Ψ` held fixed, each state contributes
//! `-(R n_k / 2) log|Σ_k| - tr(Σ_k⁻¹ Y_k) / 2` where `Y_k` is the weighted
//! row scatter and `n_k` the state weight, so every rule below is the usual
//! eigen-decomposition M-step with sample size `R n_k`.

use nalgebra::{DMatrix, DVector};

use super::mm::mm_orientation;
use super::spectral::{CovarianceUpdate, ScatterSet, SpectralParts, UpdateOptions};
use super::SigmaStructure;
use crate::error::{Error, Result};
use crate::linalg::{det_root, geometric_mean, jitter_if_singular, sorted_eigen, spd_inverse, symmetrize};

pub(crate) fn prepare(scatter: &ScatterSet, opts: &UpdateOptions) -> Vec<DMatrix<f64>> {
    scatter
        .matrices
        .iter()
        .map(|m| if opts.jitter { jitter_if_singular(m) } else { symmetrize(m) })
        .collect()
}

pub(crate) fn diagonal(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|j| m[(j, j)]).collect()
}

/// Splits positive values into their geometric mean and the unit-product remainder.
pub(crate) fn unit_product(values: &[f64]) -> Result<(f64, Vec<f64>)> {
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { which: "scatter" });
    }
    let g = geometric_mean(values.iter().copied());
    Ok((g, values.iter().map(|v| v / g).collect()))
}

pub(crate) fn axis_parts(lambda: f64, delta: Vec<f64>) -> SpectralParts {
    let q = delta.len();
    SpectralParts { lambda, gamma: DMatrix::identity(q, q), delta }
}

fn check_prev(prev: &[SpectralParts], k: usize, q: usize) -> Result<()> {
    if prev.len() != k || prev.iter().any(|p| p.dim() != q) {
        return Err(Error::Shape(format!("expected {k} previous {q}x{q} covariance parts")));
    }
    Ok(())
}

/// Updates the row covariances `Σ_1..Σ_K` for `structure`.
///
/// `scatter` holds `Y_k = Σ_it z_itk (X_it - M_k) Ψ_k⁻¹ (X_it - M_k)ᵀ` and the
/// state weights; `n_cols` is `R`. `prev` supplies the previous iteration's
/// decomposition for the structures updated by conditional steps (the
/// volumes of VEI, VEE and VEV; orientation and shapes of EVE and VVE).
pub fn update_sigma(
    structure: SigmaStructure,
    scatter: &ScatterSet,
    prev: &[SpectralParts],
    n_cols: usize,
    opts: &UpdateOptions,
) -> Result<CovarianceUpdate> {
    scatter.check_weights()?;
    let k = scatter.k();
    let q = scatter.dim();
    check_prev(prev, k, q)?;
    let ys = prepare(scatter, opts);
    let c = n_cols as f64;
    let qf = q as f64;
    let n = &scatter.weights;
    let n_total = scatter.total_weight();
    let pooled = ys.iter().fold(DMatrix::zeros(q, q), |acc, m| acc + m);

    use SigmaStructure::*;
    let parts: Vec<SpectralParts> = match structure {
        EII => {
            let lambda = pooled.trace() / (qf * c * n_total);
            vec![axis_parts(lambda, vec![1.0; q]); k]
        }
        VII => (0..k)
            .map(|s| axis_parts(ys[s].trace() / (qf * c * n[s]), vec![1.0; q]))
            .collect(),
        EEI => {
            let (g, delta) = unit_product(&diagonal(&pooled))?;
            vec![axis_parts(g / (c * n_total), delta); k]
        }
        VEI => {
            let weighted = (0..k).fold(DMatrix::zeros(q, q), |acc, s| acc + &ys[s] / prev[s].lambda);
            let (_, delta) = unit_product(&diagonal(&weighted))?;
            (0..k)
                .map(|s| {
                    let tr: f64 = diagonal(&ys[s]).iter().zip(&delta).map(|(y, d)| y / d).sum();
                    axis_parts(tr / (qf * c * n[s]), delta.clone())
                })
                .collect()
        }
        EVI => {
            let split = ys.iter().map(|y| unit_product(&diagonal(y))).collect::<Result<Vec<_>>>()?;
            let lambda = split.iter().map(|(g, _)| g).sum::<f64>() / (c * n_total);
            split.into_iter().map(|(_, delta)| axis_parts(lambda, delta)).collect()
        }
        VVI => (0..k)
            .map(|s| {
                let (g, delta) = unit_product(&diagonal(&ys[s]))?;
                Ok(axis_parts(g / (c * n[s]), delta))
            })
            .collect::<Result<_>>()?,
        EEE => {
            let shared = SpectralParts::from_covariance(&(&pooled / (c * n_total)))?;
            vec![shared; k]
        }
        VEE => {
            let weighted = (0..k).fold(DMatrix::zeros(q, q), |acc, s| acc + &ys[s] / prev[s].lambda);
            let root = det_root(&weighted).ok_or(Error::NotPositiveDefinite { which: "scatter" })?;
            let shape = &weighted / root;
            let shape_inv = spd_inverse(&shape).ok_or(Error::NotPositiveDefinite { which: "scatter" })?;
            let base = SpectralParts::from_covariance(&shape)?;
            (0..k)
                .map(|s| SpectralParts {
                    lambda: (&shape_inv * &ys[s]).trace() / (qf * c * n[s]),
                    gamma: base.gamma.clone(),
                    delta: base.delta.clone(),
                })
                .collect()
        }
        EVE | VVE => {
            let variable_volume = structure == VVE;
            let shapes: Vec<Vec<f64>> = prev.iter().map(|p| p.delta.clone()).collect();
            let targets: Vec<DMatrix<f64>> = if variable_volume {
                ys.iter().zip(prev).map(|(y, p)| y / p.lambda).collect()
            } else {
                ys.clone()
            };
            let gamma = mm_orientation(&targets, &shapes, &prev[0].gamma, opts.mm_max_iter, opts.mm_tol)?.gamma;
            let rotated: Vec<Vec<f64>> = ys.iter().map(|y| diagonal(&(gamma.transpose() * y * &gamma))).collect();
            let split = rotated.iter().map(|b| unit_product(b)).collect::<Result<Vec<_>>>()?;
            if variable_volume {
                split
                    .into_iter()
                    .enumerate()
                    .map(|(s, (g, delta))| SpectralParts { lambda: g / (c * n[s]), gamma: gamma.clone(), delta })
                    .collect()
            } else {
                // Σ_k tr(Γ Δ_k⁻¹ Γᵀ Y_k) / (P R N)
                let total: f64 = rotated
                    .iter()
                    .zip(&split)
                    .map(|(b, (_, delta))| b.iter().zip(delta).map(|(x, d)| x / d).sum::<f64>())
                    .sum();
                let lambda = total / (qf * c * n_total);
                split
                    .into_iter()
                    .map(|(_, delta)| SpectralParts { lambda, gamma: gamma.clone(), delta })
                    .collect()
            }
        }
        EEV | VEV => {
            let eig: Vec<(DVector<f64>, DMatrix<f64>)> = ys.iter().map(sorted_eigen).collect();
            let mut acc = vec![0.0; q];
            for (s, (vals, _)) in eig.iter().enumerate() {
                let w = if structure == VEV { 1.0 / prev[s].lambda } else { 1.0 };
                for j in 0..q {
                    acc[j] += w * vals[j];
                }
            }
            let (g, delta) = unit_product(&acc)?;
            if structure == EEV {
                let lambda = g / (c * n_total);
                eig.into_iter()
                    .map(|(_, vecs)| SpectralParts { lambda, gamma: vecs, delta: delta.clone() })
                    .collect()
            } else {
                eig.into_iter()
                    .enumerate()
                    .map(|(s, (vals, vecs))| {
                        let tr: f64 = vals.iter().zip(&delta).map(|(o, d)| o / d).sum();
                        SpectralParts { lambda: tr / (qf * c * n[s]), gamma: vecs, delta: delta.clone() }
                    })
                    .collect()
            }
        }
        EVV => {
            let roots = ys
                .iter()
                .map(|y| det_root(y).ok_or(Error::NotPositiveDefinite { which: "scatter" }))
                .collect::<Result<Vec<_>>>()?;
            let lambda = roots.iter().sum::<f64>() / (c * n_total);
            ys.iter()
                .zip(&roots)
                .map(|(y, r)| {
                    let mut parts = SpectralParts::from_covariance(&(y / *r))?;
                    parts.lambda = lambda;
                    Ok(parts)
                })
                .collect::<Result<_>>()?
        }
        VVV => (0..k)
            .map(|s| SpectralParts::from_covariance(&(&ys[s] / (c * n[s]))))
            .collect::<Result<_>>()?,
    };

    let mut update = CovarianceUpdate::from_parts(parts)?;
    // Unconstrained-orientation structures: use the scatter-derived matrix
    // itself instead of a reassembled eigen decomposition.
    match structure {
        EEE => {
            let shared = symmetrize(&(&pooled / (c * n_total)));
            update.covariances = vec![shared; k];
        }
        VVV => {
            update.covariances = (0..k).map(|s| symmetrize(&(&ys[s] / (c * n[s])))).collect();
        }
        _ => {}
    }
    Ok(update)
}
