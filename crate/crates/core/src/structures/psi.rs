//! Column covariance updates under `|Ψ_k| = 1`.
//!
//! With `Σ` fixed and the determinant pinned, each rule minimizes
//! `Σ_k tr(Ψ_k⁻¹ W_k)` over its structure.

use nalgebra::{DMatrix, DVector};

use super::mm::mm_orientation;
use super::sigma::{axis_parts, diagonal, prepare, unit_product};
use super::spectral::{CovarianceUpdate, ScatterSet, SpectralParts, UpdateOptions};
use super::PsiStructure;
use crate::error::{Error, Result};
use crate::linalg::{det_root, sorted_eigen, symmetrize};

fn unit_det_parts(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, SpectralParts)> {
    let root = det_root(m).ok_or(Error::NotPositiveDefinite { which: "scatter" })?;
    let normalized = symmetrize(&(m / root));
    let mut parts = SpectralParts::from_covariance(&normalized)?;
    parts.lambda = 1.0;
    Ok((normalized, parts))
}

/// Updates the column covariances `Ψ_1..Ψ_K` for `structure`.
///
/// `scatter` holds `W_k = Σ_it z_itk (X_it - M_k)ᵀ Σ_k⁻¹ (X_it - M_k)`, built
/// with the row covariances from the same iteration.
pub fn update_psi(
    structure: PsiStructure,
    scatter: &ScatterSet,
    prev: &[SpectralParts],
    opts: &UpdateOptions,
) -> Result<CovarianceUpdate> {
    scatter.check_weights()?;
    let k = scatter.k();
    let q = scatter.dim();
    if prev.len() != k || prev.iter().any(|p| p.dim() != q) {
        return Err(Error::Shape(format!("expected {k} previous {q}x{q} covariance parts")));
    }
    let ws = prepare(scatter, opts);
    let pooled = ws.iter().fold(DMatrix::zeros(q, q), |acc, m| acc + m);

    use PsiStructure::*;
    let parts: Vec<SpectralParts> = match structure {
        II => vec![SpectralParts::identity(q); k],
        EI => {
            let (_, delta) = unit_product(&diagonal(&pooled))?;
            vec![axis_parts(1.0, delta); k]
        }
        VI => ws
            .iter()
            .map(|w| Ok(axis_parts(1.0, unit_product(&diagonal(w))?.1)))
            .collect::<Result<_>>()?,
        EE => {
            let (matrix, parts) = unit_det_parts(&pooled)?;
            return Ok(CovarianceUpdate { covariances: vec![matrix; k], parts: vec![parts; k] });
        }
        VE => {
            let shapes: Vec<Vec<f64>> = prev.iter().map(|p| p.delta.clone()).collect();
            let gamma = mm_orientation(&ws, &shapes, &prev[0].gamma, opts.mm_max_iter, opts.mm_tol)?.gamma;
            ws.iter()
                .map(|w| {
                    let (_, delta) = unit_product(&diagonal(&(gamma.transpose() * w * &gamma)))?;
                    Ok(SpectralParts { lambda: 1.0, gamma: gamma.clone(), delta })
                })
                .collect::<Result<_>>()?
        }
        EV => {
            let eig: Vec<(DVector<f64>, DMatrix<f64>)> = ws.iter().map(sorted_eigen).collect();
            let mut acc = vec![0.0; q];
            for (vals, _) in &eig {
                for j in 0..q {
                    acc[j] += vals[j];
                }
            }
            let (_, delta) = unit_product(&acc)?;
            eig.into_iter()
                .map(|(_, vecs)| SpectralParts { lambda: 1.0, gamma: vecs, delta: delta.clone() })
                .collect()
        }
        VV => {
            let (mats, parts): (Vec<_>, Vec<_>) = ws.iter().map(unit_det_parts).collect::<Result<Vec<_>>>()?.into_iter().unzip();
            return Ok(CovarianceUpdate { covariances: mats, parts });
        }
    };
    CovarianceUpdate::from_parts(parts)
}
