use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det_root, sorted_eigen};

/// `λ Γ Δ Γᵀ` with `Γ` orthogonal and `Δ` diagonal with unit determinant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralParts {
    pub lambda: f64,
    #[serde(with = "crate::serde_matrix")]
    pub gamma: DMatrix<f64>,
    pub delta: Vec<f64>,
}

impl SpectralParts {
    pub fn identity(q: usize) -> Self {
        Self {
            lambda: 1.0,
            gamma: DMatrix::identity(q, q),
            delta: vec![1.0; q],
        }
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn delta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.delta)
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let scaled = &self.gamma * DMatrix::from_diagonal(&self.delta_vector());
        let m = scaled * self.gamma.transpose() * self.lambda;
        crate::linalg::symmetrize(&m)
    }

    /// Decomposes a symmetric positive-definite matrix, eigenvalues descending.
    pub fn from_covariance(m: &DMatrix<f64>) -> Result<Self> {
        let lambda = det_root(m).ok_or(Error::NotPositiveDefinite { which: "covariance" })?;
        let (values, vectors) = sorted_eigen(m);
        Ok(Self {
            lambda,
            gamma: vectors,
            delta: values.iter().map(|v| v / lambda).collect(),
        })
    }
}

/// Per-state scatter matrices with their total membership weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSet {
    pub matrices: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
}

impl ScatterSet {
    pub fn new(matrices: Vec<DMatrix<f64>>, weights: Vec<f64>) -> Result<Self> {
        if matrices.len() != weights.len() || matrices.is_empty() {
            return Err(Error::Shape(format!(
                "{} scatter matrices with {} weights",
                matrices.len(),
                weights.len()
            )));
        }
        let q = matrices[0].nrows();
        if matrices.iter().any(|m| m.shape() != (q, q)) {
            return Err(Error::Shape("scatter matrices must share one square shape".into()));
        }
        Ok(Self { matrices, weights })
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn pooled(&self) -> DMatrix<f64> {
        self.matrices.iter().fold(DMatrix::zeros(self.dim(), self.dim()), |acc, m| acc + m)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub(crate) fn check_weights(&self) -> Result<()> {
        for (state, &weight) in self.weights.iter().enumerate() {
            if !(weight > 0.0) {
                return Err(Error::EmptyState { state, weight });
            }
        }
        Ok(())
    }
}

/// Tuning shared by the covariance updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateOptions {
    /// Regularize rank-deficient scatter matrices before decomposing them.
    pub jitter: bool,
    pub mm_max_iter: usize,
    pub mm_tol: f64,
}

impl Default for UpdateOptions {
    fn default() -> Self {
        Self { jitter: true, mm_max_iter: 100, mm_tol: 1e-8 }
    }
}

/// Output of one covariance update: the per-state matrices and the spectral
/// parts that warm-start the next update.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceUpdate {
    pub covariances: Vec<DMatrix<f64>>,
    pub parts: Vec<SpectralParts>,
}

impl CovarianceUpdate {
    pub(crate) fn from_parts(parts: Vec<SpectralParts>) -> Result<Self> {
        let covariances: Vec<_> = parts.iter().map(SpectralParts::assemble).collect();
        for c in &covariances {
            if c.iter().any(|v| !v.is_finite()) || c.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite { which: "updated covariance" });
            }
        }
        Ok(Self { covariances, parts })
    }
}
