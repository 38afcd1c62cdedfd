//! Matrix-normal law: log-density and sampling.
//!
//! `X ~ MN(M, Σ, Ψ)` with `Σ` (P x P) acting on rows and `Ψ` (R x R) on
//! columns, equivalently `vec(X) ~ N(vec(M), Ψ ⊗ Σ)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatNormParams {
    #[serde(with = "crate::serde_matrix")]
    pub mean: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub sigma: DMatrix<f64>,
    #[serde(with = "crate::serde_matrix")]
    pub psi: DMatrix<f64>,
}

impl MatNormParams {
    pub fn new(mean: DMatrix<f64>, sigma: DMatrix<f64>, psi: DMatrix<f64>) -> Result<Self> {
        let (p, r) = mean.shape();
        if sigma.shape() != (p, p) || psi.shape() != (r, r) {
            return Err(Error::Shape(format!(
                "mean {p}x{r} needs Σ {p}x{p} and Ψ {r}x{r}, got {:?} and {:?}",
                sigma.shape(),
                psi.shape()
            )));
        }
        Ok(Self { mean, sigma, psi })
    }

    pub fn rows(&self) -> usize {
        self.mean.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mean.ncols()
    }
}

/// Precomputed factorizations for repeated log-density evaluation.
#[derive(Debug, Clone)]
pub struct MatNormEvaluator {
    p: usize,
    r: usize,
    mean: Vec<f64>,
    // Row-major inverses of the lower Cholesky factors.
    sigma_chol_inv: Vec<f64>,
    psi_chol_inv: Vec<f64>,
    log_norm: f64,
}

fn chol_inverse(m: &DMatrix<f64>, which: &'static str) -> Result<(Vec<f64>, f64)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { which })?;
    let l = chol.l();
    let log_det: f64 = l.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let n = m.nrows();
    let inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPositiveDefinite { which })?;
    let mut flat = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            flat.push(inv[(a, b)]);
        }
    }
    Ok((flat, log_det))
}

impl MatNormEvaluator {
    pub fn new(params: &MatNormParams) -> Result<Self> {
        let (p, r) = params.mean.shape();
        if !is_symmetric(&params.sigma, 1e-12) {
            return Err(Error::NotPositiveDefinite { which: "Sigma" });
        }
        if !is_symmetric(&params.psi, 1e-12) {
            return Err(Error::NotPositiveDefinite { which: "Psi" });
        }
        let (sigma_chol_inv, log_det_sigma) = chol_inverse(&params.sigma, "Sigma")?;
        let (psi_chol_inv, log_det_psi) = chol_inverse(&params.psi, "Psi")?;
        let (pf, rf) = (p as f64, r as f64);
        let log_norm = -0.5 * pf * rf * (2.0 * PI).ln() - 0.5 * rf * log_det_sigma - 0.5 * pf * log_det_psi;
        let mut mean = Vec::with_capacity(p * r);
        for a in 0..p {
            for b in 0..r {
                mean.push(params.mean[(a, b)]);
            }
        }
        Ok(Self { p, r, mean, sigma_chol_inv, psi_chol_inv, log_norm })
    }

    /// Log-density of a row-major `P x R` observation. `scratch` must hold at least `P * R` values.
    pub fn log_density_flat(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let (p, r) = (self.p, self.r);
        let d = &mut scratch[..p * r];
        for ((dst, xv), mv) in d.iter_mut().zip(x).zip(&self.mean) {
            *dst = xv - mv;
        }
        // tr[Σ⁻¹ D Ψ⁻¹ Dᵀ] = ‖L_Σ⁻¹ D L_Ψ⁻ᵀ‖²_F, accumulated one row of L_Σ⁻¹ D at a time.
        let mut quad = 0.0;
        let mut row = [0.0f64; 16];
        let mut heap_row;
        let w: &mut [f64] = if r <= row.len() {
            &mut row[..r]
        } else {
            heap_row = vec![0.0; r];
            &mut heap_row
        };
        for a in 0..p {
            w.iter_mut().for_each(|v| *v = 0.0);
            for b in 0..=a {
                let l = self.sigma_chol_inv[a * p + b];
                if l != 0.0 {
                    for c in 0..r {
                        w[c] += l * d[b * r + c];
                    }
                }
            }
            for c in 0..r {
                let mut v = 0.0;
                for e in 0..=c {
                    v += w[e] * self.psi_chol_inv[c * r + e];
                }
                quad += v * v;
            }
        }
        self.log_norm - 0.5 * quad
    }

    pub fn log_density(&self, x: &DMatrix<f64>) -> f64 {
        let mut flat = Vec::with_capacity(self.p * self.r);
        for a in 0..self.p {
            for b in 0..self.r {
                flat.push(x[(a, b)]);
            }
        }
        let mut scratch = vec![0.0; self.p * self.r];
        self.log_density_flat(&flat, &mut scratch)
    }
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let scale = m.abs().max().max(1.0);
    (m - m.transpose()).abs().max() <= tol * scale
}

/// Matrix-normal log-density of `x`.
pub fn log_density(x: &DMatrix<f64>, params: &MatNormParams) -> Result<f64> {
    if x.shape() != params.mean.shape() {
        return Err(Error::Shape(format!(
            "observation {:?} vs mean {:?}",
            x.shape(),
            params.mean.shape()
        )));
    }
    Ok(MatNormEvaluator::new(params)?.log_density(x))
}

/// Draws `M + A Z Bᵀ` with `A Aᵀ = Σ`, `B Bᵀ = Ψ` and standard normal `Z`.
pub fn sample<R: Rng + ?Sized>(params: &MatNormParams, rng: &mut R) -> Result<DMatrix<f64>> {
    let a = params
        .sigma
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { which: "Sigma" })?
        .l();
    let b = params
        .psi
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { which: "Psi" })?
        .l();
    Ok(sample_with_factors(&params.mean, &a, &b, rng))
}

pub(crate) fn sample_with_factors<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    row_factor: &DMatrix<f64>,
    col_factor: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let (p, r) = mean.shape();
    // Row-major fill so the stream consumption order is layout independent.
    let mut z = DMatrix::zeros(p, r);
    for a in 0..p {
        for c in 0..r {
            z[(a, c)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    mean + row_factor * z * col_factor.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    /// Multivariate normal log-density of vec(X) with covariance Ψ ⊗ Σ, evaluated densely.
    fn vectorized_oracle(x: &DMatrix<f64>, p: &MatNormParams) -> f64 {
        let cov = p.psi.kronecker(&p.sigma);
        let n = cov.nrows();
        let diff = nalgebra::DVector::from_column_slice((x - &p.mean).as_slice());
        let chol = cov.cholesky().unwrap();
        let sol = chol.solve(&diff);
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        -0.5 * (n as f64) * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * diff.dot(&sol)
    }

    #[test]
    fn identity_at_mean() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let params = MatNormParams::new(m.clone(), DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let v = log_density(&m, &params).unwrap();
        assert!((v - (-2.0 * (2.0 * PI).ln())).abs() < 1e-14);
        assert!((v + 3.675754).abs() < 1e-6);
    }

    #[test]
    fn scalar_case_is_univariate_normal() {
        let s2 = 2.7;
        let params = MatNormParams::new(
            DMatrix::from_element(1, 1, 0.3),
            DMatrix::from_element(1, 1, s2),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let x = DMatrix::from_element(1, 1, -1.1);
        let expected = -0.5 * (2.0 * PI * s2).ln() - (-1.1f64 - 0.3).powi(2) / (2.0 * s2);
        assert!((log_density(&x, &params).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_kronecker_vectorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = rng.random_range(1..=4);
            let r = rng.random_range(1..=4);
            let params = MatNormParams::new(
                DMatrix::from_fn(p, r, |_, _| rng.random_range(-2.0..2.0)),
                random_spd(p, &mut rng),
                random_spd(r, &mut rng),
            )
            .unwrap();
            let x = DMatrix::from_fn(p, r, |_, _| rng.random_range(-3.0..3.0));
            let got = log_density(&x, &params).unwrap();
            let want = vectorized_oracle(&x, &params);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn scale_exchange_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = MatNormParams::new(
            DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0)),
            random_spd(3, &mut rng),
            random_spd(2, &mut rng),
        )
        .unwrap();
        let x = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let base = log_density(&x, &params).unwrap();
        for a in [0.01, 0.5, 3.0, 100.0] {
            let scaled = MatNormParams::new(params.mean.clone(), &params.sigma * a, &params.psi / a).unwrap();
            assert!((log_density(&x, &scaled).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_density_integrates_to_one() {
        let params = MatNormParams::new(
            DMatrix::from_element(1, 1, 0.4),
            DMatrix::from_element(1, 1, 0.8),
            DMatrix::from_element(1, 1, 1.5),
        )
        .unwrap();
        let eval = MatNormEvaluator::new(&params).unwrap();
        // Composite Simpson on [-12, 12].
        let n = 20_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let mut scratch = [0.0];
        let mut total = 0.0;
        for k in 0..=n {
            let x = lo + k as f64 * h;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            total += w * eval.log_density_flat(&[x], &mut scratch).exp();
        }
        total *= h / 3.0;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn rejects_non_positive_definite() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = MatNormParams::new(DMatrix::zeros(2, 2), bad.clone(), DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(log_density(&DMatrix::zeros(2, 2), &p), Err(Error::NotPositiveDefinite { which: "Sigma" })));
        let p = MatNormParams::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), bad).unwrap();
        assert!(matches!(log_density(&DMatrix::zeros(2, 2), &p), Err(Error::NotPositiveDefinite { which: "Psi" })));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let params = MatNormParams::new(DMatrix::zeros(2, 3), DMatrix::identity(2, 2), DMatrix::identity(3, 3)).unwrap();
        let a = sample(&params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample(&params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_moments_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]);
        let psi = DMatrix::from_row_slice(2, 2, &[1.2, -0.3, -0.3, 0.9]);
        let zero = MatNormParams::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let general = MatNormParams::new(DMatrix::zeros(2, 2), sigma.clone(), psi.clone()).unwrap();
        let n = 100_000;

        let mut mean = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            mean += sample(&zero, &mut rng).unwrap();
        }
        mean /= n as f64;
        assert!(mean.abs().max() < 0.02, "{mean}");

        let target = psi.kronecker(&sigma);
        let mut cov = DMatrix::<f64>::zeros(4, 4);
        for _ in 0..n {
            let x = sample(&general, &mut rng).unwrap();
            let v = nalgebra::DVector::from_column_slice(x.as_slice());
            cov += &v * v.transpose();
        }
        cov /= n as f64;
        assert!((cov - target).abs().max() < 0.05);
    }
}
