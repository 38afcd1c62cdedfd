//! Minorization–maximization update for an orientation shared across states.
//!
//! Minimizes `f(Γ) = Σ_k tr(Y_k Γ Δ_k⁻¹ Γᵀ)` over orthogonal `Γ`. Because
//! `Y_k - e_k I` is negative semidefinite (`e_k` the largest eigenvalue of
//! `Y_k`), `f` minus a constant is concave on the orthogonal group, so its
//! linearization at the current `Γ̇` majorizes it. The linearization is
//! `tr(F Γ)` with `F = Σ_k (Δ_k⁻¹ Γ̇ᵀ Y_k - e_k Δ_k⁻¹ Γ̇ᵀ)`, minimized by
//! `Γ = -V Uᵀ` for the SVD `F = U S Vᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{orthogonality_error, sorted_eigen};

#[derive(Debug, Clone, PartialEq)]
pub struct MmOutcome {
    pub gamma: DMatrix<f64>,
    /// Objective at the initial orientation followed by one value per accepted iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl MmOutcome {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }
}

/// `Σ_k tr(Y_k Γ Δ_k⁻¹ Γᵀ)`.
pub fn mm_objective(scatters: &[DMatrix<f64>], shapes: &[Vec<f64>], gamma: &DMatrix<f64>) -> f64 {
    scatters
        .iter()
        .zip(shapes)
        .map(|(y, delta)| {
            let rotated = gamma.transpose() * y * gamma;
            delta.iter().enumerate().map(|(j, d)| rotated[(j, j)] / d).sum::<f64>()
        })
        .sum()
}

/// Runs MM iterations from `init` until the objective changes by less than
/// `tol` relative to its magnitude, or `max_iter` iterations have run.
pub fn mm_orientation(
    scatters: &[DMatrix<f64>],
    shapes: &[Vec<f64>],
    init: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<MmOutcome> {
    if scatters.len() != shapes.len() || scatters.is_empty() {
        return Err(Error::Shape("one shape per scatter matrix is required".into()));
    }
    let q = init.nrows();
    if init.ncols() != q || scatters.iter().any(|y| y.shape() != (q, q)) || shapes.iter().any(|d| d.len() != q) {
        return Err(Error::Shape("scatter, shape and orientation dimensions disagree".into()));
    }
    let deviation = orthogonality_error(init);
    if deviation > 1e-8 {
        return Err(Error::NotOrthogonal { deviation });
    }

    let largest: Vec<f64> = scatters.iter().map(|y| sorted_eigen(y).0[0]).collect();
    let mut gamma = init.clone();
    let mut current = mm_objective(scatters, shapes, &gamma);
    let mut trace = vec![current];
    let mut iterations = 0;

    for _ in 0..max_iter {
        let gt = gamma.transpose();
        let mut f = DMatrix::zeros(q, q);
        for ((y, delta), &e) in scatters.iter().zip(shapes).zip(&largest) {
            // Δ⁻¹ Γ̇ᵀ (Y - e I)
            let mut term = &gt * y - &gt * e;
            for (j, d) in delta.iter().enumerate() {
                term.row_mut(j).scale_mut(1.0 / d);
            }
            f += term;
        }
        let Some(candidate) = orthogonal_argmin(&f) else { break };
        let value = mm_objective(scatters, shapes, &candidate);
        iterations += 1;
        if !(value <= current) {
            // Only rounding can push the majorizer uphill; keep the better point.
            break;
        }
        let change = current - value;
        gamma = candidate;
        current = value;
        trace.push(current);
        if change <= tol * current.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    Ok(MmOutcome { gamma, objective_trace: trace, iterations })
}

/// Orthogonal `Γ` minimizing `tr(F Γ)`, which is `-V Uᵀ` for `F = U S Vᵀ`.
///
/// `F` is rank-deficient at the optimum, where a general SVD routine can
/// return factors that do not reproduce it. The 2 x 2 case is solved in
/// closed form; larger cases take `V` from the eigenvectors of `FᵀF`, set
/// `u_j = F v_j / s_j` and complete the null directions by Gram–Schmidt.
fn orthogonal_argmin(f: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let q = f.nrows();
    match q {
        1 => Some(DMatrix::from_element(1, 1, if f[(0, 0)] > 0.0 { -1.0 } else { 1.0 })),
        2 => {
            // Rotation [[c, -s], [s, c]] gives a c + b s; reflection [[c, s], [s, -c]] gives a' c + b' s.
            let (a, b) = (f[(0, 0)] + f[(1, 1)], f[(0, 1)] - f[(1, 0)]);
            let (ar, br) = (f[(0, 0)] - f[(1, 1)], f[(0, 1)] + f[(1, 0)]);
            let (rot, refl) = (a.hypot(b), ar.hypot(br));
            if rot >= refl {
                let (c, s) = if rot > 0.0 { (-a / rot, -b / rot) } else { (1.0, 0.0) };
                Some(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
            } else {
                let (c, s) = (-ar / refl, -br / refl);
                Some(DMatrix::from_row_slice(2, 2, &[c, s, s, -c]))
            }
        }
        _ => {
            let (s2, v) = sorted_eigen(&(f.transpose() * f));
            let floor = 1e-10 * s2[0].max(0.0).sqrt();
            let mut u = DMatrix::<f64>::zeros(q, q);
            let mut basis = (0..q).map(|j| DVector::from_fn(q, |i, _| if i == j { 1.0 } else { 0.0 }));
            for j in 0..q {
                let s = s2[j].max(0.0).sqrt();
                let mut col = if s > floor { f * v.column(j) / s } else { basis.next()? };
                loop {
                    for prev in 0..j {
                        let proj = u.column(prev).dot(&col);
                        col -= u.column(prev) * proj;
                    }
                    let norm = col.norm();
                    if norm > 0.5 || (s > floor && norm > 1e-8) {
                        u.set_column(j, &(col / norm));
                        break;
                    }
                    col = basis.next()?;
                }
            }
            if !v.iter().chain(u.iter()).all(|x| x.is_finite()) {
                return None;
            }
            Some(-(v * u.transpose()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(q: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
        a.qr().q()
    }

    fn unit_det_desc(q: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..q).map(|_| rng.random_range(0.2..5.0)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        let g = crate::linalg::geometric_mean(v.iter().copied());
        v.iter().map(|x| x / g).collect()
    }

    #[test]
    fn single_state_matches_eigen_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for q in 2..=4 {
            let a = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
            let y = &a * a.transpose() + DMatrix::identity(q, q);
            let delta = unit_det_desc(q, &mut rng);
            let (vals, _) = sorted_eigen(&y);
            let optimum: f64 = vals.iter().zip(&delta).map(|(l, d)| l / d).sum();
            let init = random_orthogonal(q, &mut rng);
            let out = mm_orientation(&[y], &[delta], &init, 100_000, 1e-15).unwrap();
            assert!(orthogonality_error(&out.gamma) < 1e-10);
            assert!((out.objective() - optimum).abs() < 1e-9, "{} vs {optimum}", out.objective());
        }
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = 3;
        let scatters: Vec<_> = (0..3)
            .map(|_| {
                let a = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
                &a * a.transpose() + DMatrix::identity(q, q) * 0.1
            })
            .collect();
        let shapes: Vec<_> = (0..3).map(|_| unit_det_desc(q, &mut rng)).collect();
        let out = mm_orientation(&scatters, &shapes, &DMatrix::identity(q, q), 500, 0.0).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn optimal_init_is_fixed_point() {
        let y = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let delta = vec![2.0, 0.5];
        let out = mm_orientation(&[y], &[delta], &DMatrix::identity(2, 2), 100, 1e-8).unwrap();
        assert_eq!(out.iterations, 1);
        assert!((out.objective() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn argmin_beats_sampled_orthogonal_matrices_on_rank_deficient_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for q in 1..=4 {
            for rank in 0..=q {
                let a = DMatrix::from_fn(q, rank, |_, _| rng.random_range(-3.0..3.0));
                let b = DMatrix::from_fn(rank, q, |_, _| rng.random_range(-3.0..3.0));
                let f = a * b;
                let g = orthogonal_argmin(&f).unwrap();
                assert!(orthogonality_error(&g) < 1e-10);
                let best = (&f * &g).trace();
                let nuclear: f64 = f.clone().svd(false, false).singular_values.sum();
                assert!((best + nuclear).abs() < 1e-8 * nuclear.max(1.0), "q={q} rank={rank}");
                for _ in 0..50 {
                    assert!((&f * random_orthogonal(q, &mut rng)).trace() >= best - 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_non_orthogonal_init() {
        let y = DMatrix::identity(2, 2);
        let init = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = mm_orientation(&[y], &[vec![1.0, 1.0]], &init, 10, 1e-8).unwrap_err();
        assert!(matches!(err, Error::NotOrthogonal { .. }));
    }
}
