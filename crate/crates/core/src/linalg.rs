//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `log(sum(exp(xs)))`, exact for `-inf` entries and empty input.
pub fn logsumexp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
/// Equal eigenvalues keep the factorization's output order.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Geometric mean of strictly positive values, `prod(v)^(1/n)`, computed in log space.
pub fn geometric_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v.ln()));
    (s / n as f64).exp()
}

/// `|m|^(1/q)` for a symmetric positive-definite matrix.
pub fn det_root(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let q = m.nrows() as f64;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Some((log_det / q).exp())
}

pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

/// Max absolute deviation of `gᵀg` from the identity.
pub fn orthogonality_error(g: &DMatrix<f64>) -> f64 {
    let gtg = g.transpose() * g;
    let n = g.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gtg[(i, j)] - target).abs());
        }
    }
    worst
}

/// Adds `1e-10 * tr(m) / q` to the diagonal when `m` fails a Cholesky test.
pub fn jitter_if_singular(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if sym.clone().cholesky().is_some() {
        return sym;
    }
    let q = sym.nrows();
    let mut bump = 1e-10 * sym.trace() / q as f64;
    if !(bump > 0.0) {
        bump = 1e-10;
    }
    let mut out = sym;
    // Near-zero traces may need a few escalations before the factorization succeeds.
    for _ in 0..20 {
        let candidate = &out + DMatrix::identity(q, q) * bump;
        if candidate.clone().cholesky().is_some() {
            return candidate;
        }
        bump *= 10.0;
    }
    out += DMatrix::identity(q, q) * bump;
    out
}
