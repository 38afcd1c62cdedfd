use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{HmmParams, ModelState};
use crate::error::{Error, Result};
use crate::matnorm::MatNormParams;
use crate::panel::MatrixPanel;
use crate::structures::SpectralParts;

/// A random starting point: uniform initial probabilities, transition rows
/// drawn from a flat Dirichlet, means set to `k` distinct observed slices,
/// identity row and column covariances.
pub fn random_init<R: Rng + ?Sized>(panel: &MatrixPanel, k: usize, rng: &mut R) -> Result<ModelState> {
    let d = panel.dims();
    if k == 0 || k > d.n_matrices() {
        return Err(Error::InvalidArgument(format!(
            "cannot start {k} states from {} observed matrices",
            d.n_matrices()
        )));
    }
    let initial = vec![1.0 / k as f64; k];
    let mut transition = DMatrix::zeros(k, k);
    for j in 0..k {
        let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        for (s, v) in draws.into_iter().enumerate() {
            transition[(j, s)] = v / total;
        }
    }
    let states = sample(rng, d.n_matrices(), k)
        .into_iter()
        .map(|flat| {
            let mean = DMatrix::from_row_slice(d.p, d.r, panel.slice_data(flat / d.t, flat % d.t));
            MatNormParams::new(mean, DMatrix::identity(d.p, d.p), DMatrix::identity(d.r, d.r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelState {
        params: HmmParams { initial, transition, states },
        sigma_parts: vec![SpectralParts::identity(d.p); k],
        psi_parts: vec![SpectralParts::identity(d.r); k],
    })
}
