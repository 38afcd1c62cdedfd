#![allow(dead_code)]

use mvhmm::ecm::Posteriors;
use mvhmm::matnorm::log_density;
use mvhmm::{HmmParams, MatNormParams, MatrixPanel, PanelDims};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

pub fn random_simplex(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_params(k: usize, p: usize, r: usize, rng: &mut ChaCha8Rng) -> HmmParams {
    let initial = random_simplex(k, rng);
    let rows: Vec<Vec<f64>> = (0..k).map(|_| random_simplex(k, rng)).collect();
    let states = (0..k)
        .map(|_| {
            let mean = DMatrix::from_fn(p, r, |_, _| rng.random_range(-2.0..2.0));
            MatNormParams::new(mean, random_spd(p, rng), random_spd(r, rng)).unwrap()
        })
        .collect();
    HmmParams { initial, transition: DMatrix::from_fn(k, k, |a, b| rows[a][b]), states }
}

pub fn random_panel(dims: PanelDims, rng: &mut ChaCha8Rng) -> MatrixPanel {
    MatrixPanel::from_fn(dims, |_, _, _, _| rng.random_range(-3.0..3.0)).unwrap()
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-likelihood summed over all `K^T` state paths of every unit.
pub fn enumerate_log_lik(panel: &MatrixPanel, params: &HmmParams) -> f64 {
    let d = panel.dims();
    let k = params.k();
    (0..d.i)
        .map(|i| {
            let dens: Vec<Vec<f64>> = (0..d.t)
                .map(|t| {
                    let x = panel.slice_unit_time(i, t).unwrap();
                    params.states.iter().map(|s| log_density(&x, s).unwrap()).collect()
                })
                .collect();
            let paths: Vec<f64> = (0..k.pow(d.t as u32))
                .map(|code| {
                    let path: Vec<usize> = (0..d.t).map(|t| (code / k.pow(t as u32)) % k).collect();
                    let mut lp = params.initial[path[0]].ln() + dens[0][path[0]];
                    for t in 1..d.t {
                        lp += params.transition[(path[t - 1], path[t])].ln() + dens[t][path[t]];
                    }
                    lp
                })
                .collect();
            lse(&paths)
        })
        .sum()
}

/// Multivariate normal log-density of `vec(X)` with covariance `Ψ ⊗ Σ`.
pub fn kronecker_log_density(x: &DMatrix<f64>, params: &MatNormParams) -> f64 {
    let n = x.len();
    let cov = params.psi.kronecker(&params.sigma);
    let dev = DVector::from_column_slice((x - &params.mean).as_slice());
    let chol = cov.cholesky().unwrap();
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let quad = dev.dot(&chol.solve(&dev));
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// Worst deviations from `Σ_k z = 1` and `Σ_j zz_·jk = z_·k` seen so far.
#[derive(Debug, Default, Clone, Copy)]
pub struct PosteriorCheck {
    pub max_z_err: f64,
    pub max_zz_err: f64,
    pub checked: usize,
}

impl PosteriorCheck {
    pub fn absorb(&mut self, post: &Posteriors) {
        for i in 0..post.n_units {
            for t in 0..post.n_times {
                let s: f64 = (0..post.k).map(|k| post.z(i, t, k)).sum();
                self.max_z_err = self.max_z_err.max((s - 1.0).abs());
                if t > 0 {
                    for k in 0..post.k {
                        let m: f64 = (0..post.k).map(|j| post.zz(i, t, j, k)).sum();
                        self.max_zz_err = self.max_zz_err.max((m - post.z(i, t, k)).abs());
                    }
                }
            }
        }
        self.checked += 1;
    }

    pub fn ok(&self) -> bool {
        self.max_z_err <= 1e-10 && self.max_zz_err <= 1e-8
    }
}
