use nalgebra::DMatrix;

use super::estep::log_emissions;
use super::{ModelState, Posteriors};
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::panel::MatrixPanel;
use crate::structures::{update_psi, update_sigma, PsiStructure, ScatterSet, SigmaStructure, UpdateOptions};

/// States whose total weight falls below this fraction of `I·T` are collapsed.
const COLLAPSE_FRACTION: f64 = 1e-6;

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn check_weights(post: &Posteriors) -> Result<Vec<f64>> {
    let weights = post.state_weights();
    let floor = COLLAPSE_FRACTION * (post.n_units * post.n_times) as f64;
    for (state, &weight) in weights.iter().enumerate() {
        if !(weight >= floor) {
            return Err(Error::StateCollapse { iteration: 0, state, weight });
        }
    }
    Ok(weights)
}

fn check_shapes(panel: &MatrixPanel, post: &Posteriors, state: &ModelState) -> Result<()> {
    let d = panel.dims();
    if post.n_units != d.i || post.n_times != d.t || post.k != state.params.k() {
        return Err(Error::Shape("posteriors do not match the panel or the model".into()));
    }
    Ok(())
}

/// Which side of `X - M` the fixed inverse covariance multiplies.
#[derive(Clone, Copy)]
enum Side {
    /// `Σ_it z (X - M) A (X - M)ᵀ` with `A` of size `R×R`.
    Rows,
    /// `Σ_it z (X - M)ᵀ A (X - M)` with `A` of size `P×P`.
    Cols,
}

fn weighted_scatter(
    panel: &MatrixPanel,
    post: &Posteriors,
    means: &[DMatrix<f64>],
    inverses: &[DMatrix<f64>],
    side: Side,
) -> Vec<DMatrix<f64>> {
    let d = panel.dims();
    let (p, r) = (d.p, d.r);
    let q = match side {
        Side::Rows => p,
        Side::Cols => r,
    };
    let means: Vec<Vec<f64>> = means.iter().map(row_major).collect();
    let inverses: Vec<Vec<f64>> = inverses.iter().map(row_major).collect();
    let mut out = vec![vec![0.0; q * q]; post.k];
    let mut dev = vec![0.0; p * r];
    let mut prod = vec![0.0; p * r];
    for i in 0..d.i {
        for t in 0..d.t {
            let x = panel.slice_data(i, t);
            for k in 0..post.k {
                let w = post.z(i, t, k);
                if w == 0.0 {
                    continue;
                }
                for ((dv, xv), mv) in dev.iter_mut().zip(x).zip(&means[k]) {
                    *dv = xv - mv;
                }
                let a = &inverses[k];
                let acc = &mut out[k];
                match side {
                    Side::Rows => {
                        // prod = D A, acc[a,b] += w Σ_d prod[a,d] D[b,d]
                        for row in 0..p {
                            for col in 0..r {
                                let mut s = 0.0;
                                for c in 0..r {
                                    s += dev[row * r + c] * a[c * r + col];
                                }
                                prod[row * r + col] = s;
                            }
                        }
                        for ra in 0..p {
                            for rb in 0..p {
                                let mut s = 0.0;
                                for c in 0..r {
                                    s += prod[ra * r + c] * dev[rb * r + c];
                                }
                                acc[ra * p + rb] += w * s;
                            }
                        }
                    }
                    Side::Cols => {
                        // prod = A D, acc[c,e] += w Σ_a D[a,c] prod[a,e]
                        for row in 0..p {
                            for col in 0..r {
                                let mut s = 0.0;
                                for b in 0..p {
                                    s += a[row * p + b] * dev[b * r + col];
                                }
                                prod[row * r + col] = s;
                            }
                        }
                        for ca in 0..r {
                            for cb in 0..r {
                                let mut s = 0.0;
                                for row in 0..p {
                                    s += dev[row * r + ca] * prod[row * r + cb];
                                }
                                acc[ca * r + cb] += w * s;
                            }
                        }
                    }
                }
            }
        }
    }
    out.into_iter().map(|v| DMatrix::from_row_slice(q, q, &v)).collect()
}

fn inverses(mats: impl Iterator<Item = DMatrix<f64>>, which: &'static str) -> Result<Vec<DMatrix<f64>>> {
    mats.map(|m| spd_inverse(&m).ok_or(Error::NotPositiveDefinite { which })).collect()
}

/// First conditional maximization: initial and transition probabilities,
/// state means and row covariances, with the column covariances of `prev`
/// held fixed.
pub fn cm_step1(
    panel: &MatrixPanel,
    post: &Posteriors,
    prev: &ModelState,
    structure: SigmaStructure,
    opts: &UpdateOptions,
) -> Result<ModelState> {
    check_shapes(panel, post, prev)?;
    let weights = check_weights(post)?;
    let d = panel.dims();
    let k = post.k;

    let mut initial = vec![0.0; k];
    for i in 0..d.i {
        for (s, v) in initial.iter_mut().enumerate() {
            *v += post.z(i, 0, s);
        }
    }
    initial.iter_mut().for_each(|v| *v /= d.i as f64);

    let mut counts = DMatrix::<f64>::zeros(k, k);
    for i in 0..d.i {
        for t in 1..d.t {
            for j in 0..k {
                for s in 0..k {
                    counts[(j, s)] += post.zz(i, t, j, s);
                }
            }
        }
    }
    let mut transition = prev.params.transition.clone();
    for j in 0..k {
        let total: f64 = counts.row(j).sum();
        // A state never left carries no information about its row.
        if total > 0.0 {
            for s in 0..k {
                transition[(j, s)] = counts[(j, s)] / total;
            }
        }
    }

    let mut sums = vec![vec![0.0; d.p * d.r]; k];
    for i in 0..d.i {
        for t in 0..d.t {
            let x = panel.slice_data(i, t);
            for (s, acc) in sums.iter_mut().enumerate() {
                let w = post.z(i, t, s);
                for (a, v) in acc.iter_mut().zip(x) {
                    *a += w * v;
                }
            }
        }
    }
    let means: Vec<DMatrix<f64>> = sums
        .iter()
        .zip(&weights)
        .map(|(s, w)| DMatrix::from_row_slice(d.p, d.r, s) / *w)
        .collect();

    let psi_inv = inverses(prev.params.states.iter().map(|s| s.psi.clone()), "Psi")?;
    let scatter = ScatterSet::new(weighted_scatter(panel, post, &means, &psi_inv, Side::Rows), weights)?;
    let update = update_sigma(structure, &scatter, &prev.sigma_parts, d.r, opts)?;

    let mut next = prev.clone();
    next.params.initial = initial;
    next.params.transition = transition;
    for ((state, mean), sigma) in next.params.states.iter_mut().zip(means).zip(update.covariances) {
        state.mean = mean;
        state.sigma = sigma;
    }
    next.sigma_parts = update.parts;
    Ok(next)
}

/// Second conditional maximization: column covariances under `|Ψ_k| = 1`,
/// with means and row covariances of `current` held fixed.
pub fn cm_step2(
    panel: &MatrixPanel,
    post: &Posteriors,
    current: &ModelState,
    structure: PsiStructure,
    opts: &UpdateOptions,
) -> Result<ModelState> {
    check_shapes(panel, post, current)?;
    let weights = check_weights(post)?;
    let means: Vec<DMatrix<f64>> = current.params.states.iter().map(|s| s.mean.clone()).collect();
    let sigma_inv = inverses(current.params.states.iter().map(|s| s.sigma.clone()), "Sigma")?;
    let scatter = ScatterSet::new(weighted_scatter(panel, post, &means, &sigma_inv, Side::Cols), weights)?;
    let update = update_psi(structure, &scatter, &current.psi_parts, opts)?;

    let mut next = current.clone();
    for (state, psi) in next.params.states.iter_mut().zip(update.covariances) {
        state.psi = psi;
    }
    next.psi_parts = update.parts;
    Ok(next)
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Expected complete-data log-likelihood of `state` under fixed posteriors.
pub fn expected_complete_loglik(panel: &MatrixPanel, post: &Posteriors, state: &ModelState) -> Result<f64> {
    check_shapes(panel, post, state)?;
    let params = &state.params;
    let k = post.k;
    let log_phi = log_emissions(panel, params)?;
    let mut total = 0.0;
    for i in 0..post.n_units {
        for s in 0..k {
            total += xlogy(post.z(i, 0, s), params.initial[s]);
        }
        for t in 0..post.n_times {
            for s in 0..k {
                total += post.z(i, t, s) * log_phi[post.idx(i, t, s)];
                if t > 0 {
                    for j in 0..k {
                        total += xlogy(post.zz(i, t, j, s), params.transition[(j, s)]);
                    }
                }
            }
        }
    }
    Ok(total)
}
