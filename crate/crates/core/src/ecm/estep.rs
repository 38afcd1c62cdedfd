use super::{HmmParams, Posteriors};
use crate::error::{Error, Result};
use crate::matnorm::MatNormEvaluator;
use crate::panel::MatrixPanel;

/// `log φ(X_it | k)` for every unit, time and state, flat in `(i, t, k)` order.
pub fn log_emissions(panel: &MatrixPanel, params: &HmmParams) -> Result<Vec<f64>> {
    let d = panel.dims();
    let k = params.k();
    if params.states.iter().any(|s| s.mean.shape() != (d.p, d.r)) {
        return Err(Error::Shape(format!("state means must be {}x{}", d.p, d.r)));
    }
    let evaluators = params
        .states
        .iter()
        .map(MatNormEvaluator::new)
        .collect::<Result<Vec<_>>>()?;
    let mut scratch = vec![0.0; d.p * d.r];
    let mut out = Vec::with_capacity(d.n_matrices() * k);
    for i in 0..d.i {
        for t in 0..d.t {
            let x = panel.slice_data(i, t);
            for (s, ev) in evaluators.iter().enumerate() {
                let v = ev.log_density_flat(x, &mut scratch);
                if !v.is_finite() {
                    return Err(Error::Numerical {
                        iteration: 0,
                        message: format!("non-finite state {s} density at unit {i}, time {t}"),
                    });
                }
                out.push(v);
            }
        }
    }
    Ok(out)
}

#[inline]
fn lse_into(buf: &[f64]) -> f64 {
    let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + buf.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Forward–backward recursions on the log scale and the smoothed
/// memberships `z` and transition expectations `zz`.
pub fn e_step(panel: &MatrixPanel, params: &HmmParams) -> Result<Posteriors> {
    let log_phi = log_emissions(panel, params)?;
    posteriors_from_emissions(panel.dims().i, panel.dims().t, params, &log_phi)
}

pub(crate) fn posteriors_from_emissions(
    n_units: usize,
    n_times: usize,
    params: &HmmParams,
    log_phi: &[f64],
) -> Result<Posteriors> {
    let k = params.k();
    let log_pi: Vec<f64> = params.initial.iter().map(|p| p.ln()).collect();
    let log_trans: Vec<f64> = (0..k * k).map(|x| params.transition[(x / k, x % k)].ln()).collect();
    let n = n_units * n_times * k;
    let mut log_gamma = vec![0.0; n];
    let mut log_beta = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut zz = vec![0.0; n * k];
    let mut unit_log_lik = Vec::with_capacity(n_units);
    let mut buf = vec![0.0; k];
    let at = |i: usize, t: usize, s: usize| (i * n_times + t) * k + s;

    for i in 0..n_units {
        for s in 0..k {
            log_gamma[at(i, 0, s)] = log_phi[at(i, 0, s)] + log_pi[s];
        }
        for t in 1..n_times {
            for s in 0..k {
                for j in 0..k {
                    buf[j] = log_gamma[at(i, t - 1, j)] + log_trans[j * k + s];
                }
                log_gamma[at(i, t, s)] = log_phi[at(i, t, s)] + lse_into(&buf);
            }
        }
        // log β_iTk = 0 already.
        for t in (0..n_times - 1).rev() {
            for j in 0..k {
                for s in 0..k {
                    buf[s] = log_phi[at(i, t + 1, s)] + log_beta[at(i, t + 1, s)] + log_trans[j * k + s];
                }
                log_beta[at(i, t, j)] = lse_into(&buf);
            }
        }
        let ll = lse_into(&log_gamma[at(i, n_times - 1, 0)..at(i, n_times - 1, 0) + k]);
        if !ll.is_finite() {
            return Err(Error::Numerical {
                iteration: 0,
                message: format!("unit {i} has log-likelihood {ll}"),
            });
        }
        unit_log_lik.push(ll);

        for t in 0..n_times {
            for s in 0..k {
                buf[s] = log_gamma[at(i, t, s)] + log_beta[at(i, t, s)];
            }
            let norm = lse_into(&buf);
            for s in 0..k {
                z[at(i, t, s)] = (buf[s] - norm).exp();
            }
            if t > 0 {
                let base = at(i, t, 0) * k;
                for j in 0..k {
                    let lg = log_gamma[at(i, t - 1, j)];
                    for s in 0..k {
                        let v = lg + log_trans[j * k + s] + log_phi[at(i, t, s)] + log_beta[at(i, t, s)] - ll;
                        zz[base + j * k + s] = v.exp();
                    }
                }
            }
        }
    }

    let log_lik = unit_log_lik.iter().sum();
    Ok(Posteriors {
        n_units,
        n_times,
        k,
        z,
        zz,
        log_gamma,
        log_beta,
        unit_log_lik,
        log_lik,
    })
}
