use std::cmp::Ordering;
use std::time::Instant;

use super::cmstep::{cm_step1, cm_step2};
use super::estep::e_step;
use super::init::random_init;
use super::report::FitReport;
use super::{decode, FitConfig, HmmParams, ModelState, Posteriors};
use crate::error::{Error, Result};
use crate::panel::MatrixPanel;
use crate::rng::stream;
use crate::select::{bic, n_free_params};
use crate::structures::{StructurePair, UpdateOptions};

/// Snapshot handed to an observer after each E-step of the main run.
/// Iteration 0 is the selected start.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub state: &'a ModelState,
    pub posteriors: &'a Posteriors,
}

fn ecm_iteration(
    panel: &MatrixPanel,
    post: &Posteriors,
    state: &ModelState,
    pair: StructurePair,
    opts: &UpdateOptions,
) -> Result<ModelState> {
    let mid = cm_step1(panel, post, state, pair.sigma, opts)?;
    cm_step2(panel, post, &mid, pair.psi, opts)
}

fn short_run(
    panel: &MatrixPanel,
    pair: StructurePair,
    k: usize,
    config: &FitConfig,
    start: usize,
) -> Result<(ModelState, Posteriors)> {
    let opts = config.update_options();
    let mut rng = stream(config.seed, &[start as u64]);
    let mut state = random_init(panel, k, &mut rng)?;
    for _ in 0..config.short_iters {
        let post = e_step(panel, &state.params)?;
        state = ecm_iteration(panel, &post, &state, pair, &opts)?;
    }
    let post = e_step(panel, &state.params)?;
    Ok((state, post))
}

/// State order by ascending grand mean of the mean matrix, ties broken by
/// the row-major entries.
pub fn canonical_order(params: &HmmParams) -> Vec<usize> {
    let key = |s: usize| {
        let m = &params.states[s].mean;
        (m.mean(), m.transpose().as_slice().to_vec())
    };
    let keys: Vec<_> = (0..params.k()).map(key).collect();
    let mut order: Vec<usize> = (0..params.k()).collect();
    order.sort_by(|&a, &b| {
        let (ga, ea) = &keys[a];
        let (gb, eb) = &keys[b];
        ga.total_cmp(gb).then_with(|| {
            ea.iter()
                .zip(eb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    order
}

/// Fits one structure with `k` states.
pub fn fit(panel: &MatrixPanel, pair: StructurePair, k: usize, config: &FitConfig) -> Result<FitReport> {
    fit_with_observer(panel, pair, k, config, &mut |_| {})
}

/// As [`fit`], calling `observer` after every E-step of the main run.
pub fn fit_with_observer(
    panel: &MatrixPanel,
    pair: StructurePair,
    k: usize,
    config: &FitConfig,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<FitReport> {
    config.validate()?;
    let clock = Instant::now();
    let opts = config.update_options();

    let mut best: Option<(ModelState, Posteriors)> = None;
    let mut failed_starts = Vec::new();
    for h in 0..config.short_runs {
        match short_run(panel, pair, k, config, h) {
            Ok((state, post)) if post.log_lik.is_finite() => {
                if best.as_ref().is_none_or(|(_, b)| post.log_lik > b.log_lik) {
                    best = Some((state, post));
                }
            }
            Ok((_, post)) => failed_starts.push(format!("start {h}: log-likelihood {}", post.log_lik)),
            Err(e) => failed_starts.push(format!("start {h}: {e}")),
        }
    }
    let (mut state, mut post) = best.ok_or_else(|| Error::FitFailed { diagnostics: failed_starts.clone() })?;

    let mut trace = vec![post.log_lik];
    observer(&IterationView { iteration: 0, state: &state, posteriors: &post });
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let it = iterations + 1;
        let next = ecm_iteration(panel, &post, &state, pair, &opts).map_err(|e| e.at_iteration(it))?;
        let next_post = e_step(panel, &next.params).map_err(|e| e.at_iteration(it))?;
        iterations = it;
        let change = (next_post.log_lik - post.log_lik).abs() / next_post.log_lik.abs();
        trace.push(next_post.log_lik);
        state = next;
        post = next_post;
        observer(&IterationView { iteration: it, state: &state, posteriors: &post });
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let order = canonical_order(&state.params);
    let state = state.permuted(&order);
    let post = post.permuted(&order);

    let d = panel.dims();
    let n_params = n_free_params(pair, k, d.p, d.r);
    let mut warnings = Vec::new();
    if n_params > d.n_cells() {
        warnings.push(format!(
            "overparameterized: {n_params} free parameters for {} observed values",
            d.n_cells()
        ));
    }
    if !converged {
        warnings.push(format!("not converged after {iterations} iterations"));
    }
    Ok(FitReport {
        structure: pair,
        k,
        dims: d,
        config: config.clone(),
        log_lik: post.log_lik,
        bic: bic(post.log_lik, n_params, d.n_matrices()),
        n_params,
        decoded: decode(&post),
        params: state.params,
        posteriors: post,
        log_lik_trace: trace,
        iterations,
        converged,
        wall_time_secs: clock.elapsed().as_secs_f64(),
        failed_starts,
        warnings,
        unit_labels: panel.unit_names(),
        time_labels: panel.time_names(),
    })
}
