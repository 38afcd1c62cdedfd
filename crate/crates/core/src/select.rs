//! Model selection by BIC over a grid of structures and state counts.
//!
//! Cells are independent fits, each seeded from the master seed and its own
//! `(sigma, psi, K)` coordinates, so the outcome is identical for any number
//! of workers.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecm::{fit, FitConfig, FitReport};
use crate::error::{Error, Result};
use crate::panel::MatrixPanel;
use crate::rng::derive_seed;
use crate::structures::{count_psi_params, count_sigma_params, StructurePair};

/// Free parameters: initial probabilities, transition rows, means and the
/// two covariance structures.
pub fn n_free_params(pair: StructurePair, k: usize, p: usize, r: usize) -> usize {
    (k - 1) + k * (k - 1) + k * p * r + count_sigma_params(pair.sigma, k, p) + count_psi_params(pair.psi, k, r)
}

/// `-2 ℓ + m log n`, smaller is better.
pub fn bic(log_lik: f64, n_params: usize, n_obs: usize) -> f64 {
    -2.0 * log_lik + n_params as f64 * (n_obs as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub structures: Vec<StructurePair>,
    /// Strictly increasing state counts.
    pub ks: Vec<usize>,
    pub config: FitConfig,
}

impl ModelGrid {
    pub fn new(structures: Vec<StructurePair>, ks: Vec<usize>, config: FitConfig) -> Result<Self> {
        if structures.is_empty() || ks.is_empty() {
            return Err(Error::InvalidArgument("the grid needs at least one structure and one K".into()));
        }
        if ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("K values must be positive and strictly increasing, got {ks:?}")));
        }
        config.validate()?;
        Ok(Self { structures, ks, config })
    }

    /// All 98 structures.
    pub fn full(ks: Vec<usize>, config: FitConfig) -> Result<Self> {
        Self::new(StructurePair::all(), ks, config)
    }

    /// Cells in evaluation order: structures outer, K inner.
    pub fn cells(&self) -> Vec<(StructurePair, usize)> {
        self.structures.iter().flat_map(|&s| self.ks.iter().map(move |&k| (s, k))).collect()
    }

    /// Configuration for one cell with its derived seed.
    pub fn cell_config(&self, pair: StructurePair, k: usize) -> FitConfig {
        let seed = derive_seed(self.config.seed, &[pair.sigma.index() as u64, pair.psi.index() as u64, k as u64]);
        FitConfig { seed, ..self.config.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub structure: StructurePair,
    pub k: usize,
    pub log_lik: Option<f64>,
    pub n_params: usize,
    pub bic: Option<f64>,
    pub status: CellStatus,
    pub message: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub cells: Vec<CellResult>,
    /// Index into `cells` of the smallest BIC.
    pub best_index: usize,
    pub best: FitReport,
    pub warnings: Vec<String>,
    pub workers: usize,
    pub wall_time_secs: f64,
}

impl SelectionReport {
    pub fn best_cell(&self) -> &CellResult {
        &self.cells[self.best_index]
    }

    /// Equality of every result, ignoring timings and the worker count.
    pub fn results_eq(&self, other: &SelectionReport) -> bool {
        let strip = |r: &SelectionReport| {
            let mut r = r.clone();
            r.cells.iter_mut().for_each(|c| c.seconds = 0.0);
            r.best.wall_time_secs = 0.0;
            r.wall_time_secs = 0.0;
            r.workers = 0;
            r
        };
        strip(self) == strip(other)
    }

    /// CSV with columns `structure,K,logLik,nParams,bic,status,seconds`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Parse { row: 0, message: e.to_string() };
        w.write_record(["structure", "K", "logLik", "nParams", "bic", "status", "seconds"]).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for c in &self.cells {
            let status = match c.status {
                CellStatus::Ok => "ok",
                CellStatus::Failed => "failed",
            };
            w.write_record([
                c.structure.to_string(),
                c.k.to_string(),
                opt(c.log_lik),
                c.n_params.to_string(),
                opt(c.bic),
                status.to_string(),
                format!("{:.6}", c.seconds),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

fn run_cell(panel: &MatrixPanel, grid: &ModelGrid, pair: StructurePair, k: usize) -> (CellResult, Option<FitReport>) {
    let d = panel.dims();
    let clock = Instant::now();
    let outcome = fit(panel, pair, k, &grid.cell_config(pair, k));
    let seconds = clock.elapsed().as_secs_f64();
    let n_params = n_free_params(pair, k, d.p, d.r);
    match outcome {
        Ok(report) => (
            CellResult {
                structure: pair,
                k,
                log_lik: Some(report.log_lik),
                n_params,
                bic: Some(report.bic),
                status: CellStatus::Ok,
                message: None,
                seconds,
            },
            Some(report),
        ),
        Err(e) => (
            CellResult {
                structure: pair,
                k,
                log_lik: None,
                n_params,
                bic: None,
                status: CellStatus::Failed,
                message: Some(e.to_string()),
                seconds,
            },
            None,
        ),
    }
}

fn argmin(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((idx, v));
            }
        }
    }
    best.map(|(idx, _)| idx)
}

/// Fits every cell of `grid` on a pool of `workers` threads.
pub fn run_grid(panel: &MatrixPanel, grid: &ModelGrid, workers: usize) -> Result<SelectionReport> {
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be >= 1".into()));
    }
    let clock = Instant::now();
    let cells = grid.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcomes = pool.install(|| cells.par_iter().map(|&(pair, k)| run_cell(panel, grid, pair, k)).collect());
    assemble(panel, outcomes, workers, clock)
}

/// Fits every cell of `grid` in order on the calling thread.
pub fn run_grid_sequential(panel: &MatrixPanel, grid: &ModelGrid) -> Result<SelectionReport> {
    let clock = Instant::now();
    let outcomes = grid.cells().into_iter().map(|(pair, k)| run_cell(panel, grid, pair, k)).collect();
    assemble(panel, outcomes, 1, clock)
}

fn assemble(
    panel: &MatrixPanel,
    outcomes: Vec<(CellResult, Option<FitReport>)>,
    workers: usize,
    clock: Instant,
) -> Result<SelectionReport> {
    let (results, mut reports): (Vec<CellResult>, Vec<Option<FitReport>>) = outcomes.into_iter().unzip();

    let best_index = argmin(results.iter().map(|c| c.bic)).ok_or_else(|| {
        Error::GridFailed(
            results
                .iter()
                .map(|c| format!("{}/K{}: {}", c.structure, c.k, c.message.as_deref().unwrap_or("")))
                .collect(),
        )
    })?;

    let d = panel.dims();
    let mut warnings = Vec::new();
    let per_unit = argmin(results.iter().map(|c| c.log_lik.map(|ll| bic(ll, c.n_params, d.i)))).expect("a cell succeeded");
    if per_unit != best_index {
        warnings.push(format!(
            "selection is sensitive to the BIC sample size: n = I*T picks {}/K{}, n = I picks {}/K{}",
            results[best_index].structure, results[best_index].k, results[per_unit].structure, results[per_unit].k
        ));
    }
    let best = reports[best_index].take().expect("best cell has a report");
    Ok(SelectionReport {
        cells: results,
        best_index,
        best,
        warnings,
        workers,
        wall_time_secs: clock.elapsed().as_secs_f64(),
    })
}
