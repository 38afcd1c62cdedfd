use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{generate, Scenario};
use crate::ecm::FitConfig;
use crate::error::{Error, Result};
use crate::select::{run_grid, run_grid_sequential, ModelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub mode: TimingMode,
    pub workers: usize,
    pub cells: usize,
    pub seconds: f64,
}

/// Times the full 98-structure grid at each scenario's `K` on replicate 0,
/// once per mode. Only the grid call is inside the clock.
pub fn timing_run(
    scenarios: &[Scenario],
    modes: &[TimingMode],
    workers: usize,
    config: &FitConfig,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::with_capacity(scenarios.len() * modes.len());
    for scenario in scenarios {
        let (panel, _) = generate(scenario, 0)?;
        let grid = ModelGrid::full(vec![scenario.k()], FitConfig { seed: scenario.seed, ..config.clone() })?;
        for &mode in modes {
            let clock = Instant::now();
            let used = match mode {
                TimingMode::Sequential => {
                    run_grid_sequential(&panel, &grid)?;
                    1
                }
                TimingMode::Parallel => {
                    run_grid(&panel, &grid, workers)?;
                    workers
                }
            };
            rows.push(TimingRow {
                scenario: scenario.label.clone(),
                mode,
                workers: used,
                cells: grid.cells().len(),
                seconds: clock.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], mut out: W) -> Result<()> {
    let io = |e| Error::io("<timing table>", e);
    writeln!(out, "scenario,mode,workers,cells,seconds").map_err(io)?;
    for r in rows {
        let mode = match r.mode {
            TimingMode::Sequential => "sequential",
            TimingMode::Parallel => "parallel",
        };
        writeln!(out, "{},{mode},{},{},{:.6}", r.scenario, r.workers, r.cells, r.seconds).map_err(io)?;
    }
    Ok(())
}
