use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mvhmm::ecm::{read_fit_report, write_fit_report};
use mvhmm::rng::{derive_seed, label_hash};
use mvhmm::select::ModelGrid;
use mvhmm::sim::{
    builtin_scenario, builtin_scenarios, generate, load_scenarios, recovery_mse, timing_run, write_timing_csv,
    RecoveryReport, Scenario, TimingMode,
};
use mvhmm::{fit, load_panel, run_grid, FitConfig, FitReport, LongFormat, MatrixPanel};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::args::{BenchArgs, DataArgs, DecodeArgs, FitArgs, ModeArg, SelectArgs, SimulateArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] mvhmm::Error),
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Library(mvhmm::Error::Io { path: path.to_path_buf(), source })
}

fn out_file(dir: &Path, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir.join(name))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(io_err(path))
}

fn load(data: &DataArgs) -> CliResult<MatrixPanel> {
    let delimiter = u8::try_from(data.delimiter)
        .map_err(|_| CliError::Usage(format!("delimiter {:?} is not a single byte", data.delimiter)))?;
    let panel = load_panel(&data.data, LongFormat { delimiter })?;
    Ok(if data.logit { panel.logit_transform()? } else { panel })
}

fn matrix_lines(out: &mut String, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>9.4}")).collect();
        let _ = writeln!(out, "  {}", cells.join(" "));
    }
}

/// Console summary of a fit.
pub fn summary(report: &FitReport) -> String {
    let mut out = String::new();
    let status = if report.converged { "converged" } else { "stopped" };
    let _ = writeln!(out, "{} with K = {}: {status} after {} iterations", report.structure, report.k, report.iterations);
    let _ = writeln!(out, "logLik = {:.6}", report.log_lik);
    let _ = writeln!(out, "BIC    = {:.6} ({} free parameters)", report.bic, report.n_params);
    let _ = writeln!(out, "initial probabilities");
    matrix_lines(&mut out, &DMatrix::from_row_slice(1, report.k, &report.params.initial));
    let _ = writeln!(out, "transition matrix");
    matrix_lines(&mut out, &report.params.transition);
    for (s, state) in report.params.states.iter().enumerate() {
        let _ = writeln!(out, "state {} mean", s + 1);
        matrix_lines(&mut out, &state.mean);
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

pub fn cmd_fit(args: &FitArgs) -> CliResult {
    let panel = load(&args.data)?;
    let report = fit(&panel, args.structure, args.k, &args.estimation.config())?;
    let path = out_file(&args.out_dir, "fit_report.json")?;
    write_fit_report(&report, &path)?;
    print!("{}", summary(&report));
    println!("report written to {}", path.display());
    Ok(())
}

pub fn cmd_select(args: &SelectArgs) -> CliResult {
    let panel = load(&args.data)?;
    let grid = ModelGrid::new(args.structures.0.clone(), args.ks.0.clone(), args.estimation.config())?;
    let report = run_grid(&panel, &grid, args.workers.max(1))?;
    let table = out_file(&args.out_dir, "selection.csv")?;
    report.save_csv(&table)?;
    let best = out_file(&args.out_dir, "best_fit.json")?;
    write_fit_report(&report.best, &best)?;
    let cell = report.best_cell();
    println!(
        "best: {} with K = {} (BIC {:.6}, logLik {:.6})",
        cell.structure,
        cell.k,
        cell.bic.unwrap_or(f64::NAN),
        cell.log_lik.unwrap_or(f64::NAN)
    );
    let failed = report.cells.iter().filter(|c| c.message.is_some()).count();
    if failed > 0 {
        println!("{failed} of {} cells failed", report.cells.len());
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    println!("table written to {}", table.display());
    Ok(())
}

fn resolve_scenarios(name: &str) -> CliResult<Vec<Scenario>> {
    if let Some(s) = builtin_scenario(name) {
        return Ok(vec![s]);
    }
    if Path::new(name).is_file() {
        return Ok(load_scenarios(name)?);
    }
    let labels: Vec<String> = builtin_scenarios().into_iter().map(|s| s.label).collect();
    Err(CliError::Usage(format!(
        "unknown scenario {name:?}; built-in scenarios are: {}",
        labels.join(", ")
    )))
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult {
    let mut scenarios = resolve_scenarios(&args.scenario)?;
    let base = args.estimation.config();
    let pool = pool(args.workers)?;
    let mut reports = Vec::new();
    let mut times = String::from("scenario,replicate,seconds\n");
    for scenario in &mut scenarios {
        scenario.seed = base.seed;
        if let Some(n) = args.replicates {
            scenario.replicates = n;
        }
        let scenario = &*scenario;
        let fits: Vec<FitReport> = pool.install(|| {
            (0..scenario.replicates)
                .into_par_iter()
                .map(|rep| {
                    let (panel, _) = generate(scenario, rep)?;
                    let seed = derive_seed(base.seed, &[label_hash(&scenario.label), rep as u64]);
                    fit(&panel, scenario.structure, scenario.k(), &FitConfig { seed, ..base.clone() })
                })
                .collect::<Result<_, _>>()
        })?;
        for (rep, f) in fits.iter().enumerate() {
            let _ = writeln!(times, "{},{},{:.6}", scenario.label, rep, f.wall_time_secs);
        }
        let report = recovery_mse(&fits, scenario)?;
        println!("{}: {} replicates", scenario.label, fits.len());
        for (name, v) in report.mse.blocks() {
            println!("  MSE({name}) = {v:.6}");
        }
        reports.push(report);
    }
    let table = out_file(&args.out_dir, "recovery.csv")?;
    let mut buf = Vec::new();
    RecoveryReport::write_csv(&reports, &mut buf)?;
    fs::write(&table, buf).map_err(io_err(&table))?;
    write_text(&out_file(&args.out_dir, "fit_times.csv")?, &times)?;
    println!("tables written to {}", args.out_dir.display());
    Ok(())
}

/// `unit,time,state` rows with one-based states.
pub fn state_table(report: &FitReport) -> String {
    let mut out = String::from("unit,time,state\n");
    for (i, row) in report.decoded.iter().enumerate() {
        for (t, s) in row.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", report.unit_labels[i], report.time_labels[t], s + 1);
        }
    }
    out
}

/// Number of units whose label differs from the previous time, for every time after the first.
pub fn switch_table(report: &FitReport) -> String {
    let mut out = String::from("time,switches\n");
    for t in 1..report.dims.t {
        let n = report.decoded.iter().filter(|row| row[t] != row[t - 1]).count();
        let _ = writeln!(out, "{},{n}", report.time_labels[t]);
    }
    out
}

pub fn cmd_decode(args: &DecodeArgs) -> CliResult {
    let report = read_fit_report(&args.report)?;
    let states = out_file(&args.out_dir, "states.csv")?;
    write_text(&states, &state_table(&report))?;
    let switches = out_file(&args.out_dir, "switches.csv")?;
    write_text(&switches, &switch_table(&report))?;
    println!("labels written to {} and {}", states.display(), switches.display());
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult {
    let scenarios = if args.scenarios.trim().eq_ignore_ascii_case("all") {
        builtin_scenarios()
    } else {
        args.scenarios
            .split(',')
            .map(|s| resolve_scenarios(s.trim()))
            .collect::<CliResult<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect()
    };
    let modes: Vec<TimingMode> = args
        .modes
        .iter()
        .map(|m| match m {
            ModeArg::Sequential => TimingMode::Sequential,
            ModeArg::Parallel => TimingMode::Parallel,
        })
        .collect();
    let rows = timing_run(&scenarios, &modes, args.workers.max(1), &args.estimation.config())?;
    let path = out_file(&args.out_dir, "timing.csv")?;
    let mut buf = Vec::new();
    write_timing_csv(&rows, &mut buf)?;
    fs::write(&path, &buf).map_err(io_err(&path))?;
    std::io::stdout().write_all(&buf).map_err(io_err(Path::new("<stdout>")))?;
    Ok(())
}
