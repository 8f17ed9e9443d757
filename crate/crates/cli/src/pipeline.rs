//! Identification runs shared by `identify`, `calibrate` and `bench`.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use gaitwarp::embed::generate_basis;
use gaitwarp::ident::{
    accuracy, build_ident_matrix, parse_window_offsets, prepare_experiment, Accuracy, Experiment,
    IdentMatrix, Method, SearchParams,
};
use gaitwarp::kernel::{calibrate_gammas, KernelModel};
use gaitwarp::{CounterSnapshot, Counters, Dataset};

use crate::config::RunConfig;

pub const BASIS_FILE: &str = "basis.txt";
pub const MODEL_FILE: &str = "model.txt";

/// Where a dataset comes from and how it is cut into patterns and streams.
#[derive(Debug, Clone)]
pub struct DataOptions {
    pub dataset_dir: PathBuf,
    pub offsets: Option<PathBuf>,
    pub holdout: bool,
}

pub fn load_experiment(opts: &DataOptions, cfg: &RunConfig) -> Result<Experiment> {
    let dataset = Dataset::load_dir(&opts.dataset_dir)
        .with_context(|| format!("loading dataset {}", opts.dataset_dir.display()))?;
    let dataset = if cfg.z_norm {
        Dataset::new(
            dataset.streams().iter().map(|s| s.z_normalized()).collect(),
            dataset.source_paths().to_vec(),
        )?
    } else {
        dataset
    };
    let offsets = match &opts.offsets {
        Some(p) => parse_window_offsets(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => HashMap::new(),
    };
    Ok(prepare_experiment(
        &dataset,
        cfg.window,
        &offsets,
        opts.holdout,
    )?)
}

/// Result of one identification run with its measured cost.
pub struct IdentRun {
    pub matrix: IdentMatrix,
    pub accuracy: Accuracy,
    pub calibration: CounterSnapshot,
    pub search: CounterSnapshot,
    pub wall_ms: u128,
}

impl IdentRun {
    pub fn total(&self) -> CounterSnapshot {
        CounterSnapshot {
            cost_evals: self.calibration.cost_evals + self.search.cost_evals,
            cells: self.calibration.cells + self.search.cells,
            kernel_ops: self.calibration.kernel_ops + self.search.kernel_ops,
            objective_evals: self.calibration.objective_evals + self.search.objective_evals,
        }
    }
}

/// Calibrates a kernel model on the experiment's patterns.
pub fn calibrate(exp: &Experiment, cfg: &RunConfig) -> Result<KernelModel> {
    let channels = exp.patterns[0].channels();
    let basis = generate_basis(cfg.basis_params(channels))?;
    Ok(calibrate_gammas(&exp.patterns, basis)?)
}

pub fn run_identification(
    exp: &Experiment,
    cfg: &RunConfig,
    method: Method,
    model: Option<KernelModel>,
) -> Result<(IdentRun, Option<KernelModel>)> {
    let started = Instant::now();
    let mut calibration = CounterSnapshot::default();
    let model = match (method, model) {
        (Method::KernelApprox, Some(m)) => Some(m),
        (Method::KernelApprox, None) => {
            let m = calibrate(exp, cfg)?;
            calibration = calibration_cost(exp, &m);
            Some(m)
        }
        (Method::ExactSubsequenceDtw, _) => None,
    };
    let counters = Counters::new();
    let search = SearchParams {
        nu: cfg.nu,
        bo: cfg.bo(),
    };
    let matrix = build_ident_matrix(
        &exp.patterns,
        &exp.streams,
        model.as_ref(),
        method,
        &search,
        Some(&counters),
    )?;
    let mut matrix = matrix;
    matrix.row_labels = exp.labels.clone();
    matrix.col_labels = exp.labels.clone();
    let truth: Vec<usize> = (0..exp.streams.len()).collect();
    let accuracy = accuracy(&matrix, &truth)?;
    Ok((
        IdentRun {
            matrix,
            accuracy,
            calibration,
            search: counters.snapshot(),
            wall_ms: started.elapsed().as_millis(),
        },
        model,
    ))
}

/// Cost-function evaluations spent by calibration: one embedding per pattern
/// plus the upper triangle of pairwise DTW. Unbanded DTW fills every cell, so
/// the count follows from the lengths.
fn calibration_cost(exp: &Experiment, model: &KernelModel) -> CounterSnapshot {
    let basis_cells: u64 = model.basis.series().iter().map(|s| s.len() as u64).sum();
    let embed: u64 = exp
        .patterns
        .iter()
        .map(|p| p.len() as u64 * basis_cells)
        .sum();
    let mut pairwise = 0u64;
    for i in 0..exp.patterns.len() {
        for j in i + 1..exp.patterns.len() {
            pairwise += (exp.patterns[i].len() * exp.patterns[j].len()) as u64;
        }
    }
    CounterSnapshot {
        cost_evals: embed + pairwise,
        cells: embed + pairwise,
        kernel_ops: 0,
        objective_evals: 0,
    }
}

/// Writes matrix, matches, heatmap and report files for one run.
pub fn write_run(
    out: &Path,
    run: &IdentRun,
    method: Method,
    csv_only: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let name = method.name();
    let mut written = Vec::new();
    let matrix_path = out.join(format!("{}_matrix.csv", name));
    fs::write(&matrix_path, run.matrix.to_csv())?;
    written.push(matrix_path);
    let matches_path = out.join(format!("{}_matches.csv", name));
    fs::write(&matches_path, run.matrix.matches_csv())?;
    written.push(matches_path);
    if !csv_only {
        let pgm = out.join(format!("{}_heatmap.pgm", name));
        fs::write(&pgm, run.matrix.heatmap_pgm(16))?;
        written.push(pgm);
    }
    let report = out.join(format!("{}_report.txt", name));
    let t = run.total();
    fs::write(
        &report,
        format!(
            "method {}\ncorrect {}\ntotal {}\naccuracy {}\ncalibration_cost_evals {}\n\
             search_cost_evals {}\ncost_evals {}\nkernel_ops {}\nobjective_evals {}\nwall_ms {}\n",
            name,
            run.accuracy.correct,
            run.accuracy.total,
            run.accuracy.fraction,
            run.calibration.cost_evals,
            run.search.cost_evals,
            t.cost_evals,
            t.kernel_ops,
            t.objective_evals,
            run.wall_ms
        ),
    )?;
    written.push(report);
    Ok(written)
}

/// Appends a line to `run.log` in `out`.
pub fn log_line(out: &Path, line: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("run.log"))?;
    writeln!(f, "{}", line)?;
    Ok(())
}
