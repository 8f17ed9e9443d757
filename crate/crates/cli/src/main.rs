mod config;
mod pipeline;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gaitwarp::dtw::{accumulate, dtw_distance, optimal_warping_path, BandConstraint, Mode};
use gaitwarp::embed::{feature_map, generate_basis};
use gaitwarp::ident::Method;
use gaitwarp::kernel::{kernel_distance_ops, KernelModel};
use gaitwarp::subseq::{default_exclusion_radius, find_repetitions};
use gaitwarp::{load_series_file, TimeSeries};

use config::{RunConfig, RunFlags};
use pipeline::{DataOptions, BASIS_FILE, MODEL_FILE};

#[derive(Parser)]
#[command(
    name = "gaitwarp",
    version,
    about = "DTW pattern search and user identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// DTW distance between two series files.
    Dtw {
        a: PathBuf,
        b: PathBuf,
        /// Also dump the optimal warping path as CSV `l,i,j`.
        #[arg(long)]
        path: bool,
        /// Write the path CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Repetitions of a pattern inside a stream, as CSV `rank,a,b,distance`.
    Search {
        pattern: PathBuf,
        stream: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Generate a random basis and embed the given series.
    Embed {
        #[arg(long)]
        out: PathBuf,
        /// Channel count of the basis when no series are given.
        #[arg(long, default_value_t = 3)]
        channels: usize,
        series: Vec<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Calibrate kernel length-scales on a dataset's reference windows.
    Calibrate {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Build the identification matrix for one method.
    Identify {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Dtw)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
        /// Previously calibrated model; calibration runs first when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        csv_only: bool,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run both methods on the same windows and compare accuracy and cost.
    Bench {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv_only: bool,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dtw,
    Kernel,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dtw => Method::ExactSubsequenceDtw,
            MethodArg::Kernel => Method::KernelApprox,
        }
    }
}

#[derive(clap::Args, Clone)]
struct DataFlags {
    /// CSV lines `label,start` overriding the default reference windows.
    #[arg(long)]
    offsets: Option<PathBuf>,
    /// Search each reference window in its full recording.
    #[arg(long)]
    no_holdout: bool,
}

impl DataFlags {
    fn options(&self, dataset: &Path) -> DataOptions {
        DataOptions {
            dataset_dir: dataset.to_path_buf(),
            offsets: self.offsets.clone(),
            holdout: !self.no_holdout,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Dtw {
            a,
            b,
            path,
            out,
            flags,
        } => cmd_dtw(&a, &b, path, out.as_deref(), &flags.resolve()?),
        Command::Search {
            pattern,
            stream,
            out,
            flags,
        } => cmd_search(&pattern, &stream, out.as_deref(), &flags.resolve()?),
        Command::Embed {
            out,
            channels,
            series,
            flags,
        } => cmd_embed(&out, channels, &series, &flags.resolve()?),
        Command::Calibrate {
            dataset,
            out,
            data,
            flags,
        } => cmd_calibrate(&data.options(&dataset), &out, &flags.resolve()?),
        Command::Identify {
            dataset,
            method,
            out,
            model,
            csv_only,
            data,
            flags,
        } => cmd_identify(
            &data.options(&dataset),
            method.into(),
            &out,
            model.as_deref(),
            csv_only,
            &flags.resolve()?,
        ),
        Command::Bench {
            dataset,
            out,
            csv_only,
            data,
            flags,
        } => cmd_bench(&data.options(&dataset), &out, csv_only, &flags.resolve()?),
    }
}

fn load(path: &Path, cfg: &RunConfig) -> Result<TimeSeries> {
    let s = load_series_file(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(if cfg.z_norm { s.z_normalized() } else { s })
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn band(cfg: &RunConfig) -> BandConstraint {
    match cfg.band_width {
        Some(width) => BandConstraint::SakoeChiba { width },
        None => BandConstraint::None,
    }
}

fn cmd_dtw(a: &Path, b: &Path, dump_path: bool, out: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let x = load(a, cfg)?;
    let y = load(b, cfg)?;
    if !dump_path {
        println!("{}", dtw_distance(&x, &y, band(cfg))?);
        return Ok(());
    }
    let d = accumulate(&x, &y, Mode::Global, band(cfg))?;
    let p = optimal_warping_path(&d, y.len())?;
    println!("{}", d.get(x.len(), y.len()));
    let mut csv = String::from("l,i,j\n");
    for (l, (i, j)) in p.steps().iter().enumerate() {
        writeln!(csv, "{},{},{}", l + 1, i, j)?;
    }
    write_or_print(out, &csv)
}

fn cmd_search(pattern: &Path, stream: &Path, out: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let x = load(pattern, cfg)?;
    let y = load(stream, cfg)?;
    let radius = cfg
        .exclusion_radius
        .unwrap_or_else(|| default_exclusion_radius(x.len()));
    let found = find_repetitions(&x, &y, cfg.tau, radius)?;
    let mut csv = String::from("rank,a,b,distance\n");
    for (k, m) in found.iter().enumerate() {
        writeln!(csv, "{},{},{},{}", k + 1, m.a, m.b, m.distance)?;
    }
    write_or_print(out, &csv)
}

fn cmd_embed(out: &Path, channels: usize, series: &[PathBuf], cfg: &RunConfig) -> Result<()> {
    let loaded = series
        .iter()
        .map(|p| load(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let channels = loaded.first().map_or(channels, |s| s.channels());
    let basis = generate_basis(cfg.basis_params(channels))?;
    fs::create_dir_all(out)?;
    basis.save(out.join(BASIS_FILE))?;
    let mut csv = String::from("series");
    for i in 1..=basis.len() {
        write!(csv, ",phi_{}", i)?;
    }
    csv.push('\n');
    for (path, s) in series.iter().zip(&loaded) {
        let phi = feature_map(s, &basis)?;
        csv.push_str(&path.display().to_string());
        for v in phi.as_slice() {
            write!(csv, ",{}", v)?;
        }
        csv.push('\n');
    }
    fs::write(out.join("embeddings.csv"), csv)?;
    pipeline::log_line(
        out,
        &format!("embed series={} R={}", loaded.len(), basis.len()),
    )
}

fn write_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), cfg.describe())?;
    Ok(())
}

fn calibration_report(model: &KernelModel, labels: &[String]) -> String {
    let mut s = String::from("pattern,gamma\n");
    for (label, g) in labels.iter().zip(&model.gammas) {
        let _ = writeln!(s, "{},{}", label, g);
    }
    s
}

fn save_model(out: &Path, model: &KernelModel, labels: &[String]) -> Result<()> {
    fs::create_dir_all(out)?;
    model.save(out.join(MODEL_FILE), BASIS_FILE)?;
    fs::write(out.join("gammas.csv"), calibration_report(model, labels))?;
    Ok(())
}

fn cmd_calibrate(data: &DataOptions, out: &Path, cfg: &RunConfig) -> Result<()> {
    let exp = pipeline::load_experiment(data, cfg)?;
    write_config(out, cfg)?;
    let model = pipeline::calibrate(&exp, cfg)?;
    save_model(out, &model, &exp.labels)?;
    let objective = model.objective.unwrap_or(f64::NAN);
    println!(
        "calibrated {} patterns, objective {}",
        model.len(),
        objective
    );
    pipeline::log_line(
        out,
        &format!(
            "calibrate patterns={} R={} objective={}",
            model.len(),
            cfg.r,
            objective
        ),
    )
}

fn cmd_identify(
    data: &DataOptions,
    method: Method,
    out: &Path,
    model_path: Option<&Path>,
    csv_only: bool,
    cfg: &RunConfig,
) -> Result<()> {
    let exp = pipeline::load_experiment(data, cfg)?;
    write_config(out, cfg)?;
    let model = match (method, model_path) {
        (Method::KernelApprox, Some(p)) => {
            let m =
                KernelModel::load(p).with_context(|| format!("loading model {}", p.display()))?;
            if !m.is_calibrated() {
                bail!("model {} is not calibrated", p.display());
            }
            Some(m)
        }
        _ => None,
    };
    let calibrate_here = method == Method::KernelApprox && model.is_none();
    let (run, model) = pipeline::run_identification(&exp, cfg, method, model)?;
    if calibrate_here {
        if let Some(m) = &model {
            save_model(out, m, &exp.labels)?;
        }
    }
    pipeline::write_run(out, &run, method, csv_only)?;
    println!(
        "{} accuracy {}/{} ({})",
        method.name(),
        run.accuracy.correct,
        run.accuracy.total,
        run.accuracy.fraction
    );
    pipeline::log_line(
        out,
        &format!(
            "identify method={} correct={} total={} cost_evals={} wall_ms={}",
            method.name(),
            run.accuracy.correct,
            run.accuracy.total,
            run.total().cost_evals,
            run.wall_ms
        ),
    )
}

fn cmd_bench(data: &DataOptions, out: &Path, csv_only: bool, cfg: &RunConfig) -> Result<()> {
    let exp = pipeline::load_experiment(data, cfg)?;
    write_config(out, cfg)?;
    let mut table = String::from("method,accuracy,cost_evals,wall_ms\n");
    for method in [Method::ExactSubsequenceDtw, Method::KernelApprox] {
        let (run, model) = pipeline::run_identification(&exp, cfg, method, None)?;
        if let Some(m) = &model {
            save_model(out, m, &exp.labels)?;
        }
        pipeline::write_run(out, &run, method, csv_only)?;
        writeln!(
            table,
            "{},{},{},{}",
            method.name(),
            run.accuracy.fraction,
            run.total().cost_evals,
            run.wall_ms
        )?;
        pipeline::log_line(
            out,
            &format!(
                "bench method={} correct={} total={} cost_evals={} wall_ms={}",
                method.name(),
                run.accuracy.correct,
                run.accuracy.total,
                run.total().cost_evals,
                run.wall_ms
            ),
        )?;
    }
    fs::write(out.join("bench.csv"), &table)?;
    fs::write(out.join("comparison.csv"), comparison_csv(&exp, cfg))?;
    print!("{}", table);
    Ok(())
}

/// Per-pair cost of one distance evaluation: kernel arithmetic on precomputed
/// embeddings against the cells exact subsequence DTW fills.
fn comparison_csv(exp: &gaitwarp::ident::Experiment, cfg: &RunConfig) -> String {
    let kernel_ops = kernel_distance_ops(cfg.r);
    let mut s = String::from("stream,pattern,kernel_ops,kernel_ops_bound,dtw_cells\n");
    for (si, stream) in exp.streams.iter().enumerate() {
        for (pi, pattern) in exp.patterns.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                exp.labels[si],
                exp.labels[pi],
                kernel_ops,
                10 * cfg.r,
                pattern.len() * stream.len()
            );
        }
    }
    s
}
