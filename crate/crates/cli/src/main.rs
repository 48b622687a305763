mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use mised::applications::{forward_select, WindowConfig};
use mised::derivative::{fit_mised, fit_mised_cv, CvGrid};
use mised::experiments::{change_detection_auc, dim_sweep, kl_experiment, planted_features, ChangeDetectionConfig};
use mised::io::{default_header, read_json_file, read_samples_file, save_model, write_columns, write_json_file, write_scores};
use mised::synthetic::{normal_derivative_truth, sample_normal};
use mised::{CenterSelection, MisedError, MultiIndex, Result, SampleMatrix};
use serde::Serialize;

use config::{method_from_name, require, ChangeConfig, DimSweepConfig, FeatureConfig, FitConfig, KlConfig};

#[derive(Parser)]
#[command(name = "mised", version, about = "Density-derivative, divergence and change-detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a density-derivative model and write per-sample estimates.
    FitDerivative(FitArgs),
    /// Compare MISED and KDE derivative errors across dimensions.
    DimSweep(DimSweepArgs),
    /// KL-divergence estimates on generalized-Gaussian pairs.
    KlExperiment(KlArgs),
    /// Sliding-window change scores and AUC on synthetic series.
    ChangeDetect(ChangeArgs),
    /// Forward feature selection by JS divergence.
    FeatureSelect(FeatureArgs),
}

macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

macro_rules! overlay_opt {
    ($cfg:expr, $args:expr; $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = Some(v); })*
    };
}

fn load<T: Default + serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => read_json_file(p),
        None => Ok(T::default()),
    }
}

#[derive(Args)]
struct FitArgs {
    /// JSON configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Headed CSV of samples. Overrides the generator.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Sample generator used when no input is given (`normal`).
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Derivative order.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// `paper-grid` or `fixed`.
    #[arg(long)]
    cv: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Maximum number of kernel centers.
    #[arg(long)]
    centers: Option<usize>,
    /// Where to write the fitted model as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Estimates CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DimSweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    centers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    d: Option<usize>,
    /// Any of mised, nn, nng, gp.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChangeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    /// Length of each of the three regimes.
    #[arg(long)]
    duration: Option<usize>,
    /// Mean shift between regimes in standard deviations.
    #[arg(long)]
    shift: Option<f64>,
    /// Vectors per window.
    #[arg(long)]
    r: Option<usize>,
    /// Length of each embedded segment.
    #[arg(long)]
    m: Option<usize>,
    /// Ground-truth matching tolerance; defaults to r + m.
    #[arg(long)]
    tolerance: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Score CSV for the first seed; stdout when neither output is given.
    #[arg(long)]
    scores_out: Option<PathBuf>,
    #[arg(long)]
    auc_out: Option<PathBuf>,
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    /// Headed CSV with feature columns and a label column of 1s and 2s.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Columns shifted between classes in the generated dataset.
    #[arg(long, value_delimiter = ',')]
    informative: Option<Vec<usize>>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    num_features: Option<usize>,
    /// Re-run cross-validation for every candidate instead of once per step.
    #[arg(long)]
    no_reuse: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            MisedError::InvalidArgument(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json_out<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    match path {
        Some(p) => write_json_file(p, value),
        None => {
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

fn column_suffix(j: &MultiIndex) -> String {
    j.entries().iter().map(u32::to_string).collect::<Vec<_>>().join("_")
}

fn fit_derivative(args: FitArgs) -> Result<()> {
    let mut cfg: FitConfig = load(&args.config)?;
    overlay!(cfg, args; generator, n, d, k, seed, cv, folds);
    overlay_opt!(cfg, args; input, sigma, lambda, centers, model_out, out);
    if args.cv.is_none() && args.sigma.is_some() && args.lambda.is_some() {
        cfg.cv = "fixed".into();
    }

    let (header, x, truth_available) = match &cfg.input {
        Some(p) => {
            let (h, x) = read_samples_file(p)?;
            (h, x, false)
        }
        None => {
            require(cfg.generator == "normal", "the only generator is `normal`")?;
            require(cfg.n >= 2 && cfg.d >= 1, "n must be >= 2 and d >= 1")?;
            (default_header(cfg.d), sample_normal(cfg.n, cfg.d, cfg.seed)?, true)
        }
    };
    let centers = CenterSelection {
        cap: cfg.centers,
        seed: cfg.seed,
    };
    let model = match cfg.cv.as_str() {
        "paper-grid" => {
            let grid = CvGrid {
                folds: cfg.folds,
                seed: cfg.seed,
                ..CvGrid::default()
            };
            let (model, cv) = fit_mised_cv(&x, cfg.k, &grid, centers)?;
            info!("selected sigma {} lambda {}", cv.sigma, cv.lambda);
            model
        }
        "fixed" => {
            let (Some(s), Some(l)) = (cfg.sigma, cfg.lambda) else {
                return Err(MisedError::InvalidArgument("--cv fixed needs --sigma and --lambda".into()));
            };
            fit_mised(&x, cfg.k, s, l, centers)?
        }
        other => {
            return Err(MisedError::InvalidArgument(format!(
                "unknown cv mode {other:?}; valid modes: paper-grid, fixed"
            )))
        }
    };
    if let Some(p) = &cfg.model_out {
        save_model(p, &model)?;
    }

    let mut names = header;
    let mut columns: Vec<Vec<f64>> = (0..x.ncols()).map(|c| x.column(c)).collect();
    let indices: Vec<MultiIndex> = model.indices().cloned().collect();
    for j in &indices {
        names.push(format!("est_{}", column_suffix(j)));
        columns.push(model.predict(j, &x)?);
    }
    if truth_available {
        for j in &indices {
            names.push(format!("true_{}", column_suffix(j)));
            columns.push(normal_derivative_truth(&x, j)?);
        }
    }
    write_columns(output(&cfg.out)?, &names, &columns)
}

fn run_dim_sweep(args: DimSweepArgs) -> Result<()> {
    let mut cfg: DimSweepConfig = load(&args.config)?;
    overlay!(cfg, args; dims, n, k, seeds, folds);
    overlay_opt!(cfg, args; centers, out);
    require(!cfg.dims.is_empty() && cfg.dims.iter().all(|&d| d >= 1), "dims must be >= 1")?;
    require(!cfg.seeds.is_empty(), "at least one seed is required")?;
    let grid = CvGrid {
        folds: cfg.folds,
        ..CvGrid::default()
    };
    let (rows, _) = dim_sweep(&cfg.dims, cfg.n, cfg.k, &cfg.seeds, &grid, cfg.centers)?;
    let header: Vec<String> = ["d", "method", "nmse_mean", "nmse_std"].map(String::from).to_vec();
    let mut w = output(&cfg.out)?;
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.d, r.method, r.mean, r.std)?;
    }
    w.flush()?;
    Ok(())
}

fn run_kl(args: KlArgs) -> Result<()> {
    let mut cfg: KlConfig = load(&args.config)?;
    overlay!(cfg, args; rhos, ns, d, methods, seeds);
    overlay_opt!(cfg, args; out);
    require(!cfg.seeds.is_empty(), "at least one seed is required")?;
    require(!cfg.methods.is_empty(), "at least one method is required")?;
    let methods = cfg
        .methods
        .iter()
        .map(|m| method_from_name(m, &cfg.mised))
        .collect::<Result<Vec<_>>>()?;
    let rows = kl_experiment(&cfg.rhos, &cfg.ns, cfg.d, &methods, &cfg.seeds)?;
    let mut w = output(&cfg.out)?;
    writeln!(w, "rho,n,method,mean,std,true_kl")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.rho, r.n, r.method, r.mean, r.std, r.true_kl)?;
    }
    w.flush()?;
    Ok(())
}

fn run_change(args: ChangeArgs) -> Result<()> {
    let mut cfg: ChangeConfig = load(&args.config)?;
    overlay!(cfg, args; method, duration, shift, r, m, seeds);
    overlay_opt!(cfg, args; tolerance, scores_out, auc_out);
    require(!cfg.seeds.is_empty(), "at least one seed is required")?;
    let method = method_from_name(&cfg.method, &cfg.mised)?;
    let mut window = WindowConfig::new(cfg.r, cfg.m)?;
    window.tolerance = cfg.tolerance;
    if cfg.r <= cfg.m {
        warn!(
            "each window holds {} points in {} dimensions; estimates will be noisy",
            cfg.r, cfg.m
        );
    }
    let exp = ChangeDetectionConfig {
        duration: cfg.duration,
        shift: cfg.shift,
        window,
    };
    let (report, scores) = change_detection_auc(&exp, &method, &cfg.seeds)?;
    if scores.missing() > 0 {
        warn!("{} window pairs produced no score", scores.missing());
    }
    match (&cfg.scores_out, &cfg.auc_out) {
        (None, None) => {
            write_scores(io::stdout().lock(), &scores)?;
        }
        (s, a) => {
            if let Some(p) = s {
                write_scores(output(&Some(p.clone()))?, &scores)?;
            }
            if let Some(p) = a {
                write_json_file(p, &report)?;
            }
        }
    }
    eprintln!("{}: mean AUC {:.4} (std {:.4})", report.method, report.mean, report.std);
    Ok(())
}

#[derive(Serialize)]
struct FeatureOutput {
    method: String,
    features: Vec<usize>,
    scores: Vec<f64>,
    skipped: usize,
    seed: u64,
}

fn labelled_input(path: &Path, label_column: &str) -> Result<(SampleMatrix, Vec<u8>)> {
    let (header, x) = read_samples_file(path)?;
    let Some(lc) = header.iter().position(|h| h == label_column) else {
        return Err(MisedError::InvalidArgument(format!(
            "{} has no label column {label_column:?}",
            path.display()
        )));
    };
    let labels = x
        .column(lc)
        .into_iter()
        .map(|v| match v {
            v if v == 1.0 => Ok(1u8),
            v if v == 2.0 => Ok(2u8),
            v => Err(MisedError::InvalidArgument(format!("label {v} is not 1 or 2"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let features: Vec<usize> = (0..x.ncols()).filter(|&c| c != lc).collect();
    Ok((x.select_columns(&features)?, labels))
}

fn run_feature(args: FeatureArgs) -> Result<()> {
    let mut cfg: FeatureConfig = load(&args.config)?;
    overlay!(cfg, args; method, label_column, n, d, informative, shift, num_features, seed);
    overlay_opt!(cfg, args; input, out);
    if args.no_reuse {
        cfg.reuse_parameters = false;
    }
    let method = method_from_name(&cfg.method, &cfg.mised)?.reseeded(cfg.seed);
    let (x, labels) = match &cfg.input {
        Some(p) => labelled_input(p, &cfg.label_column)?,
        None => planted_features(cfg.n, cfg.d, &cfg.informative, cfg.shift, cfg.seed)?,
    };
    let sel = forward_select(&x, &labels, cfg.num_features, &method, cfg.reuse_parameters)?;
    if sel.skipped > 0 {
        warn!("{} candidate evaluations failed and were skipped", sel.skipped);
    }
    write_json_out(
        &cfg.out,
        &FeatureOutput {
            method: method.name().to_owned(),
            features: sel.features,
            scores: sel.scores,
            skipped: sel.skipped,
            seed: cfg.seed,
        },
    )
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MISED_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| MisedError::InvalidArgument(format!("MISED_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| MisedError::InvalidArgument(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn exit_code(e: &MisedError) -> u8 {
    match e {
        MisedError::NumericalFailure(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::FitDerivative(a) => fit_derivative(a),
        Command::DimSweep(a) => run_dim_sweep(a),
        Command::KlExperiment(a) => run_kl(a),
        Command::ChangeDetect(a) => run_change(a),
        Command::FeatureSelect(a) => run_feature(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
