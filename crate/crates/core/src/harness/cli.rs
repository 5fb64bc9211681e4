//! `detachctl` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::linmodel::LinearMap;
use crate::plant::{Scenario, Waveform};

use super::{
    correlate, evaluate, fit_adjust_alpha, fmt_g9, generate_dataset, run_closed_loop_timed,
    run_open_loop, tracking_metrics, train_from_manifest, Config, HarnessError, LoopSetup,
    SysidReport, Trace, TrackingReport,
};

#[derive(Debug, Parser)]
#[command(
    name = "detachctl",
    version,
    about = "Image-based detachment control testbed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random stream of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a labeled campaign: frames, train/held-out manifests, histogram.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a linear map on a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score a model on a held-out manifest.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Training manifest: also retrain over a grid of ridge strengths
        /// around the model's and score each on the held-out manifest.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Step the gas command open loop, fit an FOPDT model and tune gains.
    Sysid {
        #[command(flatten)]
        common: Common,
        /// Measure DZ through this model instead of reading the true DZ.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the closed loop and report tracking error.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Correlate DZ squared with the radiated-power proxy of a trace.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Fit the radial adjustment factor on a strike-point sweep.
    FitAlpha {
        #[command(flatten)]
        common: Common,
        /// Existing sweep trace; otherwise a sweep is run with `--model`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenData { common }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Sysid { common, .. }
            | Command::Simulate { common, .. }
            | Command::Correlate { common, .. }
            | Command::FitAlpha { common, .. } => common,
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_model(path: &Path) -> Result<LinearMap, HarnessError> {
    LinearMap::load(path).map_err(|e| match e {
        crate::linmodel::ModelError::Io(io) => HarnessError::input(path, io),
        other => HarnessError::Validation(format!("{}: {other}", path.display())),
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn dispatch(cmd: &Command) -> Result<(), HarnessError> {
    let common = cmd.common();
    let cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let out = &common.out;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let seed = common.seed;

    match cmd {
        Command::GenData { .. } => {
            let ds = generate_dataset(&cfg, seed, out)?;
            println!(
                "wrote {} training and {} held-out frames to {}",
                ds.train.len(),
                ds.heldout.len(),
                out.display()
            );
        }
        Command::Train { manifest, .. } => {
            let (model, report) = train_from_manifest(manifest, &cfg)?;
            let path = out.join("model.linmap");
            model.save(&path).map_err(|e| match e {
                crate::linmodel::ModelError::Io(io) => HarnessError::io(&path, io),
                other => other.into(),
            })?;
            println!(
                "trained {} model: lambda = {}, {} iterations, converged = {}",
                model.preprocessing(),
                fmt_g9(model.ridge_lambda()),
                report.iterations,
                report.converged
            );
        }
        Command::Eval {
            model,
            manifest,
            sweep,
            ..
        } => {
            let model = load_model(model)?;
            let (report, _) = evaluate(&model, manifest)?;
            report.write_csv(create(&out.join("eval.csv"))?)?;
            println!(
                "R^2 = {} rmse = {} m over {} frames",
                fmt_g9(report.r_squared),
                fmt_g9(report.rmse),
                report.samples
            );
            if let Some(train) = sweep {
                lambda_sweep(&cfg, model.ridge_lambda(), train, manifest, out)?;
            }
        }
        Command::Sysid { model, .. } => {
            let model = model.as_deref().map(load_model).transpose()?;
            let report = sysid(&cfg, seed, model.as_ref(), out)?;
            let p = report.fit.params;
            println!(
                "k = {} tau = {} s theta = {} s -> g_p = {} ratio_i = {} ratio_d = {}",
                fmt_g9(p.k),
                fmt_g9(p.tau_p),
                fmt_g9(p.theta),
                fmt_g9(report.gains.g_p),
                fmt_g9(report.gains.ratio_i),
                fmt_g9(report.gains.ratio_d)
            );
        }
        Command::Simulate { model, .. } => {
            let model = load_model(model)?;
            let scenario = cfg.scenario(seed)?;
            let gains = match cfg.pid.gains {
                Some(g) => g,
                None => {
                    let report = sysid(&cfg, seed, Some(&model), out)?;
                    write_text(&out.join("gains.cfg"), &report.gains_config())?;
                    report.gains
                }
            };
            let setup = LoopSetup {
                model: &model,
                gains,
                dz: cfg.dz,
                plant: &cfg.plant,
                frame: cfg.frame.clone(),
                limits: cfg.pid.limits,
            };
            let (trace, tick, infer) = run_closed_loop_timed(&scenario, &setup)?;
            trace.save(&out.join("trace.csv"))?;
            let report = tracking_metrics(&trace)?;
            write_tracking(&out.join("report.csv"), &report)?;
            eprintln!("latency render-to-command: {tick}");
            eprintln!("latency inference: {infer}");
            println!(
                "MAD raw = {}% lag-adjusted = {}% (lag {} s) over t = {}..{} s",
                fmt_g9(report.mad_raw),
                fmt_g9(report.mad_lag_adjusted),
                fmt_g9(report.estimated_lag),
                fmt_g9(report.window.0),
                fmt_g9(report.window.1)
            );
        }
        Command::Correlate { trace, .. } => {
            let trace = Trace::load(trace)?;
            let dz = trace.column(|r| r.dz_measured);
            let prad = trace.column(|r| r.proxy_prad);
            let c = correlate(&dz, &prad, (0.65, 1.1))?;
            let mut w = csv::Writer::from_writer(create(&out.join("correlation.csv"))?);
            w.write_record(["in_window", "kept", "pearson_r"])?;
            w.write_record([c.in_window.to_string(), c.kept.to_string(), fmt_g9(c.r)])?;
            w.flush().map_err(csv::Error::from)?;
            println!(
                "r = {} ({} of {} samples kept)",
                fmt_g9(c.r),
                c.kept,
                c.in_window
            );
        }
        Command::FitAlpha { trace, model, .. } => {
            let trace = match (trace, model) {
                (Some(t), _) => Trace::load(t)?,
                (None, Some(m)) => {
                    let model = load_model(m)?;
                    let scenario = sweep_scenario(&cfg, seed)?;
                    let t =
                        run_open_loop(&scenario, &cfg.plant, &cfg.frame, Some(&model), &cfg.dz)?;
                    t.save(&out.join("sweep_trace.csv"))?;
                    t
                }
                (None, None) => {
                    return Err(HarnessError::Validation(
                        "fit-alpha needs --trace or --model".into(),
                    ))
                }
            };
            let fit = fit_adjust_alpha(&trace, cfg.dz.r_edge())?;
            let mut w = csv::Writer::from_writer(create(&out.join("alpha.csv"))?);
            w.write_record(["alpha", "intercept_m", "samples"])?;
            w.write_record([
                fmt_g9(fit.alpha),
                fmt_g9(fit.intercept),
                fit.samples.to_string(),
            ])?;
            w.flush().map_err(csv::Error::from)?;
            println!("alpha = {}", fmt_g9(fit.alpha));
        }
    }
    Ok(())
}

/// Ridge strengths tried by `eval --sweep`, as multiples of the model's.
const SWEEP_FACTORS: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

fn lambda_sweep(
    cfg: &Config,
    lambda0: f64,
    train: &Path,
    heldout: &Path,
    out: &Path,
) -> Result<(), HarnessError> {
    if !(lambda0 > 0.0) {
        return Err(HarnessError::Validation(
            "eval --sweep needs a model trained with a positive ridge strength".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(create(&out.join("lambda_sweep.csv"))?);
    w.write_record(["lambda", "r_squared", "rmse_m", "iterations"])?;
    for f in SWEEP_FACTORS {
        let mut c = cfg.clone();
        c.train.lambda = Some(lambda0 * f);
        let (m, fit) = train_from_manifest(train, &c)?;
        let (r, _) = evaluate(&m, heldout)?;
        w.write_record([
            fmt_g9(lambda0 * f),
            fmt_g9(r.r_squared),
            fmt_g9(r.rmse),
            fit.iterations.to_string(),
        ])?;
        println!(
            "lambda = {}: R^2 = {}",
            fmt_g9(lambda0 * f),
            fmt_g9(r.r_squared)
        );
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Open-loop identification. Uses the configured `command` knots if any,
/// otherwise the default step experiment below the cliff.
fn sysid(
    cfg: &Config,
    seed: u64,
    model: Option<&LinearMap>,
    out: &Path,
) -> Result<SysidReport, HarnessError> {
    let mut base = cfg.scenario.clone();
    base.seed = seed;
    let base = base.finalized();
    let scenario = if base.command.is_empty() {
        SysidReport::default_step(&base, &cfg.plant, SYSID_DZ)?
    } else {
        base
    };
    let trace = run_open_loop(&scenario, &cfg.plant, &cfg.frame, model, &cfg.dz)?;
    trace.save(&out.join("sysid_trace.csv"))?;
    let report = SysidReport::from_trace(&trace, cfg.pid.lambda)?;
    report.write_csv(create(&out.join("sysid.csv"))?)?;
    write_text(&out.join("gains.cfg"), &report.gains_config())?;
    Ok(report)
}

/// Operating point of the default identification step, below the cliff.
const SYSID_DZ: f64 = 0.25;

/// Configured scenario, or a 1.52 m to 1.42 m X-point sweep at fixed front
/// fraction if the configuration scripts no geometry.
fn sweep_scenario(cfg: &Config, seed: u64) -> Result<Scenario, HarnessError> {
    let mut s = cfg.scenario.clone();
    s.seed = seed;
    if s.geometry.is_empty() {
        let g = crate::geometry::GeometryState::default();
        s.geometry = Waveform::new(vec![
            (0.0, [1.52, g.z_x, g.z_s]),
            (s.duration, [1.42, g.z_x, g.z_s]),
        ])?;
    }
    let s = s.finalized();
    s.validate()?;
    Ok(s)
}

fn write_tracking(path: &Path, r: &TrackingReport) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "mad_raw_pct",
        "mad_lag_adjusted_pct",
        "estimated_lag_s",
        "window_start_s",
        "window_end_s",
        "samples",
    ])?;
    w.write_record([
        fmt_g9(r.mad_raw),
        fmt_g9(r.mad_lag_adjusted),
        fmt_g9(r.estimated_lag),
        fmt_g9(r.window.0),
        fmt_g9(r.window.1),
        r.samples.to_string(),
    ])?;
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
