//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its PASS/FAIL line; the process fails if any check does.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use detach_core::control::{fit_fopdt, low_pass, pid_step, ControllerState, FopdtParams, PidGains};
use detach_core::dzmetric::{compute_dz, dz_base, DzVariant};
use detach_core::frame::{Frame, FrameKind};
use detach_core::geometry::{GeometryState, PixelCalibration};
use detach_core::harness::{
    correlate, evaluate, fit_adjust_alpha, generate_dataset, measure_inference_latency,
    run_closed_loop, run_open_loop, tracking_metrics, train_from_manifest, Config, FrameSetup,
    LoopSetup, SysidReport,
};
use detach_core::labeling::label_emission_height;
use detach_core::linmodel::{train_frames, LinearMap, TrainOptions};
use detach_core::plant::{
    render_camera_frame, render_inverted_emissivity, PlantParams, PlantState, Scenario, Waveform,
};
use detach_core::preprocess::{prepare_realtime, Preprocessing};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Trained norm model and tuned gains shared by the closed-loop criteria.
struct Pipeline {
    _dir: tempfile::TempDir,
    cfg: Config,
    model: LinearMap,
    gains: PidGains,
    r_squared: f64,
    loop_time: Duration,
}

const SEED: u64 = 11;

fn build_pipeline() -> Result<Pipeline, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = Config::default();
    generate_dataset(&cfg, SEED, dir.path()).map_err(|e| e.to_string())?;
    let (model, _) =
        train_from_manifest(&dir.path().join("train.csv"), &cfg).map_err(|e| e.to_string())?;
    let (eval, _) = evaluate(&model, &dir.path().join("heldout.csv")).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let base = cfg.scenario(SEED).map_err(|e| e.to_string())?;
    let step = SysidReport::default_step(&base, &cfg.plant, 0.25).map_err(|e| e.to_string())?;
    let trace = run_open_loop(&step, &cfg.plant, &cfg.frame, Some(&model), &cfg.dz)
        .map_err(|e| e.to_string())?;
    let gains = SysidReport::from_trace(&trace, cfg.pid.lambda)
        .map_err(|e| e.to_string())?
        .gains;
    Ok(Pipeline {
        _dir: dir,
        cfg,
        model,
        gains,
        r_squared: eval.r_squared,
        loop_time: start.elapsed(),
    })
}

fn setup<'a>(p: &'a Pipeline, plant: &'a PlantParams, variant: DzVariant) -> LoopSetup<'a> {
    LoopSetup {
        model: &p.model,
        gains: p.gains,
        dz: p.cfg.dz.with_variant(variant),
        plant,
        frame: p.cfg.frame.clone(),
        limits: p.cfg.pid.limits,
    }
}

fn criterion_1(p: &Pipeline) -> Outcome {
    let mut scenario = Scenario::headline();
    scenario.seed = SEED;
    let start = Instant::now();
    let trace = run_closed_loop(&scenario, &setup(p, &p.cfg.plant, p.cfg.variant()))
        .map_err(|e| e.to_string())?;
    let elapsed = p.loop_time + start.elapsed();
    let r = tracking_metrics(&trace).map_err(|e| e.to_string())?;
    let detail = format!(
        "held-out R^2 {:.5}, MAD raw {:.2}% (<= 7), lag-adjusted {:.2}% (<= 2.5), lag {:.3} s, sysid + {:.0} s shot in {:.2} s (<= 30)",
        p.r_squared,
        r.mad_raw,
        r.mad_lag_adjusted,
        r.estimated_lag,
        scenario.duration,
        elapsed.as_secs_f64()
    );
    check(
        p.r_squared >= 0.99
            && r.mad_raw <= 7.0
            && r.mad_lag_adjusted <= 2.5
            && elapsed.as_secs_f64() <= 30.0,
        detail,
    )
}

/// Per-pixel reference: walks the outboard pixels column by column.
fn brute_force_label(frame: &Frame, cal: &PixelCalibration, r_x: f64) -> f64 {
    let j_x = ((r_x - cal.r0) / cal.dr + 0.5).floor() as usize;
    let mut sums = vec![0.0; frame.height()];
    for j in j_x..frame.width() {
        for (i, s) in sums.iter_mut().enumerate() {
            *s += frame.get(i, j);
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, s) in sums.iter().enumerate() {
        num += (i as f64 * s).powi(2);
        den += s * s;
    }
    cal.z0 + (num / den).sqrt() * cal.dz
}

fn criterion_2() -> Outcome {
    let fs = FrameSetup::default();
    let cal = fs.calibration().map_err(|e| e.to_string())?;
    let (w, h) = fs.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let data: Vec<f64> = (0..w * h)
            .map(|_| {
                if rng.random::<f64>() < 0.1 {
                    0.0
                } else {
                    rng.random_range(0.0..1000.0)
                }
            })
            .collect();
        let frame =
            Frame::new(w, h, data, FrameKind::InvertedEmissivity).map_err(|e| e.to_string())?;
        let r_x = rng.random_range(fs.r_min + 0.05..fs.r_max - 0.05);
        cases.push((
            frame,
            GeometryState::new(r_x, -1.0, -1.3).map_err(|e| e.to_string())?,
        ));
    }
    let start = Instant::now();
    let labels: Vec<f64> = cases
        .iter()
        .map(|(f, g)| label_emission_height(f, &cal, g))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let worst = cases
        .iter()
        .zip(&labels)
        .map(|((f, g), z)| rel_err(*z, brute_force_label(f, &cal, g.r_x)))
        .fold(0.0, f64::max);
    check(
        worst <= 1e-12 && elapsed <= 5.0,
        format!("1000 frames, worst relative error {worst:.2e} (<= 1e-12), labeling took {elapsed:.3} s (<= 5)"),
    )
}

fn criterion_3() -> Outcome {
    let fs = FrameSetup::default();
    let cal = fs.calibration().map_err(|e| e.to_string())?;
    let params = PlantParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let z_x = rng.random_range(-1.1..-1.0);
        let leg = rng.random_range(0.2..0.3);
        let g = GeometryState::new(rng.random_range(1.3..1.5), z_x, z_x - leg)
            .map_err(|e| e.to_string())?;
        let state = PlantState::at_rest(g, rng.random_range(0.0..1.2), &params);
        let frame = render_inverted_emissivity(&state, &params, &cal, fs.width, fs.height)
            .map_err(|e| e.to_string())?;
        let z = label_emission_height(&frame, &cal, &g).map_err(|e| e.to_string())?;
        worst = worst.max((z - state.true_front_z()).abs());
    }
    let row = cal.dz.abs();
    check(
        worst <= row,
        format!(
            "100 states, worst |label - true front| {:.2} mm (<= one row, {:.2} mm)",
            worst * 1e3,
            row * 1e3
        ),
    )
}

fn planted_r_squared(noise_sigma: f64) -> Result<f64, String> {
    let (w, h) = (16, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let truth: Vec<f64> = (0..w * h).map(|_| normal.sample(&mut rng)).collect();
    let bias = 0.3;
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..700 {
        let clean: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..100.0)).collect();
        labels.push(clean.iter().zip(&truth).map(|(x, w)| x * w).sum::<f64>() + bias);
        let seen: Vec<f64> = clean
            .iter()
            .map(|x| x + noise_sigma * normal.sample(&mut rng))
            .collect();
        frames.push(Frame::new(w, h, seen, FrameKind::Standardized).map_err(|e| e.to_string())?);
    }
    let train: Vec<&Frame> = frames[..500].iter().collect();
    let opts = TrainOptions {
        rel_tolerance: 1e-12,
        max_iterations: None,
    };
    let (model, _) = train_frames(&train, &labels[..500], 1e-6, Preprocessing::Base, opts)
        .map_err(|e| e.to_string())?;
    let pred: Vec<f64> = frames[500..]
        .iter()
        .map(|f| model.infer(f))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let truth = &labels[500..];
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn criterion_4() -> Outcome {
    let clean = planted_r_squared(0.0)?;
    // Frame values span 0..100, so 1% of range is sigma = 1.
    let noisy = planted_r_squared(1.0)?;
    check(
        clean >= 0.999 && noisy >= 0.99,
        format!("500 training samples, held-out R^2 {clean:.6} noiseless (>= 0.999), {noisy:.6} with 1% noise (>= 0.99)"),
    )
}

fn criterion_5() -> Outcome {
    let (w, h) = (60, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 0.01).unwrap();
    let weights: Vec<f64> = (0..w * h).map(|_| normal.sample(&mut rng)).collect();
    let model =
        LinearMap::new(w, h, weights, -2.0, Preprocessing::Norm, 0.0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let data: Vec<f64> = (0..w * h).map(|_| rng.random_range(20.0..255.0)).collect();
        let (a, b) = (rng.random_range(0.5..2.0), rng.random_range(-10.0..10.0));
        let scaled: Vec<f64> = data.iter().map(|v| a * v + b).collect();
        let f = Frame::new(w, h, data, FrameKind::RawCamera).map_err(|e| e.to_string())?;
        let g = Frame::new(w, h, scaled, FrameKind::RawCamera).map_err(|e| e.to_string())?;
        let infer = |f: &Frame| -> Result<f64, String> {
            let p = prepare_realtime(f, Preprocessing::Norm).map_err(|e| e.to_string())?;
            model.infer(&p).map_err(|e| e.to_string())
        };
        worst = worst.max(rel_err(infer(&g)?, infer(&f)?));
    }
    check(
        worst <= 1e-9,
        format!("100 frames, worst relative change {worst:.2e} (<= 1e-9)"),
    )
}

fn criterion_6(p: &Pipeline) -> Outcome {
    let cfg = &p.cfg;
    let g = GeometryState::default();
    let mut sweep = Scenario {
        duration: 5.0,
        initial_dz: 0.6,
        seed: SEED,
        ..Scenario::default()
    };
    sweep.geometry = Waveform::new(vec![
        (0.0, [1.52, g.z_x, g.z_s]),
        (1.0, [1.52, g.z_x, g.z_s]),
        (4.0, [1.42, g.z_x, g.z_s]),
        (5.0, [1.42, g.z_x, g.z_s]),
    ])
    .map_err(|e| e.to_string())?;
    let sweep = sweep.finalized();
    let dz_norm = cfg.dz.with_variant(DzVariant::Norm);
    let dz_rad = cfg.dz.with_variant(DzVariant::Rad);
    let trace = run_open_loop(&sweep, &cfg.plant, &cfg.frame, Some(&p.model), &dz_norm)
        .map_err(|e| e.to_string())?;

    let norm = trace.column(|r| r.dz_measured);
    let mut rad = Vec::with_capacity(trace.len());
    let mut identity: f64 = 0.0;
    for row in &trace.rows {
        let geom = row.geometry();
        let r = compute_dz(row.z_e, &geom, &dz_rad).map_err(|e| e.to_string())?;
        let base = dz_base(row.z_e, &geom).map_err(|e| e.to_string())?;
        let expected = -dz_rad.adjust_alpha() * (geom.r_x - dz_rad.r_edge());
        identity = identity.max(((r - base) - expected).abs());
        rad.push(r);
    }
    let ratio = std_dev(&rad) / std_dev(&norm);
    let fit = fit_adjust_alpha(&trace, cfg.dz.r_edge()).map_err(|e| e.to_string())?;
    let planted = cfg.plant.render.view_skew;
    let alpha_err = rel_err(fit.alpha, planted);
    check(
        ratio <= 0.25 && identity <= 1e-12 && alpha_err <= 0.05,
        format!(
            "std(dz_rad)/std(dz_norm) {ratio:.4} (<= 0.25), identity residual {identity:.1e} (<= 1e-12), \
             fitted alpha {:.3} vs planted {planted} ({:.1}%, <= 5%)",
            fit.alpha,
            100.0 * alpha_err
        ),
    )
}

/// Samples the analytic step response of an FOPDT plant.
fn fopdt_step(p: (f64, f64, f64), noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (k, tau, theta) = p;
    let dt = 1.0 / 30.0;
    let (u0, du, y0, t_step) = (1.0, 0.5, 0.2, 1.0);
    let n = ((t_step + theta + 10.0 * tau) / dt).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let sigma = noise * (k * du).abs();
    let mut t = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let ti = i as f64 * dt;
        let s = ti - t_step - theta;
        let clean = if s > 0.0 {
            y0 + k * du * (1.0 - (-s / tau).exp())
        } else {
            y0
        };
        t.push(ti);
        u.push(if i >= 30 { u0 + du } else { u0 });
        y.push(clean + sigma * normal.sample(&mut rng));
    }
    (t, u, y)
}

fn criterion_7() -> Outcome {
    // The identified loop plant, the bare gas model, and a slow inverted plant.
    let plants = [(0.24, 0.35, 0.2), (1.0, 0.3, 0.2), (-0.6, 2.0, 0.45)];
    let worst_of = |noise: f64, seeds: std::ops::Range<u64>| -> Result<f64, String> {
        let mut worst: f64 = 0.0;
        for &p in &plants {
            for seed in seeds.clone() {
                let (t, u, y) = fopdt_step(p, noise, seed);
                let fit = fit_fopdt(&t, &u, &y).map_err(|e| e.to_string())?.params;
                let truth = FopdtParams::new(p.0, p.1, p.2).map_err(|e| e.to_string())?;
                for (a, b) in [
                    (fit.k, truth.k),
                    (fit.tau_p, truth.tau_p),
                    (fit.theta, truth.theta),
                ] {
                    worst = worst.max(rel_err(a, b));
                }
            }
        }
        Ok(worst)
    };
    let clean = worst_of(0.0, 0..1)?;
    let noisy = worst_of(0.01, 0..20)?;
    check(
        clean <= 0.01 && noisy <= 0.05,
        format!(
            "3 plants, worst parameter error {:.3}% noiseless (<= 1%), {:.2}% with 1% noise over 20 seeds (<= 5%)",
            100.0 * clean,
            100.0 * noisy
        ),
    )
}

fn criterion_8(p: &Pipeline) -> Outcome {
    let mut scenario = Scenario::headline();
    scenario.seed = SEED;
    let mut plant = p.cfg.plant.clone();
    plant.prad_noise = 0.0;
    let quiet =
        run_closed_loop(&scenario, &setup(p, &plant, DzVariant::Rad)).map_err(|e| e.to_string())?;
    let clean = quiet.column(|r| r.proxy_prad);
    let range = clean.iter().cloned().fold(f64::MIN, f64::max)
        - clean.iter().cloned().fold(f64::MAX, f64::min);
    // Noise is expressed as a fraction of the proxy scale.
    plant.prad_noise = 0.05 * range / plant.prad_coeff;
    let trace =
        run_closed_loop(&scenario, &setup(p, &plant, DzVariant::Rad)).map_err(|e| e.to_string())?;
    let c = correlate(
        &trace.column(|r| r.dz_measured),
        &trace.column(|r| r.proxy_prad),
        (0.65, 1.1),
    )
    .map_err(|e| e.to_string())?;
    check(
        c.r >= 0.95,
        format!(
            "Pearson r {:.4} (>= 0.95), {} of {} in-window samples kept",
            c.r, c.kept, c.in_window
        ),
    )
}

fn criterion_9() -> Outcome {
    let fs = FrameSetup {
        width: 720,
        height: 480,
        ..FrameSetup::default()
    };
    let cal = fs.calibration().map_err(|e| e.to_string())?;
    let params = PlantParams::default();
    let state = PlantState::at_rest(GeometryState::default(), 0.5, &params);
    let frame =
        render_camera_frame(&state, &params, &cal, fs.dims(), 9, 0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let weights: Vec<f64> = (0..720 * 480)
        .map(|_| rng.random_range(-1e-3..1e-3))
        .collect();
    let model = LinearMap::new(720, 480, weights, -1.2, Preprocessing::Norm, 0.0)
        .map_err(|e| e.to_string())?;
    let stats = measure_inference_latency(&model, &frame, 200).map_err(|e| e.to_string())?;
    let limit = Duration::from_millis(33);
    check(
        stats.p99 <= limit,
        format!("720x480 preprocess + inference: {stats} (p99 <= 33 ms)"),
    )
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_detachctl"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "detachctl {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn cli_pipeline(root: &Path, config: &Path) -> Result<(), String> {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let cfg = s(config.to_path_buf());
    let dir = |name: &str| s(root.join(name));
    let model = s(root.join("train/model.linmap"));
    let common = |name: &str| {
        vec![
            "--seed".to_string(),
            "7".into(),
            "--config".into(),
            cfg.clone(),
            "--out".into(),
            dir(name),
        ]
    };
    let run = |cmd: &str, name: &str, extra: &[String]| -> Result<(), String> {
        let mut args = vec![cmd.to_string()];
        args.extend(common(name));
        args.extend_from_slice(extra);
        cli(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };
    run("gen-data", "gen", &[])?;
    run(
        "train",
        "train",
        &["--manifest".into(), s(root.join("gen/train.csv"))],
    )?;
    run(
        "eval",
        "eval",
        &[
            "--model".into(),
            model.clone(),
            "--manifest".into(),
            s(root.join("gen/heldout.csv")),
        ],
    )?;
    run("sysid", "sysid", &["--model".into(), model.clone()])?;
    run("simulate", "sim", &["--model".into(), model.clone()])?;
    run(
        "correlate",
        "corr",
        &["--trace".into(), s(root.join("sim/trace.csv"))],
    )?;
    run("fit-alpha", "alpha", &["--model".into(), model])?;
    Ok(())
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("small.cfg");
    std::fs::write(&config, "gen.samples = 150\n").map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli_pipeline(&a, &config)?;
    cli_pipeline(&b, &config)?;
    let files = files_under(&a);
    if files != files_under(&b) {
        return Err("the two runs wrote different file sets".into());
    }
    let mut differing = Vec::new();
    for f in &files {
        if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
            differing.push(f.display().to_string());
        }
    }
    check(
        differing.is_empty() && files.len() > 7,
        format!(
            "7 commands run twice, {} files compared, differing: {:?}",
            files.len(),
            differing
        ),
    )
}

fn criterion_11() -> Outcome {
    let dt = 1.0 / 30.0;
    let gains = PidGains::new(-1.2, 4.0, 0.08, 0.04).map_err(|e| e.to_string())?;

    let mut s = ControllerState::default();
    let mut fixed = true;
    for _ in 0..300 {
        fixed &= pid_step(&mut s, &gains, 0.6, 0.6, dt).map_err(|e| e.to_string())? == 0.0;
    }
    fixed &= s.integral == 0.0;

    let mut s = ControllerState::new((0.0, 10.0)).map_err(|e| e.to_string())?;
    let bound = 10.0 / (gains.g_p * gains.ratio_i).abs();
    let mut bounded = true;
    for _ in 0..100_000 {
        let u = pid_step(&mut s, &gains, -5.0, 1.0, dt).map_err(|e| e.to_string())?;
        bounded &= (0.0..=10.0).contains(&u) && s.integral.abs() <= bound + 1e-12;
    }

    let tau = 0.04;
    let n = 1000;
    let mut y = 0.0;
    for _ in 0..n {
        y = low_pass(y, 1.0, tau / n as f64, tau);
    }
    let target = 0.63;
    check(
        fixed && bounded && y >= target,
        format!(
            "zero-error fixed point {fixed}, |integral| <= {bound:.3} over 100000 saturated ticks {bounded}, \
             filter at tau {y:.4} (>= {target})"
        ),
    )
}

fn main() {
    let pipeline = build_pipeline();
    let with = |f: fn(&Pipeline) -> Outcome| -> Outcome {
        match &pipeline {
            Ok(p) => f(p),
            Err(e) => Err(format!("pipeline setup failed: {e}")),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("closed-loop tracking", with(criterion_1)),
        ("labeling oracle", criterion_2()),
        ("label closure", criterion_3()),
        ("planted model recovery", criterion_4()),
        ("brightness invariance", criterion_5()),
        ("radial correction", with(criterion_6)),
        ("FOPDT identification", criterion_7()),
        ("correlation", with(criterion_8)),
        ("real-time budget", criterion_9()),
        ("determinism", criterion_10()),
        ("PID and filter properties", criterion_11()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d})", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
