//! Synthetic training campaign: generation, manifests, training and
//! held-out evaluation.
//!
//! A generated dataset directory holds
//!
//! ```text
//! frames/00000.frame ...   camera frames (FRAME v1)
//! train.csv                 manifest of speckled training frames
//! heldout.csv               manifest of clean frames for evaluation
//! histogram.csv             intensity histogram of the held-out frames
//! ```

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::frame::Frame;
use crate::geometry::GeometryState;
use crate::labeling::{label_emission_height, LabeledSample};
use crate::linmodel::{default_lambda, train, LinearMap, TrainReport};
use crate::plant::{render_camera_frame, render_inverted_emissivity, PlantState};
use crate::preprocess::{
    add_speckle, build_histogram, frame_rng, prepare_realtime, prepare_training, AugmentParams,
    IntensityHistogram, Preprocessing,
};

use super::{r_squared, Config, HarnessError};

pub const MANIFEST_HEADER: [&str; 5] = ["frame_path", "z_e_label_m", "r_x_m", "z_x_m", "z_s_m"];

/// Seed offsets for the independent random streams of a campaign.
const GEOMETRY_SALT: u64 = 0x4745_4f4d;
const CAMERA_SALT: u64 = 0x4341_4d45;
const SPECKLE_SALT: u64 = 0x5350_4543;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory unless absolute.
    pub frame_path: PathBuf,
    pub z_e_label: f64,
    pub geometry: GeometryState,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(MANIFEST_HEADER)?;
    for e in entries {
        let g = &e.geometry;
        w.write_record([
            e.frame_path.to_string_lossy().into_owned(),
            format!("{:?}", e.z_e_label),
            format!("{:?}", g.r_x),
            format!("{:?}", g.z_x),
            format!("{:?}", g.z_s),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::input(path, e))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    if r.headers()?.iter().ne(MANIFEST_HEADER) {
        return Err(HarnessError::Validation(format!(
            "{}: not a v1 manifest",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad =
            || HarnessError::Validation(format!("{}: bad number in row {}", path.display(), i + 1));
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(bad)
        };
        let geometry = GeometryState::new(num(2)?, num(3)?, num(4)?).map_err(|e| {
            HarnessError::Validation(format!("{}: row {}: {e}", path.display(), i + 1))
        })?;
        out.push(ManifestEntry {
            frame_path: PathBuf::from(&rec[0]),
            z_e_label: num(1)?,
            geometry,
        });
    }
    Ok(out)
}

fn resolve(manifest: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.frame_path.is_absolute() {
        entry.frame_path.clone()
    } else {
        manifest
            .parent()
            .unwrap_or(Path::new("."))
            .join(&entry.frame_path)
    }
}

fn load_frames(manifest: &Path, entries: &[ManifestEntry]) -> Result<Vec<Frame>, HarnessError> {
    entries
        .par_iter()
        .map(|e| {
            let p = resolve(manifest, e);
            Frame::load(&p).map_err(|err| match err {
                crate::frame::FrameError::Io(io) => HarnessError::input(&p, io),
                other => HarnessError::Validation(format!("{}: {other}", p.display())),
            })
        })
        .collect()
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub train: Vec<ManifestEntry>,
    pub heldout: Vec<ManifestEntry>,
    pub histogram: IntensityHistogram,
}

struct Rendered {
    camera: Frame,
    label: f64,
    geometry: GeometryState,
}

/// Renders one campaign sample. Every random draw comes from streams keyed
/// by `(seed, index)`, so samples can be produced in any order.
fn render_sample(
    cfg: &Config,
    seed: u64,
    index: usize,
    speckle: bool,
) -> Result<Rendered, HarnessError> {
    let g = &cfg.gen;
    let mut rng = frame_rng(seed.wrapping_add(GEOMETRY_SALT), index as u64);
    let r_x = draw(&mut rng, g.r_x);
    let z_x = draw(&mut rng, g.z_x);
    let leg = draw(&mut rng, g.leg);
    let dz = draw(&mut rng, g.dz);
    let brightness = draw(&mut rng, g.brightness);
    let geometry = GeometryState::new(r_x, z_x, z_x - leg)
        .map_err(|e| HarnessError::Validation(format!("sample {index}: {e}")))?;
    let mut state = PlantState::at_rest(geometry, dz, &cfg.plant);
    state.brightness = brightness;
    let cal = cfg.frame.calibration()?;
    let (w, h) = cfg.frame.dims();
    let inverted = render_inverted_emissivity(&state, &cfg.plant, &cal, w, h)?;
    let label = label_emission_height(&inverted, &cal, &geometry)?;
    let mut camera = render_camera_frame(
        &state,
        &cfg.plant,
        &cal,
        (w, h),
        seed.wrapping_add(CAMERA_SALT),
        index as u64,
    )?;
    if speckle && g.speckle_rel > 0.0 {
        let alpha = g.speckle_rel * camera.min_max().1.max(0.0);
        let params = AugmentParams::new(alpha, seed.wrapping_add(SPECKLE_SALT))?;
        camera = add_speckle(&camera, &params, index as u64);
    }
    Ok(Rendered {
        camera,
        label,
        geometry,
    })
}

/// Renders the campaign into `out`. The last `heldout` fraction of samples
/// is kept clean for evaluation; the rest receive speckle.
pub fn generate_dataset(
    cfg: &Config,
    seed: u64,
    out: &Path,
) -> Result<GeneratedDataset, HarnessError> {
    let n = cfg.gen.samples;
    let n_held = (cfg.gen.heldout * n as f64).round() as usize;
    let n_train = n - n_held;
    if n_train < 2 || n_held < 1 {
        return Err(HarnessError::Validation(format!(
            "gen.samples = {n} with gen.heldout = {} leaves too few samples",
            cfg.gen.heldout
        )));
    }
    let frames_dir = out.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| HarnessError::io(&frames_dir, e))?;

    let entries: Vec<(ManifestEntry, Option<Frame>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let held = i >= n_train;
            let s = render_sample(cfg, seed, i, !held)?;
            let rel = PathBuf::from("frames").join(format!("{i:05}.frame"));
            let path = out.join(&rel);
            s.camera.save(&path).map_err(|e| match e {
                crate::frame::FrameError::Io(io) => HarnessError::io(&path, io),
                other => other.into(),
            })?;
            let entry = ManifestEntry {
                frame_path: rel,
                z_e_label: s.label,
                geometry: s.geometry,
            };
            Ok((entry, held.then_some(s.camera)))
        })
        .collect::<Result<_, HarnessError>>()?;

    let held_frames: Vec<&Frame> = entries.iter().filter_map(|(_, f)| f.as_ref()).collect();
    let histogram = build_histogram(held_frames.iter().copied())?;
    let (train, heldout): (Vec<_>, Vec<_>) = entries
        .into_iter()
        .map(|(e, _)| e)
        .enumerate()
        .partition(|(i, _)| *i < n_train);
    let train: Vec<ManifestEntry> = train.into_iter().map(|(_, e)| e).collect();
    let heldout: Vec<ManifestEntry> = heldout.into_iter().map(|(_, e)| e).collect();

    write_manifest(&out.join("train.csv"), &train)?;
    write_manifest(&out.join("heldout.csv"), &heldout)?;
    let hpath = out.join("histogram.csv");
    let file = std::fs::File::create(&hpath).map_err(|e| HarnessError::io(&hpath, e))?;
    histogram.write_to(std::io::BufWriter::new(file))?;
    Ok(GeneratedDataset {
        train,
        heldout,
        histogram,
    })
}

/// Preprocesses raw frames for training the given variant.
pub fn prepare_variant(
    frames: Vec<Frame>,
    entries: &[ManifestEntry],
    variant: Preprocessing,
    reference: Option<&IntensityHistogram>,
) -> Result<Vec<LabeledSample>, HarnessError> {
    frames
        .into_par_iter()
        .zip(entries.par_iter())
        .map(|(frame, e)| {
            let frame = prepare_training(&frame, variant, reference)?;
            Ok(LabeledSample {
                frame,
                z_e_label: e.z_e_label,
                geometry: e.geometry,
            })
        })
        .collect()
}

/// Loads the histogram written next to a manifest, if there is one.
fn sibling_histogram(manifest: &Path) -> Result<Option<IntensityHistogram>, HarnessError> {
    let p = manifest
        .parent()
        .unwrap_or(Path::new("."))
        .join("histogram.csv");
    if !p.exists() {
        return Ok(None);
    }
    let f = std::fs::File::open(&p).map_err(|e| HarnessError::input(&p, e))?;
    Ok(Some(IntensityHistogram::read_from(
        std::io::BufReader::new(f),
    )?))
}

/// Trains the configured variant on a manifest.
pub fn train_from_manifest(
    manifest: &Path,
    cfg: &Config,
) -> Result<(LinearMap, TrainReport), HarnessError> {
    let entries = read_manifest(manifest)?;
    if entries.len() < 2 {
        return Err(HarnessError::Validation(format!(
            "{}: need at least 2 samples",
            manifest.display()
        )));
    }
    let frames = load_frames(manifest, &entries)?;
    let variant = cfg.train.variant;
    let hist = match variant {
        Preprocessing::Base => None,
        _ => sibling_histogram(manifest)?,
    };
    if variant == Preprocessing::Hist && hist.is_none() {
        return Err(HarnessError::Validation(
            "hist training needs histogram.csv next to the manifest".into(),
        ));
    }
    let samples = prepare_variant(frames, &entries, variant, hist.as_ref())?;
    let lambda = cfg.train.lambda.unwrap_or_else(|| default_lambda(&samples));
    Ok(train(&samples, lambda, variant)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub r_squared: f64,
    pub rmse: f64,
    pub mean_residual: f64,
    pub max_abs_residual: f64,
}

impl EvalReport {
    pub fn from_predictions(pred: &[f64], truth: &[f64]) -> Self {
        let n = truth.len();
        let res: Vec<f64> = pred.iter().zip(truth).map(|(p, y)| p - y).collect();
        Self {
            samples: n,
            r_squared: r_squared(pred, truth),
            rmse: (res.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt(),
            mean_residual: res.iter().sum::<f64>() / n as f64,
            max_abs_residual: res.iter().fold(0.0, |m, r| m.max(r.abs())),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        use super::fmt_g9;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "samples",
            "r_squared",
            "rmse_m",
            "mean_residual_m",
            "max_abs_residual_m",
        ])?;
        w.write_record([
            self.samples.to_string(),
            fmt_g9(self.r_squared),
            fmt_g9(self.rmse),
            fmt_g9(self.mean_residual),
            fmt_g9(self.max_abs_residual),
        ])?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Scores a model on raw frames, preprocessed as they would be in real time.
pub fn evaluate(
    model: &LinearMap,
    manifest: &Path,
) -> Result<(EvalReport, Vec<f64>), HarnessError> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(HarnessError::Validation(format!(
            "{}: empty manifest",
            manifest.display()
        )));
    }
    let frames = load_frames(manifest, &entries)?;
    let pred: Vec<f64> = frames
        .par_iter()
        .map(|f| Ok(model.infer(&prepare_realtime(f, model.preprocessing())?)?))
        .collect::<Result<_, HarnessError>>()?;
    let truth: Vec<f64> = entries.iter().map(|e| e.z_e_label).collect();
    Ok((EvalReport::from_predictions(&pred, &truth), pred))
}
