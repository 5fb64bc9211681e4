//! Ridge regression by conjugate gradients on the normal equations (CGLS).
//!
//! The design matrix is never copied: samples are read in place and the
//! intercept is removed by implicit centering, which leaves it unpenalized.
//! Every reduction runs in a fixed order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

use crate::frame::{Frame, FrameKind};
use crate::labeling::LabeledSample;
use crate::preprocess::Preprocessing;

use super::{dot, LinearMap, ModelError};

const COLUMN_BLOCK: usize = 512;

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Stop when the gradient norm falls below this fraction of its initial value.
    pub rel_tolerance: f64,
    /// Iteration cap; `None` picks one from the problem size.
    pub max_iterations: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-8,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    /// Final gradient norm relative to the initial one.
    pub rel_gradient: f64,
    /// Objective after each iteration, starting with the zero model.
    pub loss_history: Vec<f64>,
}

/// Centered design matrix view over borrowed frames.
struct Design<'a> {
    rows: Vec<&'a [f64]>,
    mean: Vec<f64>,
}

impl<'a> Design<'a> {
    fn new(rows: Vec<&'a [f64]>) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mean = (0..d.div_ceil(COLUMN_BLOCK))
            .into_par_iter()
            .flat_map_iter(|b| {
                let (j0, j1) = (b * COLUMN_BLOCK, ((b + 1) * COLUMN_BLOCK).min(d));
                let mut acc = vec![0.0; j1 - j0];
                for row in &rows {
                    for (a, x) in acc.iter_mut().zip(&row[j0..j1]) {
                        *a += x;
                    }
                }
                acc.into_iter().map(move |a| a / n)
            })
            .collect();
        Self { rows, mean }
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(X - 1 mean^T) p`
    fn apply(&self, p: &[f64]) -> Vec<f64> {
        let shift = dot(&self.mean, p);
        self.rows.par_iter().map(|x| dot(x, p) - shift).collect()
    }

    /// `(X - 1 mean^T)^T r`
    fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let r_sum: f64 = r.iter().sum();
        (0..d.div_ceil(COLUMN_BLOCK))
            .into_par_iter()
            .flat_map_iter(|b| {
                let (j0, j1) = (b * COLUMN_BLOCK, ((b + 1) * COLUMN_BLOCK).min(d));
                let mut acc = vec![0.0; j1 - j0];
                for (row, &rk) in self.rows.iter().zip(r) {
                    for (a, x) in acc.iter_mut().zip(&row[j0..j1]) {
                        *a += x * rk;
                    }
                }
                let mean = &self.mean[j0..j1];
                acc.into_iter().zip(mean).map(move |(a, m)| a - m * r_sum)
            })
            .collect()
    }

    fn trace(&self) -> f64 {
        self.rows
            .par_iter()
            .map(|x| {
                x.iter()
                    .zip(&self.mean)
                    .map(|(v, m)| (v - m) * (v - m))
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum()
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

fn check_frames(
    frames: &[&Frame],
    labels: &[f64],
    lambda: f64,
) -> Result<(usize, usize), ModelError> {
    if frames.len() != labels.len() {
        return Err(ModelError::LabelCount {
            frames: frames.len(),
            labels: labels.len(),
        });
    }
    if frames.len() < 2 {
        return Err(ModelError::InsufficientData(frames.len()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ModelError::InvalidLambda(lambda));
    }
    let dims = frames[0].dims();
    for f in frames {
        if f.dims() != dims {
            return Err(ModelError::DimensionMismatch {
                expected: dims,
                got: f.dims(),
            });
        }
    }
    Ok(dims)
}

/// `1e-4` times the mean per-pixel variance sum, i.e. `1e-4 * tr(Xc^T Xc) / D`.
pub fn default_lambda(samples: &[LabeledSample]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let design = Design::new(samples.iter().map(|s| s.frame.data()).collect());
    1e-4 * design.trace() / design.dim() as f64
}

/// Trains a map on labeled samples whose frames already carry `preprocessing`.
pub fn train(
    samples: &[LabeledSample],
    lambda: f64,
    preprocessing: Preprocessing,
) -> Result<(LinearMap, TrainReport), ModelError> {
    let frames: Vec<&Frame> = samples.iter().map(|s| &s.frame).collect();
    let labels: Vec<f64> = samples.iter().map(|s| s.z_e_label).collect();
    train_frames(
        &frames,
        &labels,
        lambda,
        preprocessing,
        TrainOptions::default(),
    )
}

/// Minimizes `sum_k (w . x_k + b - y_k)^2 + lambda |w|^2` over `w` and `b`.
///
/// Starting from `w = 0`, the iterates stay in the row space of the centered
/// data, so `lambda = 0` with rank-deficient data yields the minimum-norm
/// solution.
pub fn train_frames(
    frames: &[&Frame],
    labels: &[f64],
    lambda: f64,
    preprocessing: Preprocessing,
    opts: TrainOptions,
) -> Result<(LinearMap, TrainReport), ModelError> {
    let (width, height) = check_frames(frames, labels, lambda)?;
    if preprocessing == Preprocessing::Norm {
        if let Some(f) = frames.iter().find(|f| f.kind() != FrameKind::Standardized) {
            return Err(ModelError::Malformed(format!(
                "norm model expects standardized frames, got {}",
                f.kind()
            )));
        }
    }
    let design = Design::new(frames.iter().map(|f| f.data()).collect());
    let d = design.dim();
    let n = labels.len();
    let y_mean = labels.iter().sum::<f64>() / n as f64;

    let mut w = vec![0.0; d];
    let mut r: Vec<f64> = labels.iter().map(|y| y - y_mean).collect();
    let mut s = design.apply_transpose(&r);
    let s0 = norm_sq(&s).sqrt();
    let mut p = s.clone();
    let mut gamma = norm_sq(&s);
    let mut loss_history = vec![norm_sq(&r)];
    let max_iter = opts
        .max_iterations
        .unwrap_or_else(|| (4 * n.min(d) + 100).min(20_000));

    let mut iterations = 0;
    let mut rel = if s0 > 0.0 { 1.0 } else { 0.0 };
    while rel > opts.rel_tolerance && iterations < max_iter {
        let q = design.apply(&p);
        let delta = norm_sq(&q) + lambda * norm_sq(&p);
        if delta <= 0.0 || !delta.is_finite() {
            break;
        }
        let alpha = gamma / delta;
        for (wi, pi) in w.iter_mut().zip(&p) {
            *wi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = design.apply_transpose(&r);
        for (si, wi) in s.iter_mut().zip(&w) {
            *si -= lambda * wi;
        }
        let gamma_new = norm_sq(&s);
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        iterations += 1;
        rel = gamma.sqrt() / s0;
        loss_history.push(norm_sq(&r) + lambda * norm_sq(&w));
    }

    let bias = y_mean - dot(&design.mean, &w);
    let map = LinearMap::new(width, height, w, bias, preprocessing, lambda)?;
    let report = TrainReport {
        iterations,
        converged: rel <= opts.rel_tolerance,
        rel_gradient: rel,
        loss_history,
    };
    Ok((map, report))
}

/// The uncentered ridge objective, for checking trained models.
pub struct RidgeProblem<'a> {
    pub frames: Vec<&'a [f64]>,
    pub labels: &'a [f64],
    pub lambda: f64,
}

impl RidgeProblem<'_> {
    pub fn objective(&self, w: &[f64], b: f64) -> f64 {
        let fit: f64 = self
            .frames
            .iter()
            .zip(self.labels)
            .map(|(x, y)| {
                let e = dot(w, x) + b - y;
                e * e
            })
            .sum();
        fit + self.lambda * norm_sq(w)
    }

    /// Gradient with respect to `(w, b)`.
    pub fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let mut gw: Vec<f64> = w.iter().map(|wi| 2.0 * self.lambda * wi).collect();
        let mut gb = 0.0;
        for (x, y) in self.frames.iter().zip(self.labels) {
            let e = dot(w, x) + b - y;
            for (g, xi) in gw.iter_mut().zip(*x) {
                *g += 2.0 * e * xi;
            }
            gb += 2.0 * e;
        }
        (gw, gb)
    }
}
