//! Intensity frames and the `FRAME v1` text format.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

/// Upper bound on `width * height` accepted from files.
pub const MAX_PIXELS: usize = 1 << 26;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("intensity count {got} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("{kind} frame has negative or non-finite intensity {value} at index {index}")]
    InvalidIntensity {
        kind: FrameKind,
        index: usize,
        value: f64,
    },
    #[error("frame dimensions must be non-zero")]
    Empty,
    #[error("frame dimensions {width}x{height} exceed the supported size")]
    TooLarge { width: usize, height: usize },
    #[error("unknown frame kind `{0}`")]
    UnknownKind(String),
    #[error("malformed frame file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a frame's intensities represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    RawCamera,
    InvertedEmissivity,
    Standardized,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::RawCamera => "raw_camera",
            FrameKind::InvertedEmissivity => "inverted_emissivity",
            FrameKind::Standardized => "standardized",
        }
    }

    /// Raw and inverted frames hold non-negative counts.
    pub fn is_nonnegative(self) -> bool {
        !matches!(self, FrameKind::Standardized)
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameKind {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw_camera" => Ok(FrameKind::RawCamera),
            "inverted_emissivity" => Ok(FrameKind::InvertedEmissivity),
            "standardized" => Ok(FrameKind::Standardized),
            other => Err(FrameError::UnknownKind(other.to_string())),
        }
    }
}

/// Row-major 2D intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
    kind: FrameKind,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f64>,
        kind: FrameKind,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::Empty);
        }
        if data.len() != width * height {
            return Err(FrameError::LengthMismatch {
                width,
                height,
                got: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            let bad = !value.is_finite() || (kind.is_nonnegative() && value < 0.0);
            if bad {
                return Err(FrameError::InvalidIntensity { kind, index, value });
            }
        }
        Ok(Self {
            width,
            height,
            data,
            kind,
        })
    }

    pub fn zeros(width: usize, height: usize, kind: FrameKind) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![0.0; width * height],
            kind,
        }
    }

    /// Builds a frame by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        kind: FrameKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, FrameError> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data, kind)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(
            row < self.height && col < self.width,
            "pixel ({row}, {col}) out of bounds"
        );
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.width)
    }

    /// Same dimensions, new intensities and kind; validates the kind's invariant.
    pub fn with_data(&self, data: Vec<f64>, kind: FrameKind) -> Result<Self, FrameError> {
        Self::new(self.width, self.height, data, kind)
    }

    /// Minimum and maximum intensity.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Writes the frame in the `FRAME v1` text format.
    ///
    /// Values use the shortest decimal that parses back to the same bits
    /// (never more than 17 significant digits).
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), FrameError> {
        writeln!(out, "FRAME v1 {} {} {}", self.width, self.height, self.kind)?;
        let mut line = String::with_capacity(self.width * 20);
        for row in self.rows() {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{v:?}"));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, FrameError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| FrameError::Malformed("missing header".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "FRAME" || fields[1] != "v1" {
            return Err(FrameError::Malformed(format!("bad header `{header}`")));
        }
        let width: usize = parse_dim(fields[2])?;
        let height: usize = parse_dim(fields[3])?;
        if width.checked_mul(height).is_none_or(|n| n > MAX_PIXELS) {
            return Err(FrameError::TooLarge { width, height });
        }
        let kind: FrameKind = fields[4].parse()?;
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            let line = lines
                .next()
                .ok_or_else(|| FrameError::Malformed(format!("truncated at row {row}")))??;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    FrameError::Malformed(format!("bad value `{tok}` in row {row}"))
                })?;
                data.push(v);
            }
            if data.len() - before != width {
                return Err(FrameError::Malformed(format!(
                    "row {row} has {} values, expected {width}",
                    data.len() - before
                )));
            }
        }
        Self::new(width, height, data, kind)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), FrameError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, FrameError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn parse_dim(s: &str) -> Result<usize, FrameError> {
    let n: usize = s
        .parse()
        .map_err(|_| FrameError::Malformed(format!("bad dimension `{s}`")))?;
    if n == 0 {
        return Err(FrameError::Empty);
    }
    Ok(n)
}
