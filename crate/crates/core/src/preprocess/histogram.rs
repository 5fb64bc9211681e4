//! 256-bin intensity histograms and CDF histogram matching.

use std::io::{BufRead, Write};

use crate::frame::{Frame, FrameKind};

use super::PreprocessError;

pub const BIN_COUNT: usize = 256;

/// Uniform 256-bin histogram over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityHistogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
}

impl IntensityHistogram {
    pub fn from_counts(lo: f64, hi: f64, counts: Vec<u64>) -> Result<Self, PreprocessError> {
        if counts.len() != BIN_COUNT {
            return Err(PreprocessError::Malformed(format!(
                "expected {BIN_COUNT} bins, got {}",
                counts.len()
            )));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(PreprocessError::Malformed(format!(
                "bad range [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi, counts })
    }

    /// Empty histogram over a fixed range.
    pub fn with_range(lo: f64, hi: f64) -> Result<Self, PreprocessError> {
        Self::from_counts(lo, hi, vec![0; BIN_COUNT])
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / BIN_COUNT as f64
    }

    /// Bin of `v`; values at `hi` land in the last bin, out-of-range values clamp.
    pub fn bin_of(&self, v: f64) -> usize {
        let x = (v - self.lo) / (self.hi - self.lo) * BIN_COUNT as f64;
        if x <= 0.0 {
            0
        } else {
            (x.floor() as usize).min(BIN_COUNT - 1)
        }
    }

    pub fn tally(&mut self, frame: &Frame) {
        for &v in frame.data() {
            let b = self.bin_of(v);
            self.counts[b] += 1;
        }
    }

    /// Cumulative fraction of mass at or below the upper edge of each bin.
    pub fn cdf(&self) -> Vec<f64> {
        let total = self.total() as f64;
        let mut acc = 0u64;
        self.counts
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / total
            })
            .collect()
    }

    /// Intensity at cumulative fraction `p`, linear within a bin.
    pub fn quantile(&self, p: f64) -> f64 {
        let total = self.total() as f64;
        let target = p.clamp(0.0, 1.0) * total;
        let w = self.bin_width();
        let mut below = 0.0;
        for (b, &c) in self.counts.iter().enumerate() {
            let c = c as f64;
            if c > 0.0 && below + c >= target {
                let frac = ((target - below) / c).clamp(0.0, 1.0);
                return self.lo + (b as f64 + frac) * w;
            }
            below += c;
        }
        self.hi
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), PreprocessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "HIST v1",
            &format!("{:?}", self.lo),
            &format!("{:?}", self.hi),
        ])?;
        w.write_record(["bin_index", "count", ""])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([i.to_string(), c.to_string(), String::new()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, PreprocessError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = r.records();
        let head = records
            .next()
            .ok_or_else(|| PreprocessError::Malformed("empty histogram file".into()))??;
        if head.get(0) != Some("HIST v1") || head.len() < 3 {
            return Err(PreprocessError::Malformed(
                "missing `HIST v1,lo,hi` header".into(),
            ));
        }
        let parse = |s: Option<&str>| -> Result<f64, PreprocessError> {
            s.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| PreprocessError::Malformed("bad numeric field".into()))
        };
        let lo = parse(head.get(1))?;
        let hi = parse(head.get(2))?;
        let cols = records
            .next()
            .ok_or_else(|| PreprocessError::Malformed("missing column header".into()))??;
        if cols.get(0) != Some("bin_index") || cols.get(1) != Some("count") {
            return Err(PreprocessError::Malformed(
                "expected `bin_index,count` columns".into(),
            ));
        }
        let mut counts = vec![0u64; BIN_COUNT];
        let mut seen = 0;
        for rec in records {
            let rec = rec?;
            let idx: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .filter(|&i| i < BIN_COUNT)
                .ok_or_else(|| PreprocessError::Malformed("bad bin index".into()))?;
            let c: u64 = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| PreprocessError::Malformed("bad bin count".into()))?;
            counts[idx] = c;
            seen += 1;
        }
        if seen != BIN_COUNT {
            return Err(PreprocessError::Malformed(format!(
                "expected {BIN_COUNT} bins, got {seen}"
            )));
        }
        Self::from_counts(lo, hi, counts)
    }
}

/// Histogram of every pixel across `frames`, binned over their joint range.
///
/// A constant input widens the range to `[v, v + 1]`.
pub fn build_histogram<'a, I>(frames: I) -> Result<IntensityHistogram, PreprocessError>
where
    I: IntoIterator<Item = &'a Frame>,
    I::IntoIter: Clone,
{
    let iter = frames.into_iter();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for f in iter.clone() {
        any = true;
        let (a, b) = f.min_max();
        if !(a.is_finite() && b.is_finite()) {
            return Err(PreprocessError::NonFinite);
        }
        lo = lo.min(a);
        hi = hi.max(b);
    }
    if !any {
        return Err(PreprocessError::EmptyInput);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let mut h = IntensityHistogram::with_range(lo, hi)?;
    for f in iter {
        h.tally(f);
    }
    Ok(h)
}

/// Monotone CDF mapping of `frame` onto the reference distribution.
///
/// Each pixel's mid-rank empirical CDF value in its own frame is pushed
/// through the reference quantile function, so equal inputs map to equal
/// outputs and intensity order is preserved.
pub fn histogram_match(
    frame: &Frame,
    reference: &IntensityHistogram,
) -> Result<Frame, PreprocessError> {
    let (lo, hi) = frame.min_max();
    if hi <= lo {
        return Err(PreprocessError::DegenerateFrame);
    }
    let n = frame.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| frame.data()[a].total_cmp(&frame.data()[b]));

    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let v = frame.data()[order[start]];
        let mut end = start + 1;
        while end < n && frame.data()[order[end]] == v {
            end += 1;
        }
        let p = (start + end) as f64 / (2.0 * n as f64);
        let mapped = reference.quantile(p);
        for &idx in &order[start..end] {
            out[idx] = mapped;
        }
        start = end;
    }
    let kind = if reference.lo() >= 0.0 {
        FrameKind::RawCamera
    } else {
        FrameKind::Standardized
    };
    Ok(frame.with_data(out, kind)?)
}
