//! `LINMAP v1` model files.
//!
//! ```text
//! LINMAP v1 <width> <height> <preprocessing> <lambda>
//! bias <value>
//! <height rows of width weights>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use crate::frame::MAX_PIXELS;
use crate::preprocess::Preprocessing;

use super::{LinearMap, ModelError};

fn malformed(msg: impl Into<String>) -> ModelError {
    ModelError::Malformed(msg.into())
}

impl LinearMap {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        let (w, h) = self.dims();
        writeln!(
            out,
            "LINMAP v1 {w} {h} {} {:?}",
            self.preprocessing(),
            self.ridge_lambda()
        )?;
        writeln!(out, "bias {:?}", self.bias())?;
        let mut line = String::with_capacity(w * 24);
        for row in self.weights().chunks_exact(w) {
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

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, ModelError> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| malformed("missing header"))??;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 6 || f[0] != "LINMAP" || f[1] != "v1" {
            return Err(malformed(format!("bad header `{header}`")));
        }
        let width: usize = f[2].parse().map_err(|_| malformed("bad width"))?;
        let height: usize = f[3].parse().map_err(|_| malformed("bad height"))?;
        if width == 0 || height == 0 || width.checked_mul(height).is_none_or(|n| n > MAX_PIXELS) {
            return Err(ModelError::DimensionOverflow(width, height));
        }
        let preprocessing: Preprocessing = f[4]
            .parse()
            .map_err(|_| malformed(format!("bad tag `{}`", f[4])))?;
        let lambda: f64 = f[5].parse().map_err(|_| malformed("bad lambda"))?;

        let bias_line = lines
            .next()
            .ok_or_else(|| malformed("missing bias line"))??;
        let bias: f64 = match bias_line.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["bias", v] => v.parse().map_err(|_| malformed("bad bias"))?,
            _ => return Err(malformed(format!("bad bias line `{bias_line}`"))),
        };

        let mut weights = Vec::with_capacity(width * height);
        for row in 0..height {
            let line = lines
                .next()
                .ok_or_else(|| malformed(format!("truncated at row {row}")))??;
            let before = weights.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| malformed(format!("bad weight `{tok}`")))?;
                weights.push(v);
            }
            if weights.len() - before != width {
                return Err(malformed(format!(
                    "row {row} has {} weights",
                    weights.len() - before
                )));
            }
        }
        LinearMap::new(width, height, weights, bias, preprocessing, lambda)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn text(m: &LinearMap) -> String {
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            w in 1usize..6, h in 1usize..6,
            vals in proptest::collection::vec(-1e3f64..1e3, 36),
            bias in -10.0f64..10.0, lambda in 0.0f64..1.0,
        ) {
            let weights: Vec<f64> = vals[..w * h].iter().map(|v| v / 7.0).collect();
            let m = LinearMap::new(w, h, weights, bias, Preprocessing::Norm, lambda).unwrap();
            let back = LinearMap::read_from(text(&m).as_bytes()).unwrap();
            prop_assert_eq!(back.dims(), m.dims());
            prop_assert_eq!(back.bias().to_bits(), m.bias().to_bits());
            prop_assert_eq!(back.ridge_lambda().to_bits(), m.ridge_lambda().to_bits());
            for (a, b) in back.weights().iter().zip(m.weights()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let m = LinearMap::new(3, 3, vec![0.5; 9], 1.0, Preprocessing::Hist, 0.1).unwrap();
        let t = text(&m);
        let cut: String = t.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            LinearMap::read_from(cut.as_bytes()),
            Err(ModelError::Malformed(_))
        ));
        let half = &t[..t.len() - 5];
        assert!(LinearMap::read_from(half.as_bytes()).is_err());
    }

    #[test]
    fn nan_weight_rejected() {
        let t = "LINMAP v1 2 1 base 0.0\nbias 0.0\n1.0 NaN\n";
        assert!(matches!(
            LinearMap::read_from(t.as_bytes()),
            Err(ModelError::NonFiniteWeight(1))
        ));
    }

    #[test]
    fn oversized_dimensions_rejected() {
        let t = "LINMAP v1 18446744073709551615 2 base 0.0\nbias 0\n";
        assert!(matches!(
            LinearMap::read_from(t.as_bytes()),
            Err(ModelError::DimensionOverflow(..))
        ));
        let t = "LINMAP v1 100000 100000 base 0.0\nbias 0\n";
        assert!(matches!(
            LinearMap::read_from(t.as_bytes()),
            Err(ModelError::DimensionOverflow(..))
        ));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(LinearMap::read_from("LINMAP v2 1 1 base 0\nbias 0\n1\n".as_bytes()).is_err());
        assert!(LinearMap::read_from("LINMAP v1 1 1 rad 0\nbias 0\n1\n".as_bytes()).is_err());
        assert!(LinearMap::read_from("".as_bytes()).is_err());
    }
}
