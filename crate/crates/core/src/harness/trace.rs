//! Time-series record of a run and its CSV form.
//!
//! Floats are written with nine significant digits in `%.9g` style so that
//! files diff cleanly and are byte-stable across runs.

use std::io::{Read, Write};
use std::path::Path;

use crate::dzmetric::DzVariant;
use crate::geometry::GeometryState;

use super::HarnessError;

pub const TRACE_HEADER: [&str; 12] = [
    "t_s",
    "target_dz",
    "dz_measured",
    "dz_variant",
    "z_e_m",
    "gas_command_v",
    "true_front_z_m",
    "proxy_prad",
    "r_x_m",
    "z_x_m",
    "z_s_m",
    "below_strike",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub target: f64,
    pub dz_measured: f64,
    pub dz_variant: DzVariant,
    pub z_e: f64,
    pub gas_command: f64,
    pub true_front_z: f64,
    pub proxy_prad: f64,
    pub r_x: f64,
    pub z_x: f64,
    pub z_s: f64,
    pub below_strike: bool,
}

impl TraceRow {
    pub fn geometry(&self) -> GeometryState {
        GeometryState {
            r_x: self.r_x,
            z_x: self.z_x,
            z_s: self.z_s,
        }
    }

    /// DZ of the simulated front, without measurement error.
    pub fn dz_true(&self) -> f64 {
        (self.true_front_z - self.z_s) / (self.z_x - self.z_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

/// `printf("%.9g")` formatting.
pub fn fmt_g9(x: f64) -> String {
    const P: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn dt(&self) -> Option<f64> {
        (self.rows.len() >= 2).then(|| self.rows[1].t - self.rows[0].t)
    }

    /// Checks that time is strictly increasing with a constant step.
    pub fn check_uniform(&self) -> Result<(), HarnessError> {
        let Some(dt) = self.dt() else { return Ok(()) };
        for (i, w) in self.rows.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if !(step > 0.0) || (step - dt).abs() > 1e-6 * dt.abs().max(1e-9) {
                return Err(HarnessError::Validation(format!(
                    "trace time step changes at row {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                fmt_g9(r.t),
                fmt_g9(r.target),
                fmt_g9(r.dz_measured),
                r.dz_variant.to_string(),
                fmt_g9(r.z_e),
                fmt_g9(r.gas_command),
                fmt_g9(r.true_front_z),
                fmt_g9(r.proxy_prad),
                fmt_g9(r.r_x),
                fmt_g9(r.z_x),
                fmt_g9(r.z_s),
                (r.below_strike as u8).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().ne(TRACE_HEADER) {
            return Err(HarnessError::Validation(
                "trace header does not match the v1 schema".into(),
            ));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad =
                |what: &str| HarnessError::Validation(format!("trace row {}: bad {what}", i + 1));
            let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(TRACE_HEADER[k]));
            rows.push(TraceRow {
                t: num(0)?,
                target: num(1)?,
                dz_measured: num(2)?,
                dz_variant: rec[3].parse().map_err(|_| bad("dz_variant"))?,
                z_e: num(4)?,
                gas_command: num(5)?,
                true_front_z: num(6)?,
                proxy_prad: num(7)?,
                r_x: num(8)?,
                z_x: num(9)?,
                z_s: num(10)?,
                below_strike: match &rec[11] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("below_strike")),
                },
            });
        }
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let f = std::fs::File::open(path).map_err(|e| HarnessError::input(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
