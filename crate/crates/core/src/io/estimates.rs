//! Per-frame estimate series.
//!
//! ```text
//! H,method,hmml
//! E,<t>,<x>,<y>  or  E,<t>,VACANT
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{DflError, Result};
use crate::evaluation::Estimate;
use crate::geometry::Point;

use super::{atomic_write, parse_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub method: String,
    pub timestamps: Vec<f64>,
    pub estimates: Vec<Estimate>,
}

impl EstimateSeries {
    pub fn to_text(&self) -> String {
        let mut s = format!("H,method,{}\n", self.method);
        for (t, e) in self.timestamps.iter().zip(&self.estimates) {
            let _ = match e {
                Estimate::At(p) => writeln!(s, "E,{t},{},{}", p.x, p.y),
                Estimate::Vacant => writeln!(s, "E,{t},VACANT"),
            };
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut method = None;
        let mut timestamps = Vec::new();
        let mut estimates = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = raw.split(',').map(str::trim).collect();
            let err = |msg: &str| DflError::Parse { line, msg: msg.to_string() };
            match (f[0], f.len()) {
                ("H", 3) if f[1] == "method" => method = Some(f[2].to_string()),
                ("E", 3) if f[2] == "VACANT" => {
                    timestamps.push(parse_f64(f[1], line, "timestamp")?);
                    estimates.push(Estimate::Vacant);
                }
                ("E", 4) => {
                    timestamps.push(parse_f64(f[1], line, "timestamp")?);
                    estimates.push(Estimate::At(Point::new(
                        parse_f64(f[2], line, "x")?,
                        parse_f64(f[3], line, "y")?,
                    )));
                }
                _ => return Err(err("expected 'H,method,<name>', 'E,t,x,y' or 'E,t,VACANT'")),
            }
        }
        Ok(EstimateSeries {
            method: method.ok_or(DflError::Parse { line: 0, msg: "missing method header".into() })?,
            timestamps,
            estimates,
        })
    }
}
